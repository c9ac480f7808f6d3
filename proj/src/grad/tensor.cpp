#include "autorobust/grad/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "autorobust/core/errors.hpp"

namespace autorobust::grad {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor: shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(Shape{n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor(Shape{rows, cols}, std::move(v));
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item: tensor has " + std::to_string(data_.size()) + " elements");
  return data_[0];
}

std::vector<double>& Tensor::ensure_grad() {
  if (!grad_ || grad_->size() != data_.size()) grad_.emplace(data_.size(), 0.0);
  return *grad_;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(shape_) + " as " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (shape_.empty() || begin > end || end > shape_[0]) throw ArgumentError("slice_rows: range out of bounds");
  const std::size_t rs = row_size();
  Shape s = shape_;
  s[0] = end - begin;
  return Tensor(std::move(s), std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * rs),
                                                  data_.begin() + static_cast<std::ptrdiff_t>(end * rs)));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> rows) const {
  if (shape_.empty()) throw ArgumentError("gather_rows: scalar tensor");
  const std::size_t rs = row_size();
  Shape s = shape_;
  s[0] = rows.size();
  std::vector<double> out;
  out.reserve(rows.size() * rs);
  for (std::size_t r : rows) {
    if (r >= shape_[0]) throw ArgumentError("gather_rows: row index out of range");
    out.insert(out.end(), data_.begin() + static_cast<std::ptrdiff_t>(r * rs),
               data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * rs));
  }
  return Tensor(std::move(s), std::move(out));
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return __builtin_bswap64(v);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out << "shape:";
  for (std::size_t d : t.shape()) out << ' ' << d;
  out << '\n';
  for (double v : t.data()) {
    const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(v));
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
}

Tensor read_tensor(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw FormatError("tensor: missing header line");
  if (header.rfind("shape:", 0) != 0) throw FormatError("tensor: header must start with 'shape:'");
  std::istringstream hs(header.substr(6));
  Shape shape;
  long long d = 0;
  while (hs >> d) {
    if (d <= 0) throw FormatError("tensor: non-positive dimension in header");
    shape.push_back(static_cast<std::size_t>(d));
  }
  if (!hs.eof()) throw FormatError("tensor: malformed header '" + header + "'");
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) {
    std::uint64_t bits = 0;
    if (!in.read(reinterpret_cast<char*>(&bits), sizeof bits)) throw FormatError("tensor: truncated payload");
    v = std::bit_cast<double>(to_le(bits));
  }
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open '" + path + "' for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open '" + path + "'");
  return read_tensor(in);
}

}  // namespace autorobust::grad
