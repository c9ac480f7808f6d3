#include "autorobust/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "autorobust/core/errors.hpp"
#include "autorobust/core/hash.hpp"
#include "autorobust/core/rng.hpp"

namespace autorobust::data {

grad::Shape Dataset::example_shape() const {
  const grad::Shape& s = inputs.shape();
  if (s.empty()) return {};
  return grad::Shape(s.begin() + 1, s.end());
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw ArgumentError("dataset slice out of range");
  Dataset d{inputs.slice_rows(begin, end),
            std::vector<std::size_t>(labels.begin() + static_cast<long>(begin), labels.begin() + static_cast<long>(end)),
            num_classes, name, seed};
  return d;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset d{inputs.gather_rows(rows), {}, num_classes, name, seed};
  d.labels.reserve(rows.size());
  for (std::size_t r : rows) d.labels.push_back(labels.at(r));
  return d;
}

namespace {

// Template mask for class c inside a b x b box.
bool template_pixel(std::size_t c, long r, long q, long b) {
  const long mid = b / 2;
  const long th = std::max(1L, b / 4);
  switch (c) {
    case 0: return r >= mid - th / 2 && r < mid - th / 2 + th;  // horizontal bar
    case 1: return q >= mid - th / 2 && q < mid - th / 2 + th;                           // vertical bar
    case 2: return (r >= mid - th / 2 && r < mid - th / 2 + th) || (q >= mid - th / 2 && q < mid - th / 2 + th);
    case 3: {  // square outline, inset by one pixel
      if (r < 1 || q < 1 || r > b - 2 || q > b - 2) return false;
      return r == 1 || q == 1 || r == b - 2 || q == b - 2;
    }
    case 4: return std::abs(r - q) <= th / 2;  // diagonal
    case 5: {
      const double cr = (b - 1) / 2.0;
      const double dr = r - cr, dq = q - cr;
      return dr * dr + dq * dq <= (b / 2.0) * (b / 2.0) * 0.8;
    }
    case 6: {
      const long cell = std::max(1L, b / 4);
      return ((r / cell) + (q / cell)) % 2 == 0;
    }
    default: return false;
  }
}

}  // namespace

Dataset make_shapes_dataset(std::size_t n_per_class, std::size_t side, std::size_t n_classes, double noise_std,
                            std::uint64_t seed) {
  if (n_classes < 3 || n_classes > 8) throw ArgumentError("shapes dataset: n_classes must lie in 3..8");
  if (side < 8 || side > 32) throw ArgumentError("shapes dataset: image_side must lie in [8, 32]");
  if (noise_std < 0.0 || noise_std > 0.3) throw ArgumentError("shapes dataset: noise_std must lie in [0, 0.3]");
  if (n_per_class == 0) throw ArgumentError("shapes dataset: n_per_class must be positive");
  const std::size_t n = n_per_class * n_classes;
  const long s = static_cast<long>(side);
  const long b = s - std::max(2L, s / 4);
  Rng rng(derive_seed(seed, 0x5ba9e5));
  Dataset d{Tensor({n, 1, side, side}), std::vector<std::size_t>(n), n_classes, "shapes", seed};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % n_classes;
    d.labels[i] = c;
    const long dr = static_cast<long>(rng.index(static_cast<std::size_t>(s - b + 1)));
    const long dq = static_cast<long>(rng.index(static_cast<std::size_t>(s - b + 1)));
    double* img = d.inputs.data().data() + i * side * side;
    for (long r = 0; r < s; ++r) {
      for (long q = 0; q < s; ++q) {
        bool on = false;
        if (c == 7) {
          on = r == 0 || q == 0 || r == s - 1 || q == s - 1;  // frame: the image border
        } else {
          const long rr = r - dr, qq = q - dq;
          on = rr >= 0 && qq >= 0 && rr < b && qq < b && template_pixel(c, rr, qq, b);
        }
        double v = on ? 1.0 : 0.0;
        if (noise_std > 0.0) v += noise_std * rng.normal();
        img[r * s + q] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return d;
}

Dataset make_spirals_dataset(std::size_t n, double turns, double noise_std, std::uint64_t seed) {
  if (n < 8 || n % 2) throw ArgumentError("spirals dataset: n must be even and at least 8");
  if (noise_std < 0.0) throw ArgumentError("spirals dataset: noise_std must be nonnegative");
  const std::size_t m = n / 2;
  Rng rng(derive_seed(seed, 0x5b12a1));
  Dataset d{Tensor({n, 2}), std::vector<std::size_t>(n), 2, "spirals", seed};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % 2;
    const double t = static_cast<double>(i / 2 + 1) / static_cast<double>(m);
    const double th = 2.0 * std::numbers::pi * turns * t + (c ? std::numbers::pi : 0.0);
    double px = t * std::cos(th), py = t * std::sin(th);
    if (noise_std > 0.0) {
      px += noise_std * rng.normal();
      py += noise_std * rng.normal();
    }
    d.inputs[2 * i] = px;
    d.inputs[2 * i + 1] = py;
    d.labels[i] = c;
  }
  return d;
}

Dataset load_cifar10_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open CIFAR-10 file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t rec = 3073, px = 3072;
  if (bytes.size() % rec) throw FormatError("CIFAR-10 file size " + std::to_string(bytes.size()) + " is not a multiple of 3073");
  const std::size_t n = bytes.size() / rec;
  Dataset d{Tensor({n, 3, 32, 32}), std::vector<std::size_t>(n), 10, "cifar10", 0};
  for (std::size_t i = 0; i < n; ++i) {
    const auto* r = reinterpret_cast<const unsigned char*>(bytes.data() + i * rec);
    if (r[0] > 9) throw FormatError("CIFAR-10 record " + std::to_string(i) + " has label byte " + std::to_string(r[0]));
    d.labels[i] = r[0];
    for (std::size_t j = 0; j < px; ++j) d.inputs[i * px + j] = r[1 + j] / 255.0;
  }
  return d;
}

void export_dataset(const Dataset& d, const std::string& prefix) {
  grad::save_tensor(prefix + ".tensor", d.inputs);
  std::ofstream out(prefix + ".labels.csv");
  if (!out) throw FormatError("cannot write '" + prefix + ".labels.csv'");
  out << "index,label\n";
  for (std::size_t i = 0; i < d.size(); ++i) out << i << ',' << d.labels[i] << '\n';
}

Dataset import_dataset(const std::string& prefix) {
  Dataset d;
  d.inputs = grad::load_tensor(prefix + ".tensor");
  std::ifstream in(prefix + ".labels.csv");
  if (!in) throw FormatError("cannot open '" + prefix + ".labels.csv'");
  std::string line;
  std::getline(in, line);
  if (line != "index,label") throw FormatError("labels CSV: bad header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("labels CSV: missing comma");
    d.labels.push_back(std::stoul(line.substr(comma + 1)));
  }
  if (d.inputs.rank() == 0 || d.labels.size() != d.inputs.dim(0)) throw FormatError("labels CSV: row count differs from tensor");
  for (std::size_t y : d.labels) d.num_classes = std::max(d.num_classes, y + 1);
  d.name = prefix;
  return d;
}

std::uint64_t fingerprint(const Dataset& d) {
  Fnv1a h;
  h.update(grad::shape_string(d.inputs.shape()));
  h.update_span(std::span<const double>(d.inputs.data()));
  h.update_span(std::span<const std::size_t>(d.labels));
  return h.digest();
}

std::pair<Dataset, Dataset> split_half(const Dataset& d) {
  const std::size_t h = d.size() / 2;
  return {d.slice(0, h), d.slice(h, d.size())};
}

}  // namespace autorobust::data
