#include "autorobust/grad/model.hpp"

#include <algorithm>

#include "autorobust/core/errors.hpp"
#include "autorobust/core/hash.hpp"

namespace autorobust::grad {

void check_input(const Model& model, const Tensor& batch) {
  if (batch.rank() == 0 || batch.empty()) throw ArgumentError("forward: empty input batch");
  const Shape& expect = model.input_shape();
  if (batch.rank() != expect.size() + 1 || !std::equal(expect.begin(), expect.end(), batch.shape().begin() + 1)) {
    throw DimensionError("forward: input " + shape_string(batch.shape()) + " does not match model signature [N," +
                         shape_string(expect).substr(1));
  }
}

Tensor forward(Model& model, const Tensor& batch) {
  check_input(model, batch);
  Tape tape(false);
  Var x = tape.constant(batch);
  Var y = model.forward(tape, x);
  return y.value();
}

std::vector<std::size_t> predict(Model& model, const Tensor& batch, std::size_t batch_size) {
  check_input(model, batch);
  ModeGuard eval(model, false);
  const std::size_t n = batch.dim(0);
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t b = 0; b < n; b += batch_size) {
    const Tensor logits = forward(model, batch.slice_rows(b, std::min(n, b + batch_size)));
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < logits.dim(0); ++i) {
      const auto row = logits.data().subspan(i * k, k);
      out.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return out;
}

std::size_t parameter_count(Model& model) {
  std::size_t n = 0;
  for (Tensor* p : model.parameters()) n += p->numel();
  return n;
}

std::uint64_t fingerprint(Model& model) {
  Fnv1a h;
  h.update(model.describe());
  for (Tensor* p : model.parameters()) h.update_span(std::span<const double>(p->data()));
  for (std::vector<double>* b : model.buffers()) h.update_span(std::span<const double>(*b));
  return h.digest();
}

void zero_grads(Model& model) {
  for (Tensor* p : model.parameters()) p->clear_grad();
}

}  // namespace autorobust::grad
