#include "autorobust/nets/networks.hpp"

#include "autorobust/core/errors.hpp"

namespace autorobust::nets {

std::unique_ptr<grad::Model> build_mlp(const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  if (sizes.size() < 3) throw ArgumentError("build_mlp: need input, at least one hidden layer, and output sizes");
  for (std::size_t s : sizes)
    if (s == 0) throw ArgumentError("build_mlp: zero-width layer");
  Rng rng(derive_seed(seed, 0x31b));
  Sequential body;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    body.emplace<Linear>(sizes[i], sizes[i + 1], true, rng);
    if (i + 2 < sizes.size()) body.emplace<ReLU>();
  }
  return std::make_unique<SequentialModel>(grad::Shape{sizes.front()}, sizes.back(), std::move(body), "mlp");
}

std::unique_ptr<grad::Model> build_cnn(const grad::Shape& input_shape, const std::vector<std::size_t>& channels,
                                       std::size_t n_classes, std::uint64_t seed) {
  if (input_shape.size() != 3) throw ArgumentError("build_cnn: input shape must be [C, H, W]");
  if (channels.empty()) throw ArgumentError("build_cnn: need at least one conv layer");
  if (n_classes == 0) throw ArgumentError("build_cnn: zero classes");
  Rng rng(derive_seed(seed, 0xc22));
  Sequential body;
  std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
  for (std::size_t out : channels) {
    if (out == 0) throw ArgumentError("build_cnn: zero-width layer");
    if (h < 2 || w < 2) throw ArgumentError("build_cnn: too many pooling stages for the input size");
    body.emplace<Conv2d>(c, out, 3, grad::ConvSpec{1, 1, 1, 1}, true, rng);
    body.emplace<ReLU>();
    body.emplace<Pool>(Pool::Kind::max, 2, 2, 0);
    c = out;
    h /= 2;
    w /= 2;
  }
  body.emplace<Flatten>();
  body.emplace<Linear>(c * h * w, n_classes, true, rng);
  return std::make_unique<SequentialModel>(input_shape, n_classes, std::move(body), "cnn");
}

std::unique_ptr<grad::Model> build_linear(const grad::Shape& input_shape, std::size_t n_classes, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x11e));
  const std::size_t in = grad::shape_numel(input_shape);
  Sequential body;
  if (input_shape.size() > 1) body.emplace<Flatten>();
  body.emplace<Linear>(in, n_classes, false, rng);
  return std::make_unique<SequentialModel>(input_shape, n_classes, std::move(body), "linear");
}

std::unique_ptr<grad::Model> linear_model(const Tensor& weight, const grad::Shape& input_shape) {
  if (weight.rank() != 2 || weight.dim(1) != grad::shape_numel(input_shape))
    throw DimensionError("linear_model: weight must be [K, numel(input)]");
  auto m = build_linear(input_shape, weight.dim(0), 0);
  Tensor* w = m->parameters().at(0);
  std::copy(weight.data().begin(), weight.data().end(), w->data().begin());
  return m;
}

}  // namespace autorobust::nets
