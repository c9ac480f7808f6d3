#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "autorobust/nets/layers.hpp"

namespace autorobust::nets {

// Fully connected ReLU network; layer_sizes = {in, hidden..., classes}, at least one hidden layer.
std::unique_ptr<grad::Model> build_mlp(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed);

// conv3x3 -> relu -> maxpool2 per entry of `channels`, then flatten -> linear.
std::unique_ptr<grad::Model> build_cnn(const grad::Shape& input_shape, const std::vector<std::size_t>& channels,
                                       std::size_t n_classes, std::uint64_t seed);

// Logits = W x (flattened input); no bias.
std::unique_ptr<grad::Model> build_linear(const grad::Shape& input_shape, std::size_t n_classes, std::uint64_t seed);
std::unique_ptr<grad::Model> linear_model(const Tensor& weight, const grad::Shape& input_shape);

}  // namespace autorobust::nets
