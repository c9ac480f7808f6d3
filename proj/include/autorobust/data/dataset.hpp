#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "autorobust/grad/tensor.hpp"

namespace autorobust::data {

using grad::Tensor;

struct Dataset {
  Tensor inputs;  // [N, ...]
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  std::string name;
  std::uint64_t seed = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  // Per-example shape (inputs without the leading axis).
  grad::Shape example_shape() const;

  Dataset slice(std::size_t begin, std::size_t end) const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

// Shapes [N, C, H, W] with pixels in [0,1]; one template class per label.
Dataset make_shapes_dataset(std::size_t n_per_class, std::size_t image_side, std::size_t n_classes, double noise_std,
                            std::uint64_t seed);

// Two interleaved spirals in the plane; inputs [N, 2] are raw coordinates.
Dataset make_spirals_dataset(std::size_t n, double turns, double noise_std, std::uint64_t seed);

// CIFAR-10 binary batch: 3073-byte records, label byte then 3x32x32 plane-major pixels.
Dataset load_cifar10_binary(const std::string& path);

// Writes <prefix>.tensor (gradcore serialization) and <prefix>.labels.csv.
void export_dataset(const Dataset& d, const std::string& prefix);
Dataset import_dataset(const std::string& prefix);

std::uint64_t fingerprint(const Dataset& d);

// First and second halves along the leading axis (the split used by bilevel searches).
std::pair<Dataset, Dataset> split_half(const Dataset& d);

}  // namespace autorobust::data
