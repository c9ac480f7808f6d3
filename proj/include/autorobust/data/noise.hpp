#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "autorobust/grad/tensor.hpp"

namespace autorobust::data {

using grad::Tensor;

enum class CorruptionKind { brightness, contrast, gaussian_blur, motion_blur, gaussian_noise };

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::brightness;
  int severity = 1;
};

std::string corruption_name(CorruptionKind kind);
CorruptionKind parse_corruption(std::string_view name);

// Natural-noise corruption of an image [C,H,W] or batch [N,C,H,W] with values in [0,1].
// Random parts (noise, blur angle) are drawn per image from (seed, image index).
Tensor corrupt(const Tensor& x, const CorruptionSpec& spec, std::uint64_t seed);

enum class Resampler { nearest, bilinear, bicubic, box };

std::string resampler_name(Resampler r);
// ConfigError on anything outside {nearest, bilinear, bicubic, box}.
Resampler parse_resampler(std::string_view name);

struct ResamplePipeline {
  Resampler down = Resampler::nearest;
  Resampler up = Resampler::nearest;
  std::size_t intermediate_size = 2;
};

// Resize a [.., H, W] tensor to [.., out_h, out_w] with a separable resampler.
Tensor resize(const Tensor& x, std::size_t out_h, std::size_t out_w, Resampler r);

// Down to intermediate_size, back up to the original side; output clipped to [0,1].
Tensor system_noise(const Tensor& x, const ResamplePipeline& p);

}  // namespace autorobust::data
