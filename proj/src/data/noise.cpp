#include "autorobust/data/noise.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "autorobust/core/errors.hpp"
#include "autorobust/core/rng.hpp"

namespace autorobust::data {

namespace {

constexpr std::array<double, 5> kBrightness{0.1, 0.2, 0.3, 0.4, 0.5};
constexpr std::array<double, 5> kContrast{0.75, 0.6, 0.45, 0.3, 0.2};
constexpr std::array<double, 5> kBlurSigma{0.5, 0.75, 1.0, 1.5, 2.0};
constexpr std::array<int, 5> kMotionLength{3, 4, 5, 7, 9};
constexpr std::array<double, 5> kNoiseSigma{0.04, 0.06, 0.08, 0.12, 0.18};

struct Planes {
  std::size_t images, channels, h, w;
};

Planes planes_of(const Tensor& x) {
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
  throw DimensionError("image op: expected [C,H,W] or [N,C,H,W], got " + grad::shape_string(x.shape()));
}

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

long clampi(long v, long hi) { return std::clamp(v, 0L, hi - 1); }

void blur_plane(double* p, std::size_t h, std::size_t w, const std::vector<double>& k) {
  const long r = static_cast<long>(k.size() / 2);
  std::vector<double> tmp(h * w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double s = 0.0;
      for (long t = -r; t <= r; ++t) s += k[t + r] * p[i * w + clampi(static_cast<long>(j) + t, static_cast<long>(w))];
      tmp[i * w + j] = s;
    }
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double s = 0.0;
      for (long t = -r; t <= r; ++t) s += k[t + r] * tmp[clampi(static_cast<long>(i) + t, static_cast<long>(h)) * w + j];
      p[i * w + j] = s;
    }
}

void motion_plane(double* p, std::size_t h, std::size_t w, int len, double angle) {
  std::vector<double> src(p, p + h * w);
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int k = 0; k < len; ++k) {
        const double t = k - (len - 1) / 2.0;
        const long ii = clampi(std::lround(static_cast<double>(i) + t * s), static_cast<long>(h));
        const long jj = clampi(std::lround(static_cast<double>(j) + t * c), static_cast<long>(w));
        acc += src[ii * w + jj];
      }
      p[i * w + j] = acc / len;
    }
}

double cubic(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return (((t - 5.0) * t + 8.0) * t - 4.0) * a;
  return 0.0;
}

// Row-stochastic [out x in] interpolation matrix, stored densely (sizes are small).
std::vector<double> resample_matrix(std::size_t in, std::size_t out, Resampler r) {
  std::vector<double> m(out * in, 0.0);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const long n = static_cast<long>(in);
  for (std::size_t o = 0; o < out; ++o) {
    double* row = m.data() + o * in;
    switch (r) {
      case Resampler::nearest: {
        row[std::min(in - 1, static_cast<std::size_t>(std::floor((o + 0.5) * scale)))] = 1.0;
        break;
      }
      case Resampler::bilinear: {
        const double c = (o + 0.5) * scale - 0.5;
        const long i0 = static_cast<long>(std::floor(c));
        const double f = c - i0;
        row[clampi(i0, n)] += 1.0 - f;
        row[clampi(i0 + 1, n)] += f;
        break;
      }
      case Resampler::bicubic: {
        const double c = (o + 0.5) * scale - 0.5;
        const long i0 = static_cast<long>(std::floor(c));
        double total = 0.0;
        for (long t = i0 - 1; t <= i0 + 2; ++t) {
          const double wgt = cubic(c - t);
          row[clampi(t, n)] += wgt;
          total += wgt;
        }
        for (std::size_t j = 0; j < in; ++j) row[j] /= total;
        break;
      }
      case Resampler::box: {
        const double lo = o * scale, hi = (o + 1) * scale;
        double total = 0.0;
        for (std::size_t j = 0; j < in; ++j) {
          const double ov = std::min(hi, j + 1.0) - std::max(lo, static_cast<double>(j));
          if (ov > 0.0) {
            row[j] = ov;
            total += ov;
          }
        }
        for (std::size_t j = 0; j < in; ++j) row[j] /= total;
        break;
      }
    }
  }
  return m;
}

}  // namespace

std::string corruption_name(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::brightness: return "brightness";
    case CorruptionKind::contrast: return "contrast";
    case CorruptionKind::gaussian_blur: return "gaussian_blur";
    case CorruptionKind::motion_blur: return "motion_blur";
    case CorruptionKind::gaussian_noise: return "gaussian_noise";
  }
  return "?";
}

CorruptionKind parse_corruption(std::string_view name) {
  for (auto k : {CorruptionKind::brightness, CorruptionKind::contrast, CorruptionKind::gaussian_blur,
                 CorruptionKind::motion_blur, CorruptionKind::gaussian_noise})
    if (corruption_name(k) == name) return k;
  throw ConfigError("unknown corruption '" + std::string(name) + "'");
}

Tensor corrupt(const Tensor& x, const CorruptionSpec& spec, std::uint64_t seed) {
  if (spec.severity < 1 || spec.severity > 5) throw ArgumentError("corruption severity must lie in 1..5");
  const Planes pl = planes_of(x);
  const std::size_t s = static_cast<std::size_t>(spec.severity - 1);
  const std::size_t hw = pl.h * pl.w;
  Tensor out = x;
  std::vector<double> kernel;
  if (spec.kind == CorruptionKind::gaussian_blur) {
    const double sigma = kBlurSigma[s];
    const long r = static_cast<long>(std::ceil(3.0 * sigma));
    double total = 0.0;
    for (long t = -r; t <= r; ++t) {
      kernel.push_back(std::exp(-0.5 * t * t / (sigma * sigma)));
      total += kernel.back();
    }
    for (double& k : kernel) k /= total;
  }
  for (std::size_t n = 0; n < pl.images; ++n) {
    Rng rng(derive_seed(seed, n, static_cast<std::uint64_t>(spec.kind)));
    const double angle = rng.uniform(0.0, std::numbers::pi);
    for (std::size_t c = 0; c < pl.channels; ++c) {
      double* p = out.data().data() + (n * pl.channels + c) * hw;
      switch (spec.kind) {
        case CorruptionKind::brightness:
          for (std::size_t i = 0; i < hw; ++i) p[i] += kBrightness[s];
          break;
        case CorruptionKind::contrast:
          for (std::size_t i = 0; i < hw; ++i) p[i] = (p[i] - 0.5) * kContrast[s] + 0.5;
          break;
        case CorruptionKind::gaussian_blur: blur_plane(p, pl.h, pl.w, kernel); break;
        case CorruptionKind::motion_blur: motion_plane(p, pl.h, pl.w, kMotionLength[s], angle); break;
        case CorruptionKind::gaussian_noise:
          for (std::size_t i = 0; i < hw; ++i) p[i] += kNoiseSigma[s] * rng.normal();
          break;
      }
      for (std::size_t i = 0; i < hw; ++i) p[i] = clip01(p[i]);
    }
  }
  return out;
}

std::string resampler_name(Resampler r) {
  switch (r) {
    case Resampler::nearest: return "nearest";
    case Resampler::bilinear: return "bilinear";
    case Resampler::bicubic: return "bicubic";
    case Resampler::box: return "box";
  }
  return "?";
}

Resampler parse_resampler(std::string_view name) {
  for (auto r : {Resampler::nearest, Resampler::bilinear, Resampler::bicubic, Resampler::box})
    if (resampler_name(r) == name) return r;
  throw ConfigError("unknown resampler '" + std::string(name) + "'");
}

Tensor resize(const Tensor& x, std::size_t out_h, std::size_t out_w, Resampler r) {
  if (x.rank() < 2) throw DimensionError("resize: need at least [H, W]");
  if (out_h == 0 || out_w == 0) throw ArgumentError("resize: zero output size");
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  const std::size_t planes = x.numel() / (h * w);
  const auto mh = resample_matrix(h, out_h, r);
  const auto mw = resample_matrix(w, out_w, r);
  grad::Shape shape = x.shape();
  shape[shape.size() - 2] = out_h;
  shape[shape.size() - 1] = out_w;
  Tensor out(shape);
  std::vector<double> tmp(h * out_w);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.data().data() + p * h * w;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t o = 0; o < out_w; ++o) {
        double s = 0.0;
        for (std::size_t j = 0; j < w; ++j) s += mw[o * w + j] * src[i * w + j];
        tmp[i * out_w + o] = s;
      }
    double* dst = out.data().data() + p * out_h * out_w;
    for (std::size_t o = 0; o < out_h; ++o)
      for (std::size_t q = 0; q < out_w; ++q) {
        double s = 0.0;
        for (std::size_t i = 0; i < h; ++i) s += mh[o * h + i] * tmp[i * out_w + q];
        dst[o * out_w + q] = s;
      }
  }
  return out;
}

Tensor system_noise(const Tensor& x, const ResamplePipeline& p) {
  const Planes pl = planes_of(x);
  const std::size_t side = std::min(pl.h, pl.w);
  if (p.intermediate_size < 2 || p.intermediate_size > side)
    throw ArgumentError("system noise: intermediate_size must lie in [2, image side]");
  const std::size_t mh = pl.h == side ? p.intermediate_size : p.intermediate_size * pl.h / side;
  const std::size_t mw = pl.w == side ? p.intermediate_size : p.intermediate_size * pl.w / side;
  Tensor out = resize(resize(x, mh, mw, p.down), pl.h, pl.w, p.up);
  for (double& v : out.data()) v = clip01(v);
  return out;
}

}  // namespace autorobust::data
