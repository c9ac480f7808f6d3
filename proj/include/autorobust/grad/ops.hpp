#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "autorobust/grad/tape.hpp"

// Differentiable primitives. Every function records one node on the tape of its operands
// and throws DimensionError naming the primitive when shapes disagree.
namespace autorobust::grad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var neg(Var a);
// x: [N, C, ...], b: [C]
Var add_channel_bias(Var x, Var b);

Var relu(Var x);
Var sigmoid(Var x);
Var exp(Var x);
Var log(Var x);
Var square(Var x);
// max(x, c) elementwise; the gradient flows where x > c.
Var maximum_scalar(Var x, double c);

// Reductions.
Var sum(Var x);
Var mean(Var x);
// [N, ...] -> [N], summing everything but the leading axis.
Var sum_rows(Var x);

// Row-wise over the last axis of a rank-1 or rank-2 tensor.
Var softmax(Var x);
Var log_softmax(Var x);

// [m,k]x[k,n] -> [m,n]; [m,k]x[k] -> [m].
Var matmul(Var a, Var b);
// x: [N, in], w: [out, in] -> [N, out]
Var linear(Var x, Var w);

struct ConvSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  std::size_t groups = 1;
};
// x: [N, Cin, H, W], w: [Cout, Cin/groups, k, k]
Var conv2d(Var x, Var w, const ConvSpec& spec);
// Windows are k x k; padded positions are ignored (avg excludes them from the count).
Var max_pool2d(Var x, std::size_t k, std::size_t stride, std::size_t padding);
Var avg_pool2d(Var x, std::size_t k, std::size_t stride, std::size_t padding);
// [N, C, H, W] -> [N, C]
Var global_avg_pool(Var x);

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};
// Normalizes per channel (axis 1) of [N, C] or [N, C, H, W]. In training mode uses batch
// statistics and updates the running ones; otherwise uses the running statistics.
// gamma/beta may be invalid Vars for a non-affine normalization.
Var batch_norm(Var x, BatchNormState& state, bool training, Var gamma = {}, Var beta = {});

Var reshape(Var x, Shape shape);
// [N, ...] -> [N, prod(...)]
Var flatten(Var x);
Var concat_channels(std::span<const Var> xs);
Var slice_channels(Var x, std::size_t begin, std::size_t end);
// x: [N, K]; picks x[n, index[n]] -> [N]
Var gather(Var x, std::span<const std::size_t> index);
// sum_i w[widx[i]] * xs[i]; all xs share one shape, w is any tensor.
Var weighted_sum(std::span<const Var> xs, Var w, std::span<const std::size_t> widx);

Var zeros(Tape& tape, Shape shape);

}  // namespace autorobust::grad
