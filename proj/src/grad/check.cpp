#include "autorobust/grad/check.hpp"

#include <algorithm>
#include <cmath>

#include "autorobust/core/errors.hpp"
#include "autorobust/grad/ops.hpp"

namespace autorobust::grad {

namespace {

void check_step(double h) {
  if (!(h > 0.0 && h <= 1e-2)) throw ArgumentError("finite difference step must lie in (0, 1e-2]");
}

double rel_err(double a, double n) { return std::abs(a - n) / (std::abs(a) + 1e-8); }

}  // namespace

Tensor grad_input(Model& model, const Tensor& x, std::span<const std::size_t> labels, attack::LossId loss) {
  check_input(model, x);
  Tape tape(false);
  Var xv = tape.input(x, true);
  Var l = sum(attack::attack_loss(loss, model.forward(tape, xv), labels));
  tape.backward(l);
  return tape.grad_tensor(xv);
}

double loss_value(Model& model, const Tensor& x, std::span<const std::size_t> labels, attack::LossId loss) {
  check_input(model, x);
  Tape tape(false);
  Var xv = tape.constant(x);
  return sum(attack::attack_loss(loss, model.forward(tape, xv), labels)).value().item();
}

double finite_diff_check(Model& model, const Tensor& x, std::span<const std::size_t> labels, attack::LossId loss,
                         double h) {
  check_step(h);
  const Tensor g = grad_input(model, x, labels, loss);
  return finite_diff_check([&](const Tensor& p) { return loss_value(model, p, labels, loss); }, g, x, h);
}

double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& analytic, const Tensor& x,
                         double h) {
  check_step(h);
  if (analytic.numel() != x.numel()) throw DimensionError("finite_diff_check: gradient size differs from input");
  Tensor p = x;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    p[i] = x[i] + h;
    const double up = f(p);
    p[i] = x[i] - h;
    const double down = f(p);
    p[i] = x[i];
    worst = std::max(worst, rel_err(analytic[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

double finite_diff_check(const std::function<double()>& f, std::span<Tensor* const> params,
                         std::span<const std::vector<double>> analytic, double h) {
  check_step(h);
  if (params.size() != analytic.size()) throw DimensionError("finite_diff_check: one gradient per parameter");
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& w = *params[t];
    if (analytic[t].size() != w.numel()) throw DimensionError("finite_diff_check: gradient size differs from parameter");
    for (std::size_t i = 0; i < w.numel(); ++i) {
      const double orig = w[i];
      w[i] = orig + h;
      const double up = f();
      w[i] = orig - h;
      const double down = f();
      w[i] = orig;
      worst = std::max(worst, rel_err(analytic[t][i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

}  // namespace autorobust::grad
