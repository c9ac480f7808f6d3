#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "autorobust/attack/losses.hpp"
#include "autorobust/grad/model.hpp"

namespace autorobust::grad {

// d(sum_n loss_n)/dx for a batch x. Model parameter gradients are left untouched.
Tensor grad_input(Model& model, const Tensor& x, std::span<const std::size_t> labels, attack::LossId loss);

// Sum of the per-example attack loss, evaluated without a gradient.
double loss_value(Model& model, const Tensor& x, std::span<const std::size_t> labels, attack::LossId loss);

// max_i |analytic_i - central_i| / (|analytic_i| + 1e-8), with h in (0, 1e-2].
double finite_diff_check(Model& model, const Tensor& x, std::span<const std::size_t> labels, attack::LossId loss,
                         double h = 1e-5);

// Same comparison for an arbitrary scalar function and its claimed gradient.
double finite_diff_check(const std::function<double(const Tensor&)>& f, const Tensor& analytic, const Tensor& x,
                         double h = 1e-5);

// Same comparison for a list of parameter tensors perturbed in place.
double finite_diff_check(const std::function<double()>& f, std::span<Tensor* const> params,
                         std::span<const std::vector<double>> analytic, double h = 1e-5);

}  // namespace autorobust::grad
