#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "autorobust/attack/losses.hpp"
#include "autorobust/data/dataset.hpp"
#include "autorobust/grad/model.hpp"

namespace autorobust::attack {

using grad::Model;
using grad::Tensor;

enum class Norm { Linf, L2 };

struct NormFamily {
  Norm norm = Norm::Linf;
  double eps_max = 8.0 / 255.0;
};

NormFamily default_norm(Norm n);
std::string norm_name(Norm n);
Norm parse_norm(std::string_view name);

enum class AttackOp { FGSM, PGD, CW, MT, MI, MomentumIterative };

// Operator tables in gene order: Linf {FGSM, PGD, CW, MT, MI, MomentumIterative},
// L2 {MI, PGD, CW, MT, MomentumIterative}.
std::span<const AttackOp> ops_for(Norm n);
bool op_supported(AttackOp op, Norm n);
std::string op_name(AttackOp op);
// "CW-LinfAttack" style names.
std::string op_display_name(AttackOp op, Norm n);
std::pair<AttackOp, Norm> parse_op_display(std::string_view name);

inline constexpr int kGridSize = 8;
inline constexpr std::size_t kMaxSteps = 50;

enum class GridAxis { eps, steps };
// eps: idx * eps_max / 8; steps: round_half_up(idx * 50 / 8).
double decode_grid(int idx, GridAxis axis, const NormFamily& norm);
double decode_eps(int idx, const NormFamily& norm);
std::size_t decode_steps(int idx);

struct AttackCell {
  AttackOp op = AttackOp::PGD;
  LossId loss = LossId::CE_P;  // ignored by CW
  int eps_idx = 8;
  int steps_idx = 1;
  bool restart = false;
  bool operator==(const AttackCell&) const = default;
};

// A cell with its grid indices resolved to numbers; also used for hand-written baselines.
struct CellParams {
  AttackOp op = AttackOp::PGD;
  LossId loss = LossId::CE_P;
  double eps = 0.0;
  std::size_t steps = 1;
  double step_size = 0.0;
  bool restart = false;
  double kappa = 0.0;
};

CellParams resolve(const AttackCell& cell, const NormFamily& norm);

struct AttackScheme {
  std::vector<AttackCell> cells;
  NormFamily norm;
};

inline constexpr std::size_t kMaxCells = 3;

// ConfigError for an op outside the norm's table; ValidationError for bad indices or length.
void validate(const AttackScheme& s);

// Linf: clamp to the eps box around x_orig; L2: radial scaling onto the ball. Then clip to [0,1].
// Batched inputs [N, ...] are projected per example.
Tensor project(const Tensor& x_adv, const Tensor& x_orig, Norm norm, double eps);

// Largest per-example distance ||x_adv - x||.
double max_distance(const Tensor& x_adv, const Tensor& x, Norm norm);
std::vector<double> distances(const Tensor& x_adv, const Tensor& x, Norm norm);

struct CellRun {
  Tensor x_adv;
  std::vector<std::uint64_t> cost;  // gradient evaluations per example
};

// Runs one cell on a batch. Random restarts draw from (seed, example_ids[i], coordinate), so an
// example's perturbation does not depend on which other examples share its batch.
CellRun run_attack_cell(Model& model, const Tensor& x_start, const Tensor& x_orig, std::span<const std::size_t> labels,
                        const CellParams& cell, const NormFamily& global, std::uint64_t seed,
                        std::span<const std::size_t> example_ids = {});

struct EvalResult {
  double robust_acc = 1.0;
  std::uint64_t cost_units = 0;
  double wall_time_s = 0.0;
};

struct SchemeRun {
  EvalResult result;
  std::vector<bool> fooled;
  Tensor x_adv;
};

// Cells run in order from the previous output. An example counts as fooled once it is
// misclassified at any cell boundary (including before the first cell); fooled examples
// skip the remaining cells and stop accruing cost.
SchemeRun run_scheme(Model& model, const data::Dataset& d, const AttackScheme& scheme, std::uint64_t seed = 0);
SchemeRun run_cells(Model& model, const data::Dataset& d, std::span<const CellParams> cells, const NormFamily& norm,
                    std::uint64_t seed = 0);

// Perturb a batch with one cell starting from the clean input (training and metrics).
Tensor perturb(Model& model, const Tensor& x, std::span<const std::size_t> labels, const CellParams& cell,
               const NormFamily& norm, std::uint64_t seed = 0);

nlohmann::json scheme_to_json(const AttackScheme& s);
// Accepts {"norm", "eps_max", "cells": [...]} or a bare cell list (norm read from the op names).
AttackScheme scheme_from_json(const nlohmann::json& j);
AttackScheme load_scheme(const std::string& path);
void save_scheme(const std::string& path, const AttackScheme& s);

}  // namespace autorobust::attack
