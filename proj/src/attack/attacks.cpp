#include "autorobust/attack/attacks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>

#include "autorobust/core/errors.hpp"
#include "autorobust/core/rng.hpp"
#include "autorobust/grad/ops.hpp"

namespace autorobust::attack {

namespace {

constexpr AttackOp kLinfOps[] = {AttackOp::FGSM, AttackOp::PGD, AttackOp::CW,
                                 AttackOp::MT,   AttackOp::MI,  AttackOp::MomentumIterative};
constexpr AttackOp kL2Ops[] = {AttackOp::MI, AttackOp::PGD, AttackOp::CW, AttackOp::MT, AttackOp::MomentumIterative};
constexpr double kMomentum = 1.0;

std::size_t row_size(const Tensor& x) { return x.dim(0) == 0 ? 0 : x.numel() / x.dim(0); }

// What the ascent maximizes for one batch: an attack loss, the CW margin, or (targeted)
// the negated loss towards per-example target classes.
struct Objective {
  bool cw = false;
  LossId loss = LossId::CE_P;
  double kappa = 0.0;
  bool targeted = false;
};

struct GradEval {
  Tensor grad;
  std::vector<double> value;
};

grad::Var objective_var(const Objective& obj, grad::Var logits, std::span<const std::size_t> labels) {
  grad::Var l = obj.cw ? cw_loss(logits, labels, obj.kappa) : attack_loss(obj.loss, logits, labels, obj.kappa);
  return obj.targeted ? grad::neg(l) : l;
}

GradEval eval_grad(Model& model, const Tensor& x, std::span<const std::size_t> labels, const Objective& obj) {
  grad::Tape tape(false);
  grad::Var xv = tape.input(x, true);
  grad::Var per = objective_var(obj, model.forward(tape, xv), labels);
  tape.backward(grad::sum(per));
  return {tape.grad_tensor(xv), per.value().values()};
}

std::vector<double> eval_objective(Model& model, const Tensor& x, std::span<const std::size_t> labels,
                                   const Objective& obj, std::vector<std::size_t>* pred) {
  grad::Tape tape(false);
  grad::Var logits = model.forward(tape, tape.constant(x));
  if (pred) {
    const Tensor& z = logits.value();
    const std::size_t k = z.dim(1);
    pred->resize(z.dim(0));
    for (std::size_t i = 0; i < z.dim(0); ++i) {
      const auto row = z.data().subspan(i * k, k);
      (*pred)[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    }
  }
  return objective_var(obj, logits, labels).value().values();
}

// Unit ascent direction per example: sign for Linf, g/||g||_2 for L2 (zero stays zero).
Tensor direction(const Tensor& g, Norm norm) {
  Tensor d(g.shape());
  const std::size_t r = row_size(g);
  for (std::size_t n = 0; n < g.dim(0); ++n) {
    const double* gi = g.data().data() + n * r;
    double* di = d.data().data() + n * r;
    if (norm == Norm::Linf) {
      for (std::size_t j = 0; j < r; ++j) di[j] = gi[j] > 0.0 ? 1.0 : (gi[j] < 0.0 ? -1.0 : 0.0);
    } else {
      double s = 0.0;
      for (std::size_t j = 0; j < r; ++j) s += gi[j] * gi[j];
      const double nrm = std::sqrt(s);
      for (std::size_t j = 0; j < r; ++j) di[j] = nrm > 0.0 ? gi[j] / nrm : 0.0;
    }
  }
  return d;
}

// One ascent step followed by the cell-ball and global-ball projections.
Tensor step_project(const Tensor& x, const Tensor& dir, double step, const Tensor& x_start, double cell_eps,
                    const Tensor& x_orig, const NormFamily& global) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += step * dir[i];
  return project(project(y, x_start, global.norm, cell_eps), x_orig, global.norm, global.eps_max);
}

// Uniform start inside the cell ball around x_start.
Tensor random_start(const Tensor& x_start, double eps, Norm norm, std::uint64_t key,
                    std::span<const std::size_t> ids) {
  Tensor y = x_start;
  const std::size_t r = row_size(y);
  for (std::size_t n = 0; n < y.dim(0); ++n) {
    const std::uint64_t base = derive_seed(key, ids[n]);
    double* yi = y.data().data() + n * r;
    if (norm == Norm::Linf) {
      for (std::size_t j = 0; j < r; ++j) yi[j] += eps * (2.0 * hashed_uniform(derive_seed(base, j)) - 1.0);
    } else {
      std::vector<double> v(r);
      double s = 0.0;
      for (std::size_t j = 0; j < r; ++j) {
        const double u1 = std::max(hashed_uniform(derive_seed(base, 2 * j)), 1e-300);
        const double u2 = hashed_uniform(derive_seed(base, 2 * j + 1));
        v[j] = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
        s += v[j] * v[j];
      }
      const double radius = eps * std::pow(hashed_uniform(derive_seed(base, 0xfacade)), 1.0 / static_cast<double>(r));
      const double nrm = std::sqrt(s);
      for (std::size_t j = 0; j < r; ++j) yi[j] += nrm > 0.0 ? radius * v[j] / nrm : 0.0;
    }
  }
  return y;
}

Tensor iterate(Model& model, Tensor x, const Tensor& x_start, const Tensor& x_orig, std::span<const std::size_t> labels,
               const Objective& obj, AttackOp op, double eps, std::size_t steps, double step, const NormFamily& global) {
  const bool momentum = op == AttackOp::MomentumIterative || op == AttackOp::MI;
  Tensor acc(x.shape(), 0.0);
  const std::size_t r = row_size(x);
  for (std::size_t s = 0; s < steps; ++s) {
    Tensor at = x;
    if (op == AttackOp::MI) {
      const Tensor look = direction(acc, global.norm);
      for (std::size_t i = 0; i < at.numel(); ++i) at[i] += kMomentum * step * look[i];
    }
    const Tensor g = eval_grad(model, at, labels, obj).grad;
    if (!momentum) {
      x = step_project(x, direction(g, global.norm), step, x_start, eps, x_orig, global);
      continue;
    }
    for (std::size_t n = 0; n < x.dim(0); ++n) {
      const double* gi = g.data().data() + n * r;
      double l1 = 0.0;
      for (std::size_t j = 0; j < r; ++j) l1 += std::abs(gi[j]);
      double* ai = acc.data().data() + n * r;
      for (std::size_t j = 0; j < r; ++j) ai[j] = kMomentum * ai[j] + (l1 > 0.0 ? gi[j] / l1 : 0.0);
    }
    x = step_project(x, direction(acc, global.norm), step, x_start, eps, x_orig, global);
  }
  return x;
}

// Per example, keep the first candidate that fools the model, else the one with the highest objective.
Tensor select_best(Model& model, const std::vector<Tensor>& cands, std::span<const std::size_t> labels,
                   const Objective& obj) {
  Tensor best = cands.front();
  const std::size_t r = row_size(best);
  const std::size_t n = best.dim(0);
  std::vector<double> best_val(n);
  std::vector<char> best_fool(n);
  for (std::size_t c = 0; c < cands.size(); ++c) {
    std::vector<std::size_t> pred;
    const auto val = eval_objective(model, cands[c], labels, obj, &pred);
    for (std::size_t i = 0; i < n; ++i) {
      const bool fool = pred[i] != labels[i];
      bool take = c == 0;
      if (!take && !best_fool[i]) take = fool || val[i] > best_val[i];
      if (!take) continue;
      best_val[i] = val[i];
      best_fool[i] = fool;
      if (c) std::copy_n(cands[c].data().data() + i * r, r, best.data().data() + i * r);
    }
  }
  return best;
}

double parse_magnitude(const nlohmann::json& m) {
  if (m.is_number()) return m.get<double>();
  if (!m.is_string()) throw ValidationError("scheme cell: M must be a number or \"a/b\"");
  const std::string s = m.get<std::string>();
  const auto slash = s.find('/');
  try {
    if (slash == std::string::npos) return std::stod(s);
    return std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
  } catch (const std::exception&) {
    throw ValidationError("scheme cell: cannot parse magnitude '" + s + "'");
  }
}

}  // namespace

NormFamily default_norm(Norm n) { return n == Norm::Linf ? NormFamily{Norm::Linf, 8.0 / 255.0} : NormFamily{Norm::L2, 0.5}; }

std::string norm_name(Norm n) { return n == Norm::Linf ? "Linf" : "L2"; }

Norm parse_norm(std::string_view name) {
  if (name == "Linf") return Norm::Linf;
  if (name == "L2") return Norm::L2;
  throw ConfigError("unknown norm '" + std::string(name) + "'");
}

std::span<const AttackOp> ops_for(Norm n) {
  if (n == Norm::Linf) return kLinfOps;
  return kL2Ops;
}

bool op_supported(AttackOp op, Norm n) {
  const auto ops = ops_for(n);
  return std::find(ops.begin(), ops.end(), op) != ops.end();
}

std::string op_name(AttackOp op) {
  switch (op) {
    case AttackOp::FGSM: return "FGSM";
    case AttackOp::PGD: return "PGD";
    case AttackOp::CW: return "CW";
    case AttackOp::MT: return "MT";
    case AttackOp::MI: return "MI";
    case AttackOp::MomentumIterative: return "MomentumIterative";
  }
  return "?";
}

std::string op_display_name(AttackOp op, Norm n) { return op_name(op) + "-" + norm_name(n) + "Attack"; }

std::pair<AttackOp, Norm> parse_op_display(std::string_view name) {
  for (Norm n : {Norm::Linf, Norm::L2})
    for (AttackOp op : ops_for(n))
      if (op_display_name(op, n) == name) return {op, n};
  for (Norm n : {Norm::Linf, Norm::L2})
    for (AttackOp op : {AttackOp::FGSM, AttackOp::PGD, AttackOp::CW, AttackOp::MT, AttackOp::MI, AttackOp::MomentumIterative})
      if (op_display_name(op, n) == name) throw ConfigError("attack " + std::string(name) + " is not available");
  throw ConfigError("unknown attack '" + std::string(name) + "'");
}

double decode_grid(int idx, GridAxis axis, const NormFamily& norm) {
  if (idx < 1 || idx > kGridSize) throw ArgumentError("grid index " + std::to_string(idx) + " outside 1..8");
  if (axis == GridAxis::eps) return idx * norm.eps_max / kGridSize;
  // round half up of idx * 50 / 8 in integer arithmetic
  return static_cast<double>((2 * idx * static_cast<int>(kMaxSteps) + kGridSize) / (2 * kGridSize));
}

double decode_eps(int idx, const NormFamily& norm) { return decode_grid(idx, GridAxis::eps, norm); }

std::size_t decode_steps(int idx) {
  return static_cast<std::size_t>(decode_grid(idx, GridAxis::steps, NormFamily{}));
}

CellParams resolve(const AttackCell& cell, const NormFamily& norm) {
  CellParams p;
  p.op = cell.op;
  p.loss = cell.loss;
  p.eps = decode_eps(cell.eps_idx, norm);
  p.steps = cell.op == AttackOp::FGSM ? 1 : decode_steps(cell.steps_idx);
  p.step_size = cell.op == AttackOp::FGSM ? p.eps : p.eps / 4.0;
  p.restart = cell.restart;
  return p;
}

void validate(const AttackScheme& s) {
  if (s.cells.empty() || s.cells.size() > kMaxCells)
    throw ValidationError("attack scheme must hold 1.." + std::to_string(kMaxCells) + " cells");
  if (!(s.norm.eps_max > 0.0)) throw ValidationError("attack scheme: eps_max must be positive");
  for (std::size_t i = 0; i < s.cells.size(); ++i) {
    const AttackCell& c = s.cells[i];
    if (!op_supported(c.op, s.norm.norm))
      throw ConfigError("cell " + std::to_string(i) + ": " + op_name(c.op) + " is not a " + norm_name(s.norm.norm) + " attack");
    if (c.eps_idx < 1 || c.eps_idx > kGridSize || c.steps_idx < 1 || c.steps_idx > kGridSize)
      throw ValidationError("cell " + std::to_string(i) + ": grid index outside 1..8");
  }
}

Tensor project(const Tensor& x_adv, const Tensor& x_orig, Norm norm, double eps) {
  if (x_adv.shape() != x_orig.shape())
    throw DimensionError("project: shapes " + grad::shape_string(x_adv.shape()) + " and " +
                         grad::shape_string(x_orig.shape()) + " differ");
  if (eps < 0.0) throw ArgumentError("project: negative radius");
  Tensor y = x_adv;
  if (norm == Norm::Linf) {
    for (std::size_t i = 0; i < y.numel(); ++i) y[i] = std::clamp(y[i], x_orig[i] - eps, x_orig[i] + eps);
  } else {
    const std::size_t rows = y.rank() <= 1 ? 1 : y.dim(0);
    const std::size_t r = y.numel() / std::max<std::size_t>(rows, 1);
    for (std::size_t n = 0; n < rows; ++n) {
      double s = 0.0;
      for (std::size_t j = 0; j < r; ++j) {
        const double d = y[n * r + j] - x_orig[n * r + j];
        s += d * d;
      }
      const double nrm = std::sqrt(s);
      if (nrm <= eps) continue;
      const double f = eps / nrm;
      for (std::size_t j = 0; j < r; ++j) y[n * r + j] = x_orig[n * r + j] + f * (y[n * r + j] - x_orig[n * r + j]);
    }
  }
  for (double& v : y.data()) v = std::clamp(v, 0.0, 1.0);
  return y;
}

std::vector<double> distances(const Tensor& x_adv, const Tensor& x, Norm norm) {
  if (x_adv.shape() != x.shape()) throw DimensionError("distance: shapes differ");
  const std::size_t rows = x.rank() <= 1 ? 1 : x.dim(0);
  const std::size_t r = x.numel() / std::max<std::size_t>(rows, 1);
  std::vector<double> out(rows, 0.0);
  for (std::size_t n = 0; n < rows; ++n) {
    double acc = 0.0;
    for (std::size_t j = 0; j < r; ++j) {
      const double d = std::abs(x_adv[n * r + j] - x[n * r + j]);
      acc = norm == Norm::Linf ? std::max(acc, d) : acc + d * d;
    }
    out[n] = norm == Norm::Linf ? acc : std::sqrt(acc);
  }
  return out;
}

double max_distance(const Tensor& x_adv, const Tensor& x, Norm norm) {
  const auto d = distances(x_adv, x, norm);
  return d.empty() ? 0.0 : *std::max_element(d.begin(), d.end());
}

CellRun run_attack_cell(Model& model, const Tensor& x_start, const Tensor& x_orig, std::span<const std::size_t> labels,
                        const CellParams& cell, const NormFamily& global, std::uint64_t seed,
                        std::span<const std::size_t> example_ids) {
  if (!op_supported(cell.op, global.norm))
    throw ConfigError(op_name(cell.op) + " is not a " + norm_name(global.norm) + " attack");
  grad::check_input(model, x_start);
  if (x_start.shape() != x_orig.shape()) throw DimensionError("run_attack_cell: x_start and x_orig differ in shape");
  if (labels.size() != x_start.dim(0)) throw DimensionError("run_attack_cell: label count differs from batch");
  const std::size_t n = x_start.dim(0);
  std::vector<std::size_t> ids(example_ids.begin(), example_ids.end());
  if (ids.empty())
    for (std::size_t i = 0; i < n; ++i) ids.push_back(i);
  if (ids.size() != n) throw DimensionError("run_attack_cell: example id count differs from batch");

  grad::ModeGuard eval(model, false);
  Objective obj{cell.op == AttackOp::CW, cell.loss, cell.kappa, false};
  const std::size_t runs = cell.restart ? 2 : 1;
  const std::uint64_t key = derive_seed(seed, 0xa77ac4);

  if (cell.op == AttackOp::FGSM) {
    std::vector<Tensor> cands;
    for (std::size_t r = 0; r < runs; ++r) {
      const Tensor x0 = r ? project(random_start(x_start, cell.eps, global.norm, derive_seed(key, r), ids), x_orig,
                                    global.norm, global.eps_max)
                          : x_start;
      cands.push_back(iterate(model, x0, x_start, x_orig, labels, obj, AttackOp::PGD, cell.eps, 1, cell.step_size, global));
    }
    return {runs == 1 ? cands[0] : select_best(model, cands, labels, obj), std::vector<std::uint64_t>(n, runs)};
  }

  if (cell.op != AttackOp::MT) {
    std::vector<Tensor> cands;
    for (std::size_t r = 0; r < runs; ++r) {
      const Tensor x0 = r ? project(random_start(x_start, cell.eps, global.norm, derive_seed(key, r), ids), x_orig,
                                    global.norm, global.eps_max)
                          : x_start;
      cands.push_back(iterate(model, x0, x_start, x_orig, labels, obj, cell.op, cell.eps, cell.steps, cell.step_size, global));
    }
    return {runs == 1 ? cands[0] : select_best(model, cands, labels, obj),
            std::vector<std::uint64_t>(n, cell.steps * runs)};
  }

  // MT: one targeted PGD run per wrong class, ordered by the clean logits at x_start.
  const Tensor z = grad::forward(model, x_start);
  const std::size_t k = z.dim(1);
  const std::size_t targets = k - 1;
  const std::size_t per = std::max<std::size_t>(1, (2 * cell.steps + targets) / (2 * targets));
  std::vector<std::vector<std::size_t>> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c)
      if (c != labels[i]) order[i].push_back(c);
    const double* row = z.data().data() + i * k;
    std::stable_sort(order[i].begin(), order[i].end(), [row](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  }
  Objective tobj = obj;
  tobj.targeted = true;
  std::vector<Tensor> cands;
  std::vector<std::size_t> tgt(n);
  for (std::size_t t = 0; t < targets; ++t) {
    for (std::size_t i = 0; i < n; ++i) tgt[i] = order[i][t];
    for (std::size_t r = 0; r < runs; ++r) {
      const Tensor x0 = r ? project(random_start(x_start, cell.eps, global.norm, derive_seed(key, r, t + 1), ids),
                                    x_orig, global.norm, global.eps_max)
                          : x_start;
      cands.push_back(iterate(model, x0, x_start, x_orig, tgt, tobj, AttackOp::PGD, cell.eps, per, cell.step_size, global));
    }
  }
  return {select_best(model, cands, labels, obj), std::vector<std::uint64_t>(n, per * targets * runs)};
}

SchemeRun run_cells(Model& model, const data::Dataset& d, std::span<const CellParams> cells, const NormFamily& norm,
                    std::uint64_t seed) {
  if (d.empty()) throw ArgumentError("run_scheme: empty dataset");
  const auto t0 = std::chrono::steady_clock::now();
  grad::ModeGuard eval(model, false);
  const std::size_t n = d.size();
  SchemeRun out;
  out.fooled.assign(n, false);
  out.x_adv = d.inputs;
  const auto pred = grad::predict(model, d.inputs);
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n; ++i) {
    if (pred[i] != d.labels[i])
      out.fooled[i] = true;
    else
      active.push_back(i);
  }
  const std::size_t r = d.inputs.row_size();
  for (std::size_t c = 0; c < cells.size() && !active.empty(); ++c) {
    const Tensor xs = out.x_adv.gather_rows(active);
    const Tensor xo = d.inputs.gather_rows(active);
    std::vector<std::size_t> ys;
    for (std::size_t i : active) ys.push_back(d.labels[i]);
    CellRun run = run_attack_cell(model, xs, xo, ys, cells[c], norm, derive_seed(seed, c), active);
    const auto p = grad::predict(model, run.x_adv);
    std::vector<std::size_t> still;
    for (std::size_t j = 0; j < active.size(); ++j) {
      const std::size_t i = active[j];
      std::copy_n(run.x_adv.data().data() + j * r, r, out.x_adv.data().data() + i * r);
      out.result.cost_units += run.cost[j];
      if (p[j] != d.labels[i])
        out.fooled[i] = true;
      else
        still.push_back(i);
    }
    active = std::move(still);
  }
  const auto fooled = static_cast<double>(std::count(out.fooled.begin(), out.fooled.end(), true));
  out.result.robust_acc = 1.0 - fooled / static_cast<double>(n);
  out.result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

SchemeRun run_scheme(Model& model, const data::Dataset& d, const AttackScheme& scheme, std::uint64_t seed) {
  validate(scheme);
  std::vector<CellParams> cells;
  for (const AttackCell& c : scheme.cells) cells.push_back(resolve(c, scheme.norm));
  return run_cells(model, d, cells, scheme.norm, seed);
}

Tensor perturb(Model& model, const Tensor& x, std::span<const std::size_t> labels, const CellParams& cell,
               const NormFamily& norm, std::uint64_t seed) {
  return run_attack_cell(model, x, x, labels, cell, norm, seed).x_adv;
}

nlohmann::json scheme_to_json(const AttackScheme& s) {
  nlohmann::json cells = nlohmann::json::array();
  for (const AttackCell& c : s.cells) {
    nlohmann::json cell = nlohmann::json::object();
    cell["A"] = op_display_name(c.op, s.norm.norm);
    cell["L"] = c.op == AttackOp::CW ? nlohmann::json(nullptr) : nlohmann::json(loss_name(c.loss));
    const double eps = decode_eps(c.eps_idx, s.norm);
    const double k = eps * 255.0;
    if (std::abs(k - std::round(k)) < 1e-9)
      cell["M"] = std::to_string(static_cast<long>(std::round(k))) + "/255";
    else
      cell["M"] = eps;
    cell["I"] = c.op == AttackOp::FGSM ? 1 : decode_steps(c.steps_idx);
    cell["R"] = c.restart;
    cells.push_back(cell);
  }
  nlohmann::json j = nlohmann::json::object();
  j["norm"] = norm_name(s.norm.norm);
  j["eps_max"] = s.norm.eps_max;
  j["cells"] = cells;
  return j;
}

AttackScheme scheme_from_json(const nlohmann::json& j) {
  const nlohmann::json* cells = &j;
  AttackScheme s;
  bool have_norm = false;
  if (j.is_object()) {
    if (!j.contains("cells")) throw ValidationError("scheme: missing \"cells\"");
    cells = &j["cells"];
    if (j.contains("norm")) {
      s.norm = default_norm(parse_norm(j["norm"].get<std::string>()));
      have_norm = true;
    }
    if (j.contains("eps_max")) s.norm.eps_max = j["eps_max"].get<double>();
  }
  if (!cells->is_array()) throw ValidationError("scheme: cells must be a list");
  for (const auto& cj : *cells) {
    if (!cj.is_object() || !cj.contains("A") || !cj.contains("M") || !cj.contains("I"))
      throw ValidationError("scheme cell: needs A, M and I");
    const auto [op, norm] = parse_op_display(cj["A"].get<std::string>());
    if (!have_norm) {
      const double keep = s.norm.eps_max;
      s.norm = default_norm(norm);
      if (j.is_object() && j.contains("eps_max")) s.norm.eps_max = keep;
      have_norm = true;
    } else if (norm != s.norm.norm) {
      throw ConfigError("scheme mixes norm families");
    }
    AttackCell c;
    c.op = op;
    if (cj.contains("L") && !cj["L"].is_null()) c.loss = parse_loss(cj["L"].get<std::string>());
    const double eps = parse_magnitude(cj["M"]);
    const double idx = eps * kGridSize / s.norm.eps_max;
    if (std::abs(idx - std::round(idx)) > 1e-6 || std::round(idx) < 1 || std::round(idx) > kGridSize)
      throw ValidationError("scheme cell: magnitude is not on the eps grid");
    c.eps_idx = static_cast<int>(std::round(idx));
    const long steps = cj["I"].get<long>();
    c.steps_idx = 0;
    for (int i = 1; i <= kGridSize; ++i)
      if (static_cast<long>(decode_steps(i)) == steps) c.steps_idx = i;
    if (op == AttackOp::FGSM) c.steps_idx = 1;
    if (c.steps_idx == 0) throw ValidationError("scheme cell: iteration count " + std::to_string(steps) + " is not on the grid");
    if (cj.contains("R")) c.restart = cj["R"].get<bool>();
    s.cells.push_back(c);
  }
  validate(s);
  return s;
}

AttackScheme load_scheme(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scheme file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("scheme file '" + path + "': " + e.what());
  }
  return scheme_from_json(j);
}

void save_scheme(const std::string& path, const AttackScheme& s) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write scheme file '" + path + "'");
  out << scheme_to_json(s).dump(2) << '\n';
}

}  // namespace autorobust::attack
