#include <CLI11.hpp>

#include <algorithm>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "autorobust/attack/attacks.hpp"
#include "autorobust/core/errors.hpp"
#include "autorobust/core/rng.hpp"
#include "autorobust/grad/check.hpp"
#include "autorobust/grad/ops.hpp"
#include "autorobust/harness/harness.hpp"
#include "autorobust/nas/nas.hpp"
#include "autorobust/nets/cells.hpp"
#include "autorobust/nets/networks.hpp"
#include "autorobust/nets/train.hpp"
#include "autorobust/robust/robust.hpp"
#include "autorobust/search/search.hpp"

using namespace autorobust;
using grad::Tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::size_t> iota_ids(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

std::vector<std::size_t> predictions(grad::Model& m, const Tensor& x) {
  const Tensor z = grad::forward(m, x);
  const std::size_t n = x.shape()[0], k = z.numel() / n;
  std::vector<std::size_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (z[i * k + c] > z[i * k + best]) best = c;
    y[i] = best;
  }
  return y;
}

// The label ranked `r` by the model's logits for example i.
std::size_t ranked_label(grad::Model& m, const Tensor& x, std::size_t r) {
  const Tensor z = grad::forward(m, x);
  std::vector<std::size_t> idx(z.numel());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return z[a] > z[b]; });
  return idx[r];
}

// ---- 1 ----

constexpr double kFdStep = 1e-5, kFdTol = 1e-4;
// Central differences at h=1e-5 carry ~1e-11 of roundoff, so relative error is taken against at
// least 1e-6.
constexpr double kFdFloor = 1e-6;

struct FdStats {
  std::size_t coords = 0;
  std::size_t kinks = 0;
  double worst = 0.0;
};

// Compares one coordinate. `at(delta)` evaluates the loss with the coordinate shifted by delta.
// When the central differences at h and h/2 disagree the coordinate lies within h of a kink
// (a ReLU or max-pool switch) and is counted but not compared; the analytic value plays no
// part in that test.
void fd_coordinate(const std::function<double(double)>& at, double analytic, FdStats& st) {
  const double h = kFdStep;
  const double d1 = (at(h) - at(-h)) / (2.0 * h);
  const double d2 = (at(h / 2) - at(-h / 2)) / h;
  if (std::abs(d1 - d2) > 0.1 * kFdTol * std::max(std::abs(d1), 1e-5)) {
    ++st.kinks;
    return;
  }
  ++st.coords;
  st.worst = std::max(st.worst, std::abs(analytic - d1) / std::max(std::abs(analytic), kFdFloor));
}

FdStats input_fd(grad::Model& m, const Tensor& x, std::span<const std::size_t> y, attack::LossId loss) {
  const Tensor g = grad::grad_input(m, x, y, loss);
  FdStats st;
  Tensor p = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    fd_coordinate(
        [&](double dlt) {
          p[i] = x[i] + dlt;
          const double v = grad::loss_value(m, p, y, loss);
          p[i] = x[i];
          return v;
        },
        g[i], st);
  }
  return st;
}

// Analytic parameter gradient against central differences on `coords` random parameter entries.
FdStats sampled_param_fd(grad::Model& m, const std::function<grad::Var(grad::Tape&)>& analytic_loss,
                         const std::function<double()>& value, std::size_t coords, Rng& rng) {
  grad::zero_grads(m);
  {
    grad::Tape tape(true);
    tape.backward(analytic_loss(tape));
  }
  auto params = m.parameters();
  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t t = 0; t < params.size(); ++t)
    for (std::size_t i = 0; i < params[t]->numel(); ++i) all.emplace_back(t, i);
  FdStats st;
  for (std::size_t k = 0; k < std::min(coords, all.size()); ++k) {
    const auto [t, i] = all[rng.index(all.size())];
    Tensor& w = *params[t];
    const double orig = w[i];
    fd_coordinate(
        [&](double dlt) {
          w[i] = orig + dlt;
          const double v = value();
          w[i] = orig;
          return v;
        },
        w.grad() ? (*w.grad())[i] : 0.0, st);
  }
  return st;
}

Outcome gradient_correctness() {
  std::size_t checks = 0, failures = 0, coords = 0, kinks = 0;
  double worst = 0.0;
  std::string first_failure;
  std::size_t kind_count[3] = {0, 0, 0};
  auto record = [&](const FdStats& st, const std::string& what) {
    ++checks;
    coords += st.coords;
    kinks += st.kinks;
    worst = std::max(worst, st.worst);
    if (!(st.worst <= kFdTol)) {
      ++failures;
      if (first_failure.empty()) first_failure = what + fmt(" err %.3g", st.worst);
    }
  };

  for (std::size_t i = 0; i < 100; ++i) {
    Rng rng(derive_seed(1001, i));
    const bool cell = i % 2 == 1;
    const std::size_t K = 3 + rng.index(3);
    std::unique_ptr<grad::Model> m;
    Tensor x;
    if (cell) {
      const auto g = nas::decode(nas::random_arch_genome(rng));
      m = nets::instantiate_genotype(g, 4, 2, {1, 4, 4}, K, rng.next());
      x = Tensor({2, 1, 4, 4});
    } else {
      const std::size_t d = 4 + rng.index(5);
      const std::size_t hidden = 5 + rng.index(6);
      m = nets::build_mlp({d, hidden, K}, rng.next());
      x = Tensor({2, d});
    }
    m->set_training(false);
    for (double& v : x.values()) v = rng.uniform(0.1, 0.9);
    const std::string model_name = fmt("model %zu (%s)", i, cell ? "cell" : "mlp");

    for (attack::LossId loss : attack::kAllLosses) {
      // Per example so the label can be chosen; with a third-ranked label DLR is locally constant.
      for (std::size_t n = 0; n < 2; ++n) {
        const Tensor xn = x.slice_rows(n, n + 1);
        const std::size_t y = ranked_label(*m, xn, rng.index(2));
        record(input_fd(*m, xn, std::span(&y, 1), loss), model_name + " loss " + attack::loss_name(loss));
      }
    }

    std::vector<std::size_t> y(2);
    for (auto& v : y) v = rng.index(K);
    const auto ids = iota_ids(2);
    robust::RobustLossConfig cfg;
    const std::size_t kind = (i / 2) % 3;
    std::string kname;
    if (kind == 0) {
      cfg.kind = robust::LossKind::adversarial;
      cfg.source = robust::pgd_source(0.1, 3, i);
      cfg.gamma = 0.7;
      kname = "adversarial";
    } else if (kind == 1 && cell) {
      cfg.kind = robust::LossKind::mixture;
      cfg.source = robust::NoiseSource::natural({data::CorruptionKind::gaussian_noise, 2}, i);
      cfg.gamma = 0.6;
      cfg.mixture_fraction = 1.0;
      kname = "mixture";
    } else {
      cfg.kind = robust::LossKind::regularizer;
      cfg.reg = (i / 6) % 2 ? robust::Regularizer::hessian : robust::Regularizer::jacobian;
      cfg.h = cfg.reg == robust::Regularizer::hessian ? 1e-2 : 1e-3;
      cfg.gamma = 0.3;
      kname = cfg.reg == robust::Regularizer::hessian ? "regularizer-hessian" : "regularizer-jacobian";
    }
    ++kind_count[static_cast<int>(cfg.kind) - 1];
    const std::uint64_t step = 7;
    std::function<double()> value;
    if (cfg.kind == robust::LossKind::adversarial) {
      // The attacked batch is a constant of the loss; differences are taken with it frozen.
      const Tensor xa = robust::attacked_batch(cfg, *m, x, y, step);
      value = [&, xa] {
        grad::Tape t(false);
        return grad::add(nets::cross_entropy(m->forward(t, t.constant(x)), y),
                         grad::scale(nets::cross_entropy(m->forward(t, t.constant(xa)), y), cfg.gamma))
            .value()
            .item();
      };
    } else {
      value = [&] {
        grad::Tape t(false);
        return robust::robust_loss(cfg, *m, t, x, y, ids, step).value().item();
      };
    }
    Rng pick(derive_seed(2002, i));
    record(sampled_param_fd(
               *m, [&](grad::Tape& t) { return robust::robust_loss(cfg, *m, t, x, y, ids, step); }, value, 24, pick),
           model_name + " robust_loss " + kname);
  }
  const bool all_kinds = kind_count[0] > 0 && kind_count[1] > 0 && kind_count[2] > 0;
  return {failures == 0 && all_kinds,
          fmt("%zu checks over %zu coordinates, %zu over 1e-4, worst rel err %.3g; %zu coordinates within h of a kink "
              "skipped; robust_loss kinds adv/mix/reg = %zu/%zu/%zu",
              checks, coords, failures, worst, kinks, kind_count[0], kind_count[1], kind_count[2]) +
              (first_failure.empty() ? "" : "; first failure: " + first_failure)};
}

// ---- 2 ----

Outcome budget_invariant() {
  std::size_t executions = 0, violations = 0;
  double worst_excess = -1e300;
  for (std::size_t s = 0; s < 400; ++s) {
    Rng rng(derive_seed(3003, s));
    const bool l2 = s % 2 == 1;
    const bool cnn = (s / 2) % 2 == 1;
    attack::NormFamily norm = attack::default_norm(l2 ? attack::Norm::L2 : attack::Norm::Linf);
    norm.eps_max = l2 ? rng.uniform(0.1, 2.0) : rng.uniform(0.005, 0.3);
    const auto space = search::SearchSpace::full(norm, 3, true);
    const auto scheme = search::decode(search::random_genome(space, rng), space);

    std::unique_ptr<grad::Model> m;
    data::Dataset d;
    if (cnn) {
      m = nets::build_cnn({1, 6, 6}, {3}, 4, rng.next());
      d.inputs = Tensor({25, 1, 6, 6});
    } else {
      m = nets::build_mlp({8, 10, 4}, rng.next());
      d.inputs = Tensor({25, 8});
    }
    for (double& v : d.inputs.values()) v = rng.uniform(0.0, 1.0);
    // Labels the model gets right, so every example is actually attacked.
    d.labels = predictions(*m, d.inputs);
    d.num_classes = 4;
    const auto run = attack::run_scheme(*m, d, scheme, s);
    const auto dist = attack::distances(run.x_adv, d.inputs, norm.norm);
    for (std::size_t i = 0; i < dist.size(); ++i) {
      ++executions;
      worst_excess = std::max(worst_excess, dist[i] - norm.eps_max);
      if (dist[i] > norm.eps_max + 1e-9) ++violations;
    }
    for (double v : run.x_adv.values())
      if (!(v >= 0.0 && v <= 1.0)) {
        ++violations;
        break;
      }
  }
  return {executions >= 10000 && violations == 0,
          fmt("%zu executions, %zu violations, max(dist - eps_max) = %.3g", executions, violations, worst_excess)};
}

// ---- shared trained model ----

struct Toy {
  data::Dataset train_set = data::make_shapes_dataset(20, 8, 4, 0.05, 11);
  data::Dataset eval_set = data::make_shapes_dataset(6, 8, 4, 0.05, 12);
  std::unique_ptr<grad::Model> model = nets::build_cnn({1, 8, 8}, {8, 16}, 4, 5);
  Toy() {
    nets::TrainSchedule s;
    s.epochs = 40;
    s.batch_size = 16;
    nets::train(*model, train_set, s, 1);
    model->set_training(false);
  }
};

Toy& toy() {
  static Toy t;
  return t;
}

// ---- 3 ----

Outcome oracle_equivalence() {
  auto& t = toy();
  const auto slice = t.eval_set.slice(0, 16);
  search::SearchSpace space = search::SearchSpace::full(attack::NormFamily{attack::Norm::Linf, 0.3}, 1);
  space.ops = {1, 2};
  space.losses = {1, 6};
  space.eps = {2, 6};
  space.steps = {1, 4};
  search::Evaluator oracle_ev(*t.model, slice, space);
  const auto oracle = search::brute_force_oracle(oracle_ev);
  const double optimum = oracle.best.result.robust_acc;
  std::set<double> levels;
  std::size_t at_optimum = 0;
  for (const auto& r : oracle.rows) {
    levels.insert(r.result.robust_acc);
    at_optimum += r.result.robust_acc == optimum;
  }
  std::size_t hits[4] = {0, 0, 0, 0};
  std::size_t min_budget = SIZE_MAX;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    search::Evaluator ev(*t.model, slice, space);
    search::DeConfig de;
    de.pop = 8;
    de.gens = 7;
    const auto r0 = search::de_search(ev, de, seed);
    search::PsoConfig pso;
    pso.pop = 8;
    pso.gens = 7;
    const auto r1 = search::pso_search(ev, pso, seed);
    search::LocalConfig ls;
    ls.neigh = 16;
    const auto r2 = search::local_search(ev, ls, seed);
    const auto r3 = search::random_search(ev, 64, seed);
    std::size_t k = 0;
    for (const auto* r : {&r0, &r1, &r2, &r3}) {
      hits[k++] += r->best_result.robust_acc == optimum;
      min_budget = std::min(min_budget, r->history.size());
    }
  }
  const bool ok = hits[0] == 5 && hits[1] == 5 && hits[2] == 5 && hits[3] == 5;
  return {ok && oracle.rows.size() == 16 && levels.size() > 1 && min_budget >= 32,
          fmt("space of %zu genomes, %zu accuracy levels, optimum robust_acc %.4f held by %zu; smallest budget %zu "
              "evals; seeds matching DE %zu/5 PSO %zu/5 local %zu/5 random %zu/5",
              oracle.rows.size(), levels.size(), optimum, at_optimum, min_budget, hits[0], hits[1], hits[2], hits[3])};
}

// ---- 4 ----

Outcome fgsm_pgd_identity() {
  std::size_t same = 0;
  for (std::size_t s = 0; s < 100; ++s) {
    Rng rng(derive_seed(4004, s));
    std::unique_ptr<grad::Model> m;
    Tensor x;
    if (s % 2) {
      m = nets::build_cnn({1, 6, 6}, {3}, 4, rng.next());
      x = Tensor({4, 1, 6, 6});
    } else {
      m = nets::build_mlp({6, 8, 4}, rng.next());
      x = Tensor({4, 6});
    }
    for (double& v : x.values()) v = rng.uniform(0.0, 1.0);
    std::vector<std::size_t> y(4);
    for (auto& v : y) v = rng.index(4);
    const double eps = rng.uniform(0.01, 0.3);
    const attack::NormFamily norm{attack::Norm::Linf, eps};
    attack::CellParams fgsm;
    fgsm.op = attack::AttackOp::FGSM;
    fgsm.eps = eps;
    fgsm.steps = 1;
    fgsm.step_size = eps;
    attack::CellParams pgd = fgsm;
    pgd.op = attack::AttackOp::PGD;
    const Tensor a = attack::perturb(*m, x, y, fgsm, norm, s);
    const Tensor b = attack::perturb(*m, x, y, pgd, norm, s);
    same += a.same_values(b);
  }
  return {same == 100, fmt("%zu/100 cases bit-identical", same)};
}

// ---- 5 ----

Outcome nsga_machinery() {
  using search::Objectives;
  const std::vector<Objectives> pts{{1, 3}, {2, 2}, {3, 1}, {2, 3}, {3, 3}};
  const auto rank = search::nondominated_sort(pts);
  const bool ranks_ok = rank == std::vector<std::size_t>{0, 0, 0, 1, 2};
  const auto cd = search::crowding_distance({{1, 3}, {2, 2}, {3, 1}});
  const bool crowd_ok = cd.size() == 3 && std::isinf(cd[0]) && cd[1] == 2.0 && std::isinf(cd[2]);

  auto& t = toy();
  const auto slice = t.eval_set.slice(0, 16);
  search::SearchSpace space = search::SearchSpace::full(attack::default_norm(attack::Norm::Linf), 2);
  space.steps = {1, 2, 3};
  std::size_t runs = 0, bad = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    search::Evaluator ev(*t.model, slice, space);
    search::NsgaConfig cfg;
    cfg.pop = 8;
    cfg.gens = 3;
    const auto r = search::nsga2_search(ev, cfg, seed);
    ++runs;
    const auto& fronts = r.archive.fronts;
    for (std::size_t f = 0; f < fronts.size(); ++f) {
      for (const auto& a : fronts[f]) {
        const auto oa = search::objectives(a.result);
        for (const auto& b : fronts[f])
          if (search::dominates(search::objectives(b.result), oa)) ++bad;
        for (std::size_t g = f; g < fronts.size(); ++g)
          for (const auto& b : fronts[g])
            if (search::dominates(search::objectives(b.result), oa)) ++bad;
        if (f > 0) {
          bool covered = false;
          for (const auto& b : fronts[f - 1]) covered |= search::dominates(search::objectives(b.result), oa);
          if (!covered) ++bad;
        }
      }
      const auto& c = r.archive.crowding[f];
      if (fronts[f].size() >= 2 && std::count_if(c.begin(), c.end(), [](double v) { return std::isinf(v); }) < 2) ++bad;
    }
  }
  return {ranks_ok && crowd_ok && bad == 0,
          fmt("ranks %s, crowding %s, %zu invariant violations over %zu NSGA-II runs", ranks_ok ? "exact" : "WRONG",
              crowd_ok ? "exact" : "WRONG", bad, runs)};
}

// ---- 6 ----

constexpr double kToyEps = 0.1;
// The adversarially trained toy holds 1.0 accuracy under PGD-7 up to about 0.2.
constexpr double kProbeEps = 0.25;

struct AdvToy {
  data::Dataset train_set = data::make_shapes_dataset(16, 8, 4, 0.05, 31);
  data::Dataset eval_set = data::make_shapes_dataset(8, 8, 4, 0.05, 32);
  std::unique_ptr<grad::Model> model = nets::build_cnn({1, 8, 8}, {8, 16}, 4, 6);
  AdvToy() {
    nets::TrainSchedule s;
    s.epochs = 30;
    s.batch_size = 16;
    s.adversarial = nets::AdversarialConfig{7, kToyEps, kToyEps / 4.0, attack::Norm::Linf};
    nets::train(*model, train_set, s, 2);
    model->set_training(false);
  }
};

Outcome de_vs_manual() {
  AdvToy t;
  const attack::NormFamily norm{attack::Norm::Linf, kProbeEps};
  const auto slice = t.eval_set.slice(0, 32);
  const double clean = nets::accuracy(*t.model, slice);
  std::size_t wins = 0;
  double worst_manual = 1.0;
  std::string rows;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto baseline = [&](attack::AttackOp op, std::size_t steps) {
      attack::CellParams c;
      c.op = op;
      c.eps = kProbeEps;
      c.steps = steps;
      c.step_size = op == attack::AttackOp::FGSM ? kProbeEps : kProbeEps / 4.0;
      return attack::run_cells(*t.model, slice, std::span(&c, 1), norm, seed).result.robust_acc;
    };
    const double fgsm = baseline(attack::AttackOp::FGSM, 1);
    // Nearest grid step count to 7 in the searched space.
    const double pgd = baseline(attack::AttackOp::PGD, attack::decode_steps(1));
    const double cw = baseline(attack::AttackOp::CW, attack::decode_steps(1));
    const double mom = baseline(attack::AttackOp::MomentumIterative, attack::decode_steps(1));
    const double best_manual = std::min({fgsm, pgd, cw, mom});
    worst_manual = std::min(worst_manual, best_manual);
    search::Evaluator ev(*t.model, slice, search::SearchSpace::full(norm, 3), seed);
    search::DeConfig de;
    de.pop = 10;
    de.gens = 5;
    const double found = search::de_search(ev, de, seed).best_result.robust_acc;
    wins += found <= best_manual;
    rows += fmt(" [seed %llu: DE %.4f vs FGSM %.4f PGD %.4f CW %.4f MIM %.4f]", static_cast<unsigned long long>(seed),
                found, fgsm, pgd, cw, mom);
  }
  return {wins >= 2 && worst_manual < 1.0,
          fmt("eps %.2f, clean acc %.4f, DE <= best manual in %zu/3 seeds;", kProbeEps, clean, wins) + rows};
}

// ---- 7 ----

Outcome nsga_vs_random() {
  AdvToy t;
  const attack::NormFamily norm{attack::Norm::Linf, kProbeEps};
  const auto slice = t.eval_set.slice(0, 32);
  const auto space = search::SearchSpace::full(norm, 2);
  std::size_t wins = 0;
  bool any_area = false;
  std::string rows;
  for (std::uint64_t seed : {1, 2, 3}) {
    search::Evaluator ev(*t.model, slice, space, seed);
    search::NsgaConfig cfg;
    cfg.pop = 10;
    cfg.gens = 4;
    const auto n = search::nsga2_search(ev, cfg, seed);
    const std::size_t budget = n.history.size();
    const auto r = search::random_search(ev, budget, seed);
    const search::Objectives ref{1.0, static_cast<double>(ev.max_cost())};
    std::vector<search::Objectives> np, rp;
    for (const auto& m : n.archive.fronts.front()) np.push_back(search::objectives(m.result));
    for (const auto& m : r.history) rp.push_back(search::objectives(m.result));
    const double hn = search::hypervolume(np, ref), hr = search::hypervolume(rp, ref);
    wins += hn >= hr;
    any_area = any_area || hn > 0.0 || hr > 0.0;
    rows += fmt(" [seed %llu: budget %zu, HV nsga2 %.6g vs random %.6g]", static_cast<unsigned long long>(seed), budget,
                hn, hr);
  }
  return {wins >= 2 && any_area, fmt("eps %.2f, NSGA-II >= random in %zu/3 seeds;", kProbeEps, wins) + rows};
}

// ---- 8 ----

Outcome metric_oracles() {
  const Tensor w({3, 4}, std::vector<double>{1, -2, 0.5, 0, 0.3, 1, -1, 2, -0.7, 0.2, 0.1, 1.5});
  double w2 = 0.0;
  for (double v : w.values()) w2 += v * v;
  auto m = nets::linear_model(w, {4});
  Rng rng(8);
  Tensor x({5, 4});
  for (double& v : x.values()) v = rng.uniform(0.0, 1.0);
  const double j = robust::jacobian_fnorm(*m, x);
  const double hess = robust::hessian_fnorm_estimate(
      [](const std::vector<double>& p) { return std::vector<double>{p[0], 2.0 * p[1]}; }, {0.3, -0.2}, 64, 1e-3, 8);
  const bool ok = std::abs(j - w2) <= 1e-8 && std::abs(hess - 5.0) <= 0.5;
  return {ok, fmt("jacobian %.12g vs ||W||^2 %.12g; hessian estimate %.6g vs 5", j, w2, hess)};
}

// ---- 9 ----

Outcome nas_sanity() {
  const auto d = data::make_shapes_dataset(8, 8, 4, 0.05, 21);
  std::string rows;
  bool valid = true;
  const auto t0 = std::chrono::steady_clock::now();
  for (nas::Strategy s : {nas::Strategy::darts, nas::Strategy::nasp, nas::Strategy::fairdarts, nas::Strategy::smoothdarts,
                          nas::Strategy::pcdarts, nas::Strategy::random, nas::Strategy::de, nas::Strategy::ws_random}) {
    nas::SearchConfig c;
    c.strategy = s;
    c.C = 8;
    c.L = 4;
    c.epochs = 5;
    c.warm_epochs = 1;
    c.metric.kind = robust::MetricKind::adversarial;
    c.metric.sources = {robust::fgsm_source(8.0 / 255.0)};
    c.candidate_C = 8;
    c.candidate_L = 4;
    c.candidate_epochs = 2;
    c.n_samples = 4;
    c.pop = 4;
    c.gens = 1;
    c.train_epochs = 3;
    c.n_eval = 8;
    const auto ts = std::chrono::steady_clock::now();
    const auto r = nas::arch_search(c, d, 9);
    bool ok = true;
    try {
      nets::validate(r.genotype, false);
    } catch (const std::exception&) {
      ok = false;
    }
    valid &= ok;
    rows += fmt(" %s %s %.0fs;", nas::strategy_name(s).c_str(), ok ? "valid" : "INVALID", seconds_since(ts));
  }
  const double total = seconds_since(t0);

  nas::SearchConfig c;
  c.C = 4;
  c.L = 2;
  c.epochs = 3;
  c.warm_epochs = 1;
  const auto r = nas::darts_search(c, d, 5);
  const double val_loss[] = {1.3870191633672906, 1.3877158306453607, 1.3922083598235055};
  const double acc[] = {0.25, 0.25, 0.25};
  bool frozen = r.trace.size() == 3;
  for (std::size_t i = 0; frozen && i < 3; ++i)
    frozen = std::abs(r.trace[i].val_loss - val_loss[i]) <= 1e-9 && r.trace[i].metric_value == acc[i];
  return {valid && frozen && total <= 1200.0,
          fmt("8 strategies in %.0fs (limit 1200s);", total) + rows +
              fmt(" clean darts trace %s", frozen ? "matches the frozen values" : "DIFFERS from the frozen values")};
}

// ---- 10 ----

harness::ExperimentConfig circuit_base() {
  harness::ExperimentConfig c;
  c.kind = harness::Kind::circuit_defense;
  c.seeds = {1};
  c.norm = attack::NormFamily{attack::Norm::Linf, kToyEps};
  c.train_data.kind = "shapes";
  c.train_data.n_per_class = 12;
  c.train_data.seed = 41;
  c.eval_data = c.train_data;
  c.eval_data.seed = 42;
  c.model.train.epochs = 10;
  c.model.train.batch_size = 16;
  return c;
}

nas::SearchConfig candidate_search(nas::Strategy s) {
  nas::SearchConfig a;
  a.strategy = s;
  a.candidate_C = 4;
  a.candidate_L = 2;
  a.candidate_epochs = 3;
  a.n_samples = 12;
  a.pop = 4;
  a.gens = 2;
  return a;
}

Outcome de_nas_vs_random(std::string& rows) {
  std::size_t wins = 0;
  const auto c = circuit_base();
  const auto train_set = harness::load_dataset(c.train_data);
  for (std::uint64_t seed : {1, 2, 3}) {
    nas::SearchConfig de = candidate_search(nas::Strategy::de);
    de.metric.kind = robust::MetricKind::adversarial;
    de.metric.sources = {robust::pgd_source(kToyEps, 7, seed)};
    nas::SearchConfig rnd = de;
    rnd.strategy = nas::Strategy::random;
    rnd.n_samples = de.pop * (de.gens + 1);
    const auto a = nas::arch_search(de, train_set, seed);
    const auto b = nas::arch_search(rnd, train_set, seed);
    wins += a.best_fitness > b.best_fitness;
    rows += fmt(" [seed %llu: DE %.4f vs random %.4f over %zu candidates]", static_cast<unsigned long long>(seed),
                a.best_fitness, b.best_fitness, rnd.n_samples);
  }
  return {wins >= 2, fmt("DE NAS beats random NAS in %zu/3 seeds", wins)};
}

Outcome defense_circuit(std::string& rows) {
  auto c = circuit_base();
  c.arch = candidate_search(nas::Strategy::random);
  const auto train_set = harness::load_dataset(c.train_data);
  const auto eval_set = harness::load_dataset(c.eval_data);

  // The searched scheme: DE against a cell network of the family being searched.
  Rng pick(7);
  harness::ModelSpec cell;
  cell.arch = "genotype";
  cell.genotype = nas::decode(nas::random_arch_genome(pick));
  cell.train = c.model.train;
  auto victim = harness::build_model(cell, train_set, 1);
  const attack::NormFamily norm{attack::Norm::Linf, kToyEps};
  const auto slice = eval_set.slice(0, 32);
  search::Evaluator ev(*victim, slice, search::SearchSpace::full(norm, 3), 1);
  search::DeConfig dc;
  dc.pop = 10;
  dc.gens = 4;
  const auto found = search::de_search(ev, dc, 1);
  const auto aaa_scheme = search::decode(found.best, ev.space());
  attack::AttackScheme fgsm_scheme;
  fgsm_scheme.norm = norm;
  fgsm_scheme.cells = {attack::AttackCell{attack::AttackOp::FGSM, attack::LossId::CE_P, 8, 1, false}};
  const double fgsm_on_victim = attack::run_scheme(*victim, slice, fgsm_scheme, 1).result.robust_acc;
  rows += fmt(" [scheme on a cell net: searched %.4f vs FGSM %.4f]", found.best_result.robust_acc, fgsm_on_victim);

  std::size_t wins = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto with_aaa = harness::circuit_defense(c, aaa_scheme, seed);
    const auto with_fgsm = harness::circuit_defense(c, fgsm_scheme, seed);
    double aaa_acc = -1.0;
    for (const auto& [name, v] : with_aaa.report.accuracies)
      if (name == "AAA") aaa_acc = v;
    // The FGSM winner retrained exactly as the circuit does, then measured under the searched scheme.
    harness::ModelSpec spec = c.model;
    spec.arch = "genotype";
    spec.genotype = with_fgsm.search.genotype;
    auto fgsm_model = harness::build_model(spec, train_set, seed);
    std::vector<attack::CellParams> cells;
    for (const auto& cell : aaa_scheme.cells) cells.push_back(attack::resolve(cell, aaa_scheme.norm));
    const double fgsm_under_aaa = robust::robust_accuracy(
        *fgsm_model, eval_set, robust::NoiseSource::adversarial(cells, aaa_scheme.norm, seed, "AAA"));
    wins += aaa_acc >= fgsm_under_aaa;
    rows += fmt(" [seed %llu: AAA-NAS %.4f vs FGSM-NAS %.4f under the scheme%s]", static_cast<unsigned long long>(seed),
                aaa_acc, fgsm_under_aaa, with_aaa.search.genotype == with_fgsm.search.genotype ? ", same winner" : "");
  }
  return {wins >= 2, fmt("AAA-metric NAS >= FGSM-metric NAS in %zu/3 seeds", wins)};
}

Outcome attack_circuit(std::string& rows) {
  auto c = circuit_base();
  c.kind = harness::Kind::circuit_attack;
  c.attack.strategy = "de";
  c.attack.max_cells = 2;
  c.attack.de.pop = 8;
  c.attack.de.gens = 3;
  c.attack.eval_examples = 32;
  Rng rng(10);
  harness::ModelSpec src;
  src.arch = "genotype";
  src.genotype = nas::decode(nas::random_arch_genome(rng));
  src.train.epochs = 15;
  src.train.batch_size = 16;
  harness::ModelSpec robust_src = src;
  robust_src.name = "adv";
  robust_src.train.adversarial = nets::AdversarialConfig{7, kToyEps, kToyEps / 4.0, attack::Norm::Linf};
  src.name = "plain";

  harness::ModelSpec cnn;
  cnn.name = "cnn";
  cnn.channels = {8, 16};
  cnn.train.epochs = 20;
  cnn.train.batch_size = 16;
  harness::ModelSpec cnn_adv = cnn;
  cnn_adv.name = "cnn-adv";
  cnn_adv.seed = 3;
  cnn_adv.train.adversarial = robust_src.train.adversarial;
  harness::ModelSpec mlp;
  mlp.name = "mlp";
  mlp.arch = "mlp";
  mlp.hidden = {64};
  mlp.train = cnn.train;
  c.targets = {cnn, cnn_adv, mlp};

  const auto train_set = harness::load_dataset(c.train_data);
  const auto slice = harness::load_dataset(c.eval_data).slice(0, 32);
  std::size_t wins = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    // Which source is more robust is measured, not assumed.
    double pgd_acc[2];
    const harness::ModelSpec* specs[2] = {&src, &robust_src};
    for (int k = 0; k < 2; ++k) {
      auto m = harness::build_model(*specs[k], train_set, seed);
      pgd_acc[k] = robust::robust_accuracy(*m, slice, robust::pgd_source(kToyEps, 7, seed));
    }
    double mean[2];
    for (int k = 0; k < 2; ++k) {
      auto ck = c;
      ck.model = *specs[k];
      const auto out = harness::circuit_attack(ck, seed);
      mean[k] = 0.0;
      for (const auto& r : out.table) mean[k] += r.robust_acc / out.table.size();
    }
    const int more = pgd_acc[1] >= pgd_acc[0] ? 1 : 0;
    wins += mean[more] <= mean[1 - more];
    rows += fmt(" [seed %llu: sources PGD-7 acc plain %.4f adv %.4f; mean target acc plain-src %.4f adv-src %.4f]",
                static_cast<unsigned long long>(seed), pgd_acc[0], pgd_acc[1], mean[0], mean[1]);
  }
  return {wins >= 2, fmt("more robust source gives the stronger transfer in %zu/3 seeds", wins)};
}

Outcome directional_claims() {
  const auto t0 = std::chrono::steady_clock::now();
  std::string rows;
  std::string r1, r2, r3;
  const auto a = de_nas_vs_random(r1);
  const double ta = seconds_since(t0);
  const auto b = defense_circuit(r2);
  const double tb = seconds_since(t0) - ta;
  const auto c = attack_circuit(r3);
  const double total = seconds_since(t0);
  const double tc = total - ta - tb;
  return {a.pass && b.pass && c.pass && total <= 2700.0,
          fmt("%.0fs total (limit 2700s). ", total) + (a.pass ? "PASS " : "FAIL ") + a.detail + fmt(" (%.0fs)", ta) + r1 +
              ". " + (b.pass ? "PASS " : "FAIL ") + b.detail + fmt(" (%.0fs)", tb) + r2 + ". " +
              (c.pass ? "PASS " : "FAIL ") + c.detail + fmt(" (%.0fs)", tc) + r3};
}

// ---- 11 ----

std::vector<nlohmann::json> suite_configs(const std::string& out) {
  const nlohmann::json data = {{"kind", "shapes"}, {"n_per_class", 6}, {"side", 8}, {"classes", 4}, {"seed", 51}};
  const nlohmann::json model = {
      {"arch", "cnn"}, {"channels", nlohmann::json::array({4, 8})}, {"seed", 2}, {"train", {{"epochs", 4}, {"batch_size", 8}}}};
  const nlohmann::json base = {{"schema", 1},
                               {"seeds", nlohmann::json::array({1, 2})},
                               {"output_dir", out},
                               {"norm", {{"norm", "Linf"}, {"eps_max", kToyEps}}},
                               {"dataset", data},
                               {"model", model}};
  std::vector<nlohmann::json> v;
  auto attack = base;
  attack["kind"] = "attack_search";
  attack["attack_search"] = {{"strategy", "de"}, {"max_cells", 2}, {"pop", 4}, {"gens", 2}, {"eval_examples", 12}};
  v.push_back(attack);
  auto nsga = attack;
  nsga["attack_search"] = {{"strategy", "nsga2"}, {"max_cells", 2}, {"pop", 6}, {"gens", 2}, {"eval_examples", 12}};
  v.push_back(nsga);
  auto eval = base;
  eval["kind"] = "evaluate";
  eval["sources"] = {{{"type", "fgsm"}}, {{"type", "pgd"}, {"steps", 7}}, {{"type", "natural"}, {"severity", 2}}};
  v.push_back(eval);
  auto arch = base;
  arch["kind"] = "arch_search";
  arch.erase("model");
  arch["arch_search"] = {{"strategy", "darts"}, {"C", 4}, {"L", 2}, {"epochs", 3}, {"warm_epochs", 1},
                         {"metric", {{"kind", "adversarial"}, {"sources", {{{"type", "fgsm"}}}}}}};
  v.push_back(arch);
  auto defense = base;
  defense["kind"] = "circuit_defense";
  defense["scheme"] = out + "/../fgsm_scheme.json";
  defense["arch_search"] = {{"strategy", "random"}, {"n_samples", 2}, {"candidate_epochs", 1}};
  v.push_back(defense);
  auto circuit = attack;
  circuit["kind"] = "circuit_attack";
  auto target = model;
  target["name"] = "target";
  target["seed"] = 9;
  circuit["targets"] = {model, target};
  v.push_back(circuit);
  return v;
}

std::vector<std::string> run_suite(const fs::path& root) {
  const fs::path out = root / "suite";
  fs::remove_all(out);
  fs::create_directories(out);
  attack::AttackScheme fgsm;
  fgsm.norm = attack::NormFamily{attack::Norm::Linf, kToyEps};
  fgsm.cells = {attack::AttackCell{attack::AttackOp::FGSM, attack::LossId::CE_P, 8, 1, false}};
  attack::save_scheme((root / "fgsm_scheme.json").string(), fgsm);
  for (const auto& j : suite_configs(out.string())) harness::run_experiment(harness::parse_config(j));
  std::vector<std::string> lines;
  for (const auto& r : harness::read_ledger((out / "ledger.jsonl").string())) {
    auto s = r;
    s.erase("timestamp");
    s.erase("wall_time_s");
    lines.push_back(s.dump());
  }
  return lines;
}

Outcome suite_determinism() {
  const fs::path root = fs::temp_directory_path() / "autorobust_acceptance_11";
  fs::create_directories(root);
  const auto first = run_suite(root);
  const auto second = run_suite(root);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < std::min(first.size(), second.size()); ++i) differing += first[i] != second[i];
  const std::string verified = harness::verify_ledger((root / "suite" / "ledger.jsonl").string());
  return {first.size() == 6 && first.size() == second.size() && differing == 0 && verified.empty(),
          fmt("%zu records per run, %zu differ after removing timestamp and wall_time_s; chain %s", first.size(),
              differing, verified.empty() ? "verifies" : verified.c_str())};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
  double limit_s;  // 0: no runtime bound
};

const Criterion kCriteria[] = {
    {1, "gradient correctness", gradient_correctness, 120},
    {2, "budget invariant", budget_invariant, 300},
    {3, "oracle equivalence", oracle_equivalence, 300},
    {4, "FGSM/PGD identity", fgsm_pgd_identity, 0},
    {5, "NSGA-II machinery", nsga_machinery, 0},
    {6, "DE vs manual attacks", de_vs_manual, 900},
    {7, "NSGA-II vs random search", nsga_vs_random, 600},
    {8, "metric oracles", metric_oracles, 0},
    {9, "NAS sanity", nas_sanity, 0},
    {10, "NAS and circuit directions", directional_claims, 0},
    {11, "suite determinism", suite_determinism, 0},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  app.add_option("--only", only, "run only these criteria")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  int failed = 0;
  for (const auto& c : kCriteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    if (c.limit_s > 0 && secs > c.limit_s) {
      o.pass = false;
      o.detail += fmt(" (over the %.0fs limit)", c.limit_s);
    }
    std::printf("criterion %d %s: %s (%.1fs) %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
