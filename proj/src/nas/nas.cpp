#include "autorobust/nas/nas.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <thread>

#include "autorobust/core/errors.hpp"
#include "autorobust/core/hash.hpp"
#include "autorobust/core/rng.hpp"
#include "autorobust/grad/ops.hpp"
#include "autorobust/nets/cells.hpp"

namespace autorobust::nas {

using nets::EdgeWeights;
using nets::SuperNet;
using nets::SupernetMode;

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::darts: return "darts";
    case Strategy::nasp: return "nasp";
    case Strategy::fairdarts: return "fairdarts";
    case Strategy::smoothdarts: return "smoothdarts";
    case Strategy::pcdarts: return "pcdarts";
    case Strategy::random: return "random";
    case Strategy::de: return "de";
    case Strategy::ws_random: return "ws_random";
  }
  return "?";
}

Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::darts, Strategy::nasp, Strategy::fairdarts, Strategy::smoothdarts, Strategy::pcdarts,
                     Strategy::random, Strategy::de, Strategy::ws_random})
    if (strategy_name(s) == name) return s;
  throw ConfigError("unknown architecture search strategy '" + std::string(name) + "'");
}

bool is_differentiable(Strategy s) {
  return s != Strategy::random && s != Strategy::de && s != Strategy::ws_random;
}

std::size_t SearchConfig::warm() const {
  if (warm_epochs >= 0) return static_cast<std::size_t>(warm_epochs);
  return epochs / 5;
}

void validate(const SearchConfig& c) {
  if (c.C == 0 || c.L == 0) throw ConfigError("arch search: supernet dims must be positive");
  if (c.batch_size == 0) throw ConfigError("arch search: batch_size must be positive");
  if (!std::isfinite(c.gamma) || c.gamma < 0.0) throw ConfigError("arch search: gamma must be non-negative");
  if (is_differentiable(c.strategy)) {
    if (c.epochs == 0) throw ConfigError("arch search: epochs must be positive");
    if (c.warm_epochs >= 0 && c.warm() > c.epochs) throw ConfigError("arch search: warm_epochs exceeds epochs");
    loss_for_metric(c.metric, c.gamma, c.reg_probes);
  }
  if (c.strategy == Strategy::smoothdarts && c.radius < 0.0) throw ArgumentError("smoothdarts: radius must be >= 0");
  if (c.strategy == Strategy::pcdarts && !(c.channel_fraction > 0.0 && c.channel_fraction <= 1.0))
    throw ArgumentError("pcdarts: channel_fraction must lie in (0, 1]");
  if (c.strategy == Strategy::random && c.n_samples == 0) throw ArgumentError("random arch search: n_samples >= 1");
  if (c.strategy == Strategy::de) {
    if (c.pop < 4) throw ArgumentError("de arch search: pop must be >= 4");
    if (c.gens == 0) throw ArgumentError("de arch search: gens must be >= 1");
  }
  if (c.strategy == Strategy::ws_random && c.n_eval == 0) throw ArgumentError("ws random search: n_eval >= 1");
  if (!is_differentiable(c.strategy) && (c.candidate_epochs == 0 || c.candidate_C == 0 || c.candidate_L == 0))
    throw ConfigError("arch search: candidate schedule must be positive");
}

robust::RobustLossConfig loss_for_metric(const robust::RobustnessMetric& m, double gamma, std::size_t probes) {
  using robust::LossKind;
  using robust::MetricKind;
  robust::RobustLossConfig l;
  l.gamma = gamma;
  l.probes = probes;
  switch (m.kind) {
    case MetricKind::clean: l.kind = LossKind::plain; break;
    case MetricKind::adversarial:
      if (m.sources.empty() || m.sources[0].kind != robust::NoiseSource::Kind::adversarial)
        throw ConfigError("adversarial metric needs a differentiable attack source");
      l.kind = LossKind::adversarial;
      l.source = m.sources[0];
      break;
    case MetricKind::natural:
    case MetricKind::system:
      if (m.sources.empty()) throw ConfigError("noise metric needs a noise source");
      l.kind = LossKind::mixture;
      l.source = m.sources[0];
      break;
    case MetricKind::jacobian:
      l.kind = LossKind::regularizer;
      l.reg = robust::Regularizer::jacobian;
      break;
    case MetricKind::hessian:
      l.kind = LossKind::regularizer;
      l.reg = robust::Regularizer::hessian;
      if (l.probes == 0) l.probes = 1;
      break;
  }
  robust::validate(l);
  return l;
}

int arch_gene_lo(std::size_t gene) {
  if (gene >= kArchGenes) throw ArgumentError("arch gene index out of range");
  return gene % 2 == 0 ? 1 : 0;
}

int arch_gene_hi(std::size_t gene) {
  if (gene >= kArchGenes) throw ArgumentError("arch gene index out of range");
  if (gene % 2 == 0) return static_cast<int>(nets::kOpCount) - 1;
  const std::size_t edge = (gene % (4 * nets::kNodes)) / 2;
  return static_cast<int>(edge / 2 + 1);
}

ArchGenome random_arch_genome(Rng& rng) {
  ArchGenome g;
  g.genes.resize(kArchGenes);
  for (std::size_t i = 0; i < kArchGenes; ++i) g.genes[i] = rng.uniform_int(arch_gene_lo(i), arch_gene_hi(i));
  return g;
}

Genotype decode(const ArchGenome& g) {
  if (g.genes.size() != kArchGenes) throw ValidationError("arch genome: expected 32 genes");
  Genotype out;
  for (std::size_t t = 0; t < 2; ++t) {
    nets::CellGenotype& cell = t ? out.reduction : out.normal;
    for (std::size_t e = 0; e < 2 * nets::kNodes; ++e) {
      const std::size_t i = t * 4 * nets::kNodes + 2 * e;
      const int op = std::clamp(g.genes[i], arch_gene_lo(i), arch_gene_hi(i));
      const int src = std::clamp(g.genes[i + 1], arch_gene_lo(i + 1), arch_gene_hi(i + 1));
      cell[e] = {nets::op_from_index(static_cast<std::size_t>(op)), static_cast<std::size_t>(src)};
    }
  }
  return out;
}

ArchGenome encode(const Genotype& gt) {
  nets::validate(gt, false);
  ArchGenome g;
  for (const nets::CellGenotype* cell : {&gt.normal, &gt.reduction})
    for (const auto& e : *cell) {
      g.genes.push_back(static_cast<int>(nets::op_index(e.op)));
      g.genes.push_back(static_cast<int>(e.source));
    }
  return g;
}

grad::Var zero_one_loss(grad::Tape& tape, std::span<Tensor* const> alphas) {
  grad::Var total;
  std::size_t n = 0;
  for (Tensor* a : alphas) {
    grad::Var s = grad::sum(grad::square(grad::add_scalar(grad::sigmoid(tape.parameter(*a)), -0.5)));
    total = total.valid() ? grad::add(total, s) : s;
    n += a->numel();
  }
  return grad::scale(total, -1.0 / static_cast<double>(n));
}

Tensor prox_c1(const Tensor& alpha) { return nets::prox_one_hot(alpha); }

void prox_c2(Tensor& alpha) {
  for (double& v : alpha.values()) v = std::clamp(v, 0.0, 1.0);
}

namespace {

// Presents a supernet with externally supplied mixing weights as a plain model, so robust_loss
// and the attacks can run on it. `weights` builds the mixing for whichever tape is evaluating.
class MixedView final : public grad::Model {
 public:
  MixedView(SuperNet& net, std::function<EdgeWeights(grad::Tape&)> weights)
      : Model(net.input_shape(), net.num_classes()), net_(net), weights_(std::move(weights)) {
    set_training(net.training());
  }
  grad::Var forward(grad::Tape& tape, grad::Var x) override {
    grad::ModeGuard g(net_, training());
    return net_.forward_with(tape, x, weights_(tape));
  }
  std::vector<Tensor*> parameters() override { return net_.parameters(); }
  std::vector<std::vector<double>*> buffers() override { return net_.buffers(); }
  std::unique_ptr<grad::Model> clone() const override { throw StateError("mixed view cannot be cloned"); }
  std::string describe() const override { return net_.describe() + "+view"; }

 private:
  SuperNet& net_;
  std::function<EdgeWeights(grad::Tape&)> weights_;
};

std::vector<std::vector<double>> snapshot(const std::vector<Tensor*>& ts) {
  std::vector<std::vector<double>> s;
  for (const Tensor* t : ts) s.push_back(t->values());
  return s;
}

void check_unchanged(const std::vector<Tensor*>& ts, const std::vector<std::vector<double>>& before, const char* what) {
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (ts[i]->values() != before[i]) throw StateError(std::string("parameter partition violated: ") + what);
}

struct Batch {
  Tensor x;
  std::vector<std::size_t> y, ids;
};

Batch make_batch(const data::Dataset& d, std::span<const std::size_t> rows, std::size_t id_offset) {
  Batch b{d.inputs.gather_rows(rows), {}, {}};
  for (std::size_t r : rows) {
    b.y.push_back(d.labels[r]);
    b.ids.push_back(r + id_offset);
  }
  return b;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t bs, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += bs) out.emplace_back(order.begin() + i, order.begin() + std::min(n, i + bs));
  return out;
}

double mean_loss(const robust::RobustLossConfig& cfg, grad::Model& m, const data::Dataset& d, std::size_t bs,
                 std::size_t id_offset, std::uint64_t seed) {
  grad::ModeGuard eval(m, false);
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); i += bs) {
    const std::size_t e = std::min(d.size(), i + bs);
    std::vector<std::size_t> rows(e - i);
    std::iota(rows.begin(), rows.end(), i);
    Batch b = make_batch(d, rows, id_offset);
    grad::Tape tape(false);
    total += robust::robust_loss(cfg, m, tape, b.x, b.y, b.ids, derive_seed(seed, i)).value().item() *
             static_cast<double>(e - i);
  }
  return total / static_cast<double>(d.size());
}

std::array<Tensor, 2> add_delta(const SuperNet& net, const std::array<Tensor, 2>& delta) {
  std::array<Tensor, 2> out{net.alpha(0), net.alpha(1)};
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < out[t].numel(); ++i) out[t][i] += delta[t][i];
  return out;
}

EdgeWeights softmax_constants(grad::Tape& tape, const std::array<Tensor, 2>& a) {
  EdgeWeights w;
  for (std::size_t t = 0; t < 2; ++t) w.ops[t] = grad::softmax(tape.constant(a[t]));
  return w;
}

ArchSearchResult bilevel(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed, SupernetMode mode) {
  validate(c);
  if (d.empty()) throw ArgumentError("arch search: empty dataset");
  const auto lcfg = loss_for_metric(c.metric, c.gamma, c.reg_probes);
  const auto [train_set, val_set] = data::split_half(d);
  const std::size_t val_offset = train_set.size();

  SuperNet net(mode, c.C, c.L, d.example_shape(), d.num_classes, derive_seed(seed, 1),
               mode == SupernetMode::pcdarts ? c.channel_fraction : 1.0);
  net.set_training(true);
  const auto weights = net.parameters();
  const auto arch = net.arch_parameters();
  nets::Optimizer wopt(weights, nets::OptimizerKind::sgd_momentum, c.w_lr, c.w_weight_decay, c.w_momentum);
  nets::Optimizer aopt(arch, nets::OptimizerKind::adam, c.alpha_lr, c.alpha_weight_decay, 0.9, 0.5, 0.999);
  Rng delta_rng(derive_seed(seed, 5));

  ArchSearchResult res;
  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    Rng order_rng(derive_seed(seed, 2, epoch));
    const auto tb = batches(train_set.size(), c.batch_size, order_rng);
    const auto vb = batches(val_set.size(), c.batch_size, order_rng);
    for (std::size_t b = 0; b < tb.size(); ++b) {
      const std::uint64_t step_seed = derive_seed(seed, 3, epoch * 100003 + b);

      if (epoch >= c.warm()) {
        const Batch v = make_batch(val_set, vb[b % vb.size()], val_offset);
        std::vector<std::vector<double>> wsnap;
        if (c.check_partition) wsnap = snapshot(weights);
        net.set_weights_trainable(false);
        net.set_arch_trainable(true);
        if (mode == SupernetMode::nasp) {
          // Gradient at the discrete point, applied to the continuous alpha, then clamped.
          grad::Tape tape(false);
          std::array<Tensor, 2> bar{prox_c1(net.alpha(0)), prox_c1(net.alpha(1))};
          std::array<grad::Var, 2> in{tape.input(bar[0], true), tape.input(bar[1], true)};
          MixedView view(net, [&](grad::Tape& t) {
            EdgeWeights w;
            for (std::size_t k = 0; k < 2; ++k) w.ops[k] = &t == &tape ? in[k] : t.constant(bar[k]);
            return w;
          });
          tape.backward(robust::robust_loss(lcfg, view, tape, v.x, v.y, v.ids, step_seed));
          for (std::size_t k = 0; k < 2; ++k) {
            const auto g = tape.grad(in[k]);
            Tensor& a = net.alpha(k);
            for (std::size_t i = 0; i < a.numel(); ++i) a[i] -= c.alpha_lr * g[i];
            prox_c2(a);
          }
        } else {
          aopt.zero_grad();
          grad::Tape tape(true);
          grad::Var loss = robust::robust_loss(lcfg, net, tape, v.x, v.y, v.ids, step_seed);
          if (mode == SupernetMode::fairdarts) loss = grad::add(loss, zero_one_loss(tape, arch));
          tape.backward(loss);
          aopt.step();
        }
        if (c.check_partition) check_unchanged(weights, wsnap, "alpha step wrote weights");
      }

      const Batch tr = make_batch(train_set, tb[b], 0);
      std::vector<std::vector<double>> asnap;
      if (c.check_partition) asnap = snapshot(arch);
      net.set_weights_trainable(true);
      net.set_arch_trainable(false);
      wopt.zero_grad();
      if (mode == SupernetMode::smoothdarts) {
        std::array<Tensor, 2> delta{Tensor(net.alpha(0).shape()), Tensor(net.alpha(1).shape())};
        for (auto& dt : delta)
          for (double& e : dt.values()) e = delta_rng.uniform(-c.radius, c.radius);
        const std::array<Tensor, 2> delta0 = delta;
        auto loss_at = [&](const std::array<Tensor, 2>& dl) {
          const auto a = add_delta(net, dl);
          MixedView view(net, [&](grad::Tape& t) { return softmax_constants(t, a); });
          grad::Tape tape(false);
          return robust::robust_loss(lcfg, view, tape, tr.x, tr.y, tr.ids, step_seed).value().item();
        };
        if (c.perturb == Perturbation::adversarial && c.radius > 0.0) {
          for (std::size_t s = 0; s < c.ascent_steps; ++s) {
            grad::Tape tape(false);
            std::array<grad::Var, 2> dv{tape.input(delta[0], true), tape.input(delta[1], true)};
            const auto a = add_delta(net, delta);
            MixedView view(net, [&](grad::Tape& t) {
              if (&t != &tape) return softmax_constants(t, a);
              EdgeWeights w;
              for (std::size_t k = 0; k < 2; ++k) w.ops[k] = grad::softmax(grad::add(t.constant(net.alpha(k)), dv[k]));
              return w;
            });
            tape.backward(robust::robust_loss(lcfg, view, tape, tr.x, tr.y, tr.ids, step_seed));
            for (std::size_t k = 0; k < 2; ++k) {
              const auto g = tape.grad(dv[k]);
              for (std::size_t i = 0; i < g.size(); ++i) {
                const double step = g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0);
                delta[k][i] = std::clamp(delta[k][i] + 0.5 * c.radius * step, -c.radius, c.radius);
              }
            }
          }
        }
        if (c.smooth_observer) {
          double mx = 0.0;
          for (const auto& dt : delta)
            for (double e : dt.values()) mx = std::max(mx, std::abs(e));
          c.smooth_observer(loss_at(delta), loss_at(delta0), mx);
        }
        const auto a = add_delta(net, delta);
        MixedView view(net, [&](grad::Tape& t) { return softmax_constants(t, a); });
        grad::Tape tape(true);
        tape.backward(robust::robust_loss(lcfg, view, tape, tr.x, tr.y, tr.ids, step_seed));
      } else {
        grad::Tape tape(true);
        tape.backward(robust::robust_loss(lcfg, net, tape, tr.x, tr.y, tr.ids, step_seed));
      }
      wopt.step();
      if (c.check_partition) check_unchanged(arch, asnap, "weight step wrote alpha");
    }
    TraceRow row;
    row.epoch = epoch;
    row.val_loss = mean_loss(lcfg, net, val_set, c.batch_size, val_offset, derive_seed(seed, 4, epoch));
    row.metric_value = robust::metric_value(net, val_set, c.metric);
    if (!std::isfinite(row.val_loss)) throw NumericError("arch search: non-finite validation loss", epoch);
    res.trace.push_back(row);
  }
  net.set_weights_trainable(true);
  net.set_arch_trainable(true);
  res.genotype = nets::genotype_from_alpha(net);
  for (Tensor* a : arch) {
    res.alpha.push_back(*a);
    res.alpha.back().clear_grad();
  }
  {
    const Tensor x = val_set.inputs.slice_rows(0, std::min<std::size_t>(val_set.size(), 64));
    res.final_jacobian = robust::jacobian_fnorm(net, x);
  }
  res.best_fitness = res.trace.empty() ? 0.0
                                       : (c.metric.higher_is_better() ? res.trace.back().metric_value
                                                                      : -res.trace.back().metric_value);
  return res;
}

std::uint64_t genotype_hash(const Genotype& g) {
  Fnv1a h;
  h.update(nets::to_json(g).dump());
  return h.digest();
}

std::vector<Candidate> evaluate_all(const std::vector<Genotype>& gs, const data::Dataset& d, const SearchConfig& c,
                                    std::uint64_t seed) {
  std::vector<Candidate> out(gs.size());
  const std::size_t jobs = std::clamp<std::size_t>(c.jobs, 1, std::max<std::size_t>(1, gs.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < gs.size(); ++i) out[i] = evaluate_candidate(gs[i], d, c, seed);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  for (std::size_t j = 0; j < jobs; ++j)
    pool.emplace_back([&, j] {
      try {
        for (std::size_t i = j; i < gs.size(); i += jobs) out[i] = evaluate_candidate(gs[i], d, c, seed);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// Fitness with memoization: a genotype seen before in the same search is not retrained.
class CandidatePool {
 public:
  CandidatePool(const data::Dataset& d, const SearchConfig& c, std::uint64_t seed) : d_(d), c_(c), seed_(seed) {}
  std::vector<Candidate> score(const std::vector<Genotype>& gs, ArchSearchResult& res) {
    std::vector<Genotype> todo;
    for (const auto& g : gs) {
      const auto key = nets::to_json(g).dump();
      if (!memo_.count(key) && std::find(todo.begin(), todo.end(), g) == todo.end()) todo.push_back(g);
    }
    const auto fresh = evaluate_all(todo, d_, c_, seed_);
    for (const auto& cand : fresh) {
      memo_[nets::to_json(cand.genotype).dump()] = cand;
      res.evaluated.push_back(cand);
    }
    std::vector<Candidate> out;
    for (const auto& g : gs) out.push_back(memo_.at(nets::to_json(g).dump()));
    return out;
  }

 private:
  const data::Dataset& d_;
  const SearchConfig& c_;
  std::uint64_t seed_;
  std::map<std::string, Candidate> memo_;
};

void track(ArchSearchResult& res, const Candidate& best, std::size_t step) {
  res.genotype = best.genotype;
  res.best_fitness = best.fitness;
  res.trace.push_back({step, best.val_loss, best.metric_value});
}

}  // namespace

Candidate evaluate_candidate(const Genotype& g, const data::Dataset& d, const SearchConfig& c, std::uint64_t seed) {
  nets::validate(g, false);
  const auto [train_set, val_set] = data::split_half(d);
  const std::uint64_t key = derive_seed(seed, genotype_hash(g));
  auto model = nets::instantiate_genotype(g, c.candidate_C, c.candidate_L, d.example_shape(), d.num_classes, key);
  nets::TrainSchedule s;
  s.epochs = c.candidate_epochs;
  s.batch_size = c.batch_size;
  if (c.candidate_adversarial) s.adversarial = nets::AdversarialConfig{};
  nets::train(*model, train_set, s, derive_seed(key, 1));
  Candidate out;
  out.genotype = g;
  out.metric_value = robust::metric_value(*model, val_set, c.metric);
  out.fitness = c.metric.higher_is_better() ? out.metric_value : -out.metric_value;
  out.val_loss = mean_loss({}, *model, val_set, c.batch_size, 0, 0);
  return out;
}

ArchSearchResult darts_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed) {
  return bilevel(c, d, seed, SupernetMode::darts);
}
ArchSearchResult nasp_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed) {
  return bilevel(c, d, seed, SupernetMode::nasp);
}
ArchSearchResult fairdarts_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed) {
  return bilevel(c, d, seed, SupernetMode::fairdarts);
}
ArchSearchResult smoothdarts_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed) {
  if (c.radius < 0.0) throw ArgumentError("smoothdarts: radius must be >= 0");
  return bilevel(c, d, seed, SupernetMode::smoothdarts);
}
ArchSearchResult pcdarts_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed) {
  if (!(c.channel_fraction > 0.0 && c.channel_fraction <= 1.0))
    throw ArgumentError("pcdarts: channel_fraction must lie in (0, 1]");
  return bilevel(c, d, seed, SupernetMode::pcdarts);
}

ArchSearchResult random_arch_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed) {
  validate(c);
  if (c.n_samples == 0) throw ArgumentError("random arch search: n_samples >= 1");
  Rng rng(derive_seed(seed, 0xa5));
  std::vector<Genotype> gs;
  for (std::size_t i = 0; i < c.n_samples; ++i) gs.push_back(decode(random_arch_genome(rng)));
  ArchSearchResult res;
  CandidatePool pool(d, c, seed);
  const auto scored = pool.score(gs, res);
  std::size_t best = 0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (scored[i].fitness > scored[best].fitness) best = i;
    track(res, scored[best], i);
  }
  return res;
}

ArchSearchResult de_arch_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed) {
  validate(c);
  if (c.pop < 4) throw ArgumentError("de arch search: pop must be >= 4");
  Rng rng(derive_seed(seed, 0xde));
  std::vector<ArchGenome> pop;
  for (std::size_t i = 0; i < c.pop; ++i) pop.push_back(random_arch_genome(rng));
  auto decode_all = [](const std::vector<ArchGenome>& p) {
    std::vector<Genotype> gs;
    for (const auto& g : p) gs.push_back(decode(g));
    return gs;
  };
  ArchSearchResult res;
  CandidatePool pool(d, c, seed);
  std::vector<Candidate> fit = pool.score(decode_all(pop), res);
  Candidate best = fit[0];
  for (const auto& f : fit)
    if (f.fitness > best.fitness) best = f;
  track(res, best, 0);

  for (std::size_t gen = 1; gen <= c.gens; ++gen) {
    std::vector<ArchGenome> trials;
    for (std::size_t j = 0; j < c.pop; ++j) {
      std::size_t r[3];
      for (std::size_t k = 0; k < 3; ++k) {
        do {
          r[k] = rng.index(c.pop);
        } while (r[k] == j || (k > 0 && r[k] == r[0]) || (k > 1 && r[k] == r[1]));
      }
      const std::size_t jrand = rng.index(kArchGenes);
      ArchGenome t = pop[j];
      for (std::size_t i = 0; i < kArchGenes; ++i) {
        if (i != jrand && !(rng.uniform() < c.CR)) continue;
        const double v = pop[r[0]].genes[i] + c.F * (pop[r[1]].genes[i] - pop[r[2]].genes[i]);
        t.genes[i] = std::clamp(static_cast<int>(std::lround(v)), arch_gene_lo(i), arch_gene_hi(i));
      }
      trials.push_back(std::move(t));
    }
    const auto tf = pool.score(decode_all(trials), res);
    for (std::size_t j = 0; j < c.pop; ++j) {
      if (tf[j].fitness > fit[j].fitness) {
        pop[j] = trials[j];
        fit[j] = tf[j];
      }
      if (fit[j].fitness > best.fitness) best = fit[j];
    }
    track(res, best, gen);
  }
  return res;
}

ArchSearchResult ws_random_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed) {
  validate(c);
  if (c.n_eval == 0) throw ArgumentError("ws random search: n_eval >= 1");
  const auto [train_set, val_set] = data::split_half(d);
  SuperNet net(SupernetMode::darts, c.C, c.L, d.example_shape(), d.num_classes, derive_seed(seed, 1));
  net.set_arch_trainable(false);
  nets::Optimizer opt(net.parameters(), nets::OptimizerKind::sgd_momentum, c.w_lr, c.w_weight_decay, c.w_momentum);
  Rng path_rng(derive_seed(seed, 0x95));
  const nets::AdversarialConfig adv;
  attack::CellParams pgd;
  pgd.op = attack::AttackOp::PGD;
  pgd.eps = adv.eps;
  pgd.steps = adv.steps;
  pgd.step_size = adv.step_size;
  ArchSearchResult res;
  for (std::size_t epoch = 0; epoch < c.train_epochs; ++epoch) {
    Rng order_rng(derive_seed(seed, 2, epoch));
    Genotype last;
    for (const auto& rows : batches(train_set.size(), c.batch_size, order_rng)) {
      last = decode(random_arch_genome(path_rng));
      net.set_path(last);
      Batch b = make_batch(train_set, rows, 0);
      if (c.ws_adversarial)
        b.x = attack::perturb(net, b.x, b.y, pgd, attack::NormFamily{adv.norm, adv.eps}, derive_seed(seed, 6, epoch));
      net.set_training(true);
      opt.zero_grad();
      grad::Tape tape(true);
      tape.backward(nets::cross_entropy(net.forward(tape, tape.constant(b.x)), b.y));
      opt.step();
    }
    net.set_training(false);
    res.trace.push_back({epoch, mean_loss({}, net, val_set, c.batch_size, 0, 0),
                         robust::metric_value(net, val_set, c.metric)});
  }
  net.set_training(false);
  Rng eval_rng(derive_seed(seed, 0x96));
  Candidate best;
  for (std::size_t i = 0; i < c.n_eval; ++i) {
    Candidate cand;
    cand.genotype = decode(random_arch_genome(eval_rng));
    net.set_path(cand.genotype);
    cand.metric_value = robust::metric_value(net, val_set, c.metric);
    cand.fitness = c.metric.higher_is_better() ? cand.metric_value : -cand.metric_value;
    res.evaluated.push_back(cand);
    if (i == 0 || cand.fitness > best.fitness) best = cand;
  }
  res.genotype = best.genotype;
  res.best_fitness = best.fitness;
  return res;
}

ArchSearchResult arch_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed) {
  switch (c.strategy) {
    case Strategy::darts: return darts_search(c, d, seed);
    case Strategy::nasp: return nasp_search(c, d, seed);
    case Strategy::fairdarts: return fairdarts_search(c, d, seed);
    case Strategy::smoothdarts: return smoothdarts_search(c, d, seed);
    case Strategy::pcdarts: return pcdarts_search(c, d, seed);
    case Strategy::random: return random_arch_search(c, d, seed);
    case Strategy::de: return de_arch_search(c, d, seed);
    case Strategy::ws_random: return ws_random_search(c, d, seed);
  }
  throw ConfigError("unknown strategy");
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path);
  out << "epoch,val_loss,metric_value\n";
  char buf[96];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.epoch, r.val_loss, r.metric_value);
    out << buf;
  }
}

}  // namespace autorobust::nas
