#include "autorobust/robust/robust.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "autorobust/core/errors.hpp"
#include "autorobust/core/rng.hpp"
#include "autorobust/grad/check.hpp"
#include "autorobust/grad/ops.hpp"
#include "autorobust/nets/train.hpp"

namespace autorobust::robust {

namespace {

double accuracy_on(Model& model, const Tensor& x, std::span<const std::size_t> labels) {
  const auto pred = grad::predict(model, x);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == labels[i];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

void rademacher(Rng& rng, std::vector<double>& v) {
  for (double& e : v) e = rng.rademacher();
}

Tensor head(const Tensor& x, std::size_t n) { return n == 0 || n >= x.dim(0) ? x : x.slice_rows(0, n); }

// Splits a [B * rows, ...] variable with `blocks` equal leading blocks into per-block variables.
std::vector<grad::Var> split_blocks(grad::Var v, std::size_t blocks) {
  const std::size_t per = v.value().numel() / blocks;
  grad::Var r = grad::reshape(v, {1, blocks, per});
  std::vector<grad::Var> out;
  for (std::size_t b = 0; b < blocks; ++b) out.push_back(grad::slice_channels(r, b, b + 1));
  return out;
}

}  // namespace

NoiseSource NoiseSource::identity() { return {}; }

NoiseSource NoiseSource::adversarial(std::vector<attack::CellParams> cells, attack::NormFamily norm, std::uint64_t seed,
                                     std::string label) {
  NoiseSource s;
  s.kind = Kind::adversarial;
  s.cells = std::move(cells);
  s.norm = norm;
  s.seed = seed;
  s.label = std::move(label);
  return s;
}

NoiseSource NoiseSource::natural(data::CorruptionSpec spec, std::uint64_t seed) {
  NoiseSource s;
  s.kind = Kind::natural;
  s.corruption = spec;
  s.seed = seed;
  return s;
}

NoiseSource NoiseSource::system(data::ResamplePipeline p) {
  NoiseSource s;
  s.kind = Kind::system;
  s.pipeline = p;
  return s;
}

std::string NoiseSource::name() const {
  if (!label.empty()) return label;
  switch (kind) {
    case Kind::identity: return "clean";
    case Kind::adversarial: {
      std::string n;
      for (const auto& c : cells) {
        if (!n.empty()) n += "+";
        n += attack::op_name(c.op);
        if (c.op != attack::AttackOp::FGSM) n += "-" + std::to_string(c.steps);
      }
      return n;
    }
    case Kind::natural: return data::corruption_name(corruption.kind) + "-s" + std::to_string(corruption.severity);
    case Kind::system:
      return "system-" + data::resampler_name(pipeline.down) + "-" + data::resampler_name(pipeline.up) + "-" +
             std::to_string(pipeline.intermediate_size);
  }
  return "?";
}

NoiseSource fgsm_source(double eps, std::uint64_t seed) {
  attack::CellParams c;
  c.op = attack::AttackOp::FGSM;
  c.eps = eps;
  c.steps = 1;
  c.step_size = eps;
  return NoiseSource::adversarial({c}, attack::NormFamily{attack::Norm::Linf, std::max(eps, 1e-300)}, seed, "FGSM");
}

NoiseSource pgd_source(double eps, std::size_t steps, std::uint64_t seed) {
  attack::CellParams c;
  c.op = attack::AttackOp::PGD;
  c.eps = eps;
  c.steps = steps;
  c.step_size = eps / 4.0;
  return NoiseSource::adversarial({c}, attack::NormFamily{attack::Norm::Linf, std::max(eps, 1e-300)}, seed,
                                  "PGD-" + std::to_string(steps));
}

Tensor transform(const Tensor& x, const NoiseSource& src) {
  switch (src.kind) {
    case NoiseSource::Kind::identity: return x;
    case NoiseSource::Kind::natural: return data::corrupt(x, src.corruption, src.seed);
    case NoiseSource::Kind::system: return data::system_noise(x, src.pipeline);
    case NoiseSource::Kind::adversarial: break;
  }
  throw ConfigError("transform: adversarial sources depend on the model");
}

double robust_accuracy(Model& model, const data::Dataset& d, const NoiseSource& src) {
  if (d.empty()) throw ArgumentError("robust_accuracy: empty dataset");
  if (src.kind == NoiseSource::Kind::adversarial) {
    if (src.cells.empty()) throw ConfigError("adversarial source without attack cells");
    return attack::run_cells(model, d, src.cells, src.norm, src.seed).result.robust_acc;
  }
  return accuracy_on(model, transform(d.inputs, src), d.labels);
}

double jacobian_fnorm(Model& model, const Tensor& x) {
  grad::check_input(model, x);
  grad::ModeGuard eval(model, false);
  grad::Tape tape(false);
  grad::Var xv = tape.input(x, true);
  grad::Var z = model.forward(tape, xv);
  const std::size_t n = z.value().dim(0), k = z.value().dim(1);
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    Tensor seed(z.value().shape(), 0.0);
    for (std::size_t i = 0; i < n; ++i) seed[i * k + c] = 1.0;
    tape.backward(z, seed);
    for (double g : tape.grad(xv)) total += g * g;
  }
  return total / static_cast<double>(n);
}

double hessian_fnorm_estimate(const std::function<std::vector<double>(const std::vector<double>&)>& gradient,
                              const std::vector<double>& x, std::size_t probes, double h, std::uint64_t seed) {
  if (!(h > 0.0)) throw ArgumentError("hessian_fnorm_estimate: h must be positive");
  if (probes == 0) throw ArgumentError("hessian_fnorm_estimate: need at least one probe");
  std::vector<double> v(x.size()), xp(x.size()), xm(x.size());
  double total = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    Rng rng(derive_seed(seed, p));
    rademacher(rng, v);
    for (std::size_t i = 0; i < x.size(); ++i) {
      xp[i] = x[i] + h * v[i];
      xm[i] = x[i] - h * v[i];
    }
    const auto gp = gradient(xp), gm = gradient(xm);
    for (std::size_t i = 0; i < gp.size(); ++i) {
      const double hv = (gp[i] - gm[i]) / (2.0 * h);
      total += hv * hv;
    }
  }
  return total / static_cast<double>(probes);
}

double hessian_fnorm_estimate(Model& model, const Tensor& x, std::span<const std::size_t> labels, attack::LossId loss,
                              std::size_t probes, double h, std::uint64_t seed) {
  grad::check_input(model, x);
  grad::ModeGuard eval(model, false);
  auto g = [&](const std::vector<double>& p) {
    return grad::grad_input(model, Tensor(x.shape(), p), labels, loss).values();
  };
  return hessian_fnorm_estimate(g, x.values(), probes, h, seed) / static_cast<double>(x.dim(0));
}

std::string metric_name(MetricKind k) {
  switch (k) {
    case MetricKind::clean: return "clean";
    case MetricKind::adversarial: return "adversarial";
    case MetricKind::natural: return "natural";
    case MetricKind::system: return "system";
    case MetricKind::jacobian: return "jacobian";
    case MetricKind::hessian: return "hessian";
  }
  return "?";
}

MetricKind parse_metric(std::string_view name) {
  for (MetricKind k : {MetricKind::clean, MetricKind::adversarial, MetricKind::natural, MetricKind::system,
                       MetricKind::jacobian, MetricKind::hessian})
    if (metric_name(k) == name) return k;
  throw ConfigError("unknown robustness metric '" + std::string(name) + "'");
}

double metric_value(Model& model, const data::Dataset& d, const RobustnessMetric& m) {
  if (d.empty()) throw ArgumentError("metric_value: empty dataset");
  switch (m.kind) {
    case MetricKind::clean: return accuracy_on(model, d.inputs, d.labels);
    case MetricKind::adversarial:
    case MetricKind::natural:
    case MetricKind::system: {
      if (m.sources.empty()) throw ConfigError("metric " + metric_name(m.kind) + " needs at least one source");
      double s = 0.0;
      for (const auto& src : m.sources) s += robust_accuracy(model, d, src);
      return s / static_cast<double>(m.sources.size());
    }
    case MetricKind::jacobian: return jacobian_fnorm(model, head(d.inputs, m.max_examples));
    case MetricKind::hessian: {
      const Tensor x = head(d.inputs, m.max_examples);
      return hessian_fnorm_estimate(model, x, std::span(d.labels).first(x.dim(0)), attack::LossId::CE_P, m.probes, m.h,
                                    m.seed);
    }
  }
  return 0.0;
}

double fitness(Model& model, const data::Dataset& d, const RobustnessMetric& m) {
  const double v = metric_value(model, d, m);
  return m.higher_is_better() ? v : -v;
}

LossKind parse_loss_kind(std::string_view name) {
  for (LossKind k : {LossKind::plain, LossKind::adversarial, LossKind::mixture, LossKind::regularizer})
    if (loss_kind_name(k) == name) return k;
  throw ConfigError("unknown robust loss kind '" + std::string(name) + "'");
}

std::string loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::plain: return "plain";
    case LossKind::adversarial: return "adversarial";
    case LossKind::mixture: return "mixture";
    case LossKind::regularizer: return "regularizer";
  }
  return "?";
}

void validate(const RobustLossConfig& c) {
  if (!std::isfinite(c.gamma) || c.gamma < 0.0) throw ConfigError("robust loss: gamma must be finite and non-negative");
  if (c.kind == LossKind::adversarial && (c.source.kind != NoiseSource::Kind::adversarial || c.source.cells.empty()))
    throw ConfigError("robust loss: the adversarial kind needs a gradient-based attack source");
  if (c.kind == LossKind::mixture) {
    if (c.source.kind == NoiseSource::Kind::adversarial)
      throw ConfigError("robust loss: mixture noise must be natural or system noise");
    if (c.mixture_fraction < 0.0 || c.mixture_fraction > 1.0) throw ConfigError("robust loss: mixture fraction outside [0,1]");
  }
  if (c.kind == LossKind::regularizer) {
    if (!(c.h > 0.0)) throw ConfigError("robust loss: regularizer step must be positive");
    if (c.reg == Regularizer::hessian && c.probes == 0) throw ConfigError("robust loss: hessian regularizer needs probes");
  }
}

Tensor attacked_batch(const RobustLossConfig& cfg, Model& model, const Tensor& x, std::span<const std::size_t> y,
                      std::uint64_t step_seed) {
  Tensor cur = x;
  for (std::size_t c = 0; c < cfg.source.cells.size(); ++c)
    cur = attack::run_attack_cell(model, cur, x, y, cfg.source.cells[c], cfg.source.norm,
                                  derive_seed(cfg.source.seed, step_seed, c))
              .x_adv;
  return cur;
}

Tensor mixture_batch(const RobustLossConfig& cfg, const Tensor& x, std::span<const std::size_t> ids) {
  if (ids.size() != x.dim(0)) throw DimensionError("mixture_batch: one id per example");
  Tensor out = x;
  const std::size_t r = x.row_size();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (hashed_uniform(derive_seed(cfg.source.seed, 0x313, ids[i])) >= cfg.mixture_fraction) continue;
    NoiseSource src = cfg.source;
    src.seed = derive_seed(cfg.source.seed, ids[i]);
    const Tensor noisy = transform(x.slice_rows(i, i + 1), src);
    std::copy_n(noisy.data().data(), r, out.data().data() + i * r);
  }
  return out;
}

namespace {

grad::Var jacobian_penalty(const RobustLossConfig& cfg, Model& model, grad::Tape& tape, const Tensor& x,
                           std::uint64_t step_seed) {
  const std::size_t n = x.dim(0), d = x.row_size();
  const std::size_t m = cfg.probes == 0 ? d : cfg.probes;
  grad::Shape s = x.shape();
  s[0] = 2 * m * n;
  Tensor stacked(s);
  double* out = stacked.data().data();
  std::vector<double> v(d);
  for (std::size_t k = 0; k < m; ++k) {
    Rng rng(derive_seed(step_seed, 0x7ac, k));
    for (std::size_t i = 0; i < n; ++i) {
      if (cfg.probes == 0) {
        std::fill(v.begin(), v.end(), 0.0);
        v[k] = 1.0;
      } else {
        rademacher(rng, v);
      }
      const double* xi = x.data().data() + i * d;
      double* plus = out + (k * n + i) * d;
      double* minus = out + ((m + k) * n + i) * d;
      for (std::size_t j = 0; j < d; ++j) {
        plus[j] = xi[j] + cfg.h * v[j];
        minus[j] = xi[j] - cfg.h * v[j];
      }
    }
  }
  auto blocks = split_blocks(model.forward(tape, tape.constant(std::move(stacked))), 2);
  grad::Var jv = grad::sub(blocks[0], blocks[1]);
  const double norm = 1.0 / (4.0 * cfg.h * cfg.h * static_cast<double>(n) * (cfg.probes == 0 ? 1.0 : static_cast<double>(m)));
  return grad::scale(grad::sum(grad::square(jv)), norm);
}

grad::Var hessian_penalty(const RobustLossConfig& cfg, Model& model, grad::Tape& tape, const Tensor& x,
                          std::span<const std::size_t> y, std::uint64_t step_seed) {
  const std::size_t n = x.dim(0), d = x.row_size(), m = cfg.probes;
  grad::Shape s = x.shape();
  s[0] = 4 * m * n;
  Tensor stacked(s);
  double* out = stacked.data().data();
  std::vector<double> v(d), w(d);
  const double sign_v[4] = {1, 1, -1, -1}, sign_w[4] = {1, -1, 1, -1};
  for (std::size_t k = 0; k < m; ++k) {
    Rng rng(derive_seed(step_seed, 0x4e5, k));
    for (std::size_t i = 0; i < n; ++i) {
      rademacher(rng, v);
      rademacher(rng, w);
      const double* xi = x.data().data() + i * d;
      for (std::size_t b = 0; b < 4; ++b) {
        double* dst = out + ((b * m + k) * n + i) * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] = xi[j] + cfg.h * (sign_v[b] * v[j] + sign_w[b] * w[j]);
      }
    }
  }
  std::vector<std::size_t> labels;
  labels.reserve(4 * m * n);
  for (std::size_t r = 0; r < 4 * m; ++r) labels.insert(labels.end(), y.begin(), y.end());
  grad::Var per = attack::attack_loss(attack::LossId::CE_P, model.forward(tape, tape.constant(std::move(stacked))), labels);
  auto b = split_blocks(per, 4);
  grad::Var q = grad::add(grad::sub(grad::sub(b[0], b[1]), b[2]), b[3]);
  const double c = 1.0 / (4.0 * cfg.h * cfg.h);
  return grad::scale(grad::sum(grad::square(q)), c * c / static_cast<double>(n * m));
}

}  // namespace

grad::Var robust_loss(const RobustLossConfig& cfg, Model& model, grad::Tape& tape, const Tensor& x,
                      std::span<const std::size_t> y, std::span<const std::size_t> ids, std::uint64_t step_seed) {
  validate(cfg);
  if (y.size() != x.dim(0)) throw DimensionError("robust_loss: one label per example");
  grad::Var clean = nets::cross_entropy(model.forward(tape, tape.constant(x)), y);
  if (cfg.kind == LossKind::plain || cfg.gamma == 0.0) return clean;
  switch (cfg.kind) {
    case LossKind::adversarial: {
      Tensor adv;
      {
        grad::ModeGuard eval(model, false);
        adv = attacked_batch(cfg, model, x, y, step_seed);
      }
      return grad::add(clean, grad::scale(nets::cross_entropy(model.forward(tape, tape.constant(std::move(adv))), y), cfg.gamma));
    }
    case LossKind::mixture: {
      grad::Var mixed = nets::cross_entropy(model.forward(tape, tape.constant(mixture_batch(cfg, x, ids))), y);
      if (cfg.gamma == 1.0) return mixed;
      return grad::add(grad::scale(clean, 1.0 - cfg.gamma), grad::scale(mixed, cfg.gamma));
    }
    case LossKind::regularizer: {
      // Penalize the per-example function the norm metrics measure: batch statistics would
      // couple the shifted copies and train a different function than the one evaluated.
      grad::ModeGuard eval(model, false);
      grad::Var r = cfg.reg == Regularizer::jacobian ? jacobian_penalty(cfg, model, tape, x, step_seed)
                                                     : hessian_penalty(cfg, model, tape, x, y, step_seed);
      return grad::add(clean, grad::scale(r, cfg.gamma));
    }
    case LossKind::plain: break;
  }
  return clean;
}

RobustnessReport evaluate(Model& model, const data::Dataset& d, const std::vector<NoiseSource>& sources,
                          const ReportOptions& opt) {
  if (d.empty()) throw ArgumentError("evaluate: empty dataset");
  RobustnessReport r;
  r.clean_acc = accuracy_on(model, d.inputs, d.labels);
  for (const auto& s : sources) r.accuracies.emplace_back(s.name(), robust_accuracy(model, d, s));
  const Tensor x = head(d.inputs, opt.norm_examples);
  r.jacobian_fnorm = jacobian_fnorm(model, x);
  r.hessian_fnorm_sq = hessian_fnorm_estimate(model, x, std::span(d.labels).first(x.dim(0)), attack::LossId::CE_P,
                                              opt.hessian_probes, opt.hessian_h, opt.seed);
  r.model_fingerprint = grad::fingerprint(model);
  return r;
}

nlohmann::ordered_json to_json(const RobustnessReport& r) {
  nlohmann::ordered_json j;
  j["clean_acc"] = r.clean_acc;
  nlohmann::ordered_json acc = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.accuracies) acc[k] = v;
  j["accuracies"] = acc;
  j["jacobian_fnorm"] = r.jacobian_fnorm;
  j["hessian_fnorm_sq"] = r.hessian_fnorm_sq;
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(r.model_fingerprint));
  j["model_fingerprint"] = buf;
  return j;
}

}  // namespace autorobust::robust
