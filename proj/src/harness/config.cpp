#include <filesystem>
#include <fstream>
#include <set>

#include "autorobust/core/errors.hpp"
#include "autorobust/harness/harness.hpp"

namespace autorobust::harness {

using nlohmann::json;

std::string kind_name(Kind k) {
  switch (k) {
    case Kind::attack_search: return "attack_search";
    case Kind::arch_search: return "arch_search";
    case Kind::evaluate: return "evaluate";
    case Kind::circuit_defense: return "circuit_defense";
    case Kind::circuit_attack: return "circuit_attack";
  }
  return "?";
}

Kind parse_kind(std::string_view name) {
  for (Kind k : {Kind::attack_search, Kind::arch_search, Kind::evaluate, Kind::circuit_defense, Kind::circuit_attack})
    if (kind_name(k) == name) return k;
  throw ConfigError("unknown experiment kind '" + std::string(name) + "'");
}

namespace {

// Typed field access that records problems instead of stopping at the first one.
class Reader {
 public:
  Reader(const json& j, std::string where, std::vector<std::string>& errs) : j_(j), where_(std::move(where)), errs_(errs) {
    if (!j_.is_object()) fail("", "expected an object");
  }

  bool has(const std::string& k) {
    seen_.insert(k);
    return j_.is_object() && j_.contains(k);
  }
  std::string path(const std::string& k) const { return where_.empty() ? k : where_ + "." + k; }
  void fail(const std::string& k, const std::string& msg) { errs_.push_back((k.empty() ? where_ : path(k)) + ": " + msg); }
  const json& at(const std::string& k) const { return j_.at(k); }

  std::size_t uint(const std::string& k, std::size_t def, std::size_t lo = 0) {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      fail(k, "expected a non-negative integer");
      return def;
    }
    const auto u = v.get<std::size_t>();
    if (u < lo) fail(k, "must be at least " + std::to_string(lo));
    return u;
  }
  long integer(const std::string& k, long def) {
    if (!has(k)) return def;
    if (!j_.at(k).is_number_integer()) {
      fail(k, "expected an integer");
      return def;
    }
    return j_.at(k).get<long>();
  }
  double number(const std::string& k, double def) {
    if (!has(k)) return def;
    if (!j_.at(k).is_number()) {
      fail(k, "expected a number");
      return def;
    }
    return j_.at(k).get<double>();
  }
  bool boolean(const std::string& k, bool def) {
    if (!has(k)) return def;
    if (!j_.at(k).is_boolean()) {
      fail(k, "expected true or false");
      return def;
    }
    return j_.at(k).get<bool>();
  }
  std::string string(const std::string& k, const std::string& def) {
    if (!has(k)) return def;
    if (!j_.at(k).is_string()) {
      fail(k, "expected a string");
      return def;
    }
    return j_.at(k).get<std::string>();
  }
  std::vector<std::size_t> uints(const std::string& k, std::vector<std::size_t> def) {
    if (!has(k)) return def;
    const json& v = j_.at(k);
    std::vector<std::size_t> out;
    if (!v.is_array()) {
      fail(k, "expected a list of non-negative integers");
      return def;
    }
    for (const auto& e : v) {
      if (!e.is_number_integer() || e.get<long long>() < 0) {
        fail(k, "expected a list of non-negative integers");
        return def;
      }
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }
  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) fail(k, "unknown field");
  }

 private:
  const json& j_;
  std::string where_;
  std::vector<std::string>& errs_;
  std::set<std::string> seen_;
};

template <class F>
auto guarded(Reader& r, const std::string& k, F&& f, decltype(f()) def) {
  try {
    return f();
  } catch (const std::exception& e) {
    r.fail(k, e.what());
    return def;
  }
}

std::string resolve_path(const std::string& base, const std::string& p) {
  if (p.empty() || base.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (std::filesystem::path(base) / p).string();
}

DatasetSpec parse_dataset(const json& j, const std::string& where, const std::string& base,
                          std::vector<std::string>& errs) {
  Reader r(j, where, errs);
  DatasetSpec s;
  s.kind = r.string("kind", s.kind);
  if (s.kind != "shapes" && s.kind != "spirals" && s.kind != "cifar10" && s.kind != "import")
    r.fail("kind", "expected shapes, spirals, cifar10 or import");
  s.n_per_class = r.uint("n_per_class", s.n_per_class, 1);
  s.side = r.uint("side", s.side);
  s.classes = r.uint("classes", s.classes);
  s.noise = r.number("noise", s.noise);
  s.n = r.uint("n", s.n, 2);
  s.turns = r.number("turns", s.turns);
  s.seed = r.uint("seed", 0);
  s.path = resolve_path(base, r.string("path", ""));
  if (s.kind == "cifar10" && !std::filesystem::exists(s.path)) r.fail("path", "file not found: " + s.path);
  if (s.kind == "import" && !std::filesystem::exists(s.path + ".tensor")) r.fail("path", "file not found: " + s.path + ".tensor");
  r.finish();
  return s;
}

nets::TrainSchedule parse_train(const json& j, const std::string& where, std::vector<std::string>& errs) {
  Reader r(j, where, errs);
  nets::TrainSchedule s;
  s.epochs = r.uint("epochs", 10, 1);
  s.batch_size = r.uint("batch_size", 16, 1);
  s.learning_rate = r.number("lr", s.learning_rate);
  s.weight_decay = r.number("weight_decay", s.weight_decay);
  const std::string opt = r.string("optimizer", "sgd");
  if (opt == "sgd") s.optimizer = nets::OptimizerKind::sgd_momentum;
  else if (opt == "adam") s.optimizer = nets::OptimizerKind::adam;
  else r.fail("optimizer", "expected sgd or adam");
  s.cosine_anneal = r.boolean("cosine", false);
  if (r.has("adversarial")) {
    const json& a = r.at("adversarial");
    if (a.is_boolean()) {
      if (a.get<bool>()) s.adversarial = nets::AdversarialConfig{};
    } else {
      Reader ar(a, r.path("adversarial"), errs);
      nets::AdversarialConfig c;
      c.steps = ar.uint("steps", c.steps, 1);
      c.eps = ar.number("eps", c.eps);
      c.step_size = ar.number("step_size", c.step_size);
      c.norm = guarded(ar, "norm", [&] { return attack::parse_norm(ar.string("norm", "Linf")); }, attack::Norm::Linf);
      ar.finish();
      s.adversarial = c;
    }
  }
  r.finish();
  return s;
}

ModelSpec parse_model(const json& j, const std::string& where, const std::string& base, std::vector<std::string>& errs) {
  Reader r(j, where, errs);
  ModelSpec s;
  s.name = r.string("name", s.name);
  s.arch = r.string("arch", s.arch);
  if (s.arch != "cnn" && s.arch != "mlp" && s.arch != "linear" && s.arch != "genotype")
    r.fail("arch", "expected cnn, mlp, linear or genotype");
  s.channels = r.uints("channels", s.channels);
  s.hidden = r.uints("hidden", s.hidden);
  s.C = r.uint("C", s.C, 4);
  s.L = r.uint("L", s.L, 2);
  s.seed = r.uint("seed", 0);
  if (r.has("genotype")) {
    const json& g = r.at("genotype");
    s.genotype = guarded(
        r, "genotype",
        [&]() -> std::optional<nets::Genotype> {
          if (g.is_string()) {
            const std::string p = resolve_path(base, g.get<std::string>());
            std::ifstream in(p);
            if (!in) throw ConfigError("file not found: " + p);
            return nets::genotype_from_json(json::parse(in));
          }
          return nets::genotype_from_json(g);
        },
        std::nullopt);
  }
  if (s.arch == "genotype" && !s.genotype && !r.has("genotype")) r.fail("genotype", "required when arch is genotype");
  if (r.has("train")) s.train = parse_train(r.at("train"), r.path("train"), errs);
  r.finish();
  return s;
}

attack::NormFamily parse_norm_family(const json& j, const std::string& where, std::vector<std::string>& errs) {
  Reader r(j, where, errs);
  attack::NormFamily n;
  n.norm = guarded(r, "norm", [&] { return attack::parse_norm(r.string("norm", "Linf")); }, attack::Norm::Linf);
  n = attack::default_norm(n.norm);
  n.eps_max = r.number("eps_max", n.eps_max);
  if (!(n.eps_max > 0.0)) r.fail("eps_max", "must be positive");
  r.finish();
  return n;
}

AttackSearchSpec parse_attack(const json& j, const std::string& where, std::vector<std::string>& errs) {
  Reader r(j, where, errs);
  AttackSearchSpec s;
  s.strategy = r.string("strategy", s.strategy);
  if (s.strategy != "de" && s.strategy != "pso" && s.strategy != "local" && s.strategy != "random" && s.strategy != "nsga2")
    r.fail("strategy", "unknown attack search strategy '" + s.strategy + "'");
  s.max_cells = r.uint("max_cells", s.max_cells, 1);
  if (s.max_cells > attack::kMaxCells) r.fail("max_cells", "at most 3");
  s.restart = r.boolean("restart", s.restart);
  const std::size_t pop = r.uint("pop", 20, 2), gens = r.uint("gens", 5, 1);
  s.de.pop = s.pso.pop = s.nsga.pop = pop;
  s.de.gens = s.pso.gens = s.nsga.gens = gens;
  s.de.F = r.number("F", s.de.F);
  s.de.CR = r.number("CR", s.de.CR);
  s.de.finetune_prob = r.number("finetune_prob", s.de.finetune_prob);
  s.pso.w = r.number("w", s.pso.w);
  s.pso.c1 = r.number("c1", s.pso.c1);
  s.pso.c2 = r.number("c2", s.pso.c2);
  s.local.iters = r.uint("iters", s.local.iters, 1);
  s.local.neigh = r.uint("neigh", s.local.neigh, 1);
  s.nsga.Pc = r.number("Pc", s.nsga.Pc);
  s.nsga.Pm = r.number("Pm", s.nsga.Pm);
  s.budget = r.uint("budget", s.budget, 1);
  s.eval_examples = r.uint("eval_examples", s.eval_examples, 1);
  if (s.strategy == "de" && pop < 4) r.fail("pop", "DE needs at least 4");
  if (s.strategy == "nsga2" && pop % 2) r.fail("pop", "NSGA-II needs an even population");
  r.finish();
  return s;
}

nas::SearchConfig parse_arch(const json& j, const std::string& where, const attack::NormFamily& norm,
                             std::vector<std::string>& errs) {
  Reader r(j, where, errs);
  nas::SearchConfig c;
  c.strategy = guarded(r, "strategy", [&] { return nas::parse_strategy(r.string("strategy", "darts")); },
                       nas::Strategy::darts);
  if (r.has("metric"))
    c.metric = guarded(r, "metric", [&] { return parse_metric_spec(r.at("metric"), norm); }, robust::RobustnessMetric{});
  c.gamma = r.number("gamma", c.gamma);
  c.C = r.uint("C", c.C, 4);
  c.L = r.uint("L", c.L, 2);
  c.epochs = r.uint("epochs", c.epochs, 1);
  c.warm_epochs = r.integer("warm_epochs", c.warm_epochs);
  c.batch_size = r.uint("batch_size", c.batch_size, 1);
  c.w_lr = r.number("w_lr", c.w_lr);
  c.alpha_lr = r.number("alpha_lr", c.alpha_lr);
  c.reg_probes = r.uint("reg_probes", c.reg_probes);
  const std::string p = r.string("perturb", "random");
  if (p == "random") c.perturb = nas::Perturbation::random;
  else if (p == "adversarial") c.perturb = nas::Perturbation::adversarial;
  else r.fail("perturb", "expected random or adversarial");
  c.radius = r.number("radius", c.radius);
  c.channel_fraction = r.number("channel_fraction", c.channel_fraction);
  c.n_samples = r.uint("n_samples", c.n_samples, 1);
  c.pop = r.uint("pop", c.pop, 1);
  c.gens = r.uint("gens", c.gens, 1);
  c.F = r.number("F", c.F);
  c.CR = r.number("CR", c.CR);
  c.candidate_epochs = r.uint("candidate_epochs", c.candidate_epochs, 1);
  c.candidate_C = r.uint("candidate_C", c.candidate_C, 4);
  c.candidate_L = r.uint("candidate_L", c.candidate_L, 2);
  c.candidate_adversarial = r.boolean("candidate_adversarial", c.candidate_adversarial);
  c.train_epochs = r.uint("train_epochs", c.train_epochs, 1);
  c.n_eval = r.uint("n_eval", c.n_eval, 1);
  c.ws_adversarial = r.boolean("ws_adversarial", c.ws_adversarial);
  r.finish();
  if (errs.empty()) {
    try {
      nas::validate(c);
    } catch (const std::exception& e) {
      errs.push_back(where + ": " + e.what());
    }
  }
  return c;
}

}  // namespace

robust::NoiseSource parse_source(const json& j, const attack::NormFamily& norm, std::uint64_t seed) {
  if (!j.is_object() || !j.contains("type") || !j["type"].is_string()) throw ConfigError("source needs a \"type\"");
  const std::string t = j["type"].get<std::string>();
  const double eps = j.value("eps", norm.eps_max);
  robust::NoiseSource s;
  if (t == "identity") {
    s = robust::NoiseSource::identity();
  } else if (t == "fgsm") {
    s = robust::fgsm_source(eps, seed);
    s.norm = attack::NormFamily{norm.norm, std::max(eps, 1e-300)};
  } else if (t == "pgd") {
    s = robust::pgd_source(eps, j.value("steps", std::size_t{7}), seed);
    s.norm = attack::NormFamily{norm.norm, std::max(eps, 1e-300)};
  } else if (t == "cw" || t == "mi" || t == "mt" || t == "momentum") {
    attack::CellParams c;
    c.op = t == "cw" ? attack::AttackOp::CW
           : t == "mi" ? attack::AttackOp::MI
           : t == "mt" ? attack::AttackOp::MT
                       : attack::AttackOp::MomentumIterative;
    c.eps = eps;
    c.steps = j.value("steps", std::size_t{7});
    c.step_size = eps / 4.0;
    c.loss = attack::parse_loss(j.value("loss", std::string("CE_P")));
    if (!attack::op_supported(c.op, norm.norm)) throw ConfigError("source " + t + " not available for this norm");
    s = robust::NoiseSource::adversarial({c}, attack::NormFamily{norm.norm, std::max(eps, 1e-300)}, seed);
  } else if (t == "scheme") {
    attack::AttackScheme sc;
    if (j.contains("path")) sc = attack::load_scheme(j["path"].get<std::string>());
    else if (j.contains("scheme")) sc = attack::scheme_from_json(j["scheme"]);
    else throw ConfigError("scheme source needs \"path\" or \"scheme\"");
    std::vector<attack::CellParams> cells;
    for (const auto& c : sc.cells) cells.push_back(attack::resolve(c, sc.norm));
    s = robust::NoiseSource::adversarial(cells, sc.norm, seed, "AAA");
  } else if (t == "natural") {
    data::CorruptionSpec c;
    c.kind = data::parse_corruption(j.value("corruption", std::string("gaussian_noise")));
    c.severity = j.value("severity", 1);
    if (c.severity < 1 || c.severity > 5) throw ConfigError("severity must lie in 1..5");
    s = robust::NoiseSource::natural(c, seed);
  } else if (t == "system") {
    data::ResamplePipeline p;
    p.down = data::parse_resampler(j.value("down", std::string("nearest")));
    p.up = data::parse_resampler(j.value("up", std::string("nearest")));
    p.intermediate_size = j.value("size", std::size_t{4});
    s = robust::NoiseSource::system(p);
  } else {
    throw ConfigError("unknown source type '" + t + "'");
  }
  if (j.contains("label")) s.label = j["label"].get<std::string>();
  return s;
}

robust::RobustnessMetric parse_metric_spec(const json& j, const attack::NormFamily& norm) {
  robust::RobustnessMetric m;
  if (!j.is_object()) throw ConfigError("metric must be an object");
  m.kind = robust::parse_metric(j.value("kind", std::string("clean")));
  m.probes = j.value("probes", m.probes);
  m.h = j.value("h", m.h);
  m.seed = j.value("seed", std::uint64_t{0});
  m.max_examples = j.value("max_examples", m.max_examples);
  if (j.contains("sources"))
    for (const auto& s : j["sources"]) m.sources.push_back(parse_source(s, norm, m.seed));
  const bool needs_sources = m.kind == robust::MetricKind::adversarial || m.kind == robust::MetricKind::natural ||
                             m.kind == robust::MetricKind::system;
  if (needs_sources && m.sources.empty()) throw ConfigError("metric " + robust::metric_name(m.kind) + " needs sources");
  return m;
}

namespace {

ExperimentConfig parse_impl(const json& j, const std::string& base) {
  std::vector<std::string> errs;
  ExperimentConfig c;
  Reader r(j, "", errs);
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  if (!r.has("schema")) r.fail("schema", "missing (expected 1)");
  else if (!j["schema"].is_number_integer() || j["schema"].get<int>() != kSchemaVersion)
    r.fail("schema", "unsupported version (expected 1)");
  if (!r.has("kind")) r.fail("kind", "missing");
  else c.kind = guarded(r, "kind", [&] { return parse_kind(r.string("kind", "")); }, Kind::evaluate);
  if (!r.has("seeds")) {
    r.fail("seeds", "missing; seeds are mandatory");
  } else {
    const auto s = r.uints("seeds", {});
    if (s.empty()) r.fail("seeds", "must be a non-empty list");
    c.seeds.assign(s.begin(), s.end());
  }
  c.output_dir = r.string("output_dir", c.output_dir);
  c.jobs = r.uint("jobs", 1, 1);
  c.norm = r.has("norm") ? parse_norm_family(j["norm"], "norm", errs) : attack::NormFamily{};
  if (r.has("dataset")) c.train_data = parse_dataset(j["dataset"], "dataset", base, errs);
  c.eval_data = c.train_data;
  c.eval_data.seed = c.train_data.seed + 1;
  if (r.has("eval_dataset")) c.eval_data = parse_dataset(j["eval_dataset"], "eval_dataset", base, errs);
  if (r.has("model")) c.model = parse_model(j["model"], "model", base, errs);

  const bool wants_attack = c.kind == Kind::attack_search || c.kind == Kind::circuit_attack;
  const bool wants_arch = c.kind == Kind::arch_search || c.kind == Kind::circuit_defense;
  if (r.has("attack_search")) c.attack = parse_attack(j["attack_search"], "attack_search", errs);
  if (r.has("arch_search")) c.arch = parse_arch(j["arch_search"], "arch_search", c.norm, errs);
  else if (wants_arch) r.fail("arch_search", "required for " + kind_name(c.kind));
  if (wants_attack && !r.has("attack_search")) r.fail("attack_search", "required for " + kind_name(c.kind));
  if (r.has("sources")) {
    if (!j["sources"].is_array()) r.fail("sources", "expected a list");
    else
      for (std::size_t i = 0; i < j["sources"].size(); ++i) {
        try {
          c.sources.push_back(parse_source(j["sources"][i], c.norm, 0));
        } catch (const std::exception& e) {
          errs.push_back("sources[" + std::to_string(i) + "]: " + e.what());
        }
      }
  }
  if (c.kind == Kind::circuit_defense) {
    c.scheme_path = resolve_path(base, r.string("scheme", ""));
    if (c.scheme_path.empty()) r.fail("scheme", "required for circuit_defense");
    else if (!std::filesystem::exists(c.scheme_path)) r.fail("scheme", "file not found: " + c.scheme_path);
    else {
      try {
        attack::load_scheme(c.scheme_path);
      } catch (const std::exception& e) {
        r.fail("scheme", e.what());
      }
    }
  } else if (r.has("scheme")) {
    r.fail("scheme", "only used by circuit_defense");
  }
  if (c.kind == Kind::circuit_attack) {
    if (!c.model.genotype && c.model.arch == "genotype") r.fail("model.genotype", "source genotype missing");
    if (!r.has("targets") || !j["targets"].is_array() || j["targets"].empty()) {
      r.fail("targets", "circuit_attack needs a non-empty target list");
    } else {
      for (std::size_t i = 0; i < j["targets"].size(); ++i)
        c.targets.push_back(parse_model(j["targets"][i], "targets[" + std::to_string(i) + "]", base, errs));
    }
  } else if (r.has("targets")) {
    r.fail("targets", "only used by circuit_attack");
  }
  r.finish();
  if (!errs.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ValidationError(msg);
  }
  c.raw = ojson::parse(j.dump());
  return c;
}

}  // namespace

ExperimentConfig parse_config(const json& j) { return parse_impl(j, ""); }

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config: " + path + " is not valid JSON: " + e.what());
  }
  return parse_impl(j, std::filesystem::path(path).parent_path().string());
}

ExperimentConfig with_overrides(const ExperimentConfig& c, std::optional<std::uint64_t> seed,
                                std::optional<std::string> out, std::optional<std::size_t> jobs) {
  ExperimentConfig r = c;
  if (seed) r.seeds = {*seed};
  if (out) r.output_dir = *out;
  if (jobs) r.jobs = std::max<std::size_t>(1, *jobs);
  if (seed) r.raw["seeds"] = ojson::array({*seed});
  if (out) r.raw["output_dir"] = *out;
  if (jobs) r.raw["jobs"] = r.jobs;
  return r;
}

data::Dataset load_dataset(const DatasetSpec& s) {
  if (s.kind == "shapes") return data::make_shapes_dataset(s.n_per_class, s.side, s.classes, s.noise, s.seed);
  if (s.kind == "spirals") return data::make_spirals_dataset(s.n, s.turns, s.noise, s.seed);
  if (s.kind == "cifar10") return data::load_cifar10_binary(s.path);
  if (s.kind == "import") return data::import_dataset(s.path);
  throw ConfigError("unknown dataset kind '" + s.kind + "'");
}

}  // namespace autorobust::harness
