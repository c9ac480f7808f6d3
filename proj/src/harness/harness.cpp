#include "autorobust/harness/harness.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "autorobust/core/errors.hpp"
#include "autorobust/core/hash.hpp"
#include "autorobust/core/rng.hpp"
#include "autorobust/nets/cells.hpp"
#include "autorobust/nets/layers.hpp"
#include "autorobust/nets/networks.hpp"

namespace autorobust::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::unique_ptr<grad::Model> build_model(const ModelSpec& s, const data::Dataset& train_set, std::uint64_t run_seed) {
  const std::uint64_t seed = derive_seed(s.seed, run_seed);
  const grad::Shape shape = train_set.example_shape();
  const std::size_t K = train_set.num_classes;
  std::unique_ptr<grad::Model> m;
  if (s.arch == "cnn") {
    m = nets::build_cnn(shape, s.channels, K, seed);
  } else if (s.arch == "mlp") {
    std::vector<std::size_t> sizes{std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>())};
    sizes.insert(sizes.end(), s.hidden.begin(), s.hidden.end());
    sizes.push_back(K);
    if (shape.size() == 1) {
      m = nets::build_mlp(sizes, seed);
    } else {
      // Image inputs get a flatten in front.
      if (s.hidden.empty()) throw ConfigError("model '" + s.name + "': mlp needs a hidden layer");
      Rng rng(derive_seed(seed, 0x31b));
      nets::Sequential body;
      body.emplace<nets::Flatten>();
      for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        body.emplace<nets::Linear>(sizes[i], sizes[i + 1], true, rng);
        if (i + 2 < sizes.size()) body.emplace<nets::ReLU>();
      }
      m = std::make_unique<nets::SequentialModel>(shape, K, std::move(body), "mlp");
    }
  } else if (s.arch == "linear") {
    m = nets::build_linear(shape, K, seed);
  } else if (s.arch == "genotype") {
    if (!s.genotype) throw ConfigError("model '" + s.name + "': genotype missing");
    m = nets::instantiate_genotype(*s.genotype, s.C, s.L, shape, K, seed);
  } else {
    throw ConfigError("unknown model arch '" + s.arch + "'");
  }
  nets::train(*m, train_set, s.train, derive_seed(seed, 1));
  m->set_training(false);
  return m;
}

namespace {

data::Dataset eval_slice(const data::Dataset& d, std::size_t n) { return d.slice(0, std::min(n, d.size())); }

ojson trace_json(const std::vector<search::TraceRow>& t) {
  ojson a = ojson::array();
  for (const auto& r : t)
    a.push_back({{"generation", r.generation},
                 {"best_robust_acc", r.best_robust_acc},
                 {"best_cost_units", r.best_cost_units},
                 {"evals_used", r.evals_used}});
  return a;
}

ojson trace_json(const std::vector<nas::TraceRow>& t) {
  ojson a = ojson::array();
  for (const auto& r : t) a.push_back({{"epoch", r.epoch}, {"val_loss", r.val_loss}, {"metric_value", r.metric_value}});
  return a;
}

ojson to_o(const json& j) { return ojson::parse(j.dump()); }

ojson attack_json(const AttackRun& r, const std::string& strategy, const attack::NormFamily& norm, std::size_t max_cells,
                  bool restart) {
  const auto space = search::SearchSpace::full(norm, max_cells, restart);
  ojson members = ojson::array();
  for (std::size_t i = 0; i < r.members.size(); ++i)
    members.push_back({{"genome", to_o(search::to_json(r.members[i].genome, space))},
                       {"robust_acc", r.members[i].result.robust_acc},
                       {"cost_units", r.members[i].result.cost_units},
                       {"front", r.fronts[i]}});
  return {{"strategy", strategy},
          {"scheme", to_o(attack::scheme_to_json(r.scheme))},
          {"robust_acc", r.result.robust_acc},
          {"cost_units", r.result.cost_units},
          {"requests", r.requests},
          {"trace", trace_json(r.trace)},
          {"members", members}};
}

ojson arch_json(const nas::ArchSearchResult& r) {
  ojson evaluated = ojson::array();
  for (const auto& c : r.evaluated)
    evaluated.push_back({{"genotype", to_o(nets::to_json(c.genotype))},
                         {"fitness", c.fitness},
                         {"metric_value", c.metric_value},
                         {"val_loss", c.val_loss}});
  return {{"genotype", to_o(nets::to_json(r.genotype))},
          {"best_fitness", r.best_fitness},
          {"final_jacobian", r.final_jacobian},
          {"trace", trace_json(r.trace)},
          {"evaluated", evaluated}};
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw FormatError("cannot write " + p.string());
  out << s;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_transfer_csv(const fs::path& p, const std::vector<TransferRow>& rows) {
  std::string s = "target,robust_acc,cost_units\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.17g,%llu\n", r.robust_acc, static_cast<unsigned long long>(r.cost_units));
    s += r.target + buf;
  }
  write_text(p, s);
}

std::vector<robust::NoiseSource> reseeded(std::vector<robust::NoiseSource> v, std::uint64_t seed) {
  for (auto& s : v) s.seed = seed;
  return v;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

const std::string kZeroHash(40, '0');

}  // namespace

AttackRun run_attack_search(grad::Model& model, const data::Dataset& slice, const AttackSearchSpec& spec,
                            const attack::NormFamily& norm, std::uint64_t seed, std::size_t jobs) {
  const auto space = search::SearchSpace::full(norm, spec.max_cells, spec.restart);
  search::Evaluator ev(model, slice, space, seed, jobs);
  AttackRun run;
  search::Genome best;
  if (spec.strategy == "nsga2") {
    auto r = search::nsga2_search(ev, spec.nsga, seed);
    best = r.chosen;
    run.result = r.chosen_result;
    run.trace = r.trace;
    for (std::size_t f = 0; f < r.archive.fronts.size(); ++f)
      for (const auto& m : r.archive.fronts[f]) {
        run.members.push_back(m);
        run.fronts.push_back(f);
      }
  } else {
    search::SearchResult r;
    if (spec.strategy == "de") r = search::de_search(ev, spec.de, seed);
    else if (spec.strategy == "pso") r = search::pso_search(ev, spec.pso, seed);
    else if (spec.strategy == "local") r = search::local_search(ev, spec.local, seed);
    else if (spec.strategy == "random") r = search::random_search(ev, spec.budget, seed);
    else throw ConfigError("unknown attack search strategy '" + spec.strategy + "'");
    best = r.best;
    run.result = r.best_result;
    run.trace = r.trace;
    run.members = r.history;
    std::vector<search::Objectives> pts;
    for (const auto& m : r.history) pts.push_back(search::objectives(m.result));
    run.fronts = search::nondominated_sort(pts);
  }
  run.scheme = search::decode(best, space);
  run.requests = ev.requests();
  return run;
}

DefenseOutcome circuit_defense(const ExperimentConfig& c, const attack::AttackScheme& scheme, std::uint64_t seed) {
  const data::Dataset train_set = load_dataset(c.train_data);
  const data::Dataset eval_set = load_dataset(c.eval_data);
  std::vector<attack::CellParams> cells;
  for (const auto& cell : scheme.cells) cells.push_back(attack::resolve(cell, scheme.norm));
  const auto aaa = robust::NoiseSource::adversarial(cells, scheme.norm, seed, "AAA");

  nas::SearchConfig cfg = c.arch;
  cfg.jobs = c.jobs;
  cfg.metric.kind = robust::MetricKind::adversarial;
  cfg.metric.sources = {aaa};
  cfg.metric.seed = seed;

  DefenseOutcome out;
  out.search = nas::arch_search(cfg, train_set, seed);
  ModelSpec winner = c.model;
  winner.arch = "genotype";
  winner.genotype = out.search.genotype;
  auto model = build_model(winner, train_set, seed);
  const double eps = scheme.norm.eps_max;
  robust::ReportOptions opt;
  opt.seed = seed;
  out.report = robust::evaluate(*model, eval_set, {robust::fgsm_source(eps, seed), robust::pgd_source(eps, 7, seed), aaa},
                                opt);
  return out;
}

AttackOutcome circuit_attack(const ExperimentConfig& c, std::uint64_t seed) {
  const data::Dataset train_set = load_dataset(c.train_data);
  const data::Dataset slice = eval_slice(load_dataset(c.eval_data), c.attack.eval_examples);
  AttackOutcome out;
  {
    auto source = build_model(c.model, train_set, seed);
    out.source = run_attack_search(*source, slice, c.attack, c.norm, seed, c.jobs);
  }
  for (const auto& t : c.targets) {
    auto target = build_model(t, train_set, seed);
    const auto r = attack::run_scheme(*target, slice, out.source.scheme, seed).result;
    out.table.push_back({t.name, r.robust_acc, r.cost_units});
  }
  return out;
}

namespace {

ojson run_one(const ExperimentConfig& c, std::uint64_t seed, const fs::path& dir) {
  fs::create_directories(dir);
  ojson out{{"seed", seed}};
  switch (c.kind) {
    case Kind::attack_search: {
      const auto train_set = load_dataset(c.train_data);
      const auto slice = eval_slice(load_dataset(c.eval_data), c.attack.eval_examples);
      auto model = build_model(c.model, train_set, seed);
      const auto run = run_attack_search(*model, slice, c.attack, c.norm, seed, c.jobs);
      out["model_fingerprint"] = hex64(grad::fingerprint(*model));
      out["attack"] = attack_json(run, c.attack.strategy, c.norm, c.attack.max_cells, c.attack.restart);
      attack::save_scheme((dir / "scheme.json").string(), run.scheme);
      search::write_trace_csv((dir / "trace.csv").string(), run.trace);
      if (c.attack.strategy == "nsga2") {
        const auto space = search::SearchSpace::full(c.norm, c.attack.max_cells, c.attack.restart);
        std::vector<search::Member> first;
        for (std::size_t i = 0; i < run.members.size(); ++i)
          if (run.fronts[i] == 0) first.push_back(run.members[i]);
        write_text(dir / "pareto.json", search::pareto_json(first, space).dump(2));
      }
      break;
    }
    case Kind::arch_search: {
      const auto train_set = load_dataset(c.train_data);
      nas::SearchConfig cfg = c.arch;
      cfg.jobs = c.jobs;
      for (auto& s : cfg.metric.sources) s.seed = seed;
      const auto r = nas::arch_search(cfg, train_set, seed);
      out["strategy"] = nas::strategy_name(cfg.strategy);
      out["search"] = arch_json(r);
      write_text(dir / "genotype.json", nets::to_json(r.genotype).dump(2));
      nas::write_trace_csv((dir / "trace.csv").string(), r.trace);
      break;
    }
    case Kind::evaluate: {
      const auto train_set = load_dataset(c.train_data);
      const auto eval_set = load_dataset(c.eval_data);
      auto model = build_model(c.model, train_set, seed);
      robust::ReportOptions opt;
      opt.seed = seed;
      const auto rep = robust::evaluate(*model, eval_set, reseeded(c.sources, seed), opt);
      out["report"] = robust::to_json(rep);
      write_text(dir / "report.json", out["report"].dump(2));
      break;
    }
    case Kind::circuit_defense: {
      const auto scheme = attack::load_scheme(c.scheme_path);
      const auto r = circuit_defense(c, scheme, seed);
      out["strategy"] = nas::strategy_name(c.arch.strategy);
      out["search"] = arch_json(r.search);
      out["report"] = robust::to_json(r.report);
      write_text(dir / "genotype.json", nets::to_json(r.search.genotype).dump(2));
      write_text(dir / "report.json", out["report"].dump(2));
      nas::write_trace_csv((dir / "trace.csv").string(), r.search.trace);
      break;
    }
    case Kind::circuit_attack: {
      const auto r = circuit_attack(c, seed);
      out["attack"] = attack_json(r.source, c.attack.strategy, c.norm, c.attack.max_cells, c.attack.restart);
      ojson table = ojson::array();
      for (const auto& t : r.table)
        table.push_back({{"target", t.target}, {"robust_acc", t.robust_acc}, {"cost_units", t.cost_units}});
      out["transfer"] = table;
      attack::save_scheme((dir / "scheme.json").string(), r.source.scheme);
      search::write_trace_csv((dir / "trace.csv").string(), r.source.trace);
      write_transfer_csv(dir / "transfer.csv", r.table);
      break;
    }
  }
  return out;
}

std::string input_hash(const ExperimentConfig& c) {
  std::string blob = c.raw.dump();
  std::vector<std::string> files;
  if (!c.scheme_path.empty()) files.push_back(c.scheme_path);
  for (const auto* d : {&c.train_data, &c.eval_data}) {
    if (d->kind == "cifar10") files.push_back(d->path);
    if (d->kind == "import") files.push_back(d->path + ".tensor");
  }
  for (const auto& f : files) blob += "\n" + git_blob_hash(slurp(f));
  return git_blob_hash(blob);
}

std::string last_record_hash(const std::string& ledger_path) {
  if (!fs::exists(ledger_path)) return kZeroHash;
  const auto recs = read_ledger(ledger_path);
  return recs.empty() ? kZeroHash : recs.back().value("record_hash", kZeroHash);
}

}  // namespace

ojson run_experiment(const ExperimentConfig& c) {
  if (c.seeds.empty()) throw ValidationError("seeds: must be a non-empty list");
  const fs::path dir(c.output_dir);
  fs::create_directories(dir);
  DirLock lock(dir.string());
  const auto t0 = std::chrono::steady_clock::now();

  ojson results = ojson::array();
  for (const auto seed : c.seeds) {
    char sub[48];
    std::snprintf(sub, sizeof sub, "%s-seed%llu", kind_name(c.kind).c_str(), static_cast<unsigned long long>(seed));
    results.push_back(run_one(c, seed, dir / sub));
  }

  ojson rec;
  rec["schema"] = kSchemaVersion;
  rec["kind"] = kind_name(c.kind);
  rec["timestamp"] = utc_now();
  rec["config_hash"] = sha1_hex(c.raw.dump());
  rec["input_hash"] = input_hash(c);
  rec["config"] = c.raw;
  rec["seeds"] = c.seeds;
  rec["results"] = results;
  rec["result_hash"] = sha1_hex(results.dump());
  rec["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string ledger = (dir / "ledger.jsonl").string();
  append_record(ledger, rec);
  return read_ledger(ledger).back();
}

ojson strip_volatile(const ojson& record) {
  ojson r = record;
  r.erase("timestamp");
  r.erase("wall_time_s");
  r.erase("record_hash");
  return r;
}

std::string record_hash(const ojson& record) { return sha1_hex(strip_volatile(record).dump()); }

void append_record(const std::string& ledger_path, ojson record) {
  record["prev_hash"] = last_record_hash(ledger_path);
  record["record_hash"] = record_hash(record);
  std::ofstream out(ledger_path, std::ios::app | std::ios::binary);
  if (!out) throw FormatError("cannot append to " + ledger_path);
  out << record.dump() << "\n";
  out.flush();
  if (!out) throw FormatError("write failed on " + ledger_path);
}

std::vector<ojson> read_ledger(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open ledger " + path);
  std::vector<ojson> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(ojson::parse(line));
    } catch (const ojson::exception& e) {
      throw FormatError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::string verify_ledger(const std::string& path) {
  std::vector<ojson> recs;
  try {
    recs = read_ledger(path);
  } catch (const std::exception& e) {
    return e.what();
  }
  std::string prev = kZeroHash;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    const std::string at = "record " + std::to_string(i + 1) + ": ";
    if (!r.is_object() || !r.contains("record_hash") || !r.contains("prev_hash") || !r.contains("results"))
      return at + "missing fields";
    if (r["prev_hash"] != prev) return at + "prev_hash does not match the preceding record";
    if (r.value("result_hash", "") != sha1_hex(r["results"].dump())) return at + "result_hash mismatch";
    if (r["record_hash"] != record_hash(r)) return at + "record_hash mismatch";
    prev = r["record_hash"].get<std::string>();
  }
  return "";
}

DirLock::DirLock(const std::string& dir) : path_((fs::path(dir) / ".lock").string()) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid());
      [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    if (errno != EEXIST) throw StateError("cannot create lock " + path_);
    // A lock left by a process that no longer exists is taken over once.
    long holder = 0;
    std::ifstream(path_) >> holder;
    if (attempt == 0 && holder > 0 && ::kill(static_cast<pid_t>(holder), 0) != 0 && errno == ESRCH) {
      fs::remove(path_);
      continue;
    }
    throw StateError("output directory is locked by another run (" + path_ + ")");
  }
  throw StateError("output directory is locked by another run (" + path_ + ")");
}

DirLock::~DirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---- report ----

namespace {

struct Point {
  double acc;
  double cost;
  std::size_t front;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

ReportFiles render_report(const std::vector<ojson>& records) {
  if (records.empty()) throw ArgumentError("report: no records");
  std::string csv = "record,kind,seed,strategy,member,robust_acc,cost_units,front\n";
  std::vector<Point> pts;
  for (std::size_t ri = 0; ri < records.size(); ++ri) {
    const auto& rec = records[ri];
    const std::string kind = rec.value("kind", "");
    if (!rec.contains("results")) continue;
    for (const auto& res : rec["results"]) {
      if (!res.contains("attack")) continue;
      const auto& a = res["attack"];
      const std::string strategy = a.value("strategy", "");
      const auto seed = res.value("seed", std::uint64_t{0});
      std::size_t mi = 0;
      for (const auto& m : a["members"]) {
        const double acc = m["robust_acc"].get<double>();
        const auto cost = m["cost_units"].get<std::uint64_t>();
        const auto front = m["front"].get<std::size_t>();
        char buf[256];
        std::snprintf(buf, sizeof buf, "%zu,%s,%llu,%s,%zu,%.17g,%llu,%zu\n", ri + 1, kind.c_str(),
                      static_cast<unsigned long long>(seed), strategy.c_str(), mi++, acc,
                      static_cast<unsigned long long>(cost), front);
        csv += buf;
        pts.push_back({acc, static_cast<double>(cost), front});
      }
    }
  }

  const double W = 640, H = 400, left = 60, right = 20, top = 20, bottom = 50;
  double max_cost = 1.0;
  std::size_t max_front = 0;
  for (const auto& p : pts) {
    max_cost = std::max(max_cost, p.cost);
    max_front = std::max(max_front, p.front);
  }
  auto sx = [&](double c) { return left + (W - left - right) * c / max_cost; };
  auto sy = [&](double a) { return top + (H - top - bottom) * (1.0 - a); };
  static const char* palette[] = {"#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#7f7f7f"};

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
  svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg += "<line x1=\"" + fmt("%.2f", left) + "\" y1=\"" + fmt("%.2f", H - bottom) + "\" x2=\"" + fmt("%.2f", W - right) +
         "\" y2=\"" + fmt("%.2f", H - bottom) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt("%.2f", left) + "\" y1=\"" + fmt("%.2f", top) + "\" x2=\"" + fmt("%.2f", left) +
         "\" y2=\"" + fmt("%.2f", H - bottom) + "\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + fmt("%.2f", W / 2) + "\" y=\"" + fmt("%.2f", H - 12) +
         "\" text-anchor=\"middle\" font-size=\"12\">cost_units (max " + fmt("%.0f", max_cost) + ")</text>\n";
  svg += "<text x=\"14\" y=\"" + fmt("%.2f", (H - bottom + top) / 2) +
         "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 " + fmt("%.2f", (H - bottom + top) / 2) +
         ")\">robust_acc</text>\n";
  if (!pts.empty()) {
    for (std::size_t f = 0; f <= max_front; ++f) {
      std::string body;
      for (const auto& p : pts)
        if (p.front == f)
          body += "<circle cx=\"" + fmt("%.2f", sx(p.cost)) + "\" cy=\"" + fmt("%.2f", sy(p.acc)) + "\" r=\"3\"/>\n";
      if (body.empty()) continue;
      svg += "<g class=\"front\" data-front=\"" + std::to_string(f) + "\" fill=\"" + palette[f % 7] + "\">\n" + body +
             "</g>\n";
    }
  }
  svg += "</svg>\n";
  return {csv, svg};
}

void write_report(const std::vector<ojson>& records, const std::string& out_dir) {
  const auto files = render_report(records);
  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "report.csv", files.csv);
  write_text(fs::path(out_dir) / "report.svg", files.svg);
}

}  // namespace autorobust::harness
