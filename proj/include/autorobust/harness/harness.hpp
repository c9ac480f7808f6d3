#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autorobust/attack/attacks.hpp"
#include "autorobust/data/dataset.hpp"
#include "autorobust/nas/nas.hpp"
#include "autorobust/nets/train.hpp"
#include "autorobust/robust/robust.hpp"
#include "autorobust/search/search.hpp"

namespace autorobust::harness {

using ojson = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

enum class Kind { attack_search, arch_search, evaluate, circuit_defense, circuit_attack };
std::string kind_name(Kind k);
Kind parse_kind(std::string_view name);

struct DatasetSpec {
  std::string kind = "shapes";  // shapes | spirals | cifar10 | import
  std::size_t n_per_class = 16;
  std::size_t side = 8;
  std::size_t classes = 4;
  double noise = 0.05;
  std::size_t n = 128;  // spirals
  double turns = 1.5;
  std::uint64_t seed = 0;
  std::string path;  // cifar10 batch file or import prefix
};
data::Dataset load_dataset(const DatasetSpec& s);

// A model is described, not stored: the harness rebuilds and retrains it from this description and a seed.
struct ModelSpec {
  std::string name = "model";
  std::string arch = "cnn";  // cnn | mlp | linear | genotype
  std::vector<std::size_t> channels{8, 16};
  std::vector<std::size_t> hidden{32};
  std::optional<nets::Genotype> genotype;
  std::size_t C = 4;
  std::size_t L = 2;
  std::uint64_t seed = 0;
  nets::TrainSchedule train;
};
std::unique_ptr<grad::Model> build_model(const ModelSpec& s, const data::Dataset& train_set, std::uint64_t run_seed);

struct AttackSearchSpec {
  std::string strategy = "de";  // de | pso | local | random | nsga2
  std::size_t max_cells = 3;
  bool restart = false;
  search::DeConfig de;
  search::PsoConfig pso;
  search::LocalConfig local;
  search::NsgaConfig nsga;
  std::size_t budget = 100;  // random search
  std::size_t eval_examples = 64;
};

struct ExperimentConfig {
  Kind kind = Kind::evaluate;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";
  std::size_t jobs = 1;
  DatasetSpec train_data;
  DatasetSpec eval_data;
  ModelSpec model;
  attack::NormFamily norm;
  AttackSearchSpec attack;
  nas::SearchConfig arch;
  std::vector<robust::NoiseSource> sources;
  std::string scheme_path;
  std::vector<ModelSpec> targets;
  ojson raw;  // the config as given, after command-line overrides
};

// ValidationError whose message lists every bad field, one per line.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);
// Re-parses with the seeds / output dir / jobs replaced.
ExperimentConfig with_overrides(const ExperimentConfig& c, std::optional<std::uint64_t> seed,
                                std::optional<std::string> out, std::optional<std::size_t> jobs);

// Noise source from JSON: {"type": fgsm|pgd|scheme|natural|system|identity, ...}.
robust::NoiseSource parse_source(const nlohmann::json& j, const attack::NormFamily& norm, std::uint64_t seed);
robust::RobustnessMetric parse_metric_spec(const nlohmann::json& j, const attack::NormFamily& norm);

// ---- phases (public so the circuit tests can compose them) ----

struct AttackRun {
  attack::AttackScheme scheme;
  search::EvalResult result;
  std::vector<search::TraceRow> trace;
  std::vector<search::Member> members;
  std::vector<std::size_t> fronts;  // front rank per member
  std::size_t requests = 0;
};
AttackRun run_attack_search(grad::Model& model, const data::Dataset& eval_slice, const AttackSearchSpec& spec,
                            const attack::NormFamily& norm, std::uint64_t seed, std::size_t jobs);

struct DefenseOutcome {
  nas::ArchSearchResult search;
  robust::RobustnessReport report;
};
// NAS scored by robust accuracy under the scheme, then the winner retrained and reported
// under FGSM, PGD-7 and the scheme ("AAA").
DefenseOutcome circuit_defense(const ExperimentConfig& c, const attack::AttackScheme& scheme, std::uint64_t seed);

struct TransferRow {
  std::string target;
  double robust_acc = 0.0;
  std::uint64_t cost_units = 0;
};
struct AttackOutcome {
  AttackRun source;
  std::vector<TransferRow> table;
};
// Retrains c.model (the source architecture), searches an attack on it and evaluates that
// scheme on every target.
AttackOutcome circuit_attack(const ExperimentConfig& c, std::uint64_t seed);

// ---- ledger ----

// Runs every seed, writes artifacts under output_dir and appends one record to
// output_dir/ledger.jsonl. Holds output_dir/.lock for the duration.
ojson run_experiment(const ExperimentConfig& c);

// Hash over the record without its volatile fields (timestamp, wall_time_s, record_hash).
std::string record_hash(const ojson& record);
ojson strip_volatile(const ojson& record);
void append_record(const std::string& ledger_path, ojson record);
std::vector<ojson> read_ledger(const std::string& path);
// Empty when the chain verifies, else a description of the first broken record.
std::string verify_ledger(const std::string& path);

class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
};

// ---- report ----

struct ReportFiles {
  std::string csv;
  std::string svg;
};
// CSV with one row per recorded population member and an SVG scatter of (cost_units, robust_acc)
// with one series per front rank. ArgumentError when `records` is empty.
ReportFiles render_report(const std::vector<ojson>& records);
void write_report(const std::vector<ojson>& records, const std::string& out_dir);

}  // namespace autorobust::harness
