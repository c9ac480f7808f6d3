#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "autorobust/search/genome.hpp"

namespace autorobust::search {

using attack::EvalResult;

struct Member {
  Genome genome;
  EvalResult result;
};

// Runs decoded schemes on a fixed model and dataset, memoized on
// (genome, model fingerprint, dataset fingerprint, norm, attack seed).
class Evaluator {
 public:
  Evaluator(grad::Model& model, const data::Dataset& d, SearchSpace space, std::uint64_t attack_seed = 0,
            std::size_t jobs = 1);
  // The dataset is held by reference.
  Evaluator(grad::Model&, data::Dataset&&, SearchSpace, std::uint64_t = 0, std::size_t = 1) = delete;

  EvalResult evaluate(const Genome& g);
  // Results in input order. Distinct uncached genomes are spread over `jobs` model clones.
  std::vector<EvalResult> evaluate_all(const std::vector<Genome>& gs);

  const SearchSpace& space() const { return space_; }
  std::size_t requests() const { return requests_; }
  std::size_t cache_hits() const { return hits_; }
  std::size_t cache_misses() const { return misses_; }
  // Upper bound on cost_units for any genome of the space on this dataset.
  std::uint64_t max_cost() const;

 private:
  std::string key(const Genome& g) const;

  grad::Model& model_;
  const data::Dataset& data_;
  SearchSpace space_;
  std::uint64_t seed_;
  std::size_t jobs_;
  std::string context_;
  std::map<std::string, EvalResult> cache_;
  std::size_t requests_ = 0, hits_ = 0, misses_ = 0;
};

// Lower robust accuracy wins; ties go to the cheaper scheme.
bool better(const EvalResult& a, const EvalResult& b);

struct TraceRow {
  std::size_t generation = 0;
  double best_robust_acc = 1.0;
  std::uint64_t best_cost_units = 0;
  std::size_t evals_used = 0;
};

struct SearchResult {
  Genome best;
  EvalResult best_result;
  std::vector<TraceRow> trace;
  std::vector<Member> history;  // every evaluation request in order
};

struct DeConfig {
  std::size_t pop = 20;
  std::size_t gens = 5;
  double F = 0.5;
  double CR = 0.9;
  double finetune_prob = 0.2;
};
// ArgumentError when pop < 4.
SearchResult de_search(Evaluator& ev, const DeConfig& cfg, std::uint64_t seed);

struct PsoConfig {
  std::size_t pop = 20;
  std::size_t gens = 5;
  double w = 0.7;
  double c1 = 1.5;
  double c2 = 1.5;
};
SearchResult pso_search(Evaluator& ev, const PsoConfig& cfg, std::uint64_t seed);

struct LocalConfig {
  std::size_t iters = 25;
  std::size_t neigh = 8;
};

enum class MoveKind { op, loss, eps, steps, restart, append, drop };
// The moves available to a genome in the space (no drop for one cell, no append at max length).
std::vector<MoveKind> available_moves(const Genome& g, const SearchSpace& space);
Genome apply_move(const Genome& g, MoveKind m, const SearchSpace& space, Rng& rng);
SearchResult local_search(Evaluator& ev, const LocalConfig& cfg, std::uint64_t seed);

SearchResult random_search(Evaluator& ev, std::size_t budget, std::uint64_t seed);

// Pareto machinery, minimizing both objectives.
struct Objectives {
  double f1 = 0.0;
  double f2 = 0.0;
};
bool dominates(const Objectives& a, const Objectives& b);
// Rank per point (0 = first front). ValidationError on NaN.
std::vector<std::size_t> nondominated_sort(const std::vector<Objectives>& pts);
// Crowding distance within one front; boundary points get +inf.
std::vector<double> crowding_distance(const std::vector<Objectives>& front);
// Area dominated by the non-dominated subset of `pts` and bounded by `ref`.
double hypervolume(const std::vector<Objectives>& pts, const Objectives& ref);

struct ParetoArchive {
  std::vector<std::vector<Member>> fronts;
  std::vector<std::vector<double>> crowding;
};

struct NsgaConfig {
  std::size_t pop = 20;
  std::size_t gens = 5;
  double Pc = 0.9;
  double Pm = -1.0;  // negative means 1 / genome length
};

struct NsgaResult {
  ParetoArchive archive;
  Genome chosen;
  EvalResult chosen_result;
  std::vector<TraceRow> trace;
  std::vector<Member> history;
  std::vector<Member> initial;  // first population, for hypervolume comparisons
};
// ArgumentError for an odd or too small population.
NsgaResult nsga2_search(Evaluator& ev, const NsgaConfig& cfg, std::uint64_t seed);

Objectives objectives(const EvalResult& r);
ParetoArchive build_archive(const std::vector<Member>& members);

struct OracleTable {
  std::vector<Member> rows;
  Member best;
};
// Every full-length genome of the space; ArgumentError above 4096 genomes.
OracleTable brute_force_oracle(Evaluator& ev);

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);
nlohmann::json pareto_json(const std::vector<Member>& front, const SearchSpace& space);

}  // namespace autorobust::search
