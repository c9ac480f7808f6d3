#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "autorobust/data/dataset.hpp"
#include "autorobust/nets/genotype.hpp"
#include "autorobust/nets/supernet.hpp"
#include "autorobust/nets/train.hpp"
#include "autorobust/robust/robust.hpp"

namespace autorobust::nas {

using grad::Tensor;
using nets::Genotype;

enum class Strategy { darts, nasp, fairdarts, smoothdarts, pcdarts, random, de, ws_random };
std::string strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);
bool is_differentiable(Strategy s);

enum class Perturbation { random, adversarial };

struct SearchConfig {
  Strategy strategy = Strategy::darts;
  robust::RobustnessMetric metric;
  double gamma = 1.0;

  // Supernet and bilevel schedule.
  std::size_t C = 8;
  std::size_t L = 4;
  std::size_t epochs = 50;
  long warm_epochs = -1;  // < 0: 20% of epochs
  std::size_t batch_size = 16;
  double w_lr = 0.025;
  double w_momentum = 0.9;
  double w_weight_decay = 3e-4;
  double alpha_lr = 3e-3;
  double alpha_weight_decay = 1e-3;
  std::size_t reg_probes = 4;

  // smoothdarts / pcdarts
  Perturbation perturb = Perturbation::random;
  double radius = 0.3;
  std::size_t ascent_steps = 3;
  double channel_fraction = 0.5;

  // Non-differentiable searches.
  std::size_t n_samples = 8;
  std::size_t pop = 4;
  std::size_t gens = 2;
  double F = 0.5;
  double CR = 0.9;
  std::size_t candidate_epochs = 5;
  std::size_t candidate_C = 4;
  std::size_t candidate_L = 2;
  bool candidate_adversarial = true;  // 7-step PGD schedule
  std::size_t train_epochs = 10;      // ws_random supernet training
  std::size_t n_eval = 1000;
  bool ws_adversarial = false;
  std::size_t jobs = 1;

  // Verify after every step that alpha steps leave w untouched and vice versa.
  bool check_partition = false;
  // smoothdarts: called before each weight step with the training loss at alpha+delta,
  // at the random starting delta, and the largest |delta|.
  std::function<void(double, double, double)> smooth_observer;

  std::size_t warm() const;
};

// ConfigError / ArgumentError for inconsistent settings (warm >= epochs, empty budgets, pop < 4 for DE).
void validate(const SearchConfig& c);

// Training loss used by the differentiable strategies for a metric.
robust::RobustLossConfig loss_for_metric(const robust::RobustnessMetric& m, double gamma, std::size_t probes);

struct TraceRow {
  std::size_t epoch = 0;
  double val_loss = 0.0;
  double metric_value = 0.0;
};

struct Candidate {
  Genotype genotype;
  double fitness = 0.0;  // larger is better
  double metric_value = 0.0;
  double val_loss = 0.0;
};

struct ArchSearchResult {
  Genotype genotype;
  std::vector<TraceRow> trace;
  std::vector<Candidate> evaluated;  // non-differentiable strategies, in evaluation order
  double best_fitness = 0.0;
  // Final supernet state (differentiable strategies).
  std::vector<Tensor> alpha;
  double final_jacobian = 0.0;
};

// 32 integer genes: per cell type (normal, reduction) and edge j, an op gene 1..7 (non-none ops)
// followed by a source gene 0..node+1.
struct ArchGenome {
  std::vector<int> genes;
  bool operator==(const ArchGenome&) const = default;
};
inline constexpr std::size_t kArchGenes = 2 * 2 * 2 * nets::kNodes;
int arch_gene_lo(std::size_t gene);
int arch_gene_hi(std::size_t gene);
ArchGenome random_arch_genome(Rng& rng);
// Out-of-range genes are clamped (sources to the node's valid predecessors).
Genotype decode(const ArchGenome& g);
ArchGenome encode(const Genotype& g);

// Loss used for the FairDARTS gates: -(1/N) sum (sigmoid(a) - 0.5)^2 over every gate.
grad::Var zero_one_loss(grad::Tape& tape, std::span<Tensor* const> alphas);
// NASP projections.
Tensor prox_c1(const Tensor& alpha);
void prox_c2(Tensor& alpha);

// Candidate scoring for the non-differentiable strategies: train the instantiated genotype on
// the first half of `d` and score the metric on the second half. Deterministic in (genotype, seed).
Candidate evaluate_candidate(const Genotype& g, const data::Dataset& d, const SearchConfig& c, std::uint64_t seed);

ArchSearchResult darts_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed);
ArchSearchResult nasp_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed);
ArchSearchResult fairdarts_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed);
ArchSearchResult smoothdarts_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed);
ArchSearchResult pcdarts_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed);
ArchSearchResult random_arch_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed);
ArchSearchResult de_arch_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed);
ArchSearchResult ws_random_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed);
// Dispatch on c.strategy.
ArchSearchResult arch_search(const SearchConfig& c, const data::Dataset& d, std::uint64_t seed);

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

}  // namespace autorobust::nas
