#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "autorobust/attack/attacks.hpp"
#include "autorobust/data/dataset.hpp"
#include "autorobust/data/noise.hpp"
#include "autorobust/grad/model.hpp"

namespace autorobust::robust {

using grad::Model;
using grad::Tensor;

// Where the evaluated inputs come from. Adversarial sources are regenerated against the model
// being scored; natural and system sources only depend on the data.
struct NoiseSource {
  enum class Kind { identity, adversarial, natural, system };
  Kind kind = Kind::identity;
  std::vector<attack::CellParams> cells;
  attack::NormFamily norm;
  data::CorruptionSpec corruption;
  data::ResamplePipeline pipeline;
  std::uint64_t seed = 0;
  std::string label;  // optional display name

  static NoiseSource identity();
  static NoiseSource adversarial(std::vector<attack::CellParams> cells, attack::NormFamily norm, std::uint64_t seed = 0,
                                 std::string label = "");
  static NoiseSource natural(data::CorruptionSpec spec, std::uint64_t seed = 0);
  static NoiseSource system(data::ResamplePipeline p);

  std::string name() const;
};

// Plain FGSM at the given radius (Linf), the default attack of the robust search losses.
NoiseSource fgsm_source(double eps, std::uint64_t seed = 0);
// PGD with the given steps and step eps/4 on the Linf ball.
NoiseSource pgd_source(double eps, std::size_t steps, std::uint64_t seed = 0);

// The transformed inputs a natural or system source produces (identity passes through).
Tensor transform(const Tensor& x, const NoiseSource& src);

double robust_accuracy(Model& model, const data::Dataset& d, const NoiseSource& src);

// Mean over the batch of sum_c ||d logit_c / dx||^2, one backward pass per class.
double jacobian_fnorm(Model& model, const Tensor& x);

// Hutchinson-style ||H||_F^2 of the summed loss w.r.t. one input, averaged over the batch:
// (1/m) sum_v ||(g(x+hv) - g(x-hv)) / 2h||^2 with Rademacher v. ArgumentError for h <= 0 or probes == 0.
double hessian_fnorm_estimate(Model& model, const Tensor& x, std::span<const std::size_t> labels,
                              attack::LossId loss = attack::LossId::CE_P, std::size_t probes = 8, double h = 1e-3,
                              std::uint64_t seed = 0);
// Same estimator for an arbitrary gradient function of a single point.
double hessian_fnorm_estimate(const std::function<std::vector<double>(const std::vector<double>&)>& gradient,
                              const std::vector<double>& x, std::size_t probes = 8, double h = 1e-3,
                              std::uint64_t seed = 0);

enum class MetricKind { clean, adversarial, natural, system, jacobian, hessian };
std::string metric_name(MetricKind k);
MetricKind parse_metric(std::string_view name);

// A scalar robustness score for search. Accuracy kinds average over their sources;
// norm kinds are reported as is and negated by fitness().
struct RobustnessMetric {
  MetricKind kind = MetricKind::clean;
  std::vector<NoiseSource> sources;
  std::size_t probes = 8;
  double h = 1e-3;
  std::uint64_t seed = 0;
  std::size_t max_examples = 0;  // norm kinds: evaluate on the first n examples (0 = all)

  bool higher_is_better() const { return kind != MetricKind::jacobian && kind != MetricKind::hessian; }
};

double metric_value(Model& model, const data::Dataset& d, const RobustnessMetric& m);
// Larger is better for every kind.
double fitness(Model& model, const data::Dataset& d, const RobustnessMetric& m);

// Composite training losses for robust search.
enum class LossKind { plain, adversarial, mixture, regularizer };
enum class Regularizer { jacobian, hessian };

struct RobustLossConfig {
  LossKind kind = LossKind::plain;
  double gamma = 1.0;
  NoiseSource source;  // adversarial: the attack; mixture: the noise
  double mixture_fraction = 0.5;
  Regularizer reg = Regularizer::jacobian;
  // Random directions per example for the regularizers; 0 means every coordinate direction (Jacobian only).
  std::size_t probes = 4;
  double h = 1e-3;
};

LossKind parse_loss_kind(std::string_view name);
std::string loss_kind_name(LossKind k);
void validate(const RobustLossConfig& c);

// Loss on one mini-batch. `ids` are dataset row indices (they key the fixed noisy copies of the
// mixture loss); `step_seed` varies the attack restarts and regularizer directions per step.
grad::Var robust_loss(const RobustLossConfig& cfg, Model& model, grad::Tape& tape, const Tensor& x,
                      std::span<const std::size_t> y, std::span<const std::size_t> ids, std::uint64_t step_seed);

// The attacked or mixed batch the loss would use, without building a graph.
Tensor attacked_batch(const RobustLossConfig& cfg, Model& model, const Tensor& x, std::span<const std::size_t> y,
                      std::uint64_t step_seed);
Tensor mixture_batch(const RobustLossConfig& cfg, const Tensor& x, std::span<const std::size_t> ids);

struct RobustnessReport {
  double clean_acc = 0.0;
  std::vector<std::pair<std::string, double>> accuracies;
  double jacobian_fnorm = 0.0;
  double hessian_fnorm_sq = 0.0;
  std::uint64_t model_fingerprint = 0;
};

struct ReportOptions {
  std::size_t hessian_probes = 8;
  double hessian_h = 1e-3;
  std::size_t norm_examples = 64;  // examples used for the two norms
  std::uint64_t seed = 0;
};

RobustnessReport evaluate(Model& model, const data::Dataset& d, const std::vector<NoiseSource>& sources,
                          const ReportOptions& opt = {});
nlohmann::ordered_json to_json(const RobustnessReport& r);

}  // namespace autorobust::robust
