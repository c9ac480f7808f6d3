#include "autorobust/attack/losses.hpp"

#include <algorithm>
#include <vector>

#include "autorobust/core/errors.hpp"
#include "autorobust/grad/ops.hpp"

namespace autorobust::attack {

using grad::Tape;
using grad::Tensor;
using grad::Var;

std::string loss_name(LossId id) {
  switch (id) {
    case LossId::CE_P: return "CE_P";
    case LossId::Hinge_L: return "Hinge_L";
    case LossId::Hinge_P: return "Hinge_P";
    case LossId::L1_L: return "L1_L";
    case LossId::L1_P: return "L1_P";
    case LossId::DLR_L: return "DLR_L";
    case LossId::DLR_P: return "DLR_P";
  }
  throw ArgumentError("unknown loss id");
}

LossId parse_loss(std::string_view name) {
  if (name == "CE_L") throw ConfigError("loss CE has no logit form");
  if (name == "CE") return LossId::CE_P;
  if (name == "Hinge") return LossId::Hinge_L;
  if (name == "L1") return LossId::L1_L;
  if (name == "DLR") return LossId::DLR_L;
  for (LossId id : kAllLosses)
    if (loss_name(id) == name) return id;
  throw ConfigError("unknown loss '" + std::string(name) + "'");
}

namespace {

void check_labels(const Tensor& z, std::span<const std::size_t> labels) {
  if (z.rank() != 2) throw DimensionError("attack_loss: logits must be [N, K], got " + grad::shape_string(z.shape()));
  if (labels.size() != z.dim(0)) throw DimensionError("attack_loss: label count differs from batch");
  for (std::size_t y : labels)
    if (y >= z.dim(1)) throw ArgumentError("attack_loss: label out of range");
}

// Index of the largest entry other than y; first wins ties.
std::size_t runner_up(const double* row, std::size_t k, std::size_t y) {
  std::size_t best = y == 0 ? 1 : 0;
  for (std::size_t i = 0; i < k; ++i)
    if (i != y && row[i] > row[best]) best = i;
  return best;
}

Var margin(Var s, std::span<const std::size_t> labels, double kappa, double sign) {
  // sign=+1: max(max_{i!=y} s_i - s_y, -kappa)
  const Tensor& sv = s.value();
  const std::size_t n = sv.dim(0), k = sv.dim(1);
  Tensor out(grad::Shape{n});
  std::vector<std::size_t> y(labels.begin(), labels.end()), m(n);
  std::vector<char> active(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = sv.values().data() + i * k;
    m[i] = runner_up(row, k, y[i]);
    const double d = sign * (row[m[i]] - row[y[i]]);
    active[i] = d > -kappa;
    out[i] = active[i] ? d : -kappa;
  }
  return s.tape->record(std::move(out), {s},
                        [k, sign, y = std::move(y), m = std::move(m), active = std::move(active)](
                            const Tape&, std::span<const double> g, std::span<double* const> pg) {
                          for (std::size_t i = 0; i < y.size(); ++i) {
                            if (!active[i]) continue;
                            pg[0][i * k + m[i]] += sign * g[i];
                            pg[0][i * k + y[i]] -= sign * g[i];
                          }
                        });
}

Var dlr(Var s, std::span<const std::size_t> labels) {
  const Tensor& sv = s.value();
  const std::size_t n = sv.dim(0), k = sv.dim(1);
  if (k < 3) throw ArgumentError("DLR loss needs at least 3 classes");
  struct Pick {
    std::size_t y, m, p1, p3;
    double num, den;
  };
  std::vector<Pick> picks(n);
  Tensor out(grad::Shape{n});
  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = sv.values().data() + i * k;
    for (std::size_t j = 0; j < k; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [row](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    Pick p{labels[i], runner_up(row, k, labels[i]), order[0], order[2], 0.0, 0.0};
    p.num = row[p.y] - row[p.m];
    p.den = row[p.p1] - row[p.p3] + 1e-12;
    out[i] = -p.num / p.den;
    picks[i] = p;
  }
  return s.tape->record(std::move(out), {s},
                        [k, picks = std::move(picks)](const Tape&, std::span<const double> g, std::span<double* const> pg) {
                          for (std::size_t i = 0; i < picks.size(); ++i) {
                            const Pick& p = picks[i];
                            double* d = pg[0] + i * k;
                            d[p.y] -= g[i] / p.den;
                            d[p.m] += g[i] / p.den;
                            const double c = g[i] * p.num / (p.den * p.den);
                            d[p.p1] += c;
                            d[p.p3] -= c;
                          }
                        });
}

}  // namespace

Var attack_loss(LossId id, Var logits, std::span<const std::size_t> labels, double kappa) {
  check_labels(logits.value(), labels);
  switch (id) {
    case LossId::CE_P: return grad::neg(grad::gather(grad::log_softmax(logits), labels));
    case LossId::Hinge_L: return margin(logits, labels, kappa, 1.0);
    case LossId::Hinge_P: return margin(grad::softmax(logits), labels, kappa, 1.0);
    case LossId::L1_L: return grad::neg(grad::gather(logits, labels));
    case LossId::L1_P: return grad::neg(grad::gather(grad::softmax(logits), labels));
    case LossId::DLR_L: return dlr(logits, labels);
    case LossId::DLR_P: return dlr(grad::softmax(logits), labels);
  }
  throw ArgumentError("unknown loss id");
}

Var cw_loss(Var logits, std::span<const std::size_t> labels, double kappa) {
  check_labels(logits.value(), labels);
  return margin(logits, labels, kappa, 1.0);
}

}  // namespace autorobust::attack
