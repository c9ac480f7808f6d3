#include "autorobust/nets/supernet.hpp"

#include <algorithm>
#include <cmath>

#include "autorobust/core/errors.hpp"

namespace autorobust::nets {

std::string mode_name(SupernetMode m) {
  switch (m) {
    case SupernetMode::darts: return "darts";
    case SupernetMode::fairdarts: return "fairdarts";
    case SupernetMode::pcdarts: return "pcdarts";
    case SupernetMode::nasp: return "nasp";
    case SupernetMode::smoothdarts: return "smoothdarts";
  }
  return "?";
}

SupernetMode parse_mode(std::string_view name) {
  for (auto m : {SupernetMode::darts, SupernetMode::fairdarts, SupernetMode::pcdarts, SupernetMode::nasp,
                 SupernetMode::smoothdarts})
    if (mode_name(m) == name) return m;
  throw ConfigError("unknown supernet mode '" + std::string(name) + "'");
}

SuperNet::SuperNet(SupernetMode mode, std::size_t C, std::size_t L, const grad::Shape& input_shape,
                   std::size_t n_classes, std::uint64_t seed, double channel_fraction)
    : Model(input_shape, n_classes), mode_(mode), C_(C), L_(L), channel_fraction_(channel_fraction) {
  if (!(channel_fraction > 0.0 && channel_fraction <= 1.0))
    throw ArgumentError("supernet: channel_fraction must lie in (0, 1]");
  if (mode != SupernetMode::pcdarts) channel_fraction_ = 1.0;
  if (input_shape.size() != 3) throw ArgumentError("supernet: input shape must be [C, H, W]");
  const auto plans = plan_cells(C, L);
  Rng rng(derive_seed(seed, 0x5e9e7));
  stem_.emplace<Conv2d>(input_shape[0], 3 * C, 3, grad::ConvSpec{1, 1, 1, 1}, false, rng);
  stem_.emplace<BatchNorm>(3 * C, true);
  for (const CellPlan& p : plans) {
    Cell cell;
    cell.plan = p;
    cell.pre0 = LayerBox(p.reduction_prev ? std::make_unique<Sequential>(factorized_reduce(p.c_pp, p.c, false, rng))
                                          : std::make_unique<Sequential>(relu_conv_bn(p.c_pp, p.c, 1, 1, 0, false, rng)));
    cell.pre1 = LayerBox(std::make_unique<Sequential>(relu_conv_bn(p.c_p, p.c, 1, 1, 0, false, rng)));
    const std::size_t k = partial_channels(p.c);
    for (std::size_t node = 0; node < kNodes; ++node) {
      for (std::size_t src = 0; src < node + 2; ++src) {
        Edge& edge = cell.edges[edge_index(node, src)];
        const std::size_t stride = p.reduction && src < 2 ? 2 : 1;
        for (std::size_t o = 1; o < kOpCount; ++o) edge.ops[o] = LayerBox(make_op(op_from_index(o), k, stride, false, rng));
        if (k < p.c) {
          edge.bypass = stride == 1 ? LayerBox(std::make_unique<Identity>())
                                    : LayerBox(std::make_unique<Pool>(Pool::Kind::max, 3, 2, 1));
        }
      }
    }
    cells_.push_back(std::move(cell));
  }
  classifier_ = LayerBox(std::make_unique<Linear>(kNodes * plans.back().c, n_classes, true, rng));
  for (std::size_t t = 0; t < 2; ++t) {
    alpha_[t] = Tensor({kEdgeCount, kOpCount}, 0.0);
    alpha_[t].set_requires_grad(true);
    if (mode_ == SupernetMode::pcdarts) {
      for (std::size_t i = 0; i < kNodes; ++i) {
        beta_[t][i] = Tensor({i + 2}, 0.0);
        beta_[t][i].set_requires_grad(true);
      }
    }
  }
}

std::size_t SuperNet::partial_channels(std::size_t c) const {
  const auto k = static_cast<std::size_t>(std::ceil(static_cast<double>(c) * channel_fraction_ - 1e-9));
  return std::clamp<std::size_t>(k, 1, c);
}

Tensor prox_one_hot(const Tensor& alpha) {
  Tensor out(alpha.shape(), 0.0);
  const std::size_t rows = alpha.dim(0), k = alpha.dim(1);
  for (std::size_t e = 0; e < rows; ++e) {
    std::size_t best = 1;
    for (std::size_t o = 2; o < k; ++o)
      if (alpha[e * k + o] > alpha[e * k + best]) best = o;
    out[e * k + best] = 1.0;
  }
  return out;
}

EdgeWeights SuperNet::mixing(grad::Tape& tape) {
  EdgeWeights w;
  for (std::size_t t = 0; t < 2; ++t) {
    if (path_) {
      Tensor onehot({kEdgeCount, kOpCount}, 0.0);
      const CellGenotype& cg = t ? path_->reduction : path_->normal;
      for (std::size_t e = 0; e < cg.size(); ++e) onehot[edge_index(e / 2, cg[e].source) * kOpCount + op_index(cg[e].op)] = 1.0;
      w.ops[t] = tape.constant(std::move(onehot));
      continue;
    }
    switch (mode_) {
      case SupernetMode::fairdarts: w.ops[t] = grad::sigmoid(tape.parameter(alpha_[t])); break;
      case SupernetMode::nasp: w.ops[t] = tape.constant(prox_one_hot(alpha_[t])); break;
      default: w.ops[t] = grad::softmax(tape.parameter(alpha_[t])); break;
    }
    if (mode_ == SupernetMode::pcdarts)
      for (std::size_t i = 0; i < kNodes; ++i) w.beta[t][i] = grad::softmax(tape.parameter(beta_[t][i]));
  }
  return w;
}

grad::Var SuperNet::forward(grad::Tape& tape, grad::Var x) { return forward_with(tape, x, mixing(tape)); }

grad::Var SuperNet::run_edge(grad::Tape& tape, Edge& edge, grad::Var x, grad::Var w, std::size_t e, std::size_t c) {
  const bool tr = training();
  const std::size_t k = partial_channels(c);
  grad::Var xa = k < c ? grad::slice_channels(x, 0, k) : x;
  const bool fixed = !tape.needs_grad(w);
  std::vector<grad::Var> outs;
  std::vector<std::size_t> widx;
  for (std::size_t o = 1; o < kOpCount; ++o) {
    if (fixed && w.value()[e * kOpCount + o] == 0.0) continue;
    outs.push_back(edge.ops[o]->forward(tape, xa, tr));
    widx.push_back(e * kOpCount + o);
  }
  grad::Var mixed;
  if (!outs.empty()) mixed = grad::weighted_sum(outs, w, widx);
  if (k == c) return mixed;
  grad::Var rest = edge.bypass->forward(tape, grad::slice_channels(x, k, c), tr);
  if (!mixed.valid()) {
    grad::Shape s = rest.shape();
    s[1] = k;
    mixed = grad::zeros(tape, std::move(s));
  }
  const std::array<grad::Var, 2> parts{mixed, rest};
  return grad::concat_channels(parts);
}

grad::Var SuperNet::forward_with(grad::Tape& tape, grad::Var x, const EdgeWeights& w) {
  const bool tr = training();
  grad::Var s0 = stem_.forward(tape, x, tr);
  grad::Var s1 = s0;
  for (Cell& cell : cells_) {
    const std::size_t t = cell.plan.reduction ? 1 : 0;
    std::vector<grad::Var> states{cell.pre0->forward(tape, s0, tr), cell.pre1->forward(tape, s1, tr)};
    for (std::size_t node = 0; node < kNodes; ++node) {
      std::vector<grad::Var> parts;
      std::vector<std::size_t> srcs;
      for (std::size_t src = 0; src < node + 2; ++src) {
        const std::size_t e = edge_index(node, src);
        grad::Var out = run_edge(tape, cell.edges[e], states[src], w.ops[t], e, cell.plan.c);
        if (!out.valid()) continue;
        parts.push_back(out);
        srcs.push_back(src);
      }
      grad::Var h;
      if (parts.empty()) {
        grad::Shape s = states[1].shape();
        if (cell.plan.reduction) {
          s[2] = (s[2] + 1) / 2;
          s[3] = (s[3] + 1) / 2;
        }
        h = grad::zeros(tape, std::move(s));
      } else if (w.beta[t][node].valid()) {
        h = grad::weighted_sum(parts, w.beta[t][node], srcs);
      } else {
        h = parts[0];
        for (std::size_t i = 1; i < parts.size(); ++i) h = grad::add(h, parts[i]);
      }
      states.push_back(h);
    }
    s0 = s1;
    s1 = grad::concat_channels(std::span<const grad::Var>(states).subspan(2));
  }
  return classifier_->forward(tape, grad::global_avg_pool(s1), tr);
}

void SuperNet::collect(std::vector<Tensor*>& p, std::vector<std::vector<double>*>& b) {
  stem_.collect(p, b);
  for (Cell& cell : cells_) {
    cell.pre0->collect(p, b);
    cell.pre1->collect(p, b);
    for (Edge& edge : cell.edges)
      for (auto& op : edge.ops)
        if (op) op->collect(p, b);
  }
  classifier_->collect(p, b);
}

std::vector<Tensor*> SuperNet::parameters() {
  std::vector<Tensor*> p;
  std::vector<std::vector<double>*> b;
  collect(p, b);
  return p;
}

std::vector<Tensor*> SuperNet::arch_parameters() {
  std::vector<Tensor*> p{&alpha_[0], &alpha_[1]};
  if (mode_ == SupernetMode::pcdarts)
    for (auto& cell : beta_)
      for (Tensor& b : cell) p.push_back(&b);
  return p;
}

std::vector<std::vector<double>*> SuperNet::buffers() {
  std::vector<Tensor*> p;
  std::vector<std::vector<double>*> b;
  collect(p, b);
  for (Tensor* a : arch_parameters()) b.push_back(&a->values());
  return b;
}

std::string SuperNet::describe() const {
  std::string s = "supernet(" + mode_name(mode_) + ",C=" + std::to_string(C_) + ",L=" + std::to_string(L_) +
                  ",f=" + std::to_string(channel_fraction_) + ")";
  if (path_) s += "path" + to_string(*path_);
  return s;
}

void SuperNet::set_weights_trainable(bool on) {
  for (Tensor* p : parameters()) p->set_requires_grad(on);
}

void SuperNet::set_arch_trainable(bool on) {
  for (Tensor* p : arch_parameters()) p->set_requires_grad(on);
}

namespace {

void softmax_rows(const double* in, double* out, std::size_t n) {
  double m = in[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, in[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) z += (out[i] = std::exp(in[i] - m));
  for (std::size_t i = 0; i < n; ++i) out[i] /= z;
}

}  // namespace

Tensor SuperNet::mixing_weights(std::size_t t) const {
  const Tensor& a = alpha_.at(t);
  Tensor w(a.shape());
  for (std::size_t e = 0; e < kEdgeCount; ++e) {
    const double* in = a.data().data() + e * kOpCount;
    double* out = w.data().data() + e * kOpCount;
    if (mode_ == SupernetMode::fairdarts) {
      for (std::size_t o = 0; o < kOpCount; ++o) out[o] = 1.0 / (1.0 + std::exp(-in[o]));
    } else {
      softmax_rows(in, out, kOpCount);
    }
  }
  return w;
}

Tensor SuperNet::edge_strength(std::size_t t) const {
  Tensor w = mixing_weights(t);
  if (mode_ != SupernetMode::pcdarts) return w;
  for (std::size_t node = 0; node < kNodes; ++node) {
    const Tensor& b = beta_[t][node];
    std::vector<double> sb(b.numel());
    softmax_rows(b.data().data(), sb.data(), sb.size());
    for (std::size_t src = 0; src < node + 2; ++src)
      for (std::size_t o = 0; o < kOpCount; ++o) w[edge_index(node, src) * kOpCount + o] *= sb[src];
  }
  return w;
}

CellGenotype cell_from_strength(const Tensor& s, bool fair_threshold) {
  CellGenotype cell;
  for (std::size_t node = 0; node < kNodes; ++node) {
    struct Cand {
      std::size_t src, op;
      double score;
    };
    std::vector<Cand> cands;
    for (std::size_t src = 0; src < node + 2; ++src) {
      const double* row = s.data().data() + edge_index(node, src) * kOpCount;
      std::size_t best = 1;
      for (std::size_t o = 2; o < kOpCount; ++o)
        if (row[o] > row[best]) best = o;
      cands.push_back({src, best, row[best]});
    }
    auto top2 = [](std::vector<Cand> c) {
      std::stable_sort(c.begin(), c.end(), [](const Cand& a, const Cand& b) { return a.score > b.score; });
      c.resize(2);
      std::sort(c.begin(), c.end(), [](const Cand& a, const Cand& b) { return a.src < b.src; });
      return c;
    };
    std::vector<Cand> chosen;
    if (fair_threshold) {
      std::vector<Cand> pass;
      for (const Cand& c : cands)
        if (c.score >= 0.5) pass.push_back(c);
      chosen = top2(pass.size() >= 2 ? pass : cands);
    } else {
      chosen = top2(cands);
    }
    for (std::size_t j = 0; j < 2; ++j) cell[2 * node + j] = {op_from_index(chosen[j].op), chosen[j].src};
  }
  return cell;
}

Genotype genotype_from_alpha(const SuperNet& net) {
  const bool fair = net.mode() == SupernetMode::fairdarts;
  return Genotype{cell_from_strength(net.edge_strength(0), fair), cell_from_strength(net.edge_strength(1), fair)};
}

std::unique_ptr<SuperNet> build_supernet(SupernetMode mode, std::size_t C, std::size_t L,
                                         const grad::Shape& input_shape, std::size_t n_classes, std::uint64_t seed,
                                         double channel_fraction) {
  return std::make_unique<SuperNet>(mode, C, L, input_shape, n_classes, seed, channel_fraction);
}

}  // namespace autorobust::nets
