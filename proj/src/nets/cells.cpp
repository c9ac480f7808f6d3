#include "autorobust/nets/cells.hpp"

#include "autorobust/core/errors.hpp"

namespace autorobust::nets {

Sequential relu_conv_bn(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, std::size_t pad,
                        bool affine, Rng& rng) {
  Sequential s;
  s.emplace<ReLU>();
  s.emplace<Conv2d>(cin, cout, k, grad::ConvSpec{stride, pad, 1, 1}, false, rng);
  s.emplace<BatchNorm>(cout, affine);
  return s;
}

Sequential factorized_reduce(std::size_t cin, std::size_t cout, bool affine, Rng& rng) {
  return relu_conv_bn(cin, cout, 1, 2, 0, affine, rng);
}

LayerPtr make_op(OpId op, std::size_t c, std::size_t stride, bool affine, Rng& rng) {
  auto seq = std::make_unique<Sequential>();
  switch (op) {
    case OpId::none: return std::make_unique<Zero>(stride);
    case OpId::max_pool_3x3:
    case OpId::avg_pool_3x3:
      seq->emplace<Pool>(op == OpId::max_pool_3x3 ? Pool::Kind::max : Pool::Kind::avg, 3, stride, 1);
      if (!affine) seq->emplace<BatchNorm>(c, false);
      return seq;
    case OpId::skip_connect:
      if (stride == 1) return std::make_unique<Identity>();
      return std::make_unique<Sequential>(factorized_reduce(c, c, affine, rng));
    case OpId::sep_conv_3x3:
    case OpId::sep_conv_5x5: {
      const std::size_t k = op == OpId::sep_conv_3x3 ? 3 : 5;
      seq->emplace<ReLU>();
      seq->emplace<Conv2d>(c, c, k, grad::ConvSpec{stride, k / 2, 1, c}, false, rng);
      seq->emplace<Conv2d>(c, c, 1, grad::ConvSpec{}, false, rng);
      seq->emplace<BatchNorm>(c, affine);
      seq->emplace<ReLU>();
      seq->emplace<Conv2d>(c, c, k, grad::ConvSpec{1, k / 2, 1, c}, false, rng);
      seq->emplace<Conv2d>(c, c, 1, grad::ConvSpec{}, false, rng);
      seq->emplace<BatchNorm>(c, affine);
      return seq;
    }
    case OpId::dil_conv_3x3:
    case OpId::dil_conv_5x5: {
      const std::size_t k = op == OpId::dil_conv_3x3 ? 3 : 5;
      seq->emplace<ReLU>();
      seq->emplace<Conv2d>(c, c, k, grad::ConvSpec{stride, k - 1, 2, c}, false, rng);
      seq->emplace<Conv2d>(c, c, 1, grad::ConvSpec{}, false, rng);
      seq->emplace<BatchNorm>(c, affine);
      return seq;
    }
  }
  throw ArgumentError("make_op: unknown operation");
}

bool is_reduction(std::size_t layer, std::size_t L) { return layer == L / 3 || layer == 2 * L / 3; }

std::vector<CellPlan> plan_cells(std::size_t C, std::size_t L) {
  if (C < 4) throw ArgumentError("cell network: C must be at least 4");
  if (L < 2) throw ArgumentError("cell network: L must be at least 2");
  std::vector<CellPlan> plans;
  std::size_t c_pp = 3 * C, c_p = 3 * C, c = C;
  bool reduction_prev = false;
  for (std::size_t i = 0; i < L; ++i) {
    const bool red = is_reduction(i, L);
    if (red) c *= 2;
    plans.push_back({c_pp, c_p, c, red, reduction_prev});
    reduction_prev = red;
    c_pp = c_p;
    c_p = kNodes * c;
  }
  return plans;
}

CellNetwork::CellNetwork(const Genotype& g, std::size_t C, std::size_t L, const grad::Shape& input_shape,
                         std::size_t n_classes, std::uint64_t seed)
    : Model(input_shape, n_classes), genotype_(g), C_(C), L_(L) {
  validate(g);
  if (input_shape.size() != 3) throw ArgumentError("cell network: input shape must be [C, H, W]");
  Rng rng(derive_seed(seed, 0xce11));
  stem_.emplace<Conv2d>(input_shape[0], 3 * C, 3, grad::ConvSpec{1, 1, 1, 1}, false, rng);
  stem_.emplace<BatchNorm>(3 * C, true);
  for (const CellPlan& p : plan_cells(C, L)) {
    Cell cell;
    cell.plan = p;
    cell.pre0 = LayerBox(p.reduction_prev ? std::make_unique<Sequential>(factorized_reduce(p.c_pp, p.c, true, rng))
                                          : std::make_unique<Sequential>(relu_conv_bn(p.c_pp, p.c, 1, 1, 0, true, rng)));
    cell.pre1 = LayerBox(std::make_unique<Sequential>(relu_conv_bn(p.c_p, p.c, 1, 1, 0, true, rng)));
    const CellGenotype& cg = p.reduction ? g.reduction : g.normal;
    for (std::size_t e = 0; e < cg.size(); ++e) {
      const std::size_t stride = p.reduction && cg[e].source < 2 ? 2 : 1;
      cell.ops[e] = LayerBox(make_op(cg[e].op, p.c, stride, true, rng));
    }
    cells_.push_back(std::move(cell));
  }
  classifier_ = LayerBox(std::make_unique<Linear>(cells_.back().plan.c * kNodes, n_classes, true, rng));
}

grad::Var CellNetwork::forward(grad::Tape& tape, grad::Var x) {
  const bool tr = training();
  grad::Var s0 = stem_.forward(tape, x, tr);
  grad::Var s1 = s0;
  for (Cell& cell : cells_) {
    const CellGenotype& cg = cell.plan.reduction ? genotype_.reduction : genotype_.normal;
    std::vector<grad::Var> states{cell.pre0->forward(tape, s0, tr), cell.pre1->forward(tape, s1, tr)};
    for (std::size_t i = 0; i < kNodes; ++i) {
      grad::Var a = cell.ops[2 * i]->forward(tape, states.at(cg[2 * i].source), tr);
      grad::Var b = cell.ops[2 * i + 1]->forward(tape, states.at(cg[2 * i + 1].source), tr);
      states.push_back(grad::add(a, b));
    }
    s0 = s1;
    s1 = grad::concat_channels(std::span<const grad::Var>(states).subspan(2));
  }
  return classifier_->forward(tape, grad::global_avg_pool(s1), tr);
}

void CellNetwork::collect(std::vector<Tensor*>& p, std::vector<std::vector<double>*>& b) {
  stem_.collect(p, b);
  for (Cell& cell : cells_) {
    cell.pre0->collect(p, b);
    cell.pre1->collect(p, b);
    for (auto& op : cell.ops) op->collect(p, b);
  }
  classifier_->collect(p, b);
}

std::vector<Tensor*> CellNetwork::parameters() {
  std::vector<Tensor*> p;
  std::vector<std::vector<double>*> b;
  collect(p, b);
  return p;
}

std::vector<std::vector<double>*> CellNetwork::buffers() {
  std::vector<Tensor*> p;
  std::vector<std::vector<double>*> b;
  collect(p, b);
  return b;
}

std::string CellNetwork::describe() const {
  return "cellnet(C=" + std::to_string(C_) + ",L=" + std::to_string(L_) + "," + to_string(genotype_) + ")";
}

std::unique_ptr<grad::Model> instantiate_genotype(const Genotype& g, std::size_t C, std::size_t L,
                                                  const grad::Shape& input_shape, std::size_t n_classes,
                                                  std::uint64_t seed) {
  return std::make_unique<CellNetwork>(g, C, L, input_shape, n_classes, seed);
}

}  // namespace autorobust::nets
