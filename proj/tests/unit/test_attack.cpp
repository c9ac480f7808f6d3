#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "autorobust/attack/attacks.hpp"
#include "autorobust/core/errors.hpp"
#include "autorobust/core/rng.hpp"
#include "autorobust/grad/check.hpp"
#include "autorobust/grad/ops.hpp"
#include "autorobust/nets/networks.hpp"
#include "autorobust/nets/train.hpp"
#include "fixtures.hpp"

using namespace autorobust;
using namespace autorobust::attack;
using grad::Tensor;

namespace {

double loss_of(LossId id, std::vector<double> z, std::size_t y, double kappa = 0.0) {
  grad::Tape tape(false);
  const std::size_t k = z.size();
  grad::Var l = attack_loss(id, tape.constant(Tensor({1, k}, std::move(z))), std::span(&y, 1), kappa);
  return l.value()[0];
}

using fixtures::trained;

CellParams cell(AttackOp op, double eps, std::size_t steps, LossId loss = LossId::CE_P, bool restart = false) {
  CellParams c;
  c.op = op;
  c.loss = loss;
  c.eps = eps;
  c.steps = steps;
  c.step_size = op == AttackOp::FGSM ? eps : eps / 4.0;
  c.restart = restart;
  return c;
}

}  // namespace

TEST(Losses, WorkedValues) {
  EXPECT_DOUBLE_EQ(loss_of(LossId::Hinge_L, {2, 5, 1}, 1), 0.0);
  EXPECT_NEAR(loss_of(LossId::DLR_L, {3, 1, 0}, 0), -2.0 / 3.0, 1e-9);
  EXPECT_NEAR(loss_of(LossId::CE_P, {0.7, 0.7, 0.7}, 2), std::log(3.0), 1e-12);
  EXPECT_DOUBLE_EQ(loss_of(LossId::L1_L, {0.5, -2, 4}, 1), 2.0);
  EXPECT_NEAR(loss_of(LossId::L1_P, {0, 0, 0, 0}, 3), -0.25, 1e-12);
  EXPECT_DOUBLE_EQ(loss_of(LossId::Hinge_L, {2, 5, 1}, 0), 3.0);
  EXPECT_DOUBLE_EQ(loss_of(LossId::Hinge_L, {2, 5, 1}, 1, 1.0), -1.0);
  EXPECT_NEAR(loss_of(LossId::DLR_L, {4, 0.5, 2, 1}, 3), 1.0, 1e-9);
}

TEST(Losses, DlrNeedsThreeClassesAndNamesParse) {
  EXPECT_THROW(loss_of(LossId::DLR_L, {1, 0}, 0), ArgumentError);
  EXPECT_THROW(loss_of(LossId::DLR_P, {1, 0}, 0), ArgumentError);
  for (LossId id : kAllLosses) EXPECT_EQ(parse_loss(loss_name(id)), id);
  EXPECT_EQ(parse_loss("CE"), LossId::CE_P);
  EXPECT_EQ(parse_loss("Hinge"), LossId::Hinge_L);
  EXPECT_EQ(parse_loss("DLR"), LossId::DLR_L);
  EXPECT_THROW(parse_loss("CE_L"), ConfigError);
  EXPECT_THROW(parse_loss("KL"), ConfigError);
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  for (LossId id : kAllLosses) {
    for (std::uint64_t s = 0; s < 6; ++s) {
      auto model = nets::build_mlp({6, 10, 4}, s);
      Rng rng(s + 40);
      Tensor x({1, 6});
      for (double& v : x.data()) v = rng.uniform(-3.0, 3.0);
      // y is the top or second class; with y third-ranked DLR is the constant 1 and the check degenerates
      const Tensor z = grad::forward(*model, x);
      std::vector<std::size_t> rank{0, 1, 2, 3};
      std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return z[a] > z[b]; });
      const std::size_t y = rank[s % 2];
      EXPECT_LE(grad::finite_diff_check(*model, x, std::span(&y, 1), id, 1e-5), 1e-4) << loss_name(id) << " seed " << s;
    }
  }
}

TEST(Grid, DecodeValues) {
  const NormFamily linf = default_norm(Norm::Linf), l2 = default_norm(Norm::L2);
  EXPECT_DOUBLE_EQ(decode_eps(8, linf), 8.0 / 255.0);
  EXPECT_DOUBLE_EQ(decode_eps(1, l2), 0.0625);
  EXPECT_EQ(decode_steps(4), 25u);
  const std::size_t table[] = {6, 13, 19, 25, 31, 38, 44, 50};
  for (int i = 1; i <= 8; ++i) EXPECT_EQ(decode_steps(i), table[i - 1]);
  EXPECT_THROW(decode_eps(0, linf), ArgumentError);
  EXPECT_THROW(decode_steps(9), ArgumentError);
}

TEST(Project, Examples) {
  const Tensor x0({1, 2}, std::vector<double>{0.0, 0.0});
  const Tensor far({1, 2}, std::vector<double>{3.0, 4.0});
  const Tensor p = project(far, x0, Norm::L2, 1.0);
  EXPECT_NEAR(p[0], 0.6, 1e-12);
  EXPECT_NEAR(p[1], 0.8, 1e-12);

  const Tensor orig({1, 3}, std::vector<double>{0.2, 0.5, 1.2});
  const Tensor adv({1, 3}, std::vector<double>{0.9, 0.1, 0.3});
  const Tensor z = project(adv, orig, Norm::Linf, 0.0);
  EXPECT_EQ(z.values(), (std::vector<double>{0.2, 0.5, 1.0}));

  const Tensor inside({1, 3}, std::vector<double>{0.25, 0.45, 0.5});
  const Tensor mid({1, 3}, std::vector<double>{0.2, 0.5, 0.5});
  EXPECT_TRUE(project(inside, mid, Norm::Linf, 0.1).same_values(inside));
  EXPECT_TRUE(project(inside, mid, Norm::L2, 0.1).same_values(inside));
  EXPECT_THROW(project(inside, Tensor({1, 2}), Norm::L2, 0.1), DimensionError);
}

TEST(Project, L2IsPerExample) {
  const Tensor orig({2, 2}, 0.5);
  const Tensor adv({2, 2}, std::vector<double>{0.5, 0.6, 0.9, 0.5});
  const Tensor p = project(adv, orig, Norm::L2, 0.2);
  EXPECT_DOUBLE_EQ(p[1], 0.6);
  EXPECT_NEAR(p[2], 0.7, 1e-12);
}

TEST(Attack, FgsmEqualsOneStepPgd) {
  auto& t = trained();
  const NormFamily norm = default_norm(Norm::Linf);
  const Tensor& x = t.eval_set.inputs;
  const auto a = run_attack_cell(*t.model, x, x, t.eval_set.labels, cell(AttackOp::FGSM, norm.eps_max, 1), norm, 3);
  CellParams pgd = cell(AttackOp::PGD, norm.eps_max, 1);
  pgd.step_size = norm.eps_max;
  const auto b = run_attack_cell(*t.model, x, x, t.eval_set.labels, pgd, norm, 3);
  EXPECT_TRUE(a.x_adv.same_values(b.x_adv));
  EXPECT_EQ(a.cost, b.cost);
}

TEST(Attack, FgsmLinearClosedForm) {
  Rng rng(4);
  Tensor W({3, 5});
  for (double& v : W.data()) v = rng.normal();
  auto model = nets::linear_model(W, {5});
  Tensor x({2, 5});
  for (double& v : x.data()) v = rng.uniform(0.0, 1.0);
  const std::vector<std::size_t> y{2, 0};
  const double eps = 0.1;
  const NormFamily norm{Norm::Linf, eps};
  const Tensor adv = perturb(*model, x, y, cell(AttackOp::FGSM, eps, 1), norm);
  const Tensor z = grad::forward(*model, x);
  for (std::size_t n = 0; n < 2; ++n) {
    double m = -1e300, s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) m = std::max(m, z[n * 3 + c]);
    for (std::size_t c = 0; c < 3; ++c) s += std::exp(z[n * 3 + c] - m);
    for (std::size_t j = 0; j < 5; ++j) {
      double g = 0.0;
      for (std::size_t c = 0; c < 3; ++c) g += W[c * 5 + j] * (std::exp(z[n * 3 + c] - m) / s - (c == y[n] ? 1.0 : 0.0));
      const double sign = g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0);
      EXPECT_DOUBLE_EQ(adv[n * 5 + j], std::clamp(x[n * 5 + j] + eps * sign, 0.0, 1.0));
    }
  }
}

TEST(Attack, OpNormMismatch) {
  auto& t = trained();
  const Tensor& x = t.eval_set.inputs;
  EXPECT_THROW(run_attack_cell(*t.model, x, x, t.eval_set.labels, cell(AttackOp::FGSM, 0.1, 1), default_norm(Norm::L2), 0),
               ConfigError);
  AttackScheme s{{AttackCell{AttackOp::FGSM, LossId::CE_P, 8, 1, false}}, default_norm(Norm::L2)};
  EXPECT_THROW(validate(s), ConfigError);
  s.norm = default_norm(Norm::Linf);
  s.cells[0].eps_idx = 9;
  EXPECT_THROW(validate(s), ValidationError);
  s.cells = std::vector<AttackCell>(4, AttackCell{});
  EXPECT_THROW(validate(s), ValidationError);
}

TEST(Attack, EveryOpRespectsGlobalBudget) {
  auto& t = trained();
  for (Norm n : {Norm::Linf, Norm::L2}) {
    const NormFamily norm = default_norm(n);
    for (AttackOp op : ops_for(n)) {
      for (bool restart : {false, true}) {
        AttackScheme s;
        s.norm = norm;
        s.cells = {AttackCell{op, LossId::DLR_L, 8, 1, restart}, AttackCell{op, LossId::CE_P, 8, 1, restart},
                   AttackCell{op, LossId::L1_P, 8, 1, restart}};
        const SchemeRun r = run_scheme(*t.model, t.eval_set, s, 5);
        EXPECT_LE(max_distance(r.x_adv, t.eval_set.inputs, n), norm.eps_max + 1e-9) << op_name(op);
        for (double v : r.x_adv.data()) {
          EXPECT_GE(v, 0.0);
          EXPECT_LE(v, 1.0);
        }
        EXPECT_GE(r.result.robust_acc, 0.0);
        EXPECT_LE(r.result.robust_acc, 1.0);
      }
    }
  }
}

TEST(Attack, DeterministicWithRestarts) {
  auto& t = trained();
  AttackScheme s;
  s.norm = default_norm(Norm::Linf);
  s.cells = {AttackCell{AttackOp::PGD, LossId::CE_P, 4, 1, true}, AttackCell{AttackOp::MI, LossId::DLR_L, 6, 1, true}};
  const auto a = run_scheme(*t.model, t.eval_set, s, 9);
  const auto b = run_scheme(*t.model, t.eval_set, s, 9);
  EXPECT_TRUE(a.x_adv.same_values(b.x_adv));
  EXPECT_EQ(a.fooled, b.fooled);
  EXPECT_EQ(a.result.cost_units, b.result.cost_units);
}

TEST(Attack, RestartIndependentOfBatchComposition) {
  auto& t = trained();
  const NormFamily norm = default_norm(Norm::Linf);
  const Tensor& x = t.eval_set.inputs;
  const CellParams c = cell(AttackOp::PGD, norm.eps_max, 6, LossId::CE_P, true);
  std::vector<std::size_t> ids(x.dim(0));
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  const auto full = run_attack_cell(*t.model, x, x, t.eval_set.labels, c, norm, 2, ids);
  const std::size_t pick = 5;
  const Tensor one = x.slice_rows(pick, pick + 1);
  const auto single = run_attack_cell(*t.model, one, one, std::span(&t.eval_set.labels[pick], 1), c, norm, 2,
                                      std::span(&ids[pick], 1));
  EXPECT_TRUE(single.x_adv.same_values(full.x_adv.slice_rows(pick, pick + 1)));
}

TEST(Attack, CostUnits) {
  auto& t = trained();
  const NormFamily norm = default_norm(Norm::Linf);
  const Tensor x = t.eval_set.inputs.slice_rows(0, 2);
  const std::vector<std::size_t> y(t.eval_set.labels.begin(), t.eval_set.labels.begin() + 2);
  EXPECT_EQ(run_attack_cell(*t.model, x, x, y, cell(AttackOp::FGSM, 0.01, 1), norm, 0).cost[0], 1u);
  EXPECT_EQ(run_attack_cell(*t.model, x, x, y, cell(AttackOp::FGSM, 0.01, 1, LossId::CE_P, true), norm, 0).cost[0], 2u);
  EXPECT_EQ(run_attack_cell(*t.model, x, x, y, cell(AttackOp::PGD, 0.01, 13, LossId::CE_P, true), norm, 0).cost[0], 26u);
  // four classes: three targets, round(25 / 3) = 8 steps each
  EXPECT_EQ(run_attack_cell(*t.model, x, x, y, cell(AttackOp::MT, 0.01, 25), norm, 0).cost[1], 24u);
  EXPECT_EQ(run_attack_cell(*t.model, x, x, y, cell(AttackOp::MT, 0.01, 1), norm, 0).cost[1], 3u);
}

TEST(Scheme, ZeroPerturbationKeepsCleanAccuracy) {
  auto& t = trained();
  const NormFamily norm = default_norm(Norm::Linf);
  const CellParams c = cell(AttackOp::FGSM, 0.0, 1);
  const auto r = run_cells(*t.model, t.train_set, std::span(&c, 1), norm, 0);
  EXPECT_DOUBLE_EQ(r.result.robust_acc, nets::accuracy(*t.model, t.train_set));
  EXPECT_TRUE(r.x_adv.same_values(t.train_set.inputs));
}

TEST(Scheme, AppendingCellsNeverHelps) {
  auto& t = trained();
  const NormFamily norm = default_norm(Norm::Linf);
  std::vector<CellParams> cells{cell(AttackOp::FGSM, norm.eps_max / 2, 1)};
  double prev = run_cells(*t.model, t.eval_set, cells, norm, 1).result.robust_acc;
  for (const CellParams& more : {cell(AttackOp::PGD, norm.eps_max, 6, LossId::DLR_P), cell(AttackOp::MT, norm.eps_max, 6)}) {
    cells.push_back(more);
    const double now = run_cells(*t.model, t.eval_set, cells, norm, 1).result.robust_acc;
    EXPECT_LE(now, prev);
    prev = now;
  }
}

TEST(Scheme, EarlyExitStopsCost) {
  // Two-class linear model with every example a hair on the right side of the boundary.
  auto model = nets::linear_model(Tensor({2, 2}, std::vector<double>{1, -1, -1, 1}), {2});
  data::Dataset d;
  d.inputs = Tensor({4, 2}, std::vector<double>{0.51, 0.5, 0.3, 0.29, 0.5, 0.505, 0.7, 0.71});
  d.labels = {0, 0, 1, 1};
  d.num_classes = 2;
  const NormFamily norm = default_norm(Norm::Linf);
  const std::vector<CellParams> two{cell(AttackOp::PGD, norm.eps_max, 25), cell(AttackOp::PGD, norm.eps_max, 25)};
  const auto r = run_cells(*model, d, two, norm, 0);
  EXPECT_DOUBLE_EQ(r.result.robust_acc, 0.0);
  EXPECT_EQ(r.result.cost_units, 4u * 25u);
  EXPECT_EQ(run_cells(*model, d, std::span(two).first(1), norm, 0).result.cost_units, r.result.cost_units);
}

TEST(Scheme, CleanMisclassifiedCostsNothing) {
  auto model = nets::linear_model(Tensor({2, 2}, std::vector<double>{1, -1, -1, 1}), {2});
  data::Dataset d;
  d.inputs = Tensor({2, 2}, std::vector<double>{0.9, 0.1, 0.1, 0.9});
  d.labels = {1, 0};
  d.num_classes = 2;
  const CellParams c = cell(AttackOp::PGD, 0.01, 50);
  const auto r = run_cells(*model, d, std::span(&c, 1), default_norm(Norm::Linf), 0);
  EXPECT_EQ(r.result.cost_units, 0u);
  EXPECT_DOUBLE_EQ(r.result.robust_acc, 0.0);
  EXPECT_THROW(run_cells(*model, data::Dataset{}, std::span(&c, 1), default_norm(Norm::Linf), 0), ArgumentError);
}

TEST(Scheme, MoreStepsDoNotHurt) {
  auto& t = trained();
  const NormFamily norm = default_norm(Norm::Linf);
  const CellParams few = cell(AttackOp::PGD, norm.eps_max, 6), many = cell(AttackOp::PGD, norm.eps_max, 50);
  const double a6 = run_cells(*t.model, t.eval_set, std::span(&few, 1), norm, 0).result.robust_acc;
  const double a50 = run_cells(*t.model, t.eval_set, std::span(&many, 1), norm, 0).result.robust_acc;
  EXPECT_LE(a50, a6 + 0.02);
}

TEST(Scheme, JsonRoundTrip) {
  AttackScheme s;
  s.norm = default_norm(Norm::Linf);
  s.cells = {AttackCell{AttackOp::CW, LossId::CE_P, 8, 2, false}, AttackCell{AttackOp::FGSM, LossId::DLR_P, 4, 1, true},
             AttackCell{AttackOp::MT, LossId::Hinge_L, 3, 7, false}};
  const auto j = scheme_to_json(s);
  EXPECT_EQ(j["cells"][0]["A"], "CW-LinfAttack");
  EXPECT_TRUE(j["cells"][0]["L"].is_null());
  EXPECT_EQ(j["cells"][0]["M"], "8/255");
  EXPECT_EQ(j["cells"][0]["I"], 13);
  EXPECT_EQ(j["cells"][1]["I"], 1);
  const AttackScheme back = scheme_from_json(j);
  EXPECT_EQ(back.cells, s.cells);
  EXPECT_EQ(back.norm.norm, Norm::Linf);
}

TEST(Scheme, JsonBareListAndErrors) {
  const auto j = nlohmann::json::parse(
      R"([{"A": "MI-L2Attack", "L": "L1", "M": 0.0625, "I": 44, "R": false},
          {"A": "PGD-L2Attack", "L": "CE", "M": 0.5, "I": 6}])");
  const AttackScheme s = scheme_from_json(j);
  EXPECT_EQ(s.norm.norm, Norm::L2);
  EXPECT_DOUBLE_EQ(s.norm.eps_max, 0.5);
  EXPECT_EQ(s.cells[0], (AttackCell{AttackOp::MI, LossId::L1_L, 1, 7, false}));
  EXPECT_EQ(s.cells[1], (AttackCell{AttackOp::PGD, LossId::CE_P, 8, 1, false}));

  auto bad = j;
  bad[1]["A"] = "PGD-LinfAttack";
  EXPECT_THROW(scheme_from_json(bad), ConfigError);
  bad = j;
  bad[0]["A"] = "FGSM-L2Attack";
  EXPECT_THROW(scheme_from_json(bad), ConfigError);
  bad = j;
  bad[0]["I"] = 12;
  EXPECT_THROW(scheme_from_json(bad), ValidationError);
  bad = j;
  bad[0]["M"] = 0.07;
  EXPECT_THROW(scheme_from_json(bad), ValidationError);
  bad = j;
  bad[0]["L"] = "CE_L";
  EXPECT_THROW(scheme_from_json(bad), ConfigError);
}
