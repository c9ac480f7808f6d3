#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "autorobust/core/errors.hpp"
#include "autorobust/search/search.hpp"
#include "fixtures.hpp"

using namespace autorobust;
using namespace autorobust::search;
using attack::AttackOp;
using attack::Norm;

namespace {

// FGSM/PGD x CE_P/DLR_L x eps {1,3} x steps {1,4}, one cell.
SearchSpace tiny_space() {
  SearchSpace s = SearchSpace::full(attack::default_norm(Norm::Linf), 1);
  s.ops = {1, 2};
  s.losses = {1, 6};
  s.eps = {1, 3};
  s.steps = {1, 4};
  return s;
}

const data::Dataset& slice() {
  static const data::Dataset d = fixtures::trained().eval_set.slice(0, 16);
  return d;
}

void expect_non_increasing(const std::vector<TraceRow>& trace) {
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i].best_robust_acc, trace[i - 1].best_robust_acc);
}

}  // namespace

TEST(Genome, DecodeKnownSchemeAndBounds) {
  const SearchSpace full = SearchSpace::full(attack::default_norm(Norm::Linf));
  Genome g{{3, 5, 8, 2, 1, 1, 1, 1, 1, 1, 1, 1}, 1};
  const auto s = decode(g, full);
  const auto j = attack::scheme_to_json(s)["cells"][0];
  EXPECT_EQ(j["A"], "CW-LinfAttack");
  EXPECT_EQ(j["M"], "8/255");
  EXPECT_EQ(j["I"], 13);
  EXPECT_TRUE(j["L"].is_null());
  g.genes[0] = 7;
  EXPECT_THROW(decode(g, full), ValidationError);
  g.genes[0] = 6;
  EXPECT_NO_THROW(decode(g, full));
  const SearchSpace l2 = SearchSpace::full(attack::default_norm(Norm::L2));
  EXPECT_EQ(l2.bound(0), 5);
  EXPECT_THROW(decode(g, l2), ValidationError);
  g.active_cells = 0;
  EXPECT_THROW(decode(g, full), ValidationError);
}

TEST(Genome, EncodeDecodeIsIdentity) {
  for (bool restart : {false, true})
    for (Norm n : {Norm::Linf, Norm::L2}) {
      const SearchSpace space = SearchSpace::full(attack::default_norm(n), 3, restart);
      Rng rng(restart ? 8 : 3);
      for (int i = 0; i < 1000; ++i) {
        const Genome g = random_genome(space, rng);
        EXPECT_EQ(encode(decode(g, space), space), g);
      }
    }
}

TEST(Genome, JsonAndKeys) {
  const SearchSpace space = SearchSpace::full(attack::default_norm(Norm::L2));
  Rng rng(1);
  Genome g = random_genome(space, rng, 2);
  EXPECT_EQ(genome_from_json(to_json(g, space), space), g);
  Genome h = g;
  h.genes[9] = h.genes[9] % 8 + 1;  // third cell is inactive
  EXPECT_EQ(genome_key(g, space), genome_key(h, space));
  h.genes[1] = h.genes[1] % 7 + 1;
  EXPECT_NE(genome_key(g, space), genome_key(h, space));
}

TEST(Evaluator, MemoizesAndMatchesDirectRun) {
  auto& t = fixtures::trained();
  Evaluator ev(*t.model, slice(), SearchSpace::full(attack::default_norm(Norm::Linf), 1));
  const Genome fgsm{{1, 1, 8, 1}, 1};
  const EvalResult a = ev.evaluate(fgsm);
  const EvalResult b = ev.evaluate(fgsm);
  EXPECT_EQ(ev.cache_hits(), 1u);
  EXPECT_EQ(ev.cache_misses(), 1u);
  EXPECT_EQ(a.robust_acc, b.robust_acc);
  EXPECT_GE(a.robust_acc, 0.0);
  EXPECT_LE(a.robust_acc, 1.0);
  const auto direct = attack::run_scheme(*t.model, slice(), decode(fgsm, ev.space()), 0);
  EXPECT_EQ(direct.result.robust_acc, a.robust_acc);
  EXPECT_EQ(direct.result.cost_units, a.cost_units);
  const auto batch = ev.evaluate_all({fgsm, Genome{{2, 1, 8, 2}, 1}, Genome{{2, 1, 8, 2}, 1}});
  EXPECT_EQ(ev.cache_misses(), 2u);
  EXPECT_EQ(ev.cache_hits(), 3u);
  EXPECT_EQ(batch[1].cost_units, batch[2].cost_units);
}

TEST(Evaluator, ParallelMatchesSerial) {
  auto& t = fixtures::trained();
  const SearchSpace space = tiny_space();
  Evaluator serial(*t.model, slice(), space), par(*t.model, slice(), space, 0, 3);
  const auto a = brute_force_oracle(serial), b = brute_force_oracle(par);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].result.robust_acc, b.rows[i].result.robust_acc);
    EXPECT_EQ(a.rows[i].result.cost_units, b.rows[i].result.cost_units);
  }
}

TEST(Oracle, TableSizeDeterminismAndLimit) {
  auto& t = fixtures::trained();
  Evaluator ev(*t.model, slice(), tiny_space());
  const auto a = brute_force_oracle(ev);
  EXPECT_EQ(a.rows.size(), 16u);
  Evaluator ev2(*t.model, slice(), tiny_space());
  const auto b = brute_force_oracle(ev2);
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(a.rows[i].genome, b.rows[i].genome);
    EXPECT_EQ(a.rows[i].result.robust_acc, b.rows[i].result.robust_acc);
  }
  for (const auto& r : a.rows) EXPECT_LE(a.best.result.robust_acc, r.result.robust_acc);
  Evaluator big(*t.model, slice(), SearchSpace::full(attack::default_norm(Norm::Linf), 2));
  EXPECT_THROW(brute_force_oracle(big), ArgumentError);
}

TEST(Searchers, MatchOracleOnTinySpace) {
  auto& t = fixtures::trained();
  Evaluator oracle_ev(*t.model, slice(), tiny_space());
  const double optimum = brute_force_oracle(oracle_ev).best.result.robust_acc;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Evaluator ev(*t.model, slice(), tiny_space());
    DeConfig de;
    de.pop = 8;
    de.gens = 3;
    EXPECT_EQ(de_search(ev, de, seed).best_result.robust_acc, optimum) << "de seed " << seed;
    PsoConfig pso;
    pso.pop = 8;
    pso.gens = 3;
    EXPECT_EQ(pso_search(ev, pso, seed).best_result.robust_acc, optimum) << "pso seed " << seed;
    LocalConfig ls;
    ls.iters = 2;
    ls.neigh = 16;
    EXPECT_EQ(local_search(ev, ls, seed).best_result.robust_acc, optimum) << "local seed " << seed;
    EXPECT_EQ(random_search(ev, 32, seed).best_result.robust_acc, optimum) << "random seed " << seed;
  }
}

TEST(Searchers, TracesAreMonotoneAndDeterministic) {
  auto& t = fixtures::trained();
  SearchSpace space = SearchSpace::full(attack::default_norm(Norm::Linf), 2);
  space.steps = {1, 2};
  Evaluator ev(*t.model, slice(), space);
  DeConfig de;
  de.pop = 6;
  de.gens = 3;
  const auto a = de_search(ev, de, 4);
  expect_non_increasing(a.trace);
  EXPECT_EQ(a.trace.size(), 4u);
  EXPECT_EQ(a.history.size(), 24u);
  for (const auto& m : a.history) EXPECT_TRUE(in_space(m.genome, space));
  const auto b = de_search(ev, de, 4);
  EXPECT_EQ(a.best, b.best);
  PsoConfig pso;
  pso.pop = 6;
  pso.gens = 3;
  expect_non_increasing(pso_search(ev, pso, 2).trace);
  LocalConfig ls;
  ls.iters = 4;
  ls.neigh = 4;
  expect_non_increasing(local_search(ev, ls, 2).trace);
  const auto r = random_search(ev, 12, 3);
  expect_non_increasing(r.trace);
  for (const auto& m : r.history) EXPECT_LE(r.best_result.robust_acc, m.result.robust_acc);
  EXPECT_EQ(random_search(ev, 1, 5).best, random_search(ev, 1, 5).history.front().genome);
}

TEST(Searchers, ArgumentChecks) {
  auto& t = fixtures::trained();
  Evaluator ev(*t.model, slice(), tiny_space());
  DeConfig de;
  de.pop = 3;
  EXPECT_THROW(de_search(ev, de, 0), ArgumentError);
  NsgaConfig ns;
  ns.pop = 5;
  EXPECT_THROW(nsga2_search(ev, ns, 0), ArgumentError);
  EXPECT_THROW(random_search(ev, 0, 0), ArgumentError);
  LocalConfig ls;
  ls.iters = 0;
  EXPECT_THROW(local_search(ev, ls, 0), ArgumentError);
}

TEST(Pso, ZeroCoefficientsFreezePositions) {
  auto& t = fixtures::trained();
  Evaluator ev(*t.model, slice(), tiny_space());
  PsoConfig cfg;
  cfg.pop = 4;
  cfg.gens = 3;
  cfg.w = 0.0;
  cfg.c1 = cfg.c2 = 0.0;
  const auto r = pso_search(ev, cfg, 6);
  for (std::size_t g = 1; g <= cfg.gens; ++g)
    for (std::size_t i = 0; i < cfg.pop; ++i) EXPECT_EQ(r.history[g * cfg.pop + i].genome, r.history[i].genome);
}

TEST(LocalSearch, MovesRespectLength) {
  const SearchSpace space = SearchSpace::full(attack::default_norm(Norm::Linf), 3);
  Rng rng(2);
  Genome one = random_genome(space, rng, 1);
  const auto m1 = available_moves(one, space);
  EXPECT_EQ(std::count(m1.begin(), m1.end(), MoveKind::drop), 0);
  EXPECT_EQ(std::count(m1.begin(), m1.end(), MoveKind::append), 1);
  Genome three = random_genome(space, rng, 3);
  const auto m3 = available_moves(three, space);
  EXPECT_EQ(std::count(m3.begin(), m3.end(), MoveKind::append), 0);
  for (int i = 0; i < 200; ++i) {
    const Genome n = apply_move(three, m3[rng.index(m3.size())], space, rng);
    validate(n, space);
    EXPECT_NE(genome_key(n, space), genome_key(three, space));
  }
}

TEST(Pareto, HandDerivedValues) {
  const std::vector<Objectives> pts{{1, 3}, {2, 2}, {3, 1}, {2, 3}, {3, 3}};
  EXPECT_EQ(nondominated_sort(pts), (std::vector<std::size_t>{0, 0, 0, 1, 2}));
  const auto d = crowding_distance({{1, 3}, {2, 2}, {3, 1}});
  EXPECT_TRUE(std::isinf(d[0]));
  EXPECT_EQ(d[1], 2.0);
  EXPECT_TRUE(std::isinf(d[2]));
  EXPECT_EQ(nondominated_sort({{0.5, 2}}), (std::vector<std::size_t>{0}));
  EXPECT_TRUE(std::isinf(crowding_distance({{0.5, 2}})[0]));
  EXPECT_THROW(nondominated_sort({{std::nan(""), 1}}), ValidationError);
  EXPECT_DOUBLE_EQ(hypervolume({{1, 3}, {2, 2}, {3, 1}}, {4, 4}), 3 + 2 + 1);
  EXPECT_DOUBLE_EQ(hypervolume({{1, 3}, {2, 2}, {2, 3}}, {4, 4}), 5.0);
  EXPECT_DOUBLE_EQ(hypervolume({{5, 1}}, {4, 4}), 0.0);
}

TEST(Nsga2, FrontInvariantsAndElitism) {
  auto& t = fixtures::trained();
  SearchSpace space = SearchSpace::full(attack::default_norm(Norm::Linf), 2);
  space.steps = {1, 2};
  Evaluator ev(*t.model, slice(), space);
  NsgaConfig cfg;
  cfg.pop = 8;
  cfg.gens = 3;
  const auto r = nsga2_search(ev, cfg, 1);
  const auto& fronts = r.archive.fronts;
  ASSERT_FALSE(fronts.empty());
  for (const auto& f : fronts)
    for (const auto& a : f)
      for (const auto& b : f) EXPECT_FALSE(dominates(objectives(a.result), objectives(b.result)));
  for (std::size_t k = 1; k < fronts.size(); ++k)
    for (const auto& m : fronts[k]) {
      bool witness = false;
      for (const auto& p : fronts[k - 1]) witness = witness || dominates(objectives(p.result), objectives(m.result));
      EXPECT_TRUE(witness);
    }
  for (const auto& c : r.archive.crowding) {
    EXPECT_TRUE(std::isinf(*std::max_element(c.begin(), c.end())));
  }
  for (const auto& m : fronts[0]) EXPECT_FALSE(better(m.result, r.chosen_result) && m.result.robust_acc < r.chosen_result.robust_acc);
  const Objectives ref{1.0, static_cast<double>(ev.max_cost())};
  std::vector<Objectives> init, fin;
  for (const auto& m : r.initial) init.push_back(objectives(m.result));
  for (const auto& m : fronts[0]) fin.push_back(objectives(m.result));
  EXPECT_GE(hypervolume(fin, ref), hypervolume(init, ref));
  EXPECT_EQ(r.history.size(), cfg.pop * (cfg.gens + 1));
  const auto again = nsga2_search(ev, cfg, 1);
  EXPECT_EQ(again.chosen, r.chosen);
}

TEST(Output, TraceCsvAndParetoJson) {
  const std::string path = ::testing::TempDir() + "trace.csv";
  write_trace_csv(path, {{0, 0.5, 10, 4}, {1, 0.25, 12, 8}});
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "generation,best_robust_acc,best_cost_units,evals_used");
  EXPECT_EQ(row, "0,0.5,10,4");
  const SearchSpace space = tiny_space();
  const auto j = pareto_json({Member{Genome{{2, 6, 3, 4}, 1}, EvalResult{0.25, 40, 0.0}}}, space);
  EXPECT_EQ(j[0]["robust_acc"], 0.25);
  EXPECT_EQ(j[0]["cost_units"], 40);
  EXPECT_EQ(j[0]["genome"]["scheme"]["cells"][0]["A"], "PGD-LinfAttack");
}
