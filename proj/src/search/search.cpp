#include "autorobust/search/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "autorobust/core/errors.hpp"

namespace autorobust::search {

Evaluator::Evaluator(grad::Model& model, const data::Dataset& d, SearchSpace space, std::uint64_t attack_seed,
                     std::size_t jobs)
    : model_(model), data_(d), space_(std::move(space)), seed_(attack_seed), jobs_(std::max<std::size_t>(jobs, 1)) {
  validate(space_);
  if (d.empty()) throw ArgumentError("evaluator: empty dataset");
  char buf[160];
  std::snprintf(buf, sizeof buf, "%016llx/%016llx/%s/%.17g/%llu|",
                static_cast<unsigned long long>(grad::fingerprint(model)),
                static_cast<unsigned long long>(data::fingerprint(d)), attack::norm_name(space_.norm.norm).c_str(),
                space_.norm.eps_max, static_cast<unsigned long long>(seed_));
  context_ = buf;
}

std::string Evaluator::key(const Genome& g) const { return context_ + genome_key(g, space_); }

EvalResult Evaluator::evaluate(const Genome& g) { return evaluate_all({g}).front(); }

std::vector<EvalResult> Evaluator::evaluate_all(const std::vector<Genome>& gs) {
  std::vector<std::string> keys;
  std::vector<std::size_t> todo;  // first occurrence of each uncached key
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < gs.size(); ++i) {
    validate(gs[i], space_);
    keys.push_back(key(gs[i]));
    if (cache_.count(keys.back()) || seen.count(keys.back())) continue;
    seen.emplace(keys.back(), i);
    todo.push_back(i);
  }
  std::vector<EvalResult> fresh(todo.size());
  const std::size_t workers = std::min(jobs_, todo.size());
  if (workers <= 1) {
    for (std::size_t t = 0; t < todo.size(); ++t)
      fresh[t] = attack::run_scheme(model_, data_, decode(gs[todo[t]], space_), seed_).result;
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w, clone = model_.clone()]() {
        try {
          for (std::size_t t = w; t < todo.size(); t += workers)
            fresh[t] = attack::run_scheme(*clone, data_, decode(gs[todo[t]], space_), seed_).result;
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  for (std::size_t t = 0; t < todo.size(); ++t) cache_.emplace(keys[todo[t]], fresh[t]);
  misses_ += todo.size();
  hits_ += gs.size() - todo.size();
  requests_ += gs.size();
  std::vector<EvalResult> out;
  out.reserve(gs.size());
  for (const auto& k : keys) out.push_back(cache_.at(k));
  return out;
}

std::uint64_t Evaluator::max_cost() const {
  const auto ops = attack::ops_for(space_.norm.norm);
  const std::uint64_t runs = space_.restart ? 2 : 1;
  const std::uint64_t targets = std::max<std::size_t>(data_.num_classes, 2) - 1;
  std::uint64_t per_cell = 0;
  for (int o : space_.ops)
    for (int s : space_.steps) {
      const attack::AttackOp op = ops[static_cast<std::size_t>(o - 1)];
      const std::uint64_t steps = attack::decode_steps(s);
      std::uint64_t c = steps;
      if (op == attack::AttackOp::FGSM) c = 1;
      if (op == attack::AttackOp::MT) c = std::max<std::uint64_t>(1, (2 * steps + targets) / (2 * targets)) * targets;
      per_cell = std::max(per_cell, c * runs);
    }
  return per_cell * space_.max_cells * data_.size();
}

bool better(const EvalResult& a, const EvalResult& b) {
  if (a.robust_acc != b.robust_acc) return a.robust_acc < b.robust_acc;
  return a.cost_units < b.cost_units;
}

namespace {

// Tracks the best-so-far member and the trace rows for elitist searchers.
struct Tracker {
  Evaluator& ev;
  SearchResult out;
  bool have = false;

  void add(const std::vector<Genome>& gs, const std::vector<EvalResult>& rs) {
    for (std::size_t i = 0; i < gs.size(); ++i) {
      out.history.push_back({gs[i], rs[i]});
      if (!have || better(rs[i], out.best_result)) {
        out.best = gs[i];
        out.best_result = rs[i];
        have = true;
      }
    }
  }
  void row(std::size_t gen) {
    out.trace.push_back({gen, out.best_result.robust_acc, out.best_result.cost_units, ev.requests()});
  }
};

std::vector<double> positions_of(const Genome& g, const SearchSpace& space) {
  std::vector<double> p(g.genes.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<double>(position(space, i, g.genes[i]));
  return p;
}

Genome genome_at(const std::vector<double>& p, const SearchSpace& space) {
  Genome g;
  g.active_cells = space.max_cells;
  g.genes.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g.genes[i] = value_at(space, i, std::lround(p[i]));
  return g;
}

double span_of(const SearchSpace& space, std::size_t gene) {
  return static_cast<double>(space.allowed(gene).size() - 1);
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

SearchResult de_search(Evaluator& ev, const DeConfig& cfg, std::uint64_t seed) {
  if (cfg.pop < 4) throw ArgumentError("de_search: population must be at least 4");
  const SearchSpace& space = ev.space();
  const std::size_t len = space.genome_length();
  Rng rng(seed);
  std::vector<Genome> pop;
  for (std::size_t i = 0; i < cfg.pop; ++i) pop.push_back(random_genome(space, rng));
  std::vector<EvalResult> fit = ev.evaluate_all(pop);
  Tracker tr{ev, {}};
  tr.add(pop, fit);
  tr.row(0);
  for (std::size_t gen = 1; gen <= cfg.gens; ++gen) {
    std::vector<Genome> trials;
    for (std::size_t i = 0; i < cfg.pop; ++i) {
      std::size_t r[3];
      for (std::size_t k = 0; k < 3; ++k) {
        do {
          r[k] = rng.index(cfg.pop);
        } while (r[k] == i || (k > 0 && r[k] == r[0]) || (k > 1 && r[k] == r[1]));
      }
      const auto a = positions_of(pop[r[0]], space), b = positions_of(pop[r[1]], space),
                 c = positions_of(pop[r[2]], space), x = positions_of(pop[i], space);
      const std::size_t jrand = rng.index(len);
      std::vector<double> t(len);
      for (std::size_t j = 0; j < len; ++j) {
        const double v = a[j] + cfg.F * (b[j] - c[j]);
        t[j] = (j == jrand || rng.uniform() < cfg.CR) ? std::clamp(v, 0.0, span_of(space, j)) : x[j];
      }
      Genome g = genome_at(t, space);
      if (rng.uniform() < cfg.finetune_prob) {
        const std::size_t j = rng.index(len);
        const long shift = rng.uniform() < 0.5 ? -1 : 1;
        g.genes[j] = value_at(space, j, static_cast<long>(position(space, j, g.genes[j])) + shift);
      }
      trials.push_back(std::move(g));
    }
    const auto tf = ev.evaluate_all(trials);
    tr.add(trials, tf);
    for (std::size_t i = 0; i < cfg.pop; ++i) {
      if (tf[i].robust_acc <= fit[i].robust_acc) {
        pop[i] = trials[i];
        fit[i] = tf[i];
      }
    }
    tr.row(gen);
  }
  return tr.out;
}

SearchResult pso_search(Evaluator& ev, const PsoConfig& cfg, std::uint64_t seed) {
  if (cfg.pop < 1) throw ArgumentError("pso_search: empty swarm");
  const SearchSpace& space = ev.space();
  const std::size_t len = space.genome_length();
  Rng rng(seed);
  std::vector<std::vector<double>> x(cfg.pop, std::vector<double>(len)), v(cfg.pop, std::vector<double>(len, 0.0));
  for (auto& p : x)
    for (std::size_t j = 0; j < len; ++j) p[j] = rng.uniform(0.0, span_of(space, j));
  std::vector<Genome> gs;
  for (const auto& p : x) gs.push_back(genome_at(p, space));
  std::vector<EvalResult> fit = ev.evaluate_all(gs);
  Tracker tr{ev, {}};
  tr.add(gs, fit);
  tr.row(0);
  auto pbest = x;
  auto pfit = fit;
  std::size_t g_idx = 0;
  for (std::size_t i = 1; i < cfg.pop; ++i)
    if (better(pfit[i], pfit[g_idx])) g_idx = i;
  std::vector<double> gbest = pbest[g_idx];
  EvalResult gfit = pfit[g_idx];
  for (std::size_t gen = 1; gen <= cfg.gens; ++gen) {
    for (std::size_t i = 0; i < cfg.pop; ++i)
      for (std::size_t j = 0; j < len; ++j) {
        const double vmax = span_of(space, j) / 2.0;
        const double r1 = rng.uniform(), r2 = rng.uniform();
        v[i][j] = cfg.w * v[i][j] + cfg.c1 * r1 * (pbest[i][j] - x[i][j]) + cfg.c2 * r2 * (gbest[j] - x[i][j]);
        v[i][j] = std::clamp(v[i][j], -vmax, vmax);
        x[i][j] = std::clamp(x[i][j] + v[i][j], 0.0, span_of(space, j));
      }
    gs.clear();
    for (const auto& p : x) gs.push_back(genome_at(p, space));
    fit = ev.evaluate_all(gs);
    tr.add(gs, fit);
    for (std::size_t i = 0; i < cfg.pop; ++i) {
      if (better(fit[i], pfit[i])) {
        pbest[i] = x[i];
        pfit[i] = fit[i];
      }
      if (better(pfit[i], gfit)) {
        gbest = pbest[i];
        gfit = pfit[i];
      }
    }
    tr.row(gen);
  }
  return tr.out;
}

std::vector<MoveKind> available_moves(const Genome& g, const SearchSpace& space) {
  std::vector<MoveKind> m;
  if (space.ops.size() > 1) m.push_back(MoveKind::op);
  if (space.losses.size() > 1) m.push_back(MoveKind::loss);
  if (space.eps.size() > 1) m.push_back(MoveKind::eps);
  if (space.steps.size() > 1) m.push_back(MoveKind::steps);
  if (space.restart) m.push_back(MoveKind::restart);
  if (g.active_cells < space.max_cells) m.push_back(MoveKind::append);
  if (g.active_cells > 1) m.push_back(MoveKind::drop);
  return m;
}

Genome apply_move(const Genome& g, MoveKind m, const SearchSpace& space, Rng& rng) {
  Genome out = g;
  if (m == MoveKind::append) {
    const std::size_t c = out.active_cells++;
    for (std::size_t i = 0; i < out.genes.size(); ++i) {
      if (space.cell_of(i) != c) continue;
      const auto& a = space.allowed(i);
      out.genes[i] = a[rng.index(a.size())];
    }
    return out;
  }
  if (m == MoveKind::drop) {
    --out.active_cells;
    return out;
  }
  const std::size_t cell = rng.index(g.active_cells);
  std::size_t gene = 0;
  switch (m) {
    case MoveKind::op: gene = cell * kGenesPerCell; break;
    case MoveKind::loss: gene = cell * kGenesPerCell + 1; break;
    case MoveKind::eps: gene = cell * kGenesPerCell + 2; break;
    case MoveKind::steps: gene = cell * kGenesPerCell + 3; break;
    default: gene = kGenesPerCell * space.max_cells + cell; break;
  }
  const auto& a = space.allowed(gene);
  const std::size_t pos = position(space, gene, out.genes[gene]);
  if (m == MoveKind::eps || m == MoveKind::steps) {
    std::size_t next = 0;
    if (pos == 0)
      next = 1;
    else if (pos + 1 == a.size())
      next = pos - 1;
    else
      next = rng.uniform() < 0.5 ? pos - 1 : pos + 1;
    out.genes[gene] = a[next];
  } else {
    std::size_t next = rng.index(a.size() - 1);
    if (next >= pos) ++next;
    out.genes[gene] = a[next];
  }
  return out;
}

SearchResult local_search(Evaluator& ev, const LocalConfig& cfg, std::uint64_t seed) {
  if (cfg.iters < 1) throw ArgumentError("local_search: iters must be at least 1");
  if (cfg.neigh < 1) throw ArgumentError("local_search: neighbourhood must be non-empty");
  const SearchSpace& space = ev.space();
  Rng rng(seed);
  const std::size_t len0 = 1 + rng.index(space.max_cells);
  Genome cur = random_genome(space, rng, len0);
  EvalResult cur_fit = ev.evaluate(cur);
  Tracker tr{ev, {}};
  tr.add({cur}, {cur_fit});
  tr.row(0);
  for (std::size_t it = 1; it <= cfg.iters; ++it) {
    const auto moves = available_moves(cur, space);
    if (moves.empty()) {
      tr.row(it);
      continue;
    }
    std::vector<Genome> nb;
    for (std::size_t k = 0; k < cfg.neigh; ++k) nb.push_back(apply_move(cur, moves[rng.index(moves.size())], space, rng));
    const auto nf = ev.evaluate_all(nb);
    tr.add(nb, nf);
    std::size_t b = 0;
    for (std::size_t k = 1; k < nb.size(); ++k)
      if (better(nf[k], nf[b])) b = k;
    if (nf[b].robust_acc <= cur_fit.robust_acc) {
      cur = nb[b];
      cur_fit = nf[b];
    }
    tr.row(it);
  }
  return tr.out;
}

SearchResult random_search(Evaluator& ev, std::size_t budget, std::uint64_t seed) {
  if (budget < 1) throw ArgumentError("random_search: budget must be at least 1");
  Rng rng(seed);
  std::vector<Genome> gs;
  for (std::size_t i = 0; i < budget; ++i) gs.push_back(random_genome(ev.space(), rng));
  const auto fit = ev.evaluate_all(gs);
  Tracker tr{ev, {}};
  const std::size_t before = ev.requests() - budget;
  for (std::size_t i = 0; i < budget; ++i) {
    tr.add({gs[i]}, {fit[i]});
    tr.out.trace.push_back({i + 1, tr.out.best_result.robust_acc, tr.out.best_result.cost_units, before + i + 1});
  }
  return tr.out;
}

bool dominates(const Objectives& a, const Objectives& b) {
  return a.f1 <= b.f1 && a.f2 <= b.f2 && (a.f1 < b.f1 || a.f2 < b.f2);
}

std::vector<std::size_t> nondominated_sort(const std::vector<Objectives>& pts) {
  for (const auto& p : pts)
    if (std::isnan(p.f1) || std::isnan(p.f2)) throw ValidationError("nondominated_sort: NaN objective");
  const std::size_t n = pts.size();
  std::vector<std::size_t> rank(n, 0), count(n, 0);
  std::vector<std::vector<std::size_t>> dominated(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (dominates(pts[i], pts[j])) dominated[i].push_back(j);
      else if (dominates(pts[j], pts[i])) ++count[i];
    }
  std::vector<std::size_t> front;
  for (std::size_t i = 0; i < n; ++i)
    if (count[i] == 0) front.push_back(i);
  for (std::size_t r = 0; !front.empty(); ++r) {
    std::vector<std::size_t> next;
    for (std::size_t i : front) {
      rank[i] = r;
      for (std::size_t j : dominated[i])
        if (--count[j] == 0) next.push_back(j);
    }
    std::sort(next.begin(), next.end());
    front = std::move(next);
  }
  return rank;
}

std::vector<double> crowding_distance(const std::vector<Objectives>& front) {
  const std::size_t n = front.size();
  std::vector<double> d(n, 0.0);
  if (n <= 2) return std::vector<double>(n, std::numeric_limits<double>::infinity());
  for (int obj = 0; obj < 2; ++obj) {
    auto val = [&](std::size_t i) { return obj == 0 ? front[i].f1 : front[i].f2; };
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return val(a) < val(b); });
    d[idx.front()] = d[idx.back()] = std::numeric_limits<double>::infinity();
    const double range = val(idx.back()) - val(idx.front());
    if (range <= 0.0) continue;
    for (std::size_t k = 1; k + 1 < n; ++k) d[idx[k]] += (val(idx[k + 1]) - val(idx[k - 1])) / range;
  }
  return d;
}

double hypervolume(const std::vector<Objectives>& pts, const Objectives& ref) {
  std::vector<Objectives> inside;
  for (const auto& p : pts)
    if (p.f1 < ref.f1 && p.f2 < ref.f2) inside.push_back(p);
  std::sort(inside.begin(), inside.end(), [](const Objectives& a, const Objectives& b) {
    return a.f1 != b.f1 ? a.f1 < b.f1 : a.f2 < b.f2;
  });
  double area = 0.0, prev = ref.f2;
  for (const auto& p : inside) {
    if (p.f2 >= prev) continue;
    area += (ref.f1 - p.f1) * (prev - p.f2);
    prev = p.f2;
  }
  return area;
}

Objectives objectives(const EvalResult& r) { return {r.robust_acc, static_cast<double>(r.cost_units)}; }

ParetoArchive build_archive(const std::vector<Member>& members) {
  std::vector<Objectives> pts;
  for (const auto& m : members) pts.push_back(objectives(m.result));
  const auto rank = nondominated_sort(pts);
  ParetoArchive a;
  const std::size_t nf = members.empty() ? 0 : *std::max_element(rank.begin(), rank.end()) + 1;
  a.fronts.resize(nf);
  for (std::size_t i = 0; i < members.size(); ++i) a.fronts[rank[i]].push_back(members[i]);
  for (const auto& f : a.fronts) {
    std::vector<Objectives> fp;
    for (const auto& m : f) fp.push_back(objectives(m.result));
    a.crowding.push_back(crowding_distance(fp));
  }
  return a;
}

namespace {

// Rank then crowding for every member of a population.
void rank_and_crowd(const std::vector<EvalResult>& fit, std::vector<std::size_t>& rank, std::vector<double>& crowd) {
  std::vector<Objectives> pts;
  for (const auto& r : fit) pts.push_back(objectives(r));
  rank = nondominated_sort(pts);
  crowd.assign(fit.size(), 0.0);
  const std::size_t nf = fit.empty() ? 0 : *std::max_element(rank.begin(), rank.end()) + 1;
  for (std::size_t r = 0; r < nf; ++r) {
    std::vector<std::size_t> idx;
    std::vector<Objectives> fp;
    for (std::size_t i = 0; i < fit.size(); ++i)
      if (rank[i] == r) {
        idx.push_back(i);
        fp.push_back(pts[i]);
      }
    const auto d = crowding_distance(fp);
    for (std::size_t k = 0; k < idx.size(); ++k) crowd[idx[k]] = d[k];
  }
}

bool crowded_less(std::size_t a, std::size_t b, const std::vector<std::size_t>& rank, const std::vector<double>& crowd) {
  if (rank[a] != rank[b]) return rank[a] < rank[b];
  if (crowd[a] != crowd[b]) return crowd[a] > crowd[b];
  return a < b;
}

}  // namespace

NsgaResult nsga2_search(Evaluator& ev, const NsgaConfig& cfg, std::uint64_t seed) {
  if (cfg.pop < 2 || cfg.pop % 2 != 0) throw ArgumentError("nsga2_search: population must be even and at least 2");
  const SearchSpace& space = ev.space();
  const std::size_t len = space.genome_length();
  const double pm = cfg.Pm < 0.0 ? 1.0 / static_cast<double>(len) : cfg.Pm;
  Rng rng(seed);
  std::vector<Genome> pop;
  for (std::size_t i = 0; i < cfg.pop; ++i) pop.push_back(random_genome(space, rng));
  std::vector<EvalResult> fit = ev.evaluate_all(pop);
  NsgaResult out;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    out.initial.push_back({pop[i], fit[i]});
    out.history.push_back({pop[i], fit[i]});
  }
  auto add_row = [&](std::size_t gen) {
    std::size_t b = 0;
    for (std::size_t i = 1; i < fit.size(); ++i)
      if (better(fit[i], fit[b])) b = i;
    out.trace.push_back({gen, fit[b].robust_acc, fit[b].cost_units, ev.requests()});
  };
  add_row(0);
  std::vector<std::size_t> rank;
  std::vector<double> crowd;
  rank_and_crowd(fit, rank, crowd);
  for (std::size_t gen = 1; gen <= cfg.gens; ++gen) {
    auto tournament = [&]() {
      const std::size_t a = rng.index(cfg.pop);
      std::size_t b = rng.index(cfg.pop - 1);
      if (b >= a) ++b;
      return crowded_less(a, b, rank, crowd) ? a : b;
    };
    std::vector<Genome> kids;
    while (kids.size() < cfg.pop) {
      Genome c1 = pop[tournament()], c2 = pop[tournament()];
      if (rng.uniform() < cfg.Pc)
        for (std::size_t j = 0; j < len; ++j)
          if (rng.uniform() < 0.5) std::swap(c1.genes[j], c2.genes[j]);
      for (Genome* c : {&c1, &c2})
        for (std::size_t j = 0; j < len; ++j)
          if (rng.uniform() < pm) {
            const auto& a = space.allowed(j);
            c->genes[j] = a[rng.index(a.size())];
          }
      kids.push_back(std::move(c1));
      kids.push_back(std::move(c2));
    }
    const auto kf = ev.evaluate_all(kids);
    for (std::size_t i = 0; i < kids.size(); ++i) out.history.push_back({kids[i], kf[i]});
    std::vector<Genome> all = pop;
    all.insert(all.end(), kids.begin(), kids.end());
    std::vector<EvalResult> af = fit;
    af.insert(af.end(), kf.begin(), kf.end());
    std::vector<std::size_t> ar;
    std::vector<double> ac;
    rank_and_crowd(af, ar, ac);
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return crowded_less(a, b, ar, ac); });
    pop.clear();
    fit.clear();
    for (std::size_t k = 0; k < cfg.pop; ++k) {
      pop.push_back(all[order[k]]);
      fit.push_back(af[order[k]]);
    }
    rank_and_crowd(fit, rank, crowd);
    add_row(gen);
  }
  std::vector<Member> final_pop;
  for (std::size_t i = 0; i < pop.size(); ++i) final_pop.push_back({pop[i], fit[i]});
  out.archive = build_archive(final_pop);
  const auto& front = out.archive.fronts.front();
  std::size_t b = 0;
  for (std::size_t i = 1; i < front.size(); ++i)
    if (better(front[i].result, front[b].result)) b = i;
  out.chosen = front[b].genome;
  out.chosen_result = front[b].result;
  return out;
}

OracleTable brute_force_oracle(Evaluator& ev) {
  const SearchSpace& space = ev.space();
  const std::size_t n = space.size();
  if (n > 4096) throw ArgumentError("brute_force_oracle: space holds " + std::to_string(n) + " genomes, limit 4096");
  const std::size_t len = space.genome_length();
  std::vector<Genome> gs;
  std::vector<std::size_t> digit(len, 0);
  for (std::size_t k = 0; k < n; ++k) {
    Genome g;
    g.active_cells = space.max_cells;
    for (std::size_t j = 0; j < len; ++j) g.genes.push_back(space.allowed(j)[digit[j]]);
    gs.push_back(std::move(g));
    for (std::size_t j = len; j-- > 0;) {
      if (++digit[j] < space.allowed(j).size()) break;
      digit[j] = 0;
    }
  }
  const auto fit = ev.evaluate_all(gs);
  OracleTable t;
  for (std::size_t i = 0; i < n; ++i) {
    t.rows.push_back({gs[i], fit[i]});
    if (i == 0 || better(fit[i], t.best.result)) t.best = t.rows.back();
  }
  return t;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write trace '" + path + "'");
  out << "generation,best_robust_acc,best_cost_units,evals_used\n";
  for (const auto& r : trace)
    out << r.generation << ',' << fmt_double(r.best_robust_acc) << ',' << r.best_cost_units << ',' << r.evals_used << '\n';
}

nlohmann::json pareto_json(const std::vector<Member>& front, const SearchSpace& space) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& m : front) {
    nlohmann::json e = nlohmann::json::object();
    e["genome"] = to_json(m.genome, space);
    e["robust_acc"] = m.result.robust_acc;
    e["cost_units"] = m.result.cost_units;
    j.push_back(e);
  }
  return j;
}

}  // namespace autorobust::search
