#include "autorobust/search/genome.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "autorobust/core/errors.hpp"

namespace autorobust::search {

namespace {

std::vector<int> iota_list(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 1);
  return v;
}

int op_gene(attack::AttackOp op, attack::Norm norm) {
  const auto ops = attack::ops_for(norm);
  const auto it = std::find(ops.begin(), ops.end(), op);
  if (it == ops.end()) throw ConfigError(attack::op_name(op) + " is not a " + attack::norm_name(norm) + " attack");
  return static_cast<int>(it - ops.begin()) + 1;
}

int loss_gene(attack::LossId id) {
  const auto* it = std::find(std::begin(attack::kAllLosses), std::end(attack::kAllLosses), id);
  return static_cast<int>(it - std::begin(attack::kAllLosses)) + 1;
}

}  // namespace

SearchSpace SearchSpace::full(const NormFamily& norm, std::size_t max_cells, bool restart) {
  SearchSpace s;
  s.norm = norm;
  s.max_cells = max_cells;
  s.ops = iota_list(static_cast<int>(attack::ops_for(norm.norm).size()));
  s.losses = iota_list(static_cast<int>(attack::kLossCount));
  s.eps = iota_list(attack::kGridSize);
  s.steps = iota_list(attack::kGridSize);
  s.restart = restart;
  return s;
}

GeneKind SearchSpace::kind(std::size_t gene) const {
  if (gene >= genome_length()) throw ArgumentError("gene index out of range");
  if (gene >= kGenesPerCell * max_cells) return GeneKind::restart;
  return static_cast<GeneKind>(gene % kGenesPerCell);
}

std::size_t SearchSpace::cell_of(std::size_t gene) const {
  if (gene >= kGenesPerCell * max_cells) return gene - kGenesPerCell * max_cells;
  return gene / kGenesPerCell;
}

const std::vector<int>& SearchSpace::allowed(std::size_t gene) const {
  static const std::vector<int> kOff{1};
  static const std::vector<int> kBoth{1, 2};
  switch (kind(gene)) {
    case GeneKind::op: return ops;
    case GeneKind::loss: return losses;
    case GeneKind::eps: return eps;
    case GeneKind::steps: return steps;
    case GeneKind::restart: return restart ? kBoth : kOff;
  }
  return kOff;
}

int SearchSpace::bound(std::size_t gene) const {
  switch (kind(gene)) {
    case GeneKind::op: return static_cast<int>(attack::ops_for(norm.norm).size());
    case GeneKind::loss: return static_cast<int>(attack::kLossCount);
    case GeneKind::eps:
    case GeneKind::steps: return attack::kGridSize;
    case GeneKind::restart: return 2;
  }
  return 0;
}

std::size_t SearchSpace::size() const {
  std::size_t n = 1;
  for (std::size_t g = 0; g < genome_length(); ++g) {
    const std::size_t a = allowed(g).size();
    if (a != 0 && n > std::numeric_limits<std::size_t>::max() / a) return std::numeric_limits<std::size_t>::max();
    n *= a;
  }
  return n;
}

void validate(const SearchSpace& space) {
  if (space.max_cells < 1 || space.max_cells > attack::kMaxCells)
    throw ValidationError("search space: max_cells must be in 1.." + std::to_string(attack::kMaxCells));
  if (!(space.norm.eps_max > 0.0)) throw ValidationError("search space: eps_max must be positive");
  for (std::size_t g = 0; g < kGenesPerCell; ++g) {
    const auto& a = space.allowed(g);
    if (a.empty()) throw ValidationError("search space: empty value list for gene " + std::to_string(g));
    for (int v : a)
      if (v < 1 || v > space.bound(g))
        throw ValidationError("search space: value " + std::to_string(v) + " outside 1.." + std::to_string(space.bound(g)));
  }
}

void validate(const Genome& g, const SearchSpace& space) {
  if (g.genes.size() != space.genome_length())
    throw ValidationError("genome: expected " + std::to_string(space.genome_length()) + " genes, got " +
                          std::to_string(g.genes.size()));
  if (g.active_cells < 1 || g.active_cells > space.max_cells)
    throw ValidationError("genome: active_cells must be in 1.." + std::to_string(space.max_cells));
  for (std::size_t i = 0; i < g.genes.size(); ++i)
    if (g.genes[i] < 1 || g.genes[i] > space.bound(i))
      throw ValidationError("genome: gene " + std::to_string(i) + " = " + std::to_string(g.genes[i]) + " outside 1.." +
                            std::to_string(space.bound(i)));
}

bool in_space(const Genome& g, const SearchSpace& space) {
  if (g.genes.size() != space.genome_length() || g.active_cells < 1 || g.active_cells > space.max_cells) return false;
  for (std::size_t i = 0; i < g.genes.size(); ++i) {
    const auto& a = space.allowed(i);
    if (std::find(a.begin(), a.end(), g.genes[i]) == a.end()) return false;
  }
  return true;
}

AttackScheme decode(const Genome& g, const SearchSpace& space) {
  validate(g, space);
  AttackScheme s;
  s.norm = space.norm;
  const auto ops = attack::ops_for(space.norm.norm);
  for (std::size_t c = 0; c < g.active_cells; ++c) {
    const int* cg = g.genes.data() + c * kGenesPerCell;
    attack::AttackCell cell;
    cell.op = ops[static_cast<std::size_t>(cg[0] - 1)];
    cell.loss = attack::kAllLosses[cg[1] - 1];
    cell.eps_idx = cg[2];
    cell.steps_idx = cg[3];
    cell.restart = space.restart && g.genes[kGenesPerCell * space.max_cells + c] == 2;
    s.cells.push_back(cell);
  }
  return s;
}

Genome encode(const AttackScheme& s, const SearchSpace& space) {
  if (s.cells.empty() || s.cells.size() > space.max_cells)
    throw ValidationError("encode: scheme has " + std::to_string(s.cells.size()) + " cells, space allows 1.." +
                          std::to_string(space.max_cells));
  if (s.norm.norm != space.norm.norm) throw ConfigError("encode: scheme norm differs from the search space");
  Genome g;
  g.active_cells = s.cells.size();
  g.genes.resize(space.genome_length());
  for (std::size_t i = 0; i < g.genes.size(); ++i) g.genes[i] = space.allowed(i).front();
  for (std::size_t c = 0; c < s.cells.size(); ++c) {
    const attack::AttackCell& cell = s.cells[c];
    int* cg = g.genes.data() + c * kGenesPerCell;
    cg[0] = op_gene(cell.op, s.norm.norm);
    cg[1] = loss_gene(cell.loss);
    cg[2] = cell.eps_idx;
    cg[3] = cell.steps_idx;
    if (cell.restart && !space.restart) throw ValidationError("encode: restart cell in a space without restart genes");
    if (space.restart) g.genes[kGenesPerCell * space.max_cells + c] = cell.restart ? 2 : 1;
  }
  validate(g, space);
  return g;
}

Genome random_genome(const SearchSpace& space, Rng& rng, std::size_t active_cells) {
  Genome g;
  g.active_cells = active_cells ? active_cells : space.max_cells;
  g.genes.resize(space.genome_length());
  for (std::size_t i = 0; i < g.genes.size(); ++i) {
    const auto& a = space.allowed(i);
    g.genes[i] = a[rng.index(a.size())];
  }
  return g;
}

std::size_t position(const SearchSpace& space, std::size_t gene, int value) {
  const auto& a = space.allowed(gene);
  const auto it = std::find(a.begin(), a.end(), value);
  if (it == a.end()) throw ValidationError("gene value " + std::to_string(value) + " not in the search space");
  return static_cast<std::size_t>(it - a.begin());
}

int value_at(const SearchSpace& space, std::size_t gene, long pos) {
  const auto& a = space.allowed(gene);
  return a[static_cast<std::size_t>(std::clamp<long>(pos, 0, static_cast<long>(a.size()) - 1))];
}

std::string genome_key(const Genome& g, const SearchSpace& space) {
  std::string k = std::to_string(g.active_cells) + ":";
  for (std::size_t i = 0; i < g.genes.size(); ++i) {
    if (space.cell_of(i) >= g.active_cells) continue;
    k += std::to_string(g.genes[i]);
    k += ',';
  }
  return k;
}

nlohmann::json to_json(const Genome& g, const SearchSpace& space) {
  nlohmann::json j = nlohmann::json::object();
  j["genes"] = g.genes;
  j["active_cells"] = g.active_cells;
  j["scheme"] = attack::scheme_to_json(decode(g, space));
  return j;
}

Genome genome_from_json(const nlohmann::json& j, const SearchSpace& space) {
  if (!j.is_object() || !j.contains("genes") || !j.contains("active_cells"))
    throw ValidationError("genome JSON needs genes and active_cells");
  Genome g;
  g.genes = j["genes"].get<std::vector<int>>();
  g.active_cells = j["active_cells"].get<std::size_t>();
  validate(g, space);
  return g;
}

}  // namespace autorobust::search
