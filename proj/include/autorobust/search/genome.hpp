#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "autorobust/attack/attacks.hpp"
#include "autorobust/core/rng.hpp"

namespace autorobust::search {

using attack::AttackScheme;
using attack::NormFamily;

// Per cell: op, loss, eps_idx, steps_idx. Gene values are 1-based.
inline constexpr std::size_t kGenesPerCell = 4;
enum class GeneKind { op, loss, eps, steps, restart };

// The searchable values for each gene kind. Restricting the lists gives small spaces that
// can be enumerated exhaustively.
struct SearchSpace {
  NormFamily norm;
  std::size_t max_cells = 3;
  std::vector<int> ops;
  std::vector<int> losses;
  std::vector<int> eps;
  std::vector<int> steps;
  // When set, each cell carries a fifth gene (1 = off, 2 = on) stored after the 4k block.
  bool restart = false;

  static SearchSpace full(const NormFamily& norm, std::size_t max_cells = 3, bool restart = false);

  std::size_t genome_length() const { return kGenesPerCell * max_cells + (restart ? max_cells : 0); }
  GeneKind kind(std::size_t gene) const;
  std::size_t cell_of(std::size_t gene) const;
  const std::vector<int>& allowed(std::size_t gene) const;
  // Upper bound of the gene in the unrestricted space (n_attacker, 7, 8, 8, 2).
  int bound(std::size_t gene) const;
  // Number of full-length genomes; saturates at SIZE_MAX.
  std::size_t size() const;
};

// ValidationError on an empty allowed list or a value outside the gene bounds.
void validate(const SearchSpace& space);

struct Genome {
  std::vector<int> genes;
  std::size_t active_cells = 0;

  bool operator==(const Genome&) const = default;
  auto operator<=>(const Genome&) const = default;
};

// Genes outside the bounds, or active_cells outside 1..max_cells, raise ValidationError.
void validate(const Genome& g, const SearchSpace& space);
// True when every gene is also in the space's allowed lists.
bool in_space(const Genome& g, const SearchSpace& space);

AttackScheme decode(const Genome& g, const SearchSpace& space);
// Inverse of decode for schemes expressible in the space's norm; unused cells get the first allowed values.
Genome encode(const AttackScheme& s, const SearchSpace& space);

Genome random_genome(const SearchSpace& space, Rng& rng, std::size_t active_cells = 0);

// Position of a gene value within its allowed list, and the reverse with clamping.
std::size_t position(const SearchSpace& space, std::size_t gene, int value);
int value_at(const SearchSpace& space, std::size_t gene, long pos);

// Identifies the decoded scheme: genes of inactive cells are left out.
std::string genome_key(const Genome& g, const SearchSpace& space);
nlohmann::json to_json(const Genome& g, const SearchSpace& space);
Genome genome_from_json(const nlohmann::json& j, const SearchSpace& space);

}  // namespace autorobust::search
