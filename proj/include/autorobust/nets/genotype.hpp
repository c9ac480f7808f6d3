#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include <json.hpp>

namespace autorobust::nets {

enum class OpId { none, max_pool_3x3, avg_pool_3x3, skip_connect, sep_conv_3x3, sep_conv_5x5, dil_conv_3x3, dil_conv_5x5 };

inline constexpr std::size_t kOpCount = 8;
inline constexpr std::size_t kNodes = 4;
// Node i (0-based) has i+2 possible predecessors: the two cell inputs and earlier nodes.
inline constexpr std::size_t kEdgeCount = 14;

std::string op_name(OpId op);
OpId parse_op(std::string_view name);
inline OpId op_from_index(std::size_t i) { return static_cast<OpId>(i); }
inline std::size_t op_index(OpId op) { return static_cast<std::size_t>(op); }

// Index of the supernet edge from state `src` into intermediate node `node`.
inline std::size_t edge_index(std::size_t node, std::size_t src) { return node * (node + 3) / 2 + src; }

struct GenotypeEdge {
  OpId op = OpId::skip_connect;
  std::size_t source = 0;
  bool operator==(const GenotypeEdge&) const = default;
};

// Edges 2i and 2i+1 feed intermediate node i.
using CellGenotype = std::array<GenotypeEdge, 2 * kNodes>;

struct Genotype {
  CellGenotype normal{};
  CellGenotype reduction{};
  bool operator==(const Genotype&) const = default;
};

// Throws ValidationError when a source does not precede its node (or, unless allowed, an op is none).
void validate(const Genotype& g, bool allow_none = true);
bool has_none(const Genotype& g);

nlohmann::json to_json(const Genotype& g);
Genotype genotype_from_json(const nlohmann::json& j);
std::string to_string(const Genotype& g);

}  // namespace autorobust::nets
