#include "autorobust/nets/genotype.hpp"

#include "autorobust/core/errors.hpp"

namespace autorobust::nets {

namespace {

constexpr std::array<std::string_view, kOpCount> kOpNames{"none",         "max_pool_3x3", "avg_pool_3x3",
                                                          "skip_connect", "sep_conv_3x3", "sep_conv_5x5",
                                                          "dil_conv_3x3", "dil_conv_5x5"};

void validate_cell(const CellGenotype& cell, const char* which, bool allow_none) {
  for (std::size_t e = 0; e < cell.size(); ++e) {
    const std::size_t node = e / 2;
    if (cell[e].source >= node + 2)
      throw ValidationError(std::string(which) + " edge " + std::to_string(e) + ": source " +
                            std::to_string(cell[e].source) + " does not precede node " + std::to_string(node + 2));
    if (op_index(cell[e].op) >= kOpCount) throw ValidationError(std::string(which) + " edge: invalid op");
    if (!allow_none && cell[e].op == OpId::none)
      throw ValidationError(std::string(which) + " edge " + std::to_string(e) + ": op none is not allowed");
  }
}

nlohmann::json cell_json(const CellGenotype& cell) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& e : cell) a.push_back(nlohmann::json::array({op_name(e.op), e.source}));
  return a;
}

CellGenotype cell_from_json(const nlohmann::json& j, const char* which) {
  if (!j.is_array() || j.size() != 2 * kNodes)
    throw ValidationError(std::string("genotype ") + which + ": expected 8 [op, src] pairs");
  CellGenotype cell;
  for (std::size_t e = 0; e < cell.size(); ++e) {
    const auto& p = j[e];
    if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_number_integer() || p[1].get<long>() < 0)
      throw ValidationError(std::string("genotype ") + which + ": edge " + std::to_string(e) + " is not [op, src]");
    try {
      cell[e].op = parse_op(p[0].get<std::string>());
    } catch (const ConfigError& err) {
      throw ValidationError(std::string("genotype ") + which + ": " + err.what());
    }
    cell[e].source = p[1].get<std::size_t>();
  }
  return cell;
}

}  // namespace

std::string op_name(OpId op) { return std::string(kOpNames.at(op_index(op))); }

OpId parse_op(std::string_view name) {
  for (std::size_t i = 0; i < kOpCount; ++i)
    if (kOpNames[i] == name) return op_from_index(i);
  throw ConfigError("unknown operation '" + std::string(name) + "'");
}

void validate(const Genotype& g, bool allow_none) {
  validate_cell(g.normal, "normal", allow_none);
  validate_cell(g.reduction, "reduction", allow_none);
}

bool has_none(const Genotype& g) {
  for (const auto* cell : {&g.normal, &g.reduction})
    for (const auto& e : *cell)
      if (e.op == OpId::none) return true;
  return false;
}

nlohmann::json to_json(const Genotype& g) {
  nlohmann::json j = nlohmann::json::object();
  j["normal"] = cell_json(g.normal);
  j["reduction"] = cell_json(g.reduction);
  return j;
}

Genotype genotype_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("normal") || !j.contains("reduction"))
    throw ValidationError("genotype: expected an object with normal and reduction");
  Genotype g{cell_from_json(j["normal"], "normal"), cell_from_json(j["reduction"], "reduction")};
  validate(g);
  return g;
}

std::string to_string(const Genotype& g) { return to_json(g).dump(); }

}  // namespace autorobust::nets
