#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "autorobust/grad/tape.hpp"

namespace autorobust::attack {

// Attacker losses. The _L forms act on logits, the _P forms on softmax probabilities.
// Cross entropy exists only on probabilities.
enum class LossId { CE_P, Hinge_L, Hinge_P, L1_L, L1_P, DLR_L, DLR_P };

inline constexpr std::size_t kLossCount = 7;
inline constexpr LossId kAllLosses[kLossCount] = {LossId::CE_P,  LossId::Hinge_L, LossId::Hinge_P, LossId::L1_L,
                                                  LossId::L1_P,  LossId::DLR_L,   LossId::DLR_P};

std::string loss_name(LossId id);
// Accepts the canonical names plus the short forms used in scheme tables
// ("CE", "Hinge", "L1", "DLR" meaning the default mode). "CE_L" is a ConfigError.
LossId parse_loss(std::string_view name);

// Per-example loss [N] from logits [N, K]; larger means closer to misclassification.
grad::Var attack_loss(LossId id, grad::Var logits, std::span<const std::size_t> labels, double kappa = 0.0);

// The CW margin max(max_{i!=y} Z_i - Z_y, -kappa) on logits.
grad::Var cw_loss(grad::Var logits, std::span<const std::size_t> labels, double kappa = 0.0);

}  // namespace autorobust::attack
