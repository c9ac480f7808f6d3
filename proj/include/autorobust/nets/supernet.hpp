#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "autorobust/nets/cells.hpp"

namespace autorobust::nets {

enum class SupernetMode { darts, fairdarts, pcdarts, nasp, smoothdarts };

std::string mode_name(SupernetMode m);
SupernetMode parse_mode(std::string_view name);

// Mixing weights handed to a forward pass: per cell type a [14, 8] tensor, plus the
// per-node edge normalization weights in pcdarts mode.
struct EdgeWeights {
  std::array<grad::Var, 2> ops;                  // [normal, reduction]
  std::array<std::array<grad::Var, kNodes>, 2> beta;  // invalid unless pcdarts
};

class SuperNet final : public grad::Model {
 public:
  SuperNet(SupernetMode mode, std::size_t C, std::size_t L, const grad::Shape& input_shape, std::size_t n_classes,
           std::uint64_t seed, double channel_fraction = 1.0);

  grad::Var forward(grad::Tape& tape, grad::Var x) override;
  grad::Var forward_with(grad::Tape& tape, grad::Var x, const EdgeWeights& w);
  // Default weights for the current mode: softmax or sigmoid of alpha, the one-hot
  // proximal point in nasp mode, or the fixed path when one is set.
  EdgeWeights mixing(grad::Tape& tape);

  std::vector<Tensor*> parameters() override;
  std::vector<Tensor*> arch_parameters();
  // Running statistics plus alpha/beta, so fingerprints follow the architecture state.
  std::vector<std::vector<double>*> buffers() override;
  std::unique_ptr<grad::Model> clone() const override { return std::make_unique<SuperNet>(*this); }
  std::string describe() const override;

  SupernetMode mode() const { return mode_; }
  std::size_t channels() const { return C_; }
  std::size_t layers() const { return L_; }
  double channel_fraction() const { return channel_fraction_; }
  // Channels that pass through the mixed operation on an edge with `c` channels.
  std::size_t partial_channels(std::size_t c) const;

  Tensor& alpha(std::size_t cell_type) { return alpha_.at(cell_type); }
  const Tensor& alpha(std::size_t cell_type) const { return alpha_.at(cell_type); }
  Tensor& beta(std::size_t cell_type, std::size_t node) { return beta_.at(cell_type).at(node); }
  const Tensor& beta(std::size_t cell_type, std::size_t node) const { return beta_.at(cell_type).at(node); }

  // Mixing weights as plain numbers ([14, 8] per cell type).
  Tensor mixing_weights(std::size_t cell_type) const;
  // Per-edge, per-op strength used for discretization (pcdarts folds in softmax(beta)).
  Tensor edge_strength(std::size_t cell_type) const;

  void set_weights_trainable(bool on);
  void set_arch_trainable(bool on);

  // Single-path mode: only the genotype's edges and ops run, each with weight 1.
  void set_path(std::optional<Genotype> g) { path_ = std::move(g); }
  const std::optional<Genotype>& path() const { return path_; }

 private:
  struct Edge {
    std::array<LayerBox, kOpCount> ops;  // ops[0] (none) stays empty
    LayerBox bypass;                     // pcdarts: carries the unmasked channels
  };
  struct Cell {
    CellPlan plan;
    LayerBox pre0, pre1;
    std::array<Edge, kEdgeCount> edges;
  };

  grad::Var run_edge(grad::Tape& tape, Edge& edge, grad::Var x, grad::Var w, std::size_t e, std::size_t c);
  void collect(std::vector<Tensor*>& p, std::vector<std::vector<double>*>& b);

  SupernetMode mode_;
  std::size_t C_, L_;
  double channel_fraction_;
  Sequential stem_;
  std::vector<Cell> cells_;
  LayerBox classifier_;
  std::array<Tensor, 2> alpha_;
  std::array<std::array<Tensor, kNodes>, 2> beta_;
  std::optional<Genotype> path_;
};

std::unique_ptr<SuperNet> build_supernet(SupernetMode mode, std::size_t C, std::size_t L,
                                         const grad::Shape& input_shape, std::size_t n_classes, std::uint64_t seed,
                                         double channel_fraction = 1.0);

// Per-edge one-hot on the strongest non-none op.
Tensor prox_one_hot(const Tensor& alpha);

// Discretize: per node keep the two edges with the highest non-none strength, each with its
// argmax non-none op; ties go to lower (edge, op) indices. fairdarts first keeps edges whose
// best gate passes 0.5 and falls back to the top-2 rule when fewer than two pass.
Genotype genotype_from_alpha(const SuperNet& net);
CellGenotype cell_from_strength(const Tensor& strength, bool fair_threshold);

}  // namespace autorobust::nets
