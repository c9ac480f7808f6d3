#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "autorobust/nets/genotype.hpp"
#include "autorobust/nets/layers.hpp"

namespace autorobust::nets {

// Candidate operation on C channels. Non-affine mode is the search-time variant:
// batch norms without scale/shift, and pools followed by a batch norm.
LayerPtr make_op(OpId op, std::size_t channels, std::size_t stride, bool affine, Rng& rng);

Sequential relu_conv_bn(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, std::size_t pad,
                        bool affine, Rng& rng);
// Halves the spatial size: relu -> 1x1 conv stride 2 -> bn.
Sequential factorized_reduce(std::size_t cin, std::size_t cout, bool affine, Rng& rng);

struct CellPlan {
  std::size_t c_pp, c_p, c;
  bool reduction, reduction_prev;
};
// Stem emits 3C channels; cells at floor(L/3) and floor(2L/3) reduce and double C.
std::vector<CellPlan> plan_cells(std::size_t C, std::size_t L);
bool is_reduction(std::size_t layer, std::size_t L);

// Network stacked from a discrete genotype.
class CellNetwork final : public grad::Model {
 public:
  CellNetwork(const Genotype& g, std::size_t C, std::size_t L, const grad::Shape& input_shape, std::size_t n_classes,
              std::uint64_t seed);
  grad::Var forward(grad::Tape& tape, grad::Var x) override;
  std::vector<Tensor*> parameters() override;
  std::vector<std::vector<double>*> buffers() override;
  std::unique_ptr<grad::Model> clone() const override { return std::make_unique<CellNetwork>(*this); }
  std::string describe() const override;
  const Genotype& genotype() const { return genotype_; }

 private:
  struct Cell {
    CellPlan plan;
    LayerBox pre0, pre1;
    std::array<LayerBox, 2 * kNodes> ops;
  };
  void collect(std::vector<Tensor*>& p, std::vector<std::vector<double>*>& b);

  Genotype genotype_;
  std::size_t C_, L_;
  Sequential stem_;
  std::vector<Cell> cells_;
  LayerBox classifier_;
};

// Throws ValidationError for an invalid genotype.
std::unique_ptr<grad::Model> instantiate_genotype(const Genotype& g, std::size_t C, std::size_t L,
                                                  const grad::Shape& input_shape, std::size_t n_classes,
                                                  std::uint64_t seed);

}  // namespace autorobust::nets
