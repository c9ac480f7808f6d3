#pragma once

#include <memory>
#include <string>
#include <vector>

#include "autorobust/core/rng.hpp"
#include "autorobust/grad/model.hpp"
#include "autorobust/grad/ops.hpp"

namespace autorobust::nets {

using grad::Tape;
using grad::Tensor;
using grad::Var;

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Var forward(Tape& tape, Var x, bool training) = 0;
  virtual void collect(std::vector<Tensor*>& params, std::vector<std::vector<double>*>& buffers) {
    (void)params;
    (void)buffers;
  }
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual std::string describe() const = 0;
};

using LayerPtr = std::unique_ptr<Layer>;

// Owning handle that deep-copies through Layer::clone.
class LayerBox {
 public:
  LayerBox() = default;
  explicit LayerBox(LayerPtr p) : p_(std::move(p)) {}
  LayerBox(const LayerBox& o) : p_(o.p_ ? o.p_->clone() : nullptr) {}
  LayerBox& operator=(const LayerBox& o) {
    if (this != &o) p_ = o.p_ ? o.p_->clone() : nullptr;
    return *this;
  }
  LayerBox(LayerBox&&) = default;
  LayerBox& operator=(LayerBox&&) = default;

  explicit operator bool() const { return p_ != nullptr; }
  Layer* operator->() const { return p_.get(); }
  Layer& operator*() const { return *p_; }

 private:
  LayerPtr p_;
};

// Weights drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor fan_in_uniform(grad::Shape shape, std::size_t fan_in, Rng& rng);

class Linear final : public Layer {
 public:
  Linear(std::size_t in, std::size_t out, bool bias, Rng& rng);
  Var forward(Tape& tape, Var x, bool training) override;
  void collect(std::vector<Tensor*>& params, std::vector<std::vector<double>*>& buffers) override;
  LayerPtr clone() const override { return std::make_unique<Linear>(*this); }
  std::string describe() const override;

  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  Tensor weight_;
  Tensor bias_;
  bool has_bias_;
};

class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t cin, std::size_t cout, std::size_t k, grad::ConvSpec spec, bool bias, Rng& rng);
  Var forward(Tape& tape, Var x, bool training) override;
  void collect(std::vector<Tensor*>& params, std::vector<std::vector<double>*>& buffers) override;
  LayerPtr clone() const override { return std::make_unique<Conv2d>(*this); }
  std::string describe() const override;

 private:
  Tensor weight_;
  Tensor bias_;
  grad::ConvSpec spec_;
  bool has_bias_;
};

class BatchNorm final : public Layer {
 public:
  BatchNorm(std::size_t channels, bool affine);
  Var forward(Tape& tape, Var x, bool training) override;
  void collect(std::vector<Tensor*>& params, std::vector<std::vector<double>*>& buffers) override;
  LayerPtr clone() const override { return std::make_unique<BatchNorm>(*this); }
  std::string describe() const override;

 private:
  grad::BatchNormState state_;
  Tensor gamma_;
  Tensor beta_;
  bool affine_;
};

class ReLU final : public Layer {
 public:
  Var forward(Tape&, Var x, bool) override { return grad::relu(x); }
  LayerPtr clone() const override { return std::make_unique<ReLU>(); }
  std::string describe() const override { return "relu"; }
};

class Identity final : public Layer {
 public:
  Var forward(Tape&, Var x, bool) override { return x; }
  LayerPtr clone() const override { return std::make_unique<Identity>(); }
  std::string describe() const override { return "identity"; }
};

// The "none" operation: an all-zero output with the strided spatial size.
class Zero final : public Layer {
 public:
  explicit Zero(std::size_t stride) : stride_(stride) {}
  Var forward(Tape& tape, Var x, bool training) override;
  LayerPtr clone() const override { return std::make_unique<Zero>(*this); }
  std::string describe() const override { return "zero/" + std::to_string(stride_); }

 private:
  std::size_t stride_;
};

class Pool final : public Layer {
 public:
  enum class Kind { max, avg };
  Pool(Kind kind, std::size_t k, std::size_t stride, std::size_t padding)
      : kind_(kind), k_(k), stride_(stride), padding_(padding) {}
  Var forward(Tape& tape, Var x, bool training) override;
  LayerPtr clone() const override { return std::make_unique<Pool>(*this); }
  std::string describe() const override;

 private:
  Kind kind_;
  std::size_t k_, stride_, padding_;
};

class Flatten final : public Layer {
 public:
  Var forward(Tape&, Var x, bool) override { return grad::flatten(x); }
  LayerPtr clone() const override { return std::make_unique<Flatten>(); }
  std::string describe() const override { return "flatten"; }
};

class GlobalAvgPool final : public Layer {
 public:
  Var forward(Tape&, Var x, bool) override { return grad::global_avg_pool(x); }
  LayerPtr clone() const override { return std::make_unique<GlobalAvgPool>(); }
  std::string describe() const override { return "gap"; }
};

class Sequential final : public Layer {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  Sequential& add(LayerPtr layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }
  template <class L, class... Args>
  Sequential& emplace(Args&&... args) {
    return add(std::make_unique<L>(std::forward<Args>(args)...));
  }

  Var forward(Tape& tape, Var x, bool training) override;
  void collect(std::vector<Tensor*>& params, std::vector<std::vector<double>*>& buffers) override;
  LayerPtr clone() const override { return std::make_unique<Sequential>(*this); }
  std::string describe() const override;
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<LayerPtr> layers_;
};

// Model wrapper around a layer stack.
class SequentialModel final : public grad::Model {
 public:
  SequentialModel(grad::Shape input_shape, std::size_t num_classes, Sequential body, std::string name);
  Var forward(Tape& tape, Var x) override { return body_.forward(tape, x, training()); }
  std::vector<Tensor*> parameters() override;
  std::vector<std::vector<double>*> buffers() override;
  std::unique_ptr<grad::Model> clone() const override { return std::make_unique<SequentialModel>(*this); }
  std::string describe() const override { return name_ + ":" + body_.describe(); }

 private:
  Sequential body_;
  std::string name_;
};

}  // namespace autorobust::nets
