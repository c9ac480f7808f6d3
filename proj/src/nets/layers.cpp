#include "autorobust/nets/layers.hpp"

#include <cmath>

#include "autorobust/core/errors.hpp"

namespace autorobust::nets {

Tensor fan_in_uniform(grad::Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  t.set_requires_grad(true);
  return t;
}

Linear::Linear(std::size_t in, std::size_t out, bool bias, Rng& rng) : has_bias_(bias) {
  if (in == 0 || out == 0) throw ArgumentError("linear layer: zero width");
  weight_ = fan_in_uniform({out, in}, in, rng);
  if (bias) bias_ = fan_in_uniform({out}, in, rng);
}

Var Linear::forward(Tape& tape, Var x, bool) {
  Var y = grad::linear(x, tape.parameter(weight_));
  return has_bias_ ? grad::add_channel_bias(y, tape.parameter(bias_)) : y;
}

void Linear::collect(std::vector<Tensor*>& params, std::vector<std::vector<double>*>&) {
  params.push_back(&weight_);
  if (has_bias_) params.push_back(&bias_);
}

std::string Linear::describe() const {
  return "linear(" + std::to_string(weight_.dim(1)) + "," + std::to_string(weight_.dim(0)) + (has_bias_ ? ",b)" : ")");
}

Conv2d::Conv2d(std::size_t cin, std::size_t cout, std::size_t k, grad::ConvSpec spec, bool bias, Rng& rng)
    : spec_(spec), has_bias_(bias) {
  if (cin == 0 || cout == 0 || k == 0) throw ArgumentError("conv layer: zero width");
  if (cin % spec.groups || cout % spec.groups) throw ArgumentError("conv layer: channels not divisible by groups");
  const std::size_t fan_in = cin / spec.groups * k * k;
  weight_ = fan_in_uniform({cout, cin / spec.groups, k, k}, fan_in, rng);
  if (bias) bias_ = fan_in_uniform({cout}, fan_in, rng);
}

Var Conv2d::forward(Tape& tape, Var x, bool) {
  Var y = grad::conv2d(x, tape.parameter(weight_), spec_);
  return has_bias_ ? grad::add_channel_bias(y, tape.parameter(bias_)) : y;
}

void Conv2d::collect(std::vector<Tensor*>& params, std::vector<std::vector<double>*>&) {
  params.push_back(&weight_);
  if (has_bias_) params.push_back(&bias_);
}

std::string Conv2d::describe() const {
  return "conv(" + std::to_string(weight_.dim(1) * spec_.groups) + "," + std::to_string(weight_.dim(0)) + ",k" +
         std::to_string(weight_.dim(2)) + ",s" + std::to_string(spec_.stride) + ",p" + std::to_string(spec_.padding) +
         ",d" + std::to_string(spec_.dilation) + ",g" + std::to_string(spec_.groups) + (has_bias_ ? ",b)" : ")");
}

BatchNorm::BatchNorm(std::size_t channels, bool affine) : state_(channels), affine_(affine) {
  if (affine) {
    gamma_ = Tensor({channels}, 1.0);
    beta_ = Tensor({channels}, 0.0);
    gamma_.set_requires_grad(true);
    beta_.set_requires_grad(true);
  }
}

Var BatchNorm::forward(Tape& tape, Var x, bool training) {
  if (affine_) return grad::batch_norm(x, state_, training, tape.parameter(gamma_), tape.parameter(beta_));
  return grad::batch_norm(x, state_, training);
}

void BatchNorm::collect(std::vector<Tensor*>& params, std::vector<std::vector<double>*>& buffers) {
  if (affine_) {
    params.push_back(&gamma_);
    params.push_back(&beta_);
  }
  buffers.push_back(&state_.running_mean);
  buffers.push_back(&state_.running_var);
}

std::string BatchNorm::describe() const {
  return "bn(" + std::to_string(state_.running_mean.size()) + (affine_ ? ",affine)" : ")");
}

Var Zero::forward(Tape& tape, Var x, bool) {
  grad::Shape s = x.shape();
  if (s.size() == 4 && stride_ > 1) {
    s[2] = (s[2] + stride_ - 1) / stride_;
    s[3] = (s[3] + stride_ - 1) / stride_;
  }
  return grad::zeros(tape, std::move(s));
}

Var Pool::forward(Tape&, Var x, bool) {
  return kind_ == Kind::max ? grad::max_pool2d(x, k_, stride_, padding_) : grad::avg_pool2d(x, k_, stride_, padding_);
}

std::string Pool::describe() const {
  return std::string(kind_ == Kind::max ? "maxpool(" : "avgpool(") + std::to_string(k_) + ",s" +
         std::to_string(stride_) + ",p" + std::to_string(padding_) + ")";
}

Sequential::Sequential(const Sequential& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential tmp(other);
    layers_ = std::move(tmp.layers_);
  }
  return *this;
}

Var Sequential::forward(Tape& tape, Var x, bool training) {
  for (auto& l : layers_) x = l->forward(tape, x, training);
  return x;
}

void Sequential::collect(std::vector<Tensor*>& params, std::vector<std::vector<double>*>& buffers) {
  for (auto& l : layers_) l->collect(params, buffers);
}

std::string Sequential::describe() const {
  std::string s = "[";
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (i) s += ",";
    s += layers_[i]->describe();
  }
  return s + "]";
}

SequentialModel::SequentialModel(grad::Shape input_shape, std::size_t num_classes, Sequential body, std::string name)
    : Model(std::move(input_shape), num_classes), body_(std::move(body)), name_(std::move(name)) {}

std::vector<Tensor*> SequentialModel::parameters() {
  std::vector<Tensor*> p;
  std::vector<std::vector<double>*> b;
  body_.collect(p, b);
  return p;
}

std::vector<std::vector<double>*> SequentialModel::buffers() {
  std::vector<Tensor*> p;
  std::vector<std::vector<double>*> b;
  body_.collect(p, b);
  return b;
}

}  // namespace autorobust::nets
