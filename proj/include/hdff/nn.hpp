// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal CPU layer library with hand-written backward passes. Enough to
// build the mock feature extractors, per-backbone heads and the fusion layer.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hdff/rng.hpp"
#include "hdff/tensor.hpp"

namespace hdff {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}
  void zero_grad() { grad.fill(0); }
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string kind() const = 0;
  // Caches whatever backward() needs when keep_cache is set.
  virtual Tensor forward(const Tensor& x, bool keep_cache) = 0;
  // Accumulates parameter gradients; returns dL/dx when need_input_grad.
  virtual Tensor backward(const Tensor& grad_out, bool need_input_grad) = 0;
  virtual std::vector<Parameter*> parameters() { return {}; }
  virtual nlohmann::json describe() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual void init(Rng&) {}
  virtual void clear_cache() {}
};

class Linear final : public Layer {
 public:
  Linear(std::int64_t in_features, std::int64_t out_features);

  std::string kind() const override { return "linear"; }
  Tensor forward(const Tensor& x, bool keep_cache) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  nlohmann::json describe() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }
  // U(-1/sqrt(in), 1/sqrt(in)) for weight and bias.
  void init(Rng& rng) override;
  void clear_cache() override { input_ = Tensor(); }

  std::int64_t in_features() const { return in_; }
  std::int64_t out_features() const { return out_; }
  // weight is stored out×in.
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  const Parameter& weight() const { return weight_; }
  const Parameter& bias() const { return bias_; }

 private:
  std::int64_t in_, out_;
  Parameter weight_, bias_;
  Tensor input_;
};

class Conv2d final : public Layer {
 public:
  Conv2d(std::int64_t in_channels, std::int64_t out_channels, std::int64_t kernel,
         std::int64_t stride, std::int64_t padding);

  std::string kind() const override { return "conv2d"; }
  Tensor forward(const Tensor& x, bool keep_cache) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  std::vector<Parameter*> parameters() override { return {&weight_, &bias_}; }
  nlohmann::json describe() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }
  void init(Rng& rng) override;
  void clear_cache() override { input_ = Tensor(); }

 private:
  std::int64_t in_, out_, k_, stride_, pad_;
  Parameter weight_, bias_;
  Tensor input_;
};

class ReLU final : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  Tensor forward(const Tensor& x, bool keep_cache) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  nlohmann::json describe() const override { return {{"kind", kind()}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }
  void clear_cache() override { output_ = Tensor(); }

 private:
  Tensor output_;
};

// B×C×H×W -> B×C mean over spatial positions.
class GlobalAvgPool final : public Layer {
 public:
  std::string kind() const override { return "global_avg_pool"; }
  Tensor forward(const Tensor& x, bool keep_cache) override;
  Tensor backward(const Tensor& grad_out, bool need_input_grad) override;
  nlohmann::json describe() const override { return {{"kind", kind()}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
  void clear_cache() override { in_shape_.clear(); }

 private:
  Shape in_shape_;
};

std::unique_ptr<Layer> make_layer(const nlohmann::json& desc);

class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  // Builds the layer stack from an architecture description (list of layer
  // descriptors as produced by describe()).
  static Sequential from_description(const nlohmann::json& arch);

  void add(std::unique_ptr<Layer> layer);
  Tensor forward(const Tensor& x, bool keep_cache);
  Tensor backward(const Tensor& grad_out, bool need_input_grad);
  void init(Rng& rng);
  void clear_cache();

  // Parameters named "<layer index>.<weight|bias>".
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  nlohmann::json describe() const;
  std::size_t num_layers() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct LossResult {
  Real mean_loss = 0;
  Tensor grad;  // dL/dlogits for the mean loss
};

// Softmax cross-entropy averaged over the batch.
LossResult cross_entropy(const Tensor& logits, std::span<const int> labels);

// Per-row class-1 probability for two-class logits.
std::vector<Real> softmax(std::span<const Real> logits_row);

}  // namespace hdff
