// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/nn.hpp"

#include <algorithm>
#include <cmath>

namespace hdff {

namespace {

void uniform_fill(Tensor& t, Rng& rng, Real bound) {
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
}

void expect_rank(const Tensor& x, std::size_t rank, const char* layer) {
  if (x.rank() != rank)
    throw Error(std::string(layer) + ": expected rank-" + std::to_string(rank) + " input, got " +
                shape_str(x.shape()));
}

}  // namespace

// ---------------------------------------------------------------- Linear

Linear::Linear(std::int64_t in_features, std::int64_t out_features)
    : in_(in_features),
      out_(out_features),
      weight_("weight", {out_features, in_features}),
      bias_("bias", {out_features}) {
  if (in_ <= 0 || out_ <= 0) throw Error("linear: feature counts must be positive");
}

void Linear::init(Rng& rng) {
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(in_));
  uniform_fill(weight_.value, rng, bound);
  uniform_fill(bias_.value, rng, bound);
}

Tensor Linear::forward(const Tensor& x, bool keep_cache) {
  expect_rank(x, 2, "linear");
  if (x.dim(1) != in_)
    throw Error("linear: input width " + std::to_string(x.dim(1)) + " != " + std::to_string(in_));
  const auto batch = x.dim(0);
  Tensor y({batch, out_});
  const Real* w = weight_.value.data();
  const Real* b = bias_.value.data();
  for (std::int64_t n = 0; n < batch; ++n) {
    const Real* xr = x.data() + n * in_;
    Real* yr = y.data() + n * out_;
    for (std::int64_t o = 0; o < out_; ++o) {
      const Real* wr = w + o * in_;
      Real acc = 0;
      for (std::int64_t i = 0; i < in_; ++i) acc += wr[i] * xr[i];
      yr[o] = acc + b[o];
    }
  }
  if (keep_cache) input_ = x;
  return y;
}

Tensor Linear::backward(const Tensor& grad_out, bool need_input_grad) {
  if (input_.empty()) throw Error("linear: backward without cached forward");
  const auto batch = input_.dim(0);
  Real* gw = weight_.grad.data();
  Real* gb = bias_.grad.data();
  const Real* w = weight_.value.data();
  Tensor gx;
  if (need_input_grad) gx = Tensor({batch, in_});
  for (std::int64_t n = 0; n < batch; ++n) {
    const Real* xr = input_.data() + n * in_;
    const Real* gr = grad_out.data() + n * out_;
    for (std::int64_t o = 0; o < out_; ++o) {
      const Real g = gr[o];
      gb[o] += g;
      Real* gwr = gw + o * in_;
      for (std::int64_t i = 0; i < in_; ++i) gwr[i] += g * xr[i];
      if (need_input_grad) {
        Real* gxr = gx.data() + n * in_;
        const Real* wr = w + o * in_;
        for (std::int64_t i = 0; i < in_; ++i) gxr[i] += g * wr[i];
      }
    }
  }
  return gx;
}

nlohmann::json Linear::describe() const {
  return {{"kind", kind()}, {"in", in_}, {"out", out_}};
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::int64_t in_channels, std::int64_t out_channels, std::int64_t kernel,
               std::int64_t stride, std::int64_t padding)
    : in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(padding),
      weight_("weight", {out_channels, in_channels, kernel, kernel}),
      bias_("bias", {out_channels}) {
  if (in_ <= 0 || out_ <= 0 || k_ <= 0 || stride_ <= 0 || pad_ < 0)
    throw Error("conv2d: invalid geometry");
}

void Conv2d::init(Rng& rng) {
  const Real bound = 1.0 / std::sqrt(static_cast<Real>(in_ * k_ * k_));
  uniform_fill(weight_.value, rng, bound);
  uniform_fill(bias_.value, rng, bound);
}

Tensor Conv2d::forward(const Tensor& x, bool keep_cache) {
  expect_rank(x, 4, "conv2d");
  if (x.dim(1) != in_)
    throw Error("conv2d: input channels " + std::to_string(x.dim(1)) + " != " + std::to_string(in_));
  const auto batch = x.dim(0), h = x.dim(2), w = x.dim(3);
  const auto oh = (h + 2 * pad_ - k_) / stride_ + 1;
  const auto ow = (w + 2 * pad_ - k_) / stride_ + 1;
  if (oh <= 0 || ow <= 0) throw Error("conv2d: input " + shape_str(x.shape()) + " too small");
  Tensor y({batch, out_, oh, ow});
  const Real* wt = weight_.value.data();
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t o = 0; o < out_; ++o) {
      Real* yp = y.data() + ((n * out_ + o) * oh) * ow;
      std::fill(yp, yp + oh * ow, bias_.value[o]);
      for (std::int64_t c = 0; c < in_; ++c) {
        const Real* xp = x.data() + ((n * in_ + c) * h) * w;
        const Real* wk = wt + ((o * in_ + c) * k_) * k_;
        for (std::int64_t ky = 0; ky < k_; ++ky) {
          for (std::int64_t kx = 0; kx < k_; ++kx) {
            const Real wv = wk[ky * k_ + kx];
            for (std::int64_t oy = 0; oy < oh; ++oy) {
              const auto iy = oy * stride_ + ky - pad_;
              if (iy < 0 || iy >= h) continue;
              const Real* xrow = xp + iy * w;
              Real* yrow = yp + oy * ow;
              for (std::int64_t ox = 0; ox < ow; ++ox) {
                const auto ix = ox * stride_ + kx - pad_;
                if (ix < 0 || ix >= w) continue;
                yrow[ox] += wv * xrow[ix];
              }
            }
          }
        }
      }
    }
  }
  if (keep_cache) input_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out, bool need_input_grad) {
  if (input_.empty()) throw Error("conv2d: backward without cached forward");
  const auto batch = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
  const auto oh = grad_out.dim(2), ow = grad_out.dim(3);
  Tensor gx;
  if (need_input_grad) gx = Tensor(input_.shape());
  Real* gw = weight_.grad.data();
  const Real* wt = weight_.value.data();
  for (std::int64_t n = 0; n < batch; ++n) {
    for (std::int64_t o = 0; o < out_; ++o) {
      const Real* gp = grad_out.data() + ((n * out_ + o) * oh) * ow;
      Real gsum = 0;
      for (std::int64_t i = 0; i < oh * ow; ++i) gsum += gp[i];
      bias_.grad[o] += gsum;
      for (std::int64_t c = 0; c < in_; ++c) {
        const Real* xp = input_.data() + ((n * in_ + c) * h) * w;
        Real* gxp = need_input_grad ? gx.data() + ((n * in_ + c) * h) * w : nullptr;
        Real* gwk = gw + ((o * in_ + c) * k_) * k_;
        const Real* wk = wt + ((o * in_ + c) * k_) * k_;
        for (std::int64_t ky = 0; ky < k_; ++ky) {
          for (std::int64_t kx = 0; kx < k_; ++kx) {
            Real acc = 0;
            const Real wv = wk[ky * k_ + kx];
            for (std::int64_t oy = 0; oy < oh; ++oy) {
              const auto iy = oy * stride_ + ky - pad_;
              if (iy < 0 || iy >= h) continue;
              const Real* xrow = xp + iy * w;
              const Real* grow = gp + oy * ow;
              Real* gxrow = gxp ? gxp + iy * w : nullptr;
              for (std::int64_t ox = 0; ox < ow; ++ox) {
                const auto ix = ox * stride_ + kx - pad_;
                if (ix < 0 || ix >= w) continue;
                acc += grow[ox] * xrow[ix];
                if (gxrow) gxrow[ix] += grow[ox] * wv;
              }
            }
            gwk[ky * k_ + kx] += acc;
          }
        }
      }
    }
  }
  return gx;
}

nlohmann::json Conv2d::describe() const {
  return {{"kind", kind()}, {"in", in_},         {"out", out_},
          {"kernel", k_},   {"stride", stride_}, {"padding", pad_}};
}

// ---------------------------------------------------------------- ReLU

Tensor ReLU::forward(const Tensor& x, bool keep_cache) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0 ? v : 0;
  if (keep_cache) output_ = y;
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out, bool) {
  if (output_.empty()) throw Error("relu: backward without cached forward");
  Tensor g = grad_out;
  for (std::int64_t i = 0; i < g.size(); ++i)
    if (!(output_[i] > 0)) g[i] = 0;
  return g;
}

// ---------------------------------------------------------------- pooling

Tensor GlobalAvgPool::forward(const Tensor& x, bool keep_cache) {
  expect_rank(x, 4, "global_avg_pool");
  const auto batch = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor y({batch, c});
  for (std::int64_t i = 0; i < batch * c; ++i) {
    const Real* p = x.data() + i * hw;
    Real acc = 0;
    for (std::int64_t j = 0; j < hw; ++j) acc += p[j];
    y[i] = acc / static_cast<Real>(hw);
  }
  if (keep_cache) in_shape_ = x.shape();
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out, bool) {
  if (in_shape_.empty()) throw Error("global_avg_pool: backward without cached forward");
  Tensor gx(in_shape_);
  const auto bc = in_shape_[0] * in_shape_[1], hw = in_shape_[2] * in_shape_[3];
  const Real scale = 1.0 / static_cast<Real>(hw);
  for (std::int64_t i = 0; i < bc; ++i) {
    Real* p = gx.data() + i * hw;
    std::fill(p, p + hw, grad_out[i] * scale);
  }
  return gx;
}

// ---------------------------------------------------------------- factory

std::unique_ptr<Layer> make_layer(const nlohmann::json& desc) {
  const auto kind = desc.at("kind").get<std::string>();
  if (kind == "linear") return std::make_unique<Linear>(desc.at("in"), desc.at("out"));
  if (kind == "conv2d")
    return std::make_unique<Conv2d>(desc.at("in"), desc.at("out"), desc.at("kernel"),
                                    desc.at("stride"), desc.at("padding"));
  if (kind == "relu") return std::make_unique<ReLU>();
  if (kind == "global_avg_pool") return std::make_unique<GlobalAvgPool>();
  throw FormatError("unknown layer kind '" + kind + "'");
}

// ---------------------------------------------------------------- Sequential

Sequential::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential tmp(other);
    layers_ = std::move(tmp.layers_);
  }
  return *this;
}

Sequential Sequential::from_description(const nlohmann::json& arch) {
  if (!arch.is_array()) throw FormatError("architecture description must be a list of layers");
  Sequential s;
  for (const auto& d : arch) s.add(make_layer(d));
  return s;
}

void Sequential::add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

Tensor Sequential::forward(const Tensor& x, bool keep_cache) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, keep_cache);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out, bool need_input_grad) {
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, need_input_grad || i > 0);
  return g;
}

void Sequential::init(Rng& rng) {
  for (auto& l : layers_) l->init(rng);
}

void Sequential::clear_cache() {
  for (auto& l : layers_) l->clear_cache();
}

std::vector<Parameter*> Sequential::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (auto* p : layers_[i]->parameters()) {
      const auto dot = p->name.rfind('.');
      const auto leaf = dot == std::string::npos ? p->name : p->name.substr(dot + 1);
      p->name = std::to_string(i) + "." + leaf;
      out.push_back(p);
    }
  }
  return out;
}

std::vector<const Parameter*> Sequential::parameters() const {
  auto mut = const_cast<Sequential*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

nlohmann::json Sequential::describe() const {
  auto arch = nlohmann::json::array();
  for (const auto& l : layers_) arch.push_back(l->describe());
  return arch;
}

// ---------------------------------------------------------------- loss

std::vector<Real> softmax(std::span<const Real> row) {
  const Real m = *std::max_element(row.begin(), row.end());
  std::vector<Real> p(row.size());
  Real z = 0;
  for (std::size_t i = 0; i < row.size(); ++i) z += (p[i] = std::exp(row[i] - m));
  for (auto& v : p) v /= z;
  return p;
}

LossResult cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || static_cast<std::size_t>(logits.dim(0)) != labels.size())
    throw Error("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                std::to_string(labels.size()) + " labels");
  const auto batch = logits.dim(0), classes = logits.dim(1);
  LossResult r;
  r.grad = Tensor(logits.shape());
  Real total = 0;
  for (std::int64_t n = 0; n < batch; ++n) {
    const int y = labels[static_cast<std::size_t>(n)];
    if (y < 0 || y >= classes) throw Error("cross_entropy: label out of range");
    const Real* row = logits.data() + n * classes;
    const Real m = *std::max_element(row, row + classes);
    Real z = 0;
    for (std::int64_t c = 0; c < classes; ++c) z += std::exp(row[c] - m);
    const Real log_z = m + std::log(z);
    total += log_z - row[y];
    for (std::int64_t c = 0; c < classes; ++c) {
      const Real p = std::exp(row[c] - log_z);
      r.grad[n * classes + c] = (p - (c == y ? 1.0 : 0.0)) / static_cast<Real>(batch);
    }
  }
  r.mean_loss = total / static_cast<Real>(batch);
  return r;
}

}  // namespace hdff
