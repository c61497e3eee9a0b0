/*
 * Copyright 2026 The rejuv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "rejuv/arch.hpp"
#include "rejuv/mixed.hpp"
#include "rejuv/ops.hpp"

namespace rejuv {

/// Trainable state of one conv + BN unit.
template <typename Scalar>
struct LayerParams {
  Tensor<Scalar> weight;  ///< (out_ch, in_ch, kh, kw)
  Vector<Scalar> gamma;
  Vector<Scalar> beta;
  Scalar eps = Scalar(1e-5);
  BatchNormStats<Scalar> running;

  Tensor<Scalar> momentum_weight;
  Vector<Scalar> momentum_gamma;
  Vector<Scalar> momentum_beta;

  Index out_channels() const { return weight.dim(0); }

  void validate() const {
    require_shape(gamma.size() == weight.dim(0) && beta.size() == weight.dim(0),
                  "layer params: gamma/beta length must equal weight out_ch " + weight.shape().str());
    require_shape(momentum_weight.shape() == weight.shape() && momentum_gamma.size() == gamma.size() &&
                      momentum_beta.size() == beta.size(),
                  "layer params: momentum buffers do not mirror parameters");
    if (!(eps > Scalar(0))) throw std::invalid_argument("layer params: eps must be > 0");
  }

  void zero_momentum() {
    momentum_weight = Tensor<Scalar>(weight.shape());
    momentum_gamma.setZero(gamma.size());
    momentum_beta.setZero(beta.size());
  }

  template <typename Other>
  LayerParams<Other> cast() const {
    LayerParams<Other> o;
    o.weight = weight.template cast<Other>();
    o.gamma = gamma.template cast<Other>();
    o.beta = beta.template cast<Other>();
    o.eps = static_cast<Other>(eps);
    o.running = {running.mean.template cast<Other>(), running.var.template cast<Other>()};
    o.momentum_weight = momentum_weight.template cast<Other>();
    o.momentum_gamma = momentum_gamma.template cast<Other>();
    o.momentum_beta = momentum_beta.template cast<Other>();
    return o;
  }
};

/// Final linear layer, (num_classes x last width), no bias.
template <typename Scalar>
struct ClassifierParams {
  Matrix<Scalar> weight;
  Matrix<Scalar> momentum;
};

template <typename Scalar>
struct NetworkParams {
  std::vector<LayerParams<Scalar>> layers;
  ClassifierParams<Scalar> classifier;

  std::vector<Vector<Scalar>> gammas() const {
    std::vector<Vector<Scalar>> g;
    for (const auto& l : layers) g.push_back(l.gamma);
    return g;
  }

  void zero_momentum() {
    for (auto& l : layers) l.zero_momentum();
    classifier.momentum.setZero(classifier.weight.rows(), classifier.weight.cols());
  }

  template <typename Other>
  NetworkParams<Other> cast() const {
    NetworkParams<Other> o;
    for (const auto& l : layers) o.layers.push_back(l.template cast<Other>());
    o.classifier.weight = classifier.weight.template cast<Other>();
    o.classifier.momentum = classifier.momentum.template cast<Other>();
    return o;
  }
};

template <typename Scalar>
struct LayerGrads {
  Tensor<Scalar> weight;
  Vector<Scalar> gamma;
  Vector<Scalar> beta;
};

template <typename Scalar>
struct GradientSet {
  std::vector<LayerGrads<Scalar>> layers;
  Matrix<Scalar> classifier;
};

/// Channel partitions of the current rejuvenation generation and the scheme
/// that trains them. An empty optional means the layer is plain.
struct MixedState {
  SchemeConfig scheme;
  std::vector<std::optional<ChannelPartition>> partitions;

  const ChannelPartition* partition(std::size_t layer) const {
    if (layer >= partitions.size() || !partitions[layer]) return nullptr;
    return &*partitions[layer];
  }
};

// ---------------------------------------------------------------------------
// Initialization

/// Normal(0, 2/fan_in) tensor, fan_in = dims 1..3.
template <typename Scalar, typename Rng>
Tensor<Scalar> he_normal(const Shape4& shape, Rng& rng) {
  Tensor<Scalar> t(shape);
  const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
  if (fan_in <= 0) return t;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (Index k = 0; k < t.size(); ++k) t.data()[k] = static_cast<Scalar>(dist(rng));
  return t;
}

template <typename Scalar, typename Rng>
LayerParams<Scalar> init_layer(const LayerSpec& spec, Rng& rng, Scalar gamma0 = Scalar(0.5)) {
  LayerParams<Scalar> p;
  p.weight = he_normal<Scalar>(Shape4{{spec.out_ch, spec.in_ch, spec.kernel_h, spec.kernel_w}}, rng);
  p.gamma = Vector<Scalar>::Constant(spec.out_ch, gamma0);
  p.beta = Vector<Scalar>::Zero(spec.out_ch);
  p.running = BatchNormStats<Scalar>::identity(spec.out_ch);
  p.zero_momentum();
  return p;
}

template <typename Scalar, typename Rng>
Matrix<Scalar> init_classifier_weight(Index classes, Index features, Rng& rng) {
  Matrix<Scalar> w(classes, features);
  std::normal_distribution<double> dist(0.0, std::sqrt(1.0 / static_cast<double>(features)));
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
  return w;
}

template <typename Scalar, typename Rng>
NetworkParams<Scalar> init_network(const ArchSpec& arch, Rng& rng, Scalar gamma0 = Scalar(0.5)) {
  NetworkParams<Scalar> p;
  for (const auto& l : arch.layers) p.layers.push_back(init_layer<Scalar>(l, rng, gamma0));
  p.classifier.weight = init_classifier_weight<Scalar>(arch.num_classes, arch.layers.back().out_ch, rng);
  p.classifier.momentum.setZero(p.classifier.weight.rows(), p.classifier.weight.cols());
  return p;
}

template <typename Scalar>
void check_consistent(const NetworkParams<Scalar>& params, const ArchSpec& arch) {
  require_shape(params.layers.size() == arch.depth(), "network params depth does not match architecture");
  for (std::size_t i = 0; i < arch.depth(); ++i) {
    const auto& l = arch.layers[i];
    const auto& w = params.layers[i].weight;
    require_shape(w.shape() == Shape4{{l.out_ch, l.in_ch, l.kernel_h, l.kernel_w}},
                  "layer " + std::to_string(i) + " weight " + w.shape().str() + " does not match architecture");
    params.layers[i].validate();
  }
  require_shape(params.classifier.weight.rows() == arch.num_classes &&
                    params.classifier.weight.cols() == arch.layers.back().out_ch,
                "classifier weight does not match architecture");
}

// ---------------------------------------------------------------------------
// Forward / backward

template <typename Scalar>
struct LayerCache {
  Tensor<Scalar> input;
  MixedConvCache<Scalar> conv;
  BatchNormCache<Scalar> bn;
  Tensor<Scalar> pre_activation;  ///< BN output
  Shape4 activation_shape;        ///< before pooling
};

template <typename Scalar>
struct ForwardCache {
  Mode mode = Mode::training;
  std::vector<LayerCache<Scalar>> layers;
  Shape4 final_shape;
  Matrix<Scalar> features;
  Matrix<Scalar> logits;
};

/// conv -> BN -> ReLU [-> avg pool] per layer, then global average pooling
/// and the linear classifier.
template <typename Scalar>
ForwardCache<Scalar> network_forward(const NetworkParams<Scalar>& params, const ArchSpec& arch,
                                     const Tensor<Scalar>& input, Mode mode, const MixedState* mixing = nullptr) {
  check_consistent(params, arch);
  require_shape(input.dim(1) == arch.input_channels && input.dim(2) == arch.input_spatial.h &&
                    input.dim(3) == arch.input_spatial.w,
                "network_forward: input " + input.shape().str() + " does not match architecture input");
  const SchemeConfig scheme = mixing ? mixing->scheme : SchemeConfig{};
  ForwardCache<Scalar> cache;
  cache.mode = mode;
  cache.layers.resize(arch.depth());
  Tensor<Scalar> x = input;
  for (std::size_t i = 0; i < arch.depth(); ++i) {
    const auto& spec = arch.layers[i];
    const auto& p = params.layers[i];
    auto& lc = cache.layers[i];
    const ChannelPartition* part = mixing ? mixing->partition(i) : nullptr;
    auto u = mixed_conv_forward(scheme, part, x, p.weight, spec.stride, spec.padding, &lc.conv);
    lc.input = std::move(x);
    lc.pre_activation =
        batchnorm_forward(u, p.gamma, p.beta, p.eps, mode, p.running, mode == Mode::training ? &lc.bn : nullptr);
    auto a = relu(lc.pre_activation);
    lc.activation_shape = a.shape();
    x = spec.pool > 1 ? avg_pool_forward(a, spec.pool) : std::move(a);
  }
  cache.final_shape = x.shape();
  cache.features = global_avg_pool_forward(x);
  cache.logits = linear_forward(cache.features, params.classifier.weight);
  return cache;
}

template <typename Scalar>
struct BackwardResult {
  Scalar loss = 0;
  GradientSet<Scalar> grads;
};

/// Mean softmax cross-entropy and exact reverse-mode gradients.
template <typename Scalar>
BackwardResult<Scalar> network_backward(const NetworkParams<Scalar>& params, const ArchSpec& arch,
                                        const ForwardCache<Scalar>& cache, std::span<const int> labels,
                                        const MixedState* mixing = nullptr) {
  if (cache.mode != Mode::training) {
    throw std::logic_error("network_backward: cache comes from an eval-mode forward pass");
  }
  const SchemeConfig scheme = mixing ? mixing->scheme : SchemeConfig{};
  BackwardResult<Scalar> out;
  auto sl = softmax_cross_entropy(cache.logits, labels);
  out.loss = sl.loss;
  out.grads.classifier = sl.d_logits.transpose() * cache.features;
  const Matrix<Scalar> d_features = sl.d_logits * params.classifier.weight;
  Tensor<Scalar> d_x = global_avg_pool_backward(d_features, cache.final_shape);
  out.grads.layers.resize(arch.depth());
  for (std::size_t k = arch.depth(); k-- > 0;) {
    const auto& spec = arch.layers[k];
    const auto& p = params.layers[k];
    const auto& lc = cache.layers[k];
    Tensor<Scalar> d_a = spec.pool > 1 ? avg_pool_backward(d_x, lc.activation_shape, spec.pool) : std::move(d_x);
    const auto d_v = relu_backward(lc.pre_activation, d_a);
    auto bg = batchnorm_backward(d_v, p.gamma, lc.bn);
    const ChannelPartition* part = mixing ? mixing->partition(k) : nullptr;
    auto cg = mixed_conv_backward(scheme, part, lc.input, p.weight, bg.d_u, lc.conv, spec.stride, spec.padding);
    out.grads.layers[k] = {std::move(cg.d_weight), std::move(bg.d_gamma), std::move(bg.d_beta)};
    d_x = std::move(cg.d_input);
  }
  return out;
}

/// Folds the batch statistics of a training-mode pass into the running ones.
template <typename Scalar>
void commit_running_stats(NetworkParams<Scalar>& params, const ForwardCache<Scalar>& cache,
                          Scalar factor = Scalar(0.9)) {
  if (cache.mode != Mode::training) return;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    update_running_stats(params.layers[i].running, cache.layers[i].bn, factor);
  }
}

// ---------------------------------------------------------------------------
// Optimizer

/// Momentum SGD (v <- m*v + g; theta <- theta - lr*v). Penalized layers add
/// the L1 subgradient lambda*sign(gamma) to their gamma gradient, sign(0) = 0.
/// No clipping at zero: a step larger than |gamma| flips its sign.
template <typename Scalar>
void sgd_step(NetworkParams<Scalar>& params, const GradientSet<Scalar>& grads, Scalar lr, Scalar momentum,
              Scalar lambda, const std::vector<bool>& penalized) {
  if (lr < Scalar(0)) throw std::invalid_argument("sgd_step: negative learning rate");
  if (lambda < Scalar(0)) throw std::invalid_argument("sgd_step: negative lambda");
  require_shape(grads.layers.size() == params.layers.size() && penalized.size() == params.layers.size(),
                "sgd_step: gradient set does not mirror parameters");
  auto update = [&](auto& theta, auto& velocity, const auto& g) {
    velocity = momentum * velocity + g;
    theta -= lr * velocity;
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& p = params.layers[i];
    const auto& g = grads.layers[i];
    require_shape(g.weight.shape() == p.weight.shape() && g.gamma.size() == p.gamma.size(),
                  "sgd_step: layer " + std::to_string(i) + " gradient shape mismatch");
    update(p.weight.data(), p.momentum_weight.data(), g.weight.data());
    Vector<Scalar> g_gamma = g.gamma;
    if (penalized[i] && lambda > Scalar(0)) {
      g_gamma += lambda * p.gamma.unaryExpr([](Scalar v) { return Scalar((v > 0) - (v < 0)); });
    }
    update(p.gamma, p.momentum_gamma, g_gamma);
    update(p.beta, p.momentum_beta, g.beta);
  }
  update(params.classifier.weight, params.classifier.momentum, grads.classifier);
}

inline std::vector<bool> penalized_layers(const ArchSpec& arch) {
  std::vector<bool> v;
  for (const auto& l : arch.layers) v.push_back(l.penalized);
  return v;
}

}  // namespace rejuv
