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

// Dense forward/backward kernels for the layer types of a plain
// conv -> batch-norm -> ReLU chain. All kernels are templated on the scalar
// type so the same code runs in float for training and in double for
// finite-difference checks.

#include <cmath>
#include <span>
#include <string>

#include "rejuv/tensor.hpp"

namespace rejuv {

enum class Mode { training, eval };

inline Index conv_output_size(Index in, Index kernel, Index stride, Index padding) {
  require_shape(stride >= 1, "convolution stride must be >= 1");
  require_shape(padding >= 0, "convolution padding must be >= 0");
  const Index span = in + 2 * padding - kernel;
  require_shape(span >= 0, "kernel " + std::to_string(kernel) + " larger than padded input " +
                               std::to_string(in + 2 * padding));
  return span / stride + 1;
}

namespace detail {

// One sample unfolded into (in_ch*kh*kw) x (oh*ow) columns.
template <typename Scalar>
void im2col(const Tensor<Scalar>& input, Index n, Index kh, Index kw, Index stride, Index padding,
            Index oh, Index ow, Matrix<Scalar>& cols) {
  const Index channels = input.dim(1), height = input.dim(2), width = input.dim(3);
  cols.setZero(channels * kh * kw, oh * ow);
  for (Index c = 0; c < channels; ++c) {
    for (Index i = 0; i < kh; ++i) {
      for (Index j = 0; j < kw; ++j) {
        const Index row = (c * kh + i) * kw + j;
        for (Index y = 0; y < oh; ++y) {
          const Index iy = y * stride - padding + i;
          if (iy < 0 || iy >= height) continue;
          for (Index x = 0; x < ow; ++x) {
            const Index ix = x * stride - padding + j;
            if (ix < 0 || ix >= width) continue;
            cols(row, y * ow + x) = input(n, c, iy, ix);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const Matrix<Scalar>& cols, Index n, Index kh, Index kw, Index stride,
                Index padding, Index oh, Index ow, Tensor<Scalar>& d_input) {
  const Index channels = d_input.dim(1), height = d_input.dim(2), width = d_input.dim(3);
  for (Index c = 0; c < channels; ++c) {
    for (Index i = 0; i < kh; ++i) {
      for (Index j = 0; j < kw; ++j) {
        const Index row = (c * kh + i) * kw + j;
        for (Index y = 0; y < oh; ++y) {
          const Index iy = y * stride - padding + i;
          if (iy < 0 || iy >= height) continue;
          for (Index x = 0; x < ow; ++x) {
            const Index ix = x * stride - padding + j;
            if (ix < 0 || ix >= width) continue;
            d_input(n, c, iy, ix) += cols(row, y * ow + x);
          }
        }
      }
    }
  }
}

template <typename Scalar>
Eigen::Map<const RowMatrix<Scalar>> weight_matrix(const Tensor<Scalar>& weight) {
  return weight.as_matrix();
}

}  // namespace detail

/// Cross-correlation over NCHW input with an (out, in, kh, kw) kernel, one group, no bias.
template <typename Scalar>
Tensor<Scalar> conv_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                            Index stride = 1, Index padding = 0) {
  require_shape(input.dim(1) == weight.dim(1),
                "conv_forward: input " + input.shape().str() + " has " +
                    std::to_string(input.dim(1)) + " channels but weight " +
                    weight.shape().str() + " expects " + std::to_string(weight.dim(1)));
  const Index kh = weight.dim(2), kw = weight.dim(3);
  const Index oh = conv_output_size(input.dim(2), kh, stride, padding);
  const Index ow = conv_output_size(input.dim(3), kw, stride, padding);
  Tensor<Scalar> out(input.dim(0), weight.dim(0), oh, ow);
  if (out.empty() || input.dim(1) == 0) return out;
  const auto w = detail::weight_matrix(weight);
  Matrix<Scalar> cols;
  for (Index n = 0; n < input.dim(0); ++n) {
    detail::im2col(input, n, kh, kw, stride, padding, oh, ow, cols);
    out.sample(n).noalias() = w * cols;
  }
  return out;
}

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> d_input;
  Tensor<Scalar> d_weight;
};

template <typename Scalar>
ConvGrads<Scalar> conv_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                                const Tensor<Scalar>& d_out, Index stride = 1,
                                Index padding = 0) {
  const Index kh = weight.dim(2), kw = weight.dim(3);
  const Index oh = d_out.dim(2), ow = d_out.dim(3);
  require_shape(d_out.dim(0) == input.dim(0) && d_out.dim(1) == weight.dim(0),
                "conv_backward: upstream gradient " + d_out.shape().str() +
                    " does not match input " + input.shape().str() + " / weight " +
                    weight.shape().str());
  ConvGrads<Scalar> g{Tensor<Scalar>(input.shape()), Tensor<Scalar>(weight.shape())};
  if (d_out.empty() || input.dim(1) == 0) return g;
  const auto w = detail::weight_matrix(weight);
  auto dw = g.d_weight.as_matrix();
  Matrix<Scalar> cols;
  Matrix<Scalar> d_cols;
  for (Index n = 0; n < input.dim(0); ++n) {
    detail::im2col(input, n, kh, kw, stride, padding, oh, ow, cols);
    const auto delta = d_out.sample(n);
    dw.noalias() += delta * cols.transpose();
    d_cols.noalias() = w.transpose() * delta;
    detail::col2im_add(d_cols, n, kh, kw, stride, padding, oh, ow, g.d_input);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization

template <typename Scalar>
struct BatchNormStats {
  Vector<Scalar> mean;
  Vector<Scalar> var;

  static BatchNormStats identity(Index channels) {
    return {Vector<Scalar>::Zero(channels), Vector<Scalar>::Ones(channels)};
  }
};

template <typename Scalar>
struct BatchNormCache {
  Tensor<Scalar> xhat;
  Vector<Scalar> mean;
  Vector<Scalar> var;
  Vector<Scalar> inv_std;
};

/// v = gamma * (u - mean) / sqrt(var + eps) + beta, per channel. Training mode
/// normalizes with biased batch statistics over (batch, height, width) and
/// fills `cache`; eval mode uses `running`.
template <typename Scalar>
Tensor<Scalar> batchnorm_forward(const Tensor<Scalar>& u, const Vector<Scalar>& gamma,
                                 const Vector<Scalar>& beta, Scalar eps, Mode mode,
                                 const BatchNormStats<Scalar>& running,
                                 BatchNormCache<Scalar>* cache = nullptr) {
  if (!(eps > Scalar(0))) throw std::invalid_argument("batchnorm eps must be > 0");
  const Index batch = u.dim(0), channels = u.dim(1), plane = u.dim(2) * u.dim(3);
  require_shape(gamma.size() == channels && beta.size() == channels,
                "batchnorm_forward: " + std::to_string(channels) + " channels but gamma/beta of " +
                    std::to_string(gamma.size()) + "/" + std::to_string(beta.size()));
  Vector<Scalar> mean(channels), var(channels);
  if (mode == Mode::training) {
    require_shape(batch * plane > 0, "batchnorm_forward: empty batch");
    const Scalar m = Scalar(batch * plane);
    for (Index c = 0; c < channels; ++c) {
      Scalar s = 0;
      for (Index n = 0; n < batch; ++n) s += u.sample(n).row(c).sum();
      mean[c] = s / m;
      Scalar q = 0;
      for (Index n = 0; n < batch; ++n) {
        q += (u.sample(n).row(c).array() - mean[c]).square().sum();
      }
      var[c] = q / m;
    }
  } else {
    require_shape(running.mean.size() == channels && running.var.size() == channels,
                  "batchnorm_forward: running statistics do not match channel count");
    mean = running.mean;
    var = running.var;
  }
  const Vector<Scalar> inv_std = (var.array() + eps).rsqrt().matrix();
  Tensor<Scalar> xhat(u.shape());
  Tensor<Scalar> v(u.shape());
  for (Index n = 0; n < batch; ++n) {
    auto xs = xhat.sample(n);
    xs = ((u.sample(n).colwise() - mean).array().colwise() * inv_std.array()).matrix();
    v.sample(n) = ((xs.array().colwise() * gamma.array()).colwise() + beta.array()).matrix();
  }
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->mean = std::move(mean);
    cache->var = std::move(var);
    cache->inv_std = inv_std;
  }
  return v;
}

template <typename Scalar>
struct BatchNormGrads {
  Tensor<Scalar> d_u;
  Vector<Scalar> d_gamma;
  Vector<Scalar> d_beta;
};

/// Backward through training-mode batch normalization.
template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const Tensor<Scalar>& d_v, const Vector<Scalar>& gamma,
                                          const BatchNormCache<Scalar>& cache) {
  const Index batch = d_v.dim(0), channels = d_v.dim(1), plane = d_v.dim(2) * d_v.dim(3);
  const Scalar m = Scalar(batch * plane);
  BatchNormGrads<Scalar> g{Tensor<Scalar>(d_v.shape()), Vector<Scalar>::Zero(channels),
                           Vector<Scalar>::Zero(channels)};
  Vector<Scalar> sum_dxhat = Vector<Scalar>::Zero(channels);
  Vector<Scalar> sum_dxhat_xhat = Vector<Scalar>::Zero(channels);
  for (Index n = 0; n < batch; ++n) {
    const auto dv = d_v.sample(n);
    const auto xs = cache.xhat.sample(n);
    g.d_beta += dv.rowwise().sum();
    g.d_gamma += dv.cwiseProduct(xs).rowwise().sum();
  }
  sum_dxhat = g.d_beta.cwiseProduct(gamma);
  sum_dxhat_xhat = g.d_gamma.cwiseProduct(gamma);
  for (Index n = 0; n < batch; ++n) {
    const auto dv = d_v.sample(n);
    const auto xs = cache.xhat.sample(n);
    auto du = g.d_u.sample(n);
    for (Index c = 0; c < channels; ++c) {
      du.row(c) = (cache.inv_std[c] / m) *
                  ((m * gamma[c]) * dv.row(c).array() - sum_dxhat[c] -
                   xs.row(c).array() * sum_dxhat_xhat[c])
                      .matrix();
    }
  }
  return g;
}

/// Exponential moving average of batch statistics: running <- f*running + (1-f)*batch.
template <typename Scalar>
void update_running_stats(BatchNormStats<Scalar>& running, const BatchNormCache<Scalar>& batch,
                          Scalar factor = Scalar(0.9)) {
  running.mean = factor * running.mean + (Scalar(1) - factor) * batch.mean;
  running.var = factor * running.var + (Scalar(1) - factor) * batch.var;
}

// ---------------------------------------------------------------------------
// Pointwise

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  Tensor<Scalar> y(x.shape());
  y.data() = x.data().cwiseMax(Scalar(0));
  return y;
}

/// Derivative taken as 0 at x == 0.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& d_y) {
  Tensor<Scalar> d_x(x.shape());
  d_x.data() = (x.data().array() > Scalar(0)).select(d_y.data(), Scalar(0));
  return d_x;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

// ---------------------------------------------------------------------------
// Pooling

/// Non-overlapping k x k average pooling; trailing rows/columns that do not
/// fill a window are dropped.
template <typename Scalar>
Tensor<Scalar> avg_pool_forward(const Tensor<Scalar>& x, Index k) {
  require_shape(k >= 1 && x.dim(2) >= k && x.dim(3) >= k,
                "avg_pool_forward: window " + std::to_string(k) + " on " + x.shape().str());
  const Index oh = x.dim(2) / k, ow = x.dim(3) / k;
  Tensor<Scalar> y(x.dim(0), x.dim(1), oh, ow);
  const Scalar scale = Scalar(1) / Scalar(k * k);
  for (Index n = 0; n < x.dim(0); ++n)
    for (Index c = 0; c < x.dim(1); ++c)
      for (Index i = 0; i < oh; ++i)
        for (Index j = 0; j < ow; ++j) {
          Scalar s = 0;
          for (Index a = 0; a < k; ++a)
            for (Index b = 0; b < k; ++b) s += x(n, c, i * k + a, j * k + b);
          y(n, c, i, j) = s * scale;
        }
  return y;
}

template <typename Scalar>
Tensor<Scalar> avg_pool_backward(const Tensor<Scalar>& d_y, const Shape4& input_shape, Index k) {
  Tensor<Scalar> d_x(input_shape);
  const Scalar scale = Scalar(1) / Scalar(k * k);
  for (Index n = 0; n < d_y.dim(0); ++n)
    for (Index c = 0; c < d_y.dim(1); ++c)
      for (Index i = 0; i < d_y.dim(2); ++i)
        for (Index j = 0; j < d_y.dim(3); ++j)
          for (Index a = 0; a < k; ++a)
            for (Index b = 0; b < k; ++b) d_x(n, c, i * k + a, j * k + b) = d_y(n, c, i, j) * scale;
  return d_x;
}

/// (N, C, H, W) -> (N x C) channel means.
template <typename Scalar>
Matrix<Scalar> global_avg_pool_forward(const Tensor<Scalar>& x) {
  const Index plane = x.dim(2) * x.dim(3);
  Matrix<Scalar> y(x.dim(0), x.dim(1));
  for (Index n = 0; n < x.dim(0); ++n) {
    y.row(n) = x.sample(n).rowwise().sum().transpose() / Scalar(plane);
  }
  return y;
}

template <typename Scalar>
Tensor<Scalar> global_avg_pool_backward(const Matrix<Scalar>& d_y, const Shape4& input_shape) {
  Tensor<Scalar> d_x(input_shape);
  const Index plane = input_shape[2] * input_shape[3];
  for (Index n = 0; n < d_y.rows(); ++n) {
    auto s = d_x.sample(n);
    for (Index c = 0; c < d_y.cols(); ++c) s.row(c).setConstant(d_y(n, c) / Scalar(plane));
  }
  return d_x;
}

// ---------------------------------------------------------------------------
// Classifier and loss

/// logits (N x K) = features (N x C) * weight^T, weight is (K x C).
template <typename Scalar>
Matrix<Scalar> linear_forward(const Matrix<Scalar>& features, const Matrix<Scalar>& weight) {
  require_shape(features.cols() == weight.cols(),
                "linear_forward: features have " + std::to_string(features.cols()) +
                    " columns, classifier expects " + std::to_string(weight.cols()));
  return features * weight.transpose();
}

template <typename Scalar>
struct SoftmaxLoss {
  Scalar loss = 0;
  Matrix<Scalar> d_logits;
};

/// Mean cross-entropy of softmax(logits) against integer labels.
template <typename Scalar>
SoftmaxLoss<Scalar> softmax_cross_entropy(const Matrix<Scalar>& logits, std::span<const int> labels) {
  require_shape(static_cast<Index>(labels.size()) == logits.rows(),
                "softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(logits.rows()) + " rows");
  const Index batch = logits.rows(), classes = logits.cols();
  SoftmaxLoss<Scalar> out;
  out.d_logits.resize(batch, classes);
  for (Index n = 0; n < batch; ++n) {
    const int y = labels[static_cast<std::size_t>(n)];
    require_shape(y >= 0 && y < classes, "softmax_cross_entropy: label out of range");
    const Scalar mx = logits.row(n).maxCoeff();
    const auto e = (logits.row(n).array() - mx).exp();
    const Scalar z = e.sum();
    out.loss += std::log(z) - (logits(n, y) - mx);
    out.d_logits.row(n) = (e / z).matrix();
    out.d_logits(n, y) -= Scalar(1);
  }
  out.loss /= Scalar(batch);
  out.d_logits /= Scalar(batch);
  return out;
}

}  // namespace rejuv
