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

// Convolution variants for layers whose channels are split into survived (S)
// and rejuvenated (R) populations. The weight of such a layer decomposes into
// four blocks W_{S->S}, W_{R->S}, W_{S->R}, W_{R->R}, indexed as
// W_{from->to}: out-channels of `to`, in-channels of `from`.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rejuv/ops.hpp"

namespace rejuv {

enum class Scheme { standard, cross_removed, cross_attention };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct SchemeConfig {
  Scheme scheme = Scheme::standard;
  double attention_gain = 2.0;

  void validate() const;
};

struct ChannelPartition {
  std::vector<Index> in_s;
  std::vector<Index> in_r;
  std::vector<Index> out_s;
  std::vector<Index> out_r;

  /// S channels first, R channels after them.
  static ChannelPartition contiguous(Index in_s, Index in_r, Index out_s, Index out_r);

  Index in_channels() const { return static_cast<Index>(in_s.size() + in_r.size()); }
  Index out_channels() const { return static_cast<Index>(out_s.size() + out_r.size()); }

  /// Throws std::invalid_argument unless in_s/in_r and out_s/out_r partition
  /// [0, in_ch) and [0, out_ch).
  void validate(Index in_ch, Index out_ch) const;
};

/// Scheme actually run by a layer: layers without a partition always use the
/// plain (fused) convolution.
Scheme scheme_select(const ChannelPartition* partition, const SchemeConfig& config);

template <typename Scalar>
Tensor<Scalar> gather_channels(const Tensor<Scalar>& x, std::span<const Index> channels) {
  Tensor<Scalar> out(x.dim(0), static_cast<Index>(channels.size()), x.dim(2), x.dim(3));
  for (Index n = 0; n < x.dim(0); ++n) {
    auto dst = out.sample(n);
    const auto src = x.sample(n);
    for (std::size_t k = 0; k < channels.size(); ++k) dst.row(static_cast<Index>(k)) = src.row(channels[k]);
  }
  return out;
}

/// dst[:, channels[k]] += src[:, k]
template <typename Scalar>
void scatter_add_channels(const Tensor<Scalar>& src, std::span<const Index> channels, Tensor<Scalar>& dst) {
  for (Index n = 0; n < src.dim(0); ++n) {
    auto d = dst.sample(n);
    const auto s = src.sample(n);
    for (std::size_t k = 0; k < channels.size(); ++k) d.row(channels[k]) += s.row(static_cast<Index>(k));
  }
}

template <typename Scalar>
struct WeightBlocks {
  Tensor<Scalar> ss;  ///< S_in -> S_out
  Tensor<Scalar> rs;  ///< R_in -> S_out
  Tensor<Scalar> sr;  ///< S_in -> R_out
  Tensor<Scalar> rr;  ///< R_in -> R_out
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> gather_block(const Tensor<Scalar>& w, std::span<const Index> outs, std::span<const Index> ins) {
  Tensor<Scalar> b(static_cast<Index>(outs.size()), static_cast<Index>(ins.size()), w.dim(2), w.dim(3));
  for (std::size_t o = 0; o < outs.size(); ++o)
    for (std::size_t i = 0; i < ins.size(); ++i)
      for (Index y = 0; y < w.dim(2); ++y)
        for (Index x = 0; x < w.dim(3); ++x)
          b(static_cast<Index>(o), static_cast<Index>(i), y, x) = w(outs[o], ins[i], y, x);
  return b;
}

template <typename Scalar>
void scatter_block(const Tensor<Scalar>& b, std::span<const Index> outs, std::span<const Index> ins, Tensor<Scalar>& w) {
  for (std::size_t o = 0; o < outs.size(); ++o)
    for (std::size_t i = 0; i < ins.size(); ++i)
      for (Index y = 0; y < w.dim(2); ++y)
        for (Index x = 0; x < w.dim(3); ++x)
          w(outs[o], ins[i], y, x) = b(static_cast<Index>(o), static_cast<Index>(i), y, x);
}

}  // namespace detail

template <typename Scalar>
WeightBlocks<Scalar> split_blocks(const Tensor<Scalar>& weight, const ChannelPartition& p) {
  p.validate(weight.dim(1), weight.dim(0));
  return {detail::gather_block(weight, p.out_s, p.in_s), detail::gather_block(weight, p.out_s, p.in_r),
          detail::gather_block(weight, p.out_r, p.in_s), detail::gather_block(weight, p.out_r, p.in_r)};
}

template <typename Scalar>
Tensor<Scalar> merge_blocks(const WeightBlocks<Scalar>& blocks, const ChannelPartition& p) {
  Tensor<Scalar> w(p.out_channels(), p.in_channels(), blocks.ss.dim(2), blocks.ss.dim(3));
  detail::scatter_block(blocks.ss, p.out_s, p.in_s, w);
  detail::scatter_block(blocks.rs, p.out_s, p.in_r, w);
  detail::scatter_block(blocks.sr, p.out_r, p.in_s, w);
  detail::scatter_block(blocks.rr, p.out_r, p.in_r, w);
  return w;
}

template <typename Scalar>
struct MixedOutputs {
  Tensor<Scalar> s_out;
  Tensor<Scalar> r_out;
};

/// S_out = W_SS*S_in + W_RS*R_in, R_out = W_SR*S_in + W_RR*R_in.
template <typename Scalar>
MixedOutputs<Scalar> forward_standard(const WeightBlocks<Scalar>& w, const Tensor<Scalar>& s_in,
                                      const Tensor<Scalar>& r_in, Index stride = 1, Index padding = 0) {
  MixedOutputs<Scalar> out{conv_forward(s_in, w.ss, stride, padding), conv_forward(s_in, w.sr, stride, padding)};
  out.s_out.data() += conv_forward(r_in, w.rs, stride, padding).data();
  out.r_out.data() += conv_forward(r_in, w.rr, stride, padding).data();
  return out;
}

/// S_out = W_SS*S_in, R_out = W_RR*R_in; the cross blocks are not read.
template <typename Scalar>
MixedOutputs<Scalar> forward_cross_removed(const WeightBlocks<Scalar>& w, const Tensor<Scalar>& s_in,
                                           const Tensor<Scalar>& r_in, Index stride = 1, Index padding = 0) {
  return {conv_forward(s_in, w.ss, stride, padding), conv_forward(r_in, w.rr, stride, padding)};
}

namespace detail {

// main + gain * sigmoid(main) * cross, elementwise.
template <typename Scalar>
Tensor<Scalar> attend(const Tensor<Scalar>& main, const Tensor<Scalar>& cross, Scalar gain) {
  Tensor<Scalar> out(main.shape());
  out.data() = main.data().array() +
               gain * main.data().array().unaryExpr([](Scalar v) { return sigmoid(v); }) * cross.data().array();
  return out;
}

}  // namespace detail

/// S_out = a + g*sigmoid(a)*b with a = W_SS*S_in, b = W_RS*R_in;
/// R_out = c + g*sigmoid(c)*d with c = W_RR*R_in, d = W_SR*S_in.
template <typename Scalar>
MixedOutputs<Scalar> forward_cross_attention(const WeightBlocks<Scalar>& w, const Tensor<Scalar>& s_in,
                                             const Tensor<Scalar>& r_in, Scalar gain = Scalar(2),
                                             Index stride = 1, Index padding = 0) {
  const auto a = conv_forward(s_in, w.ss, stride, padding);
  const auto b = conv_forward(r_in, w.rs, stride, padding);
  const auto c = conv_forward(r_in, w.rr, stride, padding);
  const auto d = conv_forward(s_in, w.sr, stride, padding);
  return {detail::attend(a, b, gain), detail::attend(c, d, gain)};
}

// ---------------------------------------------------------------------------
// Layer-level mixed convolution with backward, used by the network.

template <typename Scalar>
struct MixedConvCache {
  Scheme scheme = Scheme::standard;
  Tensor<Scalar> s_in, r_in;
  Tensor<Scalar> a, b, c, d;  // block responses, cross_attention only
};

template <typename Scalar>
Tensor<Scalar> mixed_conv_forward(const SchemeConfig& config, const ChannelPartition* partition,
                                  const Tensor<Scalar>& input, const Tensor<Scalar>& weight, Index stride,
                                  Index padding, MixedConvCache<Scalar>* cache = nullptr) {
  const Scheme scheme = scheme_select(partition, config);
  if (cache != nullptr) cache->scheme = scheme;
  if (scheme == Scheme::standard) return conv_forward(input, weight, stride, padding);

  const auto& p = *partition;
  p.validate(weight.dim(1), weight.dim(0));
  require_shape(input.dim(1) == weight.dim(1), "mixed_conv_forward: input " + input.shape().str() +
                                                   " does not match weight " + weight.shape().str());
  const auto w = split_blocks(weight, p);
  auto s_in = gather_channels(input, p.in_s);
  auto r_in = gather_channels(input, p.in_r);
  MixedOutputs<Scalar> mo;
  if (scheme == Scheme::cross_removed) {
    mo = forward_cross_removed(w, s_in, r_in, stride, padding);
  } else {
    const Scalar gain = static_cast<Scalar>(config.attention_gain);
    auto a = conv_forward(s_in, w.ss, stride, padding);
    auto b = conv_forward(r_in, w.rs, stride, padding);
    auto c = conv_forward(r_in, w.rr, stride, padding);
    auto d = conv_forward(s_in, w.sr, stride, padding);
    mo = {detail::attend(a, b, gain), detail::attend(c, d, gain)};
    if (cache != nullptr) {
      cache->a = std::move(a);
      cache->b = std::move(b);
      cache->c = std::move(c);
      cache->d = std::move(d);
    }
  }
  Tensor<Scalar> out(input.dim(0), weight.dim(0), mo.s_out.dim(2), mo.s_out.dim(3));
  scatter_add_channels(mo.s_out, p.out_s, out);
  scatter_add_channels(mo.r_out, p.out_r, out);
  if (cache != nullptr) {
    cache->s_in = std::move(s_in);
    cache->r_in = std::move(r_in);
  }
  return out;
}

template <typename Scalar>
ConvGrads<Scalar> mixed_conv_backward(const SchemeConfig& config, const ChannelPartition* partition,
                                      const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                                      const Tensor<Scalar>& d_out, const MixedConvCache<Scalar>& cache,
                                      Index stride, Index padding) {
  if (cache.scheme == Scheme::standard) return conv_backward(input, weight, d_out, stride, padding);

  const auto& p = *partition;
  const auto w = split_blocks(weight, p);
  const auto d_s = gather_channels(d_out, p.out_s);
  const auto d_r = gather_channels(d_out, p.out_r);

  // Upstream gradients reaching each block response.
  Tensor<Scalar> d_a = d_s, d_c = d_r;
  Tensor<Scalar> d_b, d_d;
  if (cache.scheme == Scheme::cross_attention) {
    const Scalar gain = static_cast<Scalar>(config.attention_gain);
    auto gate_grads = [gain](const Tensor<Scalar>& main, const Tensor<Scalar>& cross, const Tensor<Scalar>& up,
                             Tensor<Scalar>& d_main, Tensor<Scalar>& d_cross) {
      const auto sig = main.data().array().unaryExpr([](Scalar v) { return sigmoid(v); }).eval();
      d_main = Tensor<Scalar>(main.shape());
      d_cross = Tensor<Scalar>(main.shape());
      d_main.data() = (up.data().array() * (Scalar(1) + gain * sig * (Scalar(1) - sig) * cross.data().array())).matrix();
      d_cross.data() = (up.data().array() * gain * sig).matrix();
    };
    gate_grads(cache.a, cache.b, d_s, d_a, d_b);
    gate_grads(cache.c, cache.d, d_r, d_c, d_d);
  }

  ConvGrads<Scalar> g{Tensor<Scalar>(input.shape()), Tensor<Scalar>(weight.shape())};
  Tensor<Scalar> d_s_in(cache.s_in.shape()), d_r_in(cache.r_in.shape());
  WeightBlocks<Scalar> dw{Tensor<Scalar>(w.ss.shape()), Tensor<Scalar>(w.rs.shape()), Tensor<Scalar>(w.sr.shape()),
                          Tensor<Scalar>(w.rr.shape())};

  auto accumulate = [&](const Tensor<Scalar>& in, const Tensor<Scalar>& block, const Tensor<Scalar>& up,
                        Tensor<Scalar>& d_in, Tensor<Scalar>& d_block) {
    auto cg = conv_backward(in, block, up, stride, padding);
    d_in.data() += cg.d_input.data();
    d_block = std::move(cg.d_weight);
  };
  accumulate(cache.s_in, w.ss, d_a, d_s_in, dw.ss);
  accumulate(cache.r_in, w.rr, d_c, d_r_in, dw.rr);
  if (cache.scheme == Scheme::cross_attention) {
    accumulate(cache.r_in, w.rs, d_b, d_r_in, dw.rs);
    accumulate(cache.s_in, w.sr, d_d, d_s_in, dw.sr);
  }
  g.d_weight = merge_blocks(dw, p);
  scatter_add_channels(d_s_in, p.in_s, g.d_input);
  scatter_add_channels(d_r_in, p.in_r, g.d_input);
  return g;
}

}  // namespace rejuv
