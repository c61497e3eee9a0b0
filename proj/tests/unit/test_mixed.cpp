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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rejuv/mixed.hpp"

using namespace rejuv;

namespace {

ChannelPartition shuffled_partition(Index in, Index out, std::mt19937_64& rng) {
  ChannelPartition p;
  std::bernoulli_distribution coin(0.5);
  for (Index k = 0; k < in; ++k) (coin(rng) ? p.in_s : p.in_r).push_back(k);
  for (Index k = 0; k < out; ++k) (coin(rng) ? p.out_s : p.out_r).push_back(k);
  return p;
}

}  // namespace

TEST(Partition, ContiguousLayout) {
  const auto p = ChannelPartition::contiguous(2, 1, 1, 3);
  EXPECT_EQ(p.in_s, (std::vector<Index>{0, 1}));
  EXPECT_EQ(p.in_r, (std::vector<Index>{2}));
  EXPECT_EQ(p.out_r, (std::vector<Index>{1, 2, 3}));
  EXPECT_NO_THROW(p.validate(3, 4));
  EXPECT_THROW(p.validate(4, 4), std::invalid_argument);
}

TEST(Partition, OverlapIsRejected) {
  ChannelPartition p{{0, 1}, {1}, {0}, {1}};
  EXPECT_THROW(p.validate(2, 2), std::invalid_argument);
}

TEST(Blocks, SplitMergeRoundTrip) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 10; ++k) {
    const auto p = shuffled_partition(5, 4, rng);
    const auto w = oracle::random_tensor<double>({{4, 5, 3, 3}}, rng);
    const auto blocks = split_blocks(w, p);
    EXPECT_EQ(blocks.rs.dim(0), static_cast<Index>(p.out_s.size()));
    EXPECT_EQ(blocks.rs.dim(1), static_cast<Index>(p.in_r.size()));
    EXPECT_EQ(merge_blocks(blocks, p).data(), w.data());
  }
}

TEST(Mixed, StandardEqualsFusedConvolution) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 10; ++k) {
    const auto p = shuffled_partition(4, 5, rng);
    const auto x = oracle::random_tensor<double>({{2, 4, 6, 6}}, rng);
    const auto w = oracle::random_tensor<double>({{5, 4, 3, 3}}, rng);
    const auto fused = conv_forward(x, w, 1, 1);
    const auto mo = forward_standard(split_blocks(w, p), gather_channels(x, p.in_s), gather_channels(x, p.in_r), 1, 1);
    Tensor<double> out(fused.shape());
    scatter_add_channels(mo.s_out, p.out_s, out);
    scatter_add_channels(mo.r_out, p.out_r, out);
    EXPECT_LE((out.data() - fused.data()).cwiseAbs().maxCoeff(), 1e-6 * fused.data().cwiseAbs().maxCoeff());
  }
}

TEST(Mixed, CrossRemovedEqualsFusedWithZeroedCrossBlocks) {
  std::mt19937_64 rng(3);
  const auto p = shuffled_partition(4, 4, rng);
  const auto x = oracle::random_tensor<double>({{2, 4, 5, 5}}, rng);
  const auto w = oracle::random_tensor<double>({{4, 4, 3, 3}}, rng);
  auto blocks = split_blocks(w, p);
  blocks.rs.set_zero();
  blocks.sr.set_zero();
  const auto want = conv_forward(x, merge_blocks(blocks, p), 1, 1);
  const SchemeConfig cfg{Scheme::cross_removed, 2.0};
  const auto got = mixed_conv_forward(cfg, &p, x, w, 1, 1);
  EXPECT_LE((got.data() - want.data()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mixed, CrossAttentionScalarExample) {
  Tensor<double> s(1, 1, 1, 1), r(1, 1, 1, 1);
  s.data()[0] = 1.0;
  r.data()[0] = 1.0;
  WeightBlocks<double> w{Tensor<double>(1, 1, 1, 1), Tensor<double>(1, 1, 1, 1), Tensor<double>(1, 1, 1, 1),
                         Tensor<double>(1, 1, 1, 1)};
  w.ss.data()[0] = w.rs.data()[0] = 1.0;  // a = 1, b = 1
  const auto out = forward_cross_attention(w, s, r);
  EXPECT_NEAR(out.s_out.data()[0], 2.462117, 1e-6);
  EXPECT_NEAR(out.s_out.data()[0], 1.0 + 2.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_EQ(out.r_out.data()[0], 0.0);  // c = 0, d = 0
}

TEST(Mixed, CrossAttentionWithZeroCrossBlocksIsPlain) {
  std::mt19937_64 rng(4);
  const auto p = ChannelPartition::contiguous(2, 2, 3, 1);
  const auto x = oracle::random_tensor<double>({{2, 4, 5, 5}}, rng);
  auto blocks = split_blocks(oracle::random_tensor<double>({{4, 4, 3, 3}}, rng), p);
  blocks.rs.set_zero();
  blocks.sr.set_zero();
  const auto w = merge_blocks(blocks, p);
  const SchemeConfig cfg{Scheme::cross_attention, 2.0};
  const auto got = mixed_conv_forward(cfg, &p, x, w, 1, 1);
  const auto want = conv_forward(x, w, 1, 1);
  EXPECT_LE((got.data() - want.data()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mixed, NoPartitionMeansStandard) {
  EXPECT_EQ(scheme_select(nullptr, {Scheme::cross_attention, 2.0}), Scheme::standard);
  const auto p = ChannelPartition::contiguous(1, 1, 1, 1);
  EXPECT_EQ(scheme_select(&p, {Scheme::cross_removed, 2.0}), Scheme::cross_removed);
  EXPECT_EQ(scheme_from_string(to_string(Scheme::cross_attention)), Scheme::cross_attention);
  EXPECT_THROW(scheme_from_string("gated"), std::invalid_argument);
}
