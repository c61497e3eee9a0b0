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

#include <random>

#include "grad_suite.hpp"
#include "rejuv/network.hpp"

using namespace rejuv;

namespace {

void expect_clean(const oracle::GradReport& r) {
  EXPECT_GT(r.checked, 0u);
  EXPECT_EQ(r.failed, 0u) << r.first_failure << " (max abs diff " << r.worst << ")";
}

}  // namespace

class KernelGradient : public ::testing::TestWithParam<int> {};

TEST_P(KernelGradient, MatchesCentralDifferences) {
  const auto checks = oracle::kernel_checks();
  const auto& check = checks[static_cast<std::size_t>(GetParam())];
  std::mt19937_64 rng(1000 + GetParam());
  for (int shape = 0; shape < 5; ++shape) {
    SCOPED_TRACE(check.name + " shape " + std::to_string(shape));
    expect_clean(check.run(rng));
  }
}

INSTANTIATE_TEST_SUITE_P(AllKernels, KernelGradient, ::testing::Range(0, 7));

TEST(MixedGradient, CrossRemovedLayer) {
  std::mt19937_64 rng(5);
  for (int shape = 0; shape < 5; ++shape) expect_clean(oracle::grad_cross_removed(rng));
}

TEST(NetworkGradient, AllSchemes) {
  std::mt19937_64 rng(6);
  for (const auto scheme : {Scheme::standard, Scheme::cross_removed, Scheme::cross_attention}) {
    for (int shape = 0; shape < 3; ++shape) {
      SCOPED_TRACE(to_string(scheme));
      expect_clean(oracle::grad_network(rng, scheme));
    }
  }
}

TEST(Sgd, L1ShrinksGammaBySign) {
  NetworkParams<double> p;
  LayerParams<double> l;
  l.weight = Tensor<double>(1, 1, 1, 1);
  l.gamma = Vector<double>::Constant(1, 0.5);
  l.beta = Vector<double>::Zero(1);
  l.running = BatchNormStats<double>::identity(1);
  l.zero_momentum();
  p.layers.push_back(l);
  p.classifier.weight = Matrix<double>::Zero(1, 1);
  p.classifier.momentum = Matrix<double>::Zero(1, 1);
  GradientSet<double> g;
  g.layers.push_back({Tensor<double>(1, 1, 1, 1), Vector<double>::Zero(1), Vector<double>::Zero(1)});
  g.classifier = Matrix<double>::Zero(1, 1);
  sgd_step(p, g, 0.1, 0.0, 0.2, {true});
  EXPECT_NEAR(p.layers[0].gamma[0], 0.48, 1e-15);

  auto q = p;
  q.layers[0].gamma[0] = -0.5;
  sgd_step(q, g, 0.1, 0.0, 0.2, {true});
  EXPECT_NEAR(q.layers[0].gamma[0], -0.48, 1e-15);

  auto z = p;
  z.layers[0].gamma[0] = 0.0;
  sgd_step(z, g, 0.1, 0.0, 0.2, {true});
  EXPECT_EQ(z.layers[0].gamma[0], 0.0);

  auto unpenalized = p;
  sgd_step(unpenalized, g, 0.1, 0.0, 0.2, {false});
  EXPECT_EQ(unpenalized.layers[0].gamma[0], p.layers[0].gamma[0]);

  EXPECT_THROW(sgd_step(p, g, -0.1, 0.0, 0.0, {true}), std::invalid_argument);
  EXPECT_THROW(sgd_step(p, g, 0.1, 0.0, -1.0, {true}), std::invalid_argument);
}

TEST(Sgd, MomentumAccumulates) {
  NetworkParams<double> p;
  p.classifier.weight = Matrix<double>::Zero(1, 1);
  p.classifier.momentum = Matrix<double>::Zero(1, 1);
  GradientSet<double> g;
  g.classifier = Matrix<double>::Ones(1, 1);
  sgd_step(p, g, 1.0, 0.9, 0.0, {});
  sgd_step(p, g, 1.0, 0.9, 0.0, {});
  EXPECT_NEAR(p.classifier.weight(0, 0), -(1.0 + 1.9), 1e-12);
}

TEST(Network, ForwardEqualsManualComposition) {
  ArchSpec arch;
  arch.input_channels = 1;
  arch.input_spatial = {2, 2};
  arch.num_classes = 1;
  LayerSpec l;
  l.out_ch = 1;
  l.kernel_h = l.kernel_w = 1;
  l.padding = 0;
  arch.layers.push_back(l);
  arch.resolve();
  std::mt19937_64 rng(1);
  auto p = init_network<double>(arch, rng, 1.0);
  p.layers[0].weight.data().setOnes();
  p.classifier.weight.setOnes();
  Tensor<double> x(1, 1, 2, 2);
  x.data() << -1, 0, 1, 4;
  const auto cache = network_forward(p, arch, x, Mode::training);
  // mean 1, var 3.5; relu((x - 1)/sqrt(3.5 + eps)) then global mean
  double want = 0;
  for (const double v : {-1.0, 0.0, 1.0, 4.0}) want += std::max(0.0, (v - 1.0) / std::sqrt(3.5 + 1e-5));
  EXPECT_NEAR(cache.logits(0, 0), want / 4.0, 1e-12);
}

TEST(Network, EvalCacheCannotBackpropagate) {
  ArchSpec arch;
  arch.layers.push_back(LayerSpec{});
  arch.resolve();
  std::mt19937_64 rng(2);
  const auto p = init_network<double>(arch, rng);
  Tensor<double> x(2, 3, 8, 8);
  const auto cache = network_forward(p, arch, x, Mode::eval);
  const std::vector<int> labels{0, 1};
  EXPECT_THROW(network_backward(p, arch, cache, labels), std::logic_error);
}
