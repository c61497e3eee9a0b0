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

// Independent reference implementations the library is checked against.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rejuv/arch.hpp"
#include "rejuv/network.hpp"

namespace rejuv::oracle {

/// Random resolvable conv chain: 2..max_depth layers, widths 1..max_width,
/// kernels 1 or 3, occasional stride 2 / pooling, random rejuvenable flags.
ArchSpec random_arch(std::mt19937_64& rng, int min_depth = 2, int max_depth = 6, Index max_width = 16);

/// Independent Bernoulli(p_alive) masks per layer.
std::vector<ChannelMask> random_masks(const ArchSpec& arch, std::mt19937_64& rng, double p_alive = 0.6);

struct PhysicalCount {
  Count params = 0;
  Count flops = 0;
};

/// Deletes dead channels from a real network, runs it on one image to learn
/// every output extent, and counts the surviving weights and MACs.
PhysicalCount physical_count(const ArchSpec& arch, const std::vector<ChannelMask>& out_masks);

/// max cost <= budget over widths max(1, round(alpha * w')) for alpha on a
/// grid of `step`, scanned until the first infeasible grid point past 1.
Count grid_best_cost(const std::vector<Index>& pruned, const ArchSpec& arch, CostMetric metric, Count budget,
                     double step = 1e-3);

/// Passes when |a - n| <= abs_floor or |a - n| / max(|a|, |n|) <= rel_tol.
inline constexpr double kGradRelTol = 1e-4;
inline constexpr double kGradAbsFloor = 1e-6;
bool close(double analytic, double numeric, double rel_tol = kGradRelTol, double abs_floor = kGradAbsFloor);

struct GradReport {
  std::size_t checked = 0;
  std::size_t failed = 0;
  double worst = 0.0;  ///< largest |analytic - numeric|
  std::string first_failure;
};

/// Central differences of `loss` with respect to every entry of `theta`,
/// perturbed in place and restored. `veto()` is consulted right after the two
/// evaluations of an entry; returning true drops that entry (used when the
/// +-h evaluations straddle a non-differentiable point).
GradReport check_gradient(const std::function<double()>& loss, double* theta, std::size_t n,
                          const double* analytic, double h = 1e-6, const std::function<bool()>& veto = {});

void merge(GradReport& into, const GradReport& part);

template <typename Scalar>
Tensor<Scalar> random_tensor(const Shape4& s, std::mt19937_64& rng, double scale = 1.0) {
  Tensor<Scalar> t(s);
  std::normal_distribution<double> d(0.0, scale);
  for (Index k = 0; k < t.size(); ++k) t.data()[k] = static_cast<Scalar>(d(rng));
  return t;
}

template <typename Scalar>
Vector<Scalar> random_vector(Index n, std::mt19937_64& rng, double scale = 1.0) {
  Vector<Scalar> v(n);
  std::normal_distribution<double> d(0.0, scale);
  for (Index k = 0; k < n; ++k) v[k] = static_cast<Scalar>(d(rng));
  return v;
}

template <typename Scalar>
Matrix<Scalar> random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  Matrix<Scalar> m(rows, cols);
  std::normal_distribution<double> d(0.0, scale);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = static_cast<Scalar>(d(rng));
  return m;
}

/// Pre-event network with the consumer weights of every dead channel zeroed:
/// the function a rejuvenation event must preserve on its surviving paths.
template <typename Scalar>
NetworkParams<Scalar> surviving_path_reference(const ArchSpec& arch, NetworkParams<Scalar> params,
                                               const std::vector<ChannelMask>& out_masks) {
  for (std::size_t i = 0; i < arch.depth(); ++i) {
    for (std::size_t c = 0; c < out_masks[i].size(); ++c) {
      if (out_masks[i][c]) continue;
      const auto ch = static_cast<Index>(c);
      if (i + 1 < arch.depth()) {
        auto& w = params.layers[i + 1].weight;
        for (Index o = 0; o < w.dim(0); ++o)
          for (Index y = 0; y < w.dim(2); ++y)
            for (Index x = 0; x < w.dim(3); ++x) w(o, ch, y, x) = Scalar(0);
      } else {
        params.classifier.weight.col(ch).setZero();
      }
    }
  }
  return params;
}

/// max |a - b| / max(max |b|, tiny)
template <typename Scalar>
double max_relative_gap(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  const double scale = std::max(static_cast<double>(b.cwiseAbs().maxCoeff()), 1e-30);
  return static_cast<double>((a - b).cwiseAbs().maxCoeff()) / scale;
}

}  // namespace rejuv::oracle
