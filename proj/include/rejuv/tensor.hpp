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

#include <array>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace rejuv {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Raised for any operand whose dimensions do not fit the operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Four dimension sizes. Activations are (batch, channels, height, width);
/// convolution weights are (out_ch, in_ch, kh, kw).
struct Shape4 {
  std::array<Index, 4> dims{0, 0, 0, 0};

  Index operator[](std::size_t i) const { return dims[i]; }
  Index& operator[](std::size_t i) { return dims[i]; }
  Index size() const { return dims[0] * dims[1] * dims[2] * dims[3]; }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << '(' << dims[0] << ", " << dims[1] << ", " << dims[2] << ", " << dims[3] << ')';
    return os.str();
  }
};

/// Dense row-major rank-4 tensor backed by an Eigen vector.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  Tensor(Index n, Index c, Index h, Index w) : shape_{{n, c, h, w}} {
    if (n < 0 || c < 0 || h < 0 || w < 0) {
      throw ShapeError("negative tensor dimension " + shape_.str());
    }
    data_.setZero(shape_.size());
  }

  explicit Tensor(const Shape4& s) : Tensor(s[0], s[1], s[2], s[3]) {}

  static Tensor zeros(const Shape4& s) { return Tensor(s); }

  const Shape4& shape() const { return shape_; }
  Index dim(std::size_t i) const { return shape_[i]; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Vector<Scalar>& data() { return data_; }
  const Vector<Scalar>& data() const { return data_; }

  Scalar& operator()(Index n, Index c, Index h, Index w) { return data_[offset(n, c, h, w)]; }
  Scalar operator()(Index n, Index c, Index h, Index w) const { return data_[offset(n, c, h, w)]; }

  /// Sample `n` viewed as a (channels x height*width) row-major matrix.
  Eigen::Map<RowMatrix<Scalar>> sample(Index n) {
    const Index plane = shape_[2] * shape_[3];
    return {data_.data() + n * shape_[1] * plane, shape_[1], plane};
  }
  Eigen::Map<const RowMatrix<Scalar>> sample(Index n) const {
    const Index plane = shape_[2] * shape_[3];
    return {data_.data() + n * shape_[1] * plane, shape_[1], plane};
  }

  /// Leading dimension kept, the rest flattened: (dim0 x dim1*dim2*dim3).
  Eigen::Map<RowMatrix<Scalar>> as_matrix() {
    return {data_.data(), shape_[0], shape_[1] * shape_[2] * shape_[3]};
  }
  Eigen::Map<const RowMatrix<Scalar>> as_matrix() const {
    return {data_.data(), shape_[0], shape_[1] * shape_[2] * shape_[3]};
  }

  void set_zero() { data_.setZero(); }

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    out.data() = data_.template cast<Other>();
    return out;
  }

 private:
  Index offset(Index n, Index c, Index h, Index w) const {
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  Shape4 shape_;
  Vector<Scalar> data_;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace rejuv
