// Copyright 2026 The fedval Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef FEDVAL_AUTODIFF_TENSOR_H_
#define FEDVAL_AUTODIFF_TENSOR_H_

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fedval {

using Shape = std::vector<std::size_t>;

std::string ShapeToString(const Shape& shape);
std::size_t ShapeSize(const Shape& shape);

// Dense row-major array of doubles. Every dimension is positive and every
// entry supplied at construction is finite; a scalar has shape {1}.
class Tensor {
 public:
  // Scalar zero.
  Tensor();
  // Zero-filled tensor of the given shape.
  explicit Tensor(Shape shape);
  // Throws ShapeError if data.size() != product(shape) or a dimension is 0,
  // NumericError if any entry is NaN or infinite.
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Scalar(double value);
  static Tensor Filled(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }

  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Value of a single-element tensor.
  double item() const;

  bool AllFinite() const;
  double SquaredNorm() const;
  double Norm() const;

  // Same data, new shape of equal size.
  Tensor Reshaped(Shape shape) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  struct NoCheck {};
  Tensor(Shape shape, std::vector<double> data, NoCheck);
  friend Tensor MakeTensorUnchecked(Shape shape, std::vector<double> data);

  Shape shape_;
  std::vector<double> data_;
};

// Builds a tensor without the finiteness scan. Used by internal kernels that
// check their outputs separately.
Tensor MakeTensorUnchecked(Shape shape, std::vector<double> data);

// One named parameter block inside a flat parameter vector.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  Shape shape;

  std::size_t size() const { return ShapeSize(shape); }
};

// Ordered list of parameter blocks whose offsets partition [0, total).
class ParamLayout {
 public:
  explicit ParamLayout(std::vector<ParamBlock> blocks);

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  std::size_t total_size() const { return total_; }
  // Index of the named block; throws ConfigError if absent.
  std::size_t Find(const std::string& name) const;

  friend bool operator==(const ParamLayout& a, const ParamLayout& b);

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t total_ = 0;
};

// Flat parameter (or parameter-gradient) vector with an immutable shared
// layout.
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(std::shared_ptr<const ParamLayout> layout,
              std::vector<double> data);
  static ParamVector Zeros(std::shared_ptr<const ParamLayout> layout);

  const ParamLayout& layout() const { return *layout_; }
  const std::shared_ptr<const ParamLayout>& layout_ptr() const {
    return layout_;
  }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }
  std::span<const double> block(std::size_t i) const;
  std::span<double> mutable_block(std::size_t i);
  Tensor BlockTensor(std::size_t i) const;

  double SquaredNorm() const;
  double Norm() const;

  ParamVector& operator+=(const ParamVector& other);
  ParamVector& operator*=(double c);
  // this += c * other
  void Axpy(double c, const ParamVector& other);

  friend bool operator==(const ParamVector& a, const ParamVector& b) {
    return a.data_ == b.data_ &&
           (a.layout_ == b.layout_ || *a.layout_ == *b.layout_);
  }

 private:
  void CheckCompatible(const ParamVector& other) const;

  std::shared_ptr<const ParamLayout> layout_;
  std::vector<double> data_;
};

}  // namespace fedval

#endif  // FEDVAL_AUTODIFF_TENSOR_H_
