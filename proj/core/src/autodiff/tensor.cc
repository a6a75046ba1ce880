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
#include "fedval/autodiff/tensor.h"

#include <cmath>
#include <numeric>
#include <utility>

#include "fedval/util/errors.h"

namespace fedval {

std::string ShapeToString(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t ShapeSize(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor() : shape_{1}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor dimension must be positive, got " +
                                 ShapeToString(shape_));
  }
  if (shape_.empty()) throw ShapeError("tensor shape must be non-empty");
  data_.assign(ShapeSize(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty()) throw ShapeError("tensor shape must be non-empty");
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor dimension must be positive, got " +
                                 ShapeToString(shape_));
  }
  if (data_.size() != ShapeSize(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + ShapeToString(shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NumericError("non-finite tensor entry at flat index " +
                         std::to_string(i));
    }
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data, NoCheck)
    : shape_(std::move(shape)), data_(std::move(data)) {}

Tensor MakeTensorUnchecked(Shape shape, std::vector<double> data) {
  return Tensor(std::move(shape), std::move(data), Tensor::NoCheck{});
}

Tensor Tensor::Scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::Filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  if (!std::isfinite(value)) throw NumericError("non-finite fill value");
  return t;
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + ShapeToString(shape_));
  }
  return data_[0];
}

bool Tensor::AllFinite() const {
  // inf * 0 and nan * 0 are both nan; the branch-free sum vectorizes.
  double probe = 0.0;
  for (double v : data_) probe += v * 0.0;
  return probe == 0.0;
}

double Tensor::SquaredNorm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

double Tensor::Norm() const { return std::sqrt(SquaredNorm()); }

Tensor Tensor::Reshaped(Shape shape) const {
  if (ShapeSize(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + ShapeToString(shape_) + " to " +
                     ShapeToString(shape));
  }
  return Tensor(std::move(shape), data_, NoCheck{});
}

ParamLayout::ParamLayout(std::vector<ParamBlock> blocks)
    : blocks_(std::move(blocks)) {
  std::size_t offset = 0;
  for (const ParamBlock& b : blocks_) {
    if (b.offset != offset) {
      throw ShapeError("parameter block '" + b.name + "' has offset " +
                       std::to_string(b.offset) + ", expected " +
                       std::to_string(offset));
    }
    offset += b.size();
  }
  total_ = offset;
}

std::size_t ParamLayout::Find(const std::string& name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].name == name) return i;
  }
  throw ConfigError("no parameter block named '" + name + "'");
}

bool operator==(const ParamLayout& a, const ParamLayout& b) {
  if (a.blocks_.size() != b.blocks_.size()) return false;
  for (std::size_t i = 0; i < a.blocks_.size(); ++i) {
    const ParamBlock& x = a.blocks_[i];
    const ParamBlock& y = b.blocks_[i];
    if (x.name != y.name || x.offset != y.offset || x.shape != y.shape) {
      return false;
    }
  }
  return true;
}

ParamVector::ParamVector(std::shared_ptr<const ParamLayout> layout,
                         std::vector<double> data)
    : layout_(std::move(layout)), data_(std::move(data)) {
  if (!layout_) throw ShapeError("parameter vector needs a layout");
  if (data_.size() != layout_->total_size()) {
    throw ShapeError("parameter data length " + std::to_string(data_.size()) +
                     " does not match layout size " +
                     std::to_string(layout_->total_size()));
  }
}

ParamVector ParamVector::Zeros(std::shared_ptr<const ParamLayout> layout) {
  const std::size_t n = layout->total_size();
  return ParamVector(std::move(layout), std::vector<double>(n, 0.0));
}

std::span<const double> ParamVector::block(std::size_t i) const {
  const ParamBlock& b = layout_->blocks()[i];
  return std::span<const double>(data_).subspan(b.offset, b.size());
}

std::span<double> ParamVector::mutable_block(std::size_t i) {
  const ParamBlock& b = layout_->blocks()[i];
  return std::span<double>(data_).subspan(b.offset, b.size());
}

Tensor ParamVector::BlockTensor(std::size_t i) const {
  auto s = block(i);
  return MakeTensorUnchecked(layout_->blocks()[i].shape,
                             std::vector<double>(s.begin(), s.end()));
}

double ParamVector::SquaredNorm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

double ParamVector::Norm() const { return std::sqrt(SquaredNorm()); }

void ParamVector::CheckCompatible(const ParamVector& other) const {
  if (data_.size() != other.data_.size()) {
    throw ShapeError("parameter vectors differ in size: " +
                     std::to_string(data_.size()) + " vs " +
                     std::to_string(other.data_.size()));
  }
}

ParamVector& ParamVector::operator+=(const ParamVector& other) {
  CheckCompatible(other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

ParamVector& ParamVector::operator*=(double c) {
  for (double& v : data_) v *= c;
  return *this;
}

void ParamVector::Axpy(double c, const ParamVector& other) {
  CheckCompatible(other);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += c * other.data_[i];
}

}  // namespace fedval
