// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cassert>
#include <initializer_list>
#include <memory>
#include <vector>

#include "fwg/common.hpp"
#include "fwg/rng.hpp"

namespace fwg {

template <typename T>
class Tape;

// Dense N-dimensional array (N <= 5), row-major, contiguous. Copies are
// shallow handles onto shared storage; use clone() for a deep copy.
// A tensor may carry a gradient buffer of identical shape and, while a
// forward pass is being recorded, a link to the tape node that produced it.
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_.size() <= 5, "tensor order > 5: " + shape_str(shape_));
    for (int d : shape_)
      check_shape(d >= 0, "negative extent in " + shape_str(shape_));
    data_ = std::make_shared<std::vector<T>>(numel(shape_), T(0));
  }

  static Tensor scalar(T v) {
    Tensor t(Shape{});
    (*t.data_)[0] = v;
    return t;
  }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), v);
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> values) {
    check_shape(numel(shape) == static_cast<int64_t>(values.size()),
                "value count " + std::to_string(values.size()) +
                    " does not fill shape " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<std::vector<T>>(std::move(values));
    return t;
  }

  static Tensor randn(Shape shape, Rng& rng, T stddev = T(1)) {
    Tensor t(std::move(shape));
    for (auto& v : *t.data_) v = static_cast<T>(rng.normal()) * stddev;
    return t;
  }

  static Tensor rand_uniform(Shape shape, Rng& rng, T lo, T hi) {
    Tensor t(std::move(shape));
    for (auto& v : *t.data_) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }
  std::vector<T>& vec() { return *data_; }
  const std::vector<T>& vec() const { return *data_; }

  T& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

  template <typename... Ix>
  T& operator()(Ix... ix) {
    return (*data_)[offset({static_cast<int>(ix)...})];
  }
  template <typename... Ix>
  const T& operator()(Ix... ix) const {
    return (*data_)[offset({static_cast<int>(ix)...})];
  }

  // Deep copy of the data; gradient and tape linkage are not carried over.
  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    t.requires_grad_ = requires_grad_;
    return t;
  }

  // Reinterpret the buffer under a new shape of equal element count.
  // This is a raw view; use ops::reshape to keep gradients flowing.
  Tensor viewed(Shape shape) const {
    check_shape(numel(shape) == size(), "view " + shape_str(shape) +
                                            " incompatible with " +
                                            shape_str(shape_));
    Tensor t = *this;
    t.shape_ = std::move(shape);
    t.tape_ = nullptr;
    t.node_ = -1;
    return t;
  }

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool rg) {
    requires_grad_ = rg;
    if (!rg) grad_ = nullptr;
    return *this;
  }

  bool has_grad() const { return grad_ != nullptr; }

  // Gradient buffer, allocated (zeroed) on first touch.
  std::vector<T>& grad_vec() {
    check_shape(requires_grad_, "gradient requested on requires_grad=false tensor");
    if (!grad_) grad_ = std::make_shared<std::vector<T>>(data_->size(), T(0));
    return *grad_;
  }

  Tensor grad() const {
    check_shape(grad_ != nullptr, "no gradient accumulated yet");
    Tensor t;
    t.shape_ = shape_;
    t.data_ = grad_;
    return t;
  }

  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), T(0));
  }

  // tape linkage (managed by Tape and the ops layer)
  Tape<T>* tape() const { return tape_; }
  int node() const { return node_; }
  void attach(Tape<T>* tape, int node) {
    tape_ = tape;
    node_ = node;
  }
  void detach() {
    tape_ = nullptr;
    node_ = -1;
  }

  std::shared_ptr<std::vector<T>> storage() const { return data_; }
  std::shared_ptr<std::vector<T>> grad_storage() {
    grad_vec();
    return grad_;
  }

 private:
  size_t offset(std::initializer_list<int> ix) const {
    assert(ix.size() == shape_.size());
    size_t off = 0;
    size_t k = 0;
    for (int i : ix) {
      assert(i >= 0 && i < shape_[k]);
      off = off * static_cast<size_t>(shape_[k]) + static_cast<size_t>(i);
      ++k;
    }
    return off;
  }

  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
  std::shared_ptr<std::vector<T>> grad_;
  bool requires_grad_ = false;
  Tape<T>* tape_ = nullptr;
  int node_ = -1;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace fwg
