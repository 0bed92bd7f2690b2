// Copyright 2026 The fwg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fwg/tensor.hpp"

namespace fwg {

// Reverse-mode gradient tape.
//
// A tape records one forward pass as an ordered list of entries; each entry
// names its input nodes, its output node and a closure holding whatever the
// backward step needs (input storage handles, argmax positions, masks).
// Entries are appended in execution order, so inputs always precede their
// consumers and a single reverse sweep visits every entry exactly once.
//
// Lifecycle per step: watch() the leaves, run the forward ops, backward().
// backward() deposits gradients into the watched leaves, releases all saved
// activations and detaches the leaves, leaving the tape empty. A tape and
// its tensors belong to one worker at a time.
template <typename T>
class Tape {
 public:
  struct Entry {
    const char* op;
    std::vector<int> inputs;
    int output;
    std::function<void(Tape&)> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Register a gradient leaf. The tensor must want gradients; its gradient
  // buffer receives the accumulated result of the next backward().
  int watch(Tensor<T>& t) {
    check_shape(t.requires_grad(),
                "watch() needs a requires_grad tensor");
    if (t.tape() == this && t.node() >= 0) return t.node();
    int id = add_node(t.size());
    leaf_grads_.push_back({id, t.grad_storage()});
    t.attach(this, id);
    return id;
  }

  // Register an op output (internal node).
  int track(Tensor<T>& t) {
    int id = add_node(t.size());
    t.attach(this, id);
    return id;
  }

  void record(const char* op, std::vector<int> inputs, int output,
              std::function<void(Tape&)> backward) {
    entries_.push_back(Entry{op, std::move(inputs), output, std::move(backward)});
  }

  // True when any of the given tensors is attached to this tape.
  static Tape* joint(std::initializer_list<const Tensor<T>*> ts) {
    Tape* tape = nullptr;
    for (const Tensor<T>* t : ts) {
      if (t->tape() == nullptr) continue;
      if (tape == nullptr) tape = t->tape();
      else if (tape != t->tape())
        throw UsageError("tensors from two different tapes in one op");
    }
    return tape;
  }

  // Gradient buffer of a node, zero-allocated on first touch.
  std::vector<T>& grad(int node) {
    auto& g = grads_[static_cast<size_t>(node)];
    if (!g) g = std::make_shared<std::vector<T>>(sizes_[static_cast<size_t>(node)], T(0));
    return *g;
  }

  bool has_grad(int node) const {
    return node >= 0 && grads_[static_cast<size_t>(node)] != nullptr;
  }

  size_t num_entries() const { return entries_.size(); }

  // op/input/output triples for introspection in tests
  const std::vector<Entry>& entries() const { return entries_; }

  // Reverse sweep from a scalar loss. Returns the number of entries whose
  // backward closure ran (entries with no downstream gradient are skipped).
  size_t backward(const Tensor<T>& loss) {
    if (consumed_)
      throw UsageError("tape already consumed by a previous backward()");
    if (loss.tape() != this || loss.node() < 0)
      throw UsageError("loss is not on this tape");
    if (loss.size() != 1)
      throw UsageError("backward() needs a scalar loss, got " +
                       shape_str(loss.shape()));
    grad(loss.node())[0] = T(1);
    size_t visited = 0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (!has_grad(it->output)) continue;
      it->backward(*this);
      ++visited;
    }
    // fold node gradients into the watched leaves
    for (auto& [node, buf] : leaf_grads_) {
      if (!has_grad(node)) continue;
      const auto& g = grad(node);
      for (size_t i = 0; i < buf->size(); ++i) (*buf)[i] += g[i];
    }
    release();
    return visited;
  }

  // Drop all recorded state without running backward.
  void release() {
    entries_.clear();
    grads_.clear();
    sizes_.clear();
    leaf_grads_.clear();
    consumed_ = true;
  }

  void reset() {
    release();
    consumed_ = false;
  }

 private:
  int add_node(int64_t size) {
    sizes_.push_back(static_cast<size_t>(size));
    grads_.emplace_back();
    return static_cast<int>(sizes_.size()) - 1;
  }

  std::vector<Entry> entries_;
  std::vector<size_t> sizes_;
  std::vector<std::shared_ptr<std::vector<T>>> grads_;
  std::vector<std::pair<int, std::shared_ptr<std::vector<T>>>> leaf_grads_;
  bool consumed_ = false;
};

}  // namespace fwg
