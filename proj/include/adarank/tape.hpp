// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "adarank/tensor.hpp"

namespace adarank {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

// Reverse-mode gradient tape. Values are recorded in execution order; a node
// only keeps a backward closure when at least one parent requires a gradient,
// so frozen sub-graphs cost nothing during backward. One tape per step; not
// thread-safe.
class Tape {
 public:
  /// Receives the output gradient and pushes contributions into the parents.
  using BackwardFn = std::function<void(const Tensor& out_grad, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. The referencing overloads borrow `t`; it must outlive the tape.
  Var constant(const Tensor& t);
  Var constant(Tensor&& t);
  Var parameter(const Tensor& t);

  Var record(Tensor value, std::vector<Var> parents, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  /// Gradient accumulated for `v`, or a zero tensor if nothing reached it.
  Tensor grad(Var v) const;
  bool has_grad(Var v) const;

  void accumulate(Var v, const Tensor& g);

  /// Seeds d(loss)/d(loss) = 1 for a single-element loss and runs every
  /// recorded backward closure once, in reverse order. Returns the number of
  /// closures executed.
  std::size_t backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
    std::vector<Var> parents;
  };

  Node& node(Var v);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<bool> grad_set_;
};

}  // namespace adarank
