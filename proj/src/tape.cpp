// SPDX-License-Identifier: Apache-2.0

#include "adarank/tape.hpp"

#include <stdexcept>

namespace adarank {

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw std::out_of_range("invalid tape variable");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw std::out_of_range("invalid tape variable");
  return nodes_[v.id];
}

Var Tape::constant(const Tensor& t) {
  Node n;
  n.borrowed = &t;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor&& t) {
  Node n;
  n.owned = std::move(t);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(const Tensor& t) {
  Node n;
  n.borrowed = &t;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  Node n;
  n.owned = std::move(value);
  for (Var p : parents) n.requires_grad = n.requires_grad || node(p).requires_grad;
  if (n.requires_grad) {
    n.backward = std::move(backward);
    n.parents = std::move(parents);
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.borrowed ? *n.borrowed : n.owned;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

bool Tape::has_grad(Var v) const { return v.id < grad_set_.size() && grad_set_[v.id]; }

Tensor Tape::grad(Var v) const {
  if (has_grad(v)) return grads_[v.id];
  return Tensor(value(v).shape());
}

void Tape::accumulate(Var v, const Tensor& g) {
  const Node& n = node(v);
  if (!n.requires_grad) return;
  if (!value(v).same_shape(g)) {
    throw std::logic_error("gradient shape " + shape_string(g.shape()) + " does not match value " +
                           shape_string(value(v).shape()));
  }
  if (grads_.size() < nodes_.size()) {
    grads_.resize(nodes_.size());
    grad_set_.resize(nodes_.size(), false);
  }
  if (!grad_set_[v.id]) {
    grads_[v.id] = g;
    grad_set_[v.id] = true;
    return;
  }
  Tensor& acc = grads_[v.id];
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

std::size_t Tape::backward(Var loss) {
  if (value(loss).size() != 1) throw std::invalid_argument("backward requires a single-element loss");
  grads_.assign(nodes_.size(), Tensor());
  grad_set_.assign(nodes_.size(), false);
  accumulate(loss, Tensor(value(loss).shape(), 1.0));
  std::size_t executed = 0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || !grad_set_[i]) continue;
    n.backward(grads_[i], *this);
    ++executed;
  }
  return executed;
}

}  // namespace adarank
