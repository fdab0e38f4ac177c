#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "nstab/error.hpp"
#include "nstab/types.hpp"

namespace nstab::nn {

using nstab::Matrix;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  // Pushes this node's grad into its parents' grads.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
      grad = Matrix::Zero(value.rows(), value.cols());
    }
  }
};

/// Handle to a node of the (dynamically built) computation graph. Copies share the node.
/// Values are 2-D; batched sequences are laid out as (batch * seq_len) rows.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix value) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->value = std::move(value);
    return t;
  }

  static Tensor parameter(Matrix value) {
    Tensor t = constant(std::move(value));
    t.node_->requires_grad = true;
    t.node_->ensure_grad();
    return t;
  }

  /// Result of an operation. Gradient tracking is on iff any parent tracks gradients.
  static Tensor from_op(Matrix value, std::vector<Tensor> parents, std::function<void(Node&)> fn) {
    Tensor t = constant(std::move(value));
    bool track = false;
    for (const auto& p : parents) track = track || p.requires_grad();
    if (track) {
      t.node_->requires_grad = true;
      t.node_->is_leaf = false;
      t.node_->parents.reserve(parents.size());
      for (auto& p : parents) t.node_->parents.push_back(p.node_);
      t.node_->backward_fn = std::move(fn);
    }
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  std::vector<std::size_t> shape() const {
    return {static_cast<std::size_t>(rows()), static_cast<std::size_t>(cols())};
  }
  std::size_t numel() const { return static_cast<std::size_t>(node_->value.size()); }

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  double item() const {
    detail::require(node_->value.size() == 1, "item() needs a 1x1 tensor");
    return node_->value(0, 0);
  }

  void zero_grad() {
    if (node_->requires_grad) node_->grad.setZero(node_->value.rows(), node_->value.cols());
  }

  /// Reverse-mode sweep from this scalar. The graph is released afterwards, so a second call
  /// without a fresh forward pass is an error.
  void backward() {
    detail::require(node_ && node_->value.size() == 1, "backward() needs a scalar (1x1) tensor");
    if (node_->is_leaf || !node_->backward_fn) {
      throw InvalidArgument("backward() called without a recorded forward pass");
    }
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx < n->parents.size()) {
        Node* p = n->parents[idx++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    for (Node* n : order) {
      if (!n->is_leaf) n->grad.setZero(n->value.rows(), n->value.cols());
    }
    node_->grad(0, 0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->is_leaf) continue;
      for (auto& p : n->parents) {
        if (p->requires_grad) p->ensure_grad();
      }
      n->backward_fn(*n);
    }
    for (Node* n : order) {
      if (n->is_leaf) continue;
      n->backward_fn = nullptr;
      n->parents.clear();
      n->grad.resize(0, 0);
    }
  }

  Node& node() const { return *node_; }

 private:
  std::shared_ptr<Node> node_;
};

}  // namespace nstab::nn
