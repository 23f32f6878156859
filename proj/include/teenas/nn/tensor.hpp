// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode differentiation over dense row-major tensors.
// A Graph records one forward pass; backward() walks it in reverse creation
// order and accumulates into the Parameters that were fed in.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace teenas::nn {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);
  Tensor(std::vector<int> s, std::vector<double> values);

  [[nodiscard]] std::size_t size() const { return data.size(); }
  [[nodiscard]] int dim(std::size_t i) const { return shape.at(i); }
  [[nodiscard]] std::size_t rank() const { return shape.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
};

std::size_t shape_size(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

struct Parameter {
  std::string name;
  Tensor value;
  mutable Tensor grad;  // accumulated by Graph::backward

  void zero_grad() const;
};

class Graph {
 public:
  using Id = int;
  using Backward = std::function<void(Graph&, Id)>;

  Id constant(Tensor value);
  Id param(const Parameter& p);
  Id node(Tensor value, std::vector<Id> parents, Backward backward);

  [[nodiscard]] const Tensor& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  [[nodiscard]] const std::vector<int>& shape(Id id) const { return value(id).shape; }
  [[nodiscard]] bool requires_grad(Id id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  /// Gradient buffer of a node; allocated on first access during backward.
  Tensor& grad(Id id);

  /// Seeds d(root)/d(root) = 1 for a scalar root and propagates. Parameter
  /// gradients are added to Parameter::grad; non-finite values throw NumericalError.
  void backward(Id root);
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<Id> parents;
    Backward backward;
    bool requires_grad = false;
    const Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
};

}  // namespace teenas::nn
