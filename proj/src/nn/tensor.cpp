// SPDX-License-Identifier: Apache-2.0
#include "teenas/nn/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "teenas/error.hpp"

namespace teenas::nn {

std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(std::vector<int> s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_size(shape)) {
    throw std::invalid_argument("tensor: " + std::to_string(data.size()) + " values for shape " + shape_string(shape));
  }
}

void Parameter::zero_grad() const {
  grad.shape = value.shape;
  grad.data.assign(value.size(), 0.0);
}

Graph::Id Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Graph::Id Graph::param(const Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Graph::Id Graph::node(Tensor value, std::vector<Id> parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (Id p : parents) n.requires_grad = n.requires_grad || requires_grad(p);
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tensor& Graph::grad(Id id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.data.size() != n.value.size()) {
    n.grad.shape = n.value.shape;
    n.grad.data.assign(n.value.size(), 0.0);
  }
  return n.grad;
}

void Graph::backward(Id root) {
  if (value(root).size() != 1) throw std::invalid_argument("backward: root must be a scalar");
  if (!requires_grad(root)) return;
  grad(root).data[0] = 1.0;
  for (Id id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.data.empty()) continue;
    if (n.param) {
      const Parameter& p = *n.param;
      if (p.grad.size() != p.value.size()) p.zero_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        if (!std::isfinite(n.grad.data[i])) throw NumericalError("non-finite gradient for parameter " + p.name);
        p.grad.data[i] += n.grad.data[i];
      }
    } else if (n.backward) {
      n.backward(*this, id);
    }
    // Release interior gradients as soon as they are consumed.
    if (!n.param) n.grad = Tensor();
  }
}

}  // namespace teenas::nn
