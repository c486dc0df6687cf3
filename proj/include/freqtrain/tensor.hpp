#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace freqtrain {

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TensorNode;
using TensorNodePtr = std::shared_ptr<TensorNode>;

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated on demand, same length as values
  bool requires_grad = false;
  uint64_t id = 0;  // creation order; parents always precede children

  std::vector<TensorNodePtr> parents;
  std::function<void(TensorNode&)> backprop;  // accumulates into parents' grads
  bool consumed = false;

  int64_t size() const { return static_cast<int64_t>(values.size()); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

// Dense n-dimensional double tensor participating in a reverse-mode
// differentiation graph. Value-like handle; copies share the node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  // Checks all values finite; this is the graph boundary for external data.
  static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);
  // No finiteness check; for internal op outputs.
  static Tensor internal(std::vector<int> shape, std::vector<double> values);

  bool defined() const { return static_cast<bool>(node_); }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int64_t size() const { return node_->size(); }

  std::vector<double>& values() { return node_->values; }
  const std::vector<double>& values() const { return node_->values; }
  std::vector<double>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<double>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->values.size(); }
  void zero_grad() {
    if (has_grad()) node_->grad.assign(node_->values.size(), 0.0);
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  double item() const {
    if (size() != 1) throw TensorError("item() on non-scalar tensor");
    return node_->values[0];
  }

  TensorNode* node() const { return node_.get(); }
  const TensorNodePtr& node_ptr() const { return node_; }

  // Deep copy of values only (no graph, no grad).
  Tensor detached_copy() const;

 private:
  explicit Tensor(TensorNodePtr node) : node_(std::move(node)) {}
  TensorNodePtr node_;

  friend Tensor make_op_output(std::vector<int> shape, std::vector<double> values,
                               std::vector<Tensor> inputs,
                               std::function<void(TensorNode&)> backprop);
};

// Creates an op output node wired to its inputs; requires_grad is inherited.
// `backprop` may be empty when no input requires grad (it is then dropped).
Tensor make_op_output(std::vector<int> shape, std::vector<double> values,
                      std::vector<Tensor> inputs,
                      std::function<void(TensorNode&)> backprop);

// Reverse-mode sweep from a scalar loss. Fills grads of every reachable
// tensor with requires_grad set. The graph is single-use: a second backward
// through the same loss throws.
void backward(const Tensor& loss);

std::string shape_str(const std::vector<int>& shape);
int64_t shape_numel(const std::vector<int>& shape);

}  // namespace freqtrain
