#include "freqtrain/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace freqtrain {

namespace {
std::atomic<uint64_t> g_next_id{1};

TensorNodePtr new_node(std::vector<int> shape, std::vector<double> values) {
  auto n = std::make_shared<TensorNode>();
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw TensorError("tensor shape " + shape_str(shape) + " does not match " +
                      std::to_string(values.size()) + " values");
  }
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}
}  // namespace

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw TensorError("non-positive dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  int64_t n = shape_numel(shape);
  auto node = new_node(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  int64_t n = shape_numel(shape);
  auto node = new_node(std::move(shape), std::vector<double>(static_cast<size_t>(n), value));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values,
                           bool requires_grad) {
  for (double v : values) {
    if (!std::isfinite(v)) throw TensorError("non-finite value entering tensor graph");
  }
  auto node = new_node(std::move(shape), std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::internal(std::vector<int> shape, std::vector<double> values) {
  return Tensor(new_node(std::move(shape), std::move(values)));
}

Tensor Tensor::detached_copy() const {
  auto node = new_node(node_->shape, node_->values);
  node->requires_grad = node_->requires_grad;
  return Tensor(std::move(node));
}

Tensor make_op_output(std::vector<int> shape, std::vector<double> values,
                      std::vector<Tensor> inputs,
                      std::function<void(TensorNode&)> backprop) {
  auto node = new_node(std::move(shape), std::move(values));
  bool needs = false;
  for (const auto& in : inputs) {
    if (in.requires_grad()) {
      needs = true;
      break;
    }
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backprop = std::move(backprop);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw TensorError("backward requires a defined scalar loss");
  }
  TensorNode* root = loss.node();
  if (root->consumed) {
    throw TensorError("backward called twice on a consumed graph");
  }
  if (!root->requires_grad) {
    // Constant loss: nothing reachable, all grads stay zero/absent.
    root->consumed = true;
    return;
  }

  // Collect reachable nodes; creation ids give a valid topological order
  // since parents are always created before children.
  std::vector<TensorNode*> nodes;
  std::unordered_set<TensorNode*> seen;
  std::vector<TensorNode*> stack{root};
  seen.insert(root);
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const TensorNode* a, const TensorNode* b) { return a->id > b->id; });

  root->ensure_grad();
  root->grad[0] = 1.0;
  for (TensorNode* n : nodes) {
    if (n->backprop) {
      n->ensure_grad();
      n->backprop(*n);
      n->backprop = nullptr;  // release captured buffers
      n->consumed = true;
    }
  }
  root->consumed = true;
}

}  // namespace freqtrain
