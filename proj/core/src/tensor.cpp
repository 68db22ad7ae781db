#include "tp3m/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace tp3m {

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<double>>(static_cast<std::size_t>(t.numel()), 0.0);
  t.requires_grad = requires_grad;
  if (requires_grad) {
    t.grad = std::make_shared<std::vector<double>>(t.data->size(), 0.0);
  }
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : *t.data) v = value;
  return t;
}

Tensor Tensor::from(std::vector<double> values, std::vector<int> shape, bool requires_grad) {
  Tensor t;
  t.shape = std::move(shape);
  if (static_cast<std::int64_t>(values.size()) != t.numel()) {
    throw std::runtime_error("Tensor::from: data size does not match shape");
  }
  t.data = std::make_shared<std::vector<double>>(std::move(values));
  t.requires_grad = requires_grad;
  if (requires_grad) {
    t.grad = std::make_shared<std::vector<double>>(t.data->size(), 0.0);
  }
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({value}, {1}, requires_grad);
}

void Tensor::zero_grad() const {
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

void Tensor::backward() const {
  if (numel() != 1) throw std::runtime_error("backward: root must be a scalar");
  if (!requires_grad) throw std::runtime_error("backward: root does not require grad");

  // Topological order over tape nodes, then reverse.
  std::unordered_set<const TapeNode*> visited;
  std::vector<const Tensor*> post;
  // Iterative DFS with explicit post-order.
  struct Frame {
    const Tensor* t;
    std::size_t next_child;
  };
  std::vector<Frame> frames;
  if (node && !visited.count(node.get())) {
    frames.push_back({this, 0});
    visited.insert(node.get());
  }
  while (!frames.empty()) {
    Frame& f = frames.back();
    const TapeNode* n = f.t->node.get();
    if (f.next_child < n->parents.size()) {
      const Tensor& p = n->parents[f.next_child++];
      if (p.node && !visited.count(p.node.get())) {
        visited.insert(p.node.get());
        frames.push_back({&p, 0});
      }
    } else {
      post.push_back(f.t);
      frames.pop_back();
    }
  }

  (*grad)[0] += 1.0;
  for (auto it = post.rbegin(); it != post.rend(); ++it) {
    const Tensor* t = *it;
    if (t->node->backward) t->node->backward(*t);
  }
}

void check_finite(const Tensor& t, const char* op) {
  for (double v : *t.data) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string("non-finite value produced by op '") + op + "'");
    }
  }
}

std::string shape_str(const Tensor& t) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) os << "x";
    os << t.shape[i];
  }
  os << "]";
  return os.str();
}

}  // namespace tp3m
