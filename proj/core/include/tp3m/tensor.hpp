#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace tp3m {

struct Tensor;

// One recorded primitive op: the inputs it consumed and how to push the
// output gradient back into them.
struct TapeNode {
  std::vector<Tensor> parents;
  std::function<void(const Tensor& out)> backward;
};

// Dense float64 tensor. Handles share storage; values are never mutated by
// ops after construction (parameter updates happen between graph builds).
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<double>> data;
  std::shared_ptr<std::vector<double>> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::shared_ptr<TapeNode> node;

  Tensor() = default;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  bool defined() const { return static_cast<bool>(data); }

  // Storage is shared between handles; pointers stay mutable through const
  // handles so backward closures can accumulate into parents.
  double* ptr() const { return data->data(); }
  double* gptr() const { return grad->data(); }

  double& at(int i) { return (*data)[static_cast<std::size_t>(i)]; }
  double at(int i) const { return (*data)[static_cast<std::size_t>(i)]; }
  double& at(int i, int j) { return (*data)[static_cast<std::size_t>(i) * shape[1] + j]; }
  double at(int i, int j) const { return (*data)[static_cast<std::size_t>(i) * shape[1] + j]; }
  // {C,H,W} layout
  double& at(int c, int y, int x) {
    return (*data)[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  double at(int c, int y, int x) const {
    return (*data)[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
  }

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from(std::vector<double> values, std::vector<int> shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  void zero_grad() const;
  // Reverse-mode sweep from a scalar root. Each upstream use of a tensor
  // contributes exactly one gradient accumulation.
  void backward() const;
};

// Scoped switch that stops ops from recording tape nodes (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// Throws if any element is NaN/Inf; every op calls this on its output.
void check_finite(const Tensor& t, const char* op);

std::string shape_str(const Tensor& t);

}  // namespace tp3m
