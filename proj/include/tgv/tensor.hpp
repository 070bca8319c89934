#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tgv/errors.hpp"
#include "tgv/rng.hpp"

namespace tgv {

using Shape = std::vector<int64_t>;

int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorNode;

/// Dense row-major tensor of 64-bit floats with reverse-mode differentiation.
///
/// A Tensor is a cheap value handle onto a graph node. Ops record their
/// parents and a backward function; backward() on a scalar root walks the
/// graph in reverse topological order. Leaf gradients accumulate across
/// backward calls until zero_grad() is called.
class Tensor {
 public:
  Tensor();  // empty, shape {} with no storage semantics; size() == 0

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// i.i.d. truncated normal entries (|z| <= cutoff before scaling).
  static Tensor truncated_normal(Shape shape, double stddev, Rng& rng,
                                 bool requires_grad = false, double cutoff = 2.0);
  static Tensor randn(Shape shape, Rng& rng, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t rank() const { return static_cast<int64_t>(shape().size()); }
  int64_t size() const;

  const double* data() const;
  double* data();
  const std::vector<double>& values() const;
  double item() const;  // value of a single-element tensor
  double at(std::initializer_list<int64_t> idx) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool v);

  /// Gradient buffer; zeros if no backward pass has touched this tensor.
  const std::vector<double>& grad() const;
  bool has_grad() const;
  void zero_grad();

  /// Same values, detached from the graph (no parents, no grad tracking).
  Tensor detach() const;
  /// Deep copy of the values into a fresh leaf.
  Tensor clone() const;

  /// Reverse-mode sweep from a scalar root. Accumulates into leaf grads.
  void backward() const;

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  bool requires_grad = false;
  std::vector<double> grad;  // sized lazily to value.size()
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(const TensorNode&)> backward_fn;
  const char* op = "leaf";

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

/// When enabled (thread-local), every op scans its output for NaN/Inf and
/// throws NumericError naming the op. Tests and the debug profile turn it
/// on; the release CLI leaves it off unless a run opts in.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

/// Thread-local autograd mode; disable during evaluation to skip graph
/// construction entirely.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_mode_enabled();

}  // namespace tgv
