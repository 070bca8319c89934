#include "tgv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace tgv {

namespace {
thread_local bool g_finite_checks =
#ifdef NDEBUG
    false;
#else
    true;
#endif
thread_local bool g_grad_mode = true;
}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

NoGradGuard::NoGradGuard() : prev_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = prev_; }
bool grad_mode_enabled() { return g_grad_mode; }

int64_t shape_size(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor() : node_(nullptr) {}

static std::shared_ptr<TensorNode> make_leaf(Shape shape,
                                             std::vector<double> data,
                                             bool requires_grad) {
  for (int64_t d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
  }
  if (shape_size(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> data(static_cast<size_t>(shape_size(shape)), 0.0);
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> data(static_cast<size_t>(shape_size(shape)), value);
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf(Shape{}, {value}, requires_grad));
}

Tensor Tensor::truncated_normal(Shape shape, double stddev, Rng& rng,
                                bool requires_grad, double cutoff) {
  std::vector<double> data(static_cast<size_t>(shape_size(shape)));
  for (double& v : data) v = rng.truncated_normal(stddev, cutoff);
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::randn(Shape shape, Rng& rng, bool requires_grad) {
  std::vector<double> data(static_cast<size_t>(shape_size(shape)));
  for (double& v : data) v = rng.normal();
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

static const Shape kEmptyShape{};
static const std::vector<double> kEmptyData{};

const Shape& Tensor::shape() const {
  return node_ ? node_->shape : kEmptyShape;
}

int64_t Tensor::size() const {
  return node_ ? static_cast<int64_t>(node_->value.size()) : 0;
}

const double* Tensor::data() const { return node_->value.data(); }
double* Tensor::data() { return node_->value.data(); }
const std::vector<double>& Tensor::values() const { return node_->value; }

double Tensor::item() const {
  if (!node_ || node_->value.size() != 1) {
    throw UsageError("item() requires a single-element tensor, got shape " +
                     shape_str(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  const Shape& s = shape();
  if (idx.size() != s.size()) {
    throw UsageError("at(): index rank mismatch for shape " + shape_str(s));
  }
  int64_t flat = 0;
  size_t i = 0;
  for (int64_t v : idx) {
    flat = flat * s[i] + v;
    ++i;
  }
  return node_->value[static_cast<size_t>(flat)];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
  node_->requires_grad = v;
  return *this;
}

const std::vector<double>& Tensor::grad() const {
  if (!node_ || node_->grad.empty()) return kEmptyData;
  return node_->grad;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
  return Tensor(make_leaf(shape(), node_->value, false));
}

Tensor Tensor::clone() const {
  return Tensor(make_leaf(shape(), node_->value, node_->requires_grad));
}

void Tensor::backward() const {
  if (!node_) throw UsageError("backward() on an empty tensor");
  if (node_->value.size() != 1) {
    throw UsageError("backward() requires a scalar root, got shape " +
                     shape_str(node_->shape));
  }
  if (!node_->requires_grad) return;  // nothing upstream tracks gradients

  // Reverse topological order via iterative post-order DFS.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* n;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get(), 0});
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.n->parents.size()) {
      TensorNode* p = f.n->parents[f.next_parent++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  // Interior buffers are per-pass scratch; only leaves accumulate across
  // repeated backward calls.
  for (TensorNode* n : order) {
    if (n->backward_fn) n->grad.assign(n->value.size(), 0.0);
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace tgv
