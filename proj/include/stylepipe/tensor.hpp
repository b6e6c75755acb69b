#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "stylepipe/common.hpp"
#include "stylepipe/rng.hpp"

namespace stylepipe {

namespace detail {

struct Node {
    Shape shape;
    std::vector<real> data;
    std::vector<real> grad;  // allocated on first use, same length as data
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // adds into parents' grads

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    real* grad_data();
    bool is_leaf() const { return !backward_fn; }
};

}  // namespace detail

// When disabled, ops do not record the graph (inference mode).
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

// Optional NaN/Inf scan after every op, for tests and debugging.
void set_finite_checks(bool on);
bool finite_checks();

// Dense row-major tensor handle with reverse-mode gradients. Values are
// immutable once an op has consumed the tensor; gradients accumulate until
// zero_grad. A recorded graph must be walked by a single thread.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, real v);
  static Tensor from_vector(Shape shape, std::vector<real> values);
  static Tensor scalar(real v) { return full({1}, v); }
  static Tensor randn(Shape shape, Rng& rng, real stddev = 1);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t extent(int axis) const { return node_->shape[axis]; }

  real* data() { return node_->data.data(); }
  const real* data() const { return node_->data.data(); }
  real item() const;

  Tensor& set_requires_grad(bool on = true);
  bool requires_grad() const { return node_->requires_grad; }
  real* grad() { return node_->grad_data(); }
  const std::vector<real>& grad_vector() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  // reverse pass from a scalar; leaf grads accumulate across calls
  void backward();

  Tensor clone() const;     // copies values, drops graph and grad
  Tensor detached() const;  // alias of clone

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// graph-recording ops ------------------------------------------------------

// elementwise; b may also be a suffix-shaped tensor broadcast over leading dims
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real s);

// batched contraction over the two trailing dims; leading batch dims must
// match or be absent on one side
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor softmax_lastdim(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps = real(1e-5));
Tensor gelu(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& axes);
Tensor concat_lastdim(const Tensor& a, const Tensor& b);
Tensor embedding_row(const Tensor& table, int64_t index);  // -> [1, d]

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// value helpers (no graph)
bool same_values(const Tensor& a, const Tensor& b);
real max_abs_diff(const Tensor& a, const Tensor& b);
void check_finite(const Tensor& t, const char* where);

}  // namespace stylepipe
