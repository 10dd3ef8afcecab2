#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hqgan {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

/// Backward callback of one recorded op. Receives this node's gradient for
/// the current backward pass and accumulates into parent pass-gradients.
/// parent_grad(i) returns the zero-initialized gradient buffer of parent i,
/// or nullptr when that parent does not take gradients.
using BackpropFn =
    std::function<void(const double* self_grad,
                       const std::function<double*(std::size_t)>& parent_grad)>;

struct TensorNode {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // persistent, accumulated across backward calls
  std::vector<NodePtr> parents;
  BackpropFn backprop;  // empty for leaves
};

}  // namespace detail

/// Dense 64-bit tensor with define-by-run reverse-mode differentiation.
/// Tensor is a cheap shared handle: copies alias the same node. The graph is
/// held alive by parent links from downstream results; each forward pass
/// builds a fresh graph.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> values,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  bool requires_grad() const;

  std::span<const double> data() const;
  /// Raw write access. Reserved for initialization and in-place optimizer
  /// updates; never mutate a tensor already consumed by a recorded op.
  std::span<double> mutable_data();

  /// Value of a single-element tensor.
  double value() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Every reachable requires_grad
  /// tensor accumulates its gradient; calling twice doubles the result.
  void backward() const;

  /// Constant copy sharing no graph history.
  Tensor detached() const;

  detail::TensorNode* node() const { return node_.get(); }

 private:
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
  friend Tensor make_op(Shape shape, std::vector<double> values,
                        std::vector<Tensor> inputs, detail::BackpropFn backprop);

  detail::NodePtr node_;
};

/// Records an op result into the graph. The node requires grad iff any input
/// does; backprop is dropped otherwise.
Tensor make_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
               detail::BackpropFn backprop);

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);  // same shape
Tensor mul(const Tensor& a, const Tensor& b);  // same shape
Tensor scale(const Tensor& x, double c);
Tensor sum(const Tensor& x);  // -> scalar

/// x * s and x / s with a single-element tensor s (gradients flow into both).
Tensor mul_by_scalar(const Tensor& x, const Tensor& s);
Tensor div_by_scalar(const Tensor& x, const Tensor& s);
Tensor sqrt_scalar(const Tensor& s);

Tensor reshape(const Tensor& x, Shape new_shape);

Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);

// ---------------------------------------------------------------------------
// Network ops
// ---------------------------------------------------------------------------

/// y = x W^T (+ b). x: [N,in], W: [out,in], b: [out] (optional).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

/// y = u M for a row vector u: [1,R] x [R,C] -> [1,C].
Tensor vecmat(const Tensor& u, const Tensor& m);

/// Cross-correlation. x: [N,C,H,W], W: [F,C,k,k] with k in {1,3},
/// b: [F] (optional). Output spatial size must be integral.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int padding);

/// Nearest-neighbor doubling: [N,C,H,W] -> [N,C,2H,2W].
Tensor upsample_nearest2x(const Tensor& x);

/// [N,C,H,W] -> [N,C], mean over the spatial extent.
Tensor global_avg_pool(const Tensor& x);

enum class Mode { kTrain, kEval };

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

/// Batch normalization over [N,C] (per feature) or [N,C,H,W] (per channel).
/// Train mode normalizes by batch statistics and updates the running stats;
/// eval mode normalizes by the running stats. Train mode requires N >= 2.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 BatchNormState& state, Mode mode, double eps = 1e-5,
                 double momentum = 0.1);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean over the batch of max(x,0) - x*t + log(1 + exp(-|x|)).
/// Finite for any finite logit; targets must be 0 or 1.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

/// Mean softmax cross-entropy with integer class labels. logits: [N,C].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Row-wise softmax of [N,C] logits (forward only, no graph).
std::vector<double> softmax_rows(const Tensor& logits);

}  // namespace hqgan
