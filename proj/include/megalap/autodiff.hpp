#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "megalap/tensor.hpp"

namespace megalap {

struct Parameter;
class Tape;

enum class Padding { Valid, Zero, Reflect };

/// One recorded operation result. Nodes live on a Tape and stay valid until
/// Tape::reset(). Gradients are materialized lazily so dead branches cost
/// nothing during the backward sweep.
struct Node {
  Tensor value;
  Tensor grad;  // empty until first accumulation
  bool requires_grad = false;
  Parameter* owner = nullptr;  // set on parameter leaves
  size_t index = 0;            // position on the tape (a topological order)
  std::string label;
  std::function<void(Node&)> backprop;  // pulls this->grad into the parents

  Tensor& grad_ref();                       // materializes zeros on demand
  void accumulate(i64 i, double g);         // grad[i] += g
  void accumulate_all(const Tensor& g);     // grad += g (same shape)
};

/// Handle to a Node. Cheap to copy; invalidated by Tape::reset().
class Var {
public:
  Var() = default;
  Var(Tape* tape, Node* node) : tape_(tape), node_(node) {}

  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const;  // zeros-shaped view even if untouched
  const std::vector<i64>& shape() const { return node_->value.shape(); }
  i64 extent(i64 axis) const { return node_->value.extent(axis); }
  bool defined() const { return node_ != nullptr; }

  Tape* tape() const { return tape_; }
  Node* node() const { return node_; }

private:
  Tape* tape_ = nullptr;
  Node* node_ = nullptr;
};

/// Records the computation graph for one forward/backward pass. Creation
/// order is a valid topological order, so backward() is a single reverse
/// sweep. The tape is confined to one thread; call reset() between
/// iterations. backward() may run at most once per recorded graph — a second
/// call without reset() throws std::logic_error.
class Tape {
public:
  /// Leaf that never receives gradient (inputs, fixed kernels).
  Var constant(Tensor value, std::string label = "const");
  /// Leaf that accumulates gradient (used by gradient checks).
  Var leaf(Tensor value, std::string label = "leaf");
  /// Leaf bound to a Parameter; backward() adds into the parameter's grad.
  Var use(Parameter& p);

  Var make(Tensor value, bool requires_grad, std::string label);

  void reset();
  size_t size() const { return nodes_.size(); }
  Node& node(size_t i) { return *nodes_[i]; }

  bool backward_done = false;

private:
  std::vector<std::unique_ptr<Node>> nodes_;
};

/// Runs reverse-mode accumulation from a scalar loss, then flushes leaf
/// gradients into their owning Parameters (in tape order, deterministically).
void backward(const Var& loss);

// ---------------------------------------------------------------------------
// Differentiable operations. All ops validate shapes and throw
// std::invalid_argument naming the offending dimension.
// ---------------------------------------------------------------------------

/// 2-D cross-correlation over [B,Cin,H,W] with weights [Cout,Cin,kh,kw] and
/// bias [Cout]. Kernel extents must be odd. Zero/Reflect pad by (k-1)/2 per
/// side; Reflect uses symmetric (edge-inclusive) mirroring.
Var conv2d(const Var& input, const Var& weight, const Var& bias, i64 stride, Padding padding);

Var sigmoid(const Var& x);  // output clamped inside (0,1) even for huge logits
Var relu(const Var& x);
Var vabs(const Var& x);
/// scale * x + shift, elementwise.
Var affine(const Var& x, double scale, double shift);

// Elementwise with broadcasting: equal rank, every axis equal or 1.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// Scalar-by-scalar division (both operands numel 1).
Var div(const Var& a, const Var& b);

Var concat(const std::vector<Var>& xs, i64 axis);
Var max_pool2d(const Var& x, i64 k, i64 stride);
Var global_avg_pool(const Var& x);  // [B,C,H,W] -> [B,C,1,1]
Var global_max_pool(const Var& x);  // [B,C,H,W] -> [B,C,1,1]
Var channel_mean(const Var& x);     // [B,C,H,W] -> [B,1,H,W]
Var channel_max(const Var& x);      // [B,C,H,W] -> [B,1,H,W]

/// Bilinear interpolation of the trailing two axes to exactly (out_h, out_w).
/// Endpoint-aligned sampling: source position = o*(in-1)/(out-1); an output
/// extent of 1 samples the source center. Constants are preserved exactly.
Var upsample_bilinear(const Var& x, i64 out_h, i64 out_w);
Var upsample_bilinear(const Var& x, i64 factor);
/// Keeps even-indexed rows/columns of the trailing two axes (ceil-half extents).
Var downsample2(const Var& x);

Var sum(const Var& x);   // -> scalar [1]
Var mean(const Var& x);  // -> scalar [1]

/// Mean binary cross-entropy computed from logits in the numerically stable
/// log-sum form: max(x,0) - x*t + log1p(exp(-|x|)). Targets must be in {0,1}.
Var bce_with_logits(const Var& logit, const Tensor& target);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

/// Symmetric (edge-inclusive) mirror of p into [0,n): -1 -> 0, -2 -> 1,
/// n -> n-1. Total for any n >= 1. Shared by conv padding and the pyramid.
i64 reflect_index(i64 p, i64 n);

/// Interpolation stencil for one axis under the endpoint-aligned convention.
struct LerpTap {
  i64 lo, hi;
  double w_hi;  // weight of hi; lo gets 1 - w_hi
};
std::vector<LerpTap> lerp_taps(i64 in, i64 out);

}  // namespace megalap
