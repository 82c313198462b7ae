#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation of one forward pass in order. Nodes only
// reference earlier nodes, so the recording order is a topological order and
// backward() simply walks it in reverse. Tapes are cheap and meant to be
// thrown away after each bag.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace satomil::ad {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor row(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool same_shape(const Tensor& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<const double> row_span(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }

  void fill(double v);
  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// A trainable tensor living outside any tape. backward() adds into `grad`,
/// which is an accumulation buffer rather than part of the parameter's state;
/// that is why a const Parameter can still be bound to a recording tape.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  mutable Tensor grad;

  void zero_grad() const { grad.fill(0.0); }
};

using ParamList = std::vector<Parameter*>;

class Tape;

/// Handle to a node recorded on a Tape. Valid as long as the tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Called during backward with the node's own id; must add into parent grads.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  /// With `track_params` false, param() records plain constants (inference).
  explicit Tape(bool track_params = true) : track_params_(track_params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient is kept on the tape and readable via grad().
  Var input(Tensor value);
  /// Leaf bound to a parameter; backward() accumulates into param.grad.
  Var param(const Parameter& p);

  /// Records an op node. `fn` may be empty when no parent requires grad.
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn fn);

  /// Seeds d(root)/d(root) = 1 and propagates in reverse recording order.
  /// Leaf gradients (inputs and bound parameters) accumulate across calls.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Mutable gradient buffer of a node that requires grad, allocated on demand.
  Tensor& grad_buffer(std::size_t id);
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool leaf = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    const Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  bool track_params_ = true;
};

// ---- operations ---------------------------------------------------------

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
/// a[n x d] + bias[1 x d] broadcast over rows.
Var add_row(Var a, Var bias);
Var mul(Var a, Var b);
Var scale(Var a, double s);

enum class Pointwise { Relu, Sigmoid, Tanh };
Var pointwise(Var x, Pointwise kind);
Var relu(Var x);
/// Pre-activation is clamped to [-40, 40].
Var sigmoid(Var x);
Var tanh(Var x);

/// Row-wise normalization with population variance, then gain/bias ([1 x d]).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

enum class MaskApply {
  /// Masked logits are dropped before normalization; allowed entries sum to 1.
  PreSoftmax,
  /// Plain softmax over the whole row, then multiplied by the mask.
  PostSoftmax,
};
/// Row-wise softmax. `mask` holds 0/1 entries with the logits' shape.
Var masked_softmax(Var logits, const Tensor& mask, MaskApply mode = MaskApply::PreSoftmax);
Var softmax_rows(Var logits);

Var concat_rows(Var top, Var bottom);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
/// [n x d] -> [1 x d]
Var mean_rows(Var a);
/// [n x d] -> [1 x d]; the gradient flows to the first row attaining each max.
Var max_rows(Var a);
/// [n x d] -> [n x 1]
Var sum_cols(Var a);
/// Sum of every entry -> [1 x 1]
Var sum(Var a);

/// Softmax cross-entropy of a [1 x K] logit row against a 0-based class.
Var softmax_cross_entropy(Var logits, std::size_t target);

// ---- gradient checking --------------------------------------------------

using ScalarGraph = std::function<Var(Tape&)>;

/// Max over parameter entries of |analytic - numeric| / max(1, |analytic|, |numeric|)
/// using central differences. Parameter grads are overwritten.
double grad_check(const ScalarGraph& f, const ParamList& params, double step = 1e-5);

/// Forward value of a scalar graph built on a fresh tape.
double evaluate(const ScalarGraph& f);

}  // namespace satomil::ad
