#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every primitive applied to its variables. Values are
// computed eagerly; backward() replays the record in reverse order. Every
// tensor in the toolkit is two-dimensional (vectors are 1 x n rows, scalars
// are 1 x 1), which is all the sequence models need.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "chanmt/error.hpp"

namespace chanmt::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1 x 1 variable.
  double item() const;
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Matrix value);
  /// Leaf owned by the tape that receives a gradient (query with grad()).
  Var variable(Matrix value);
  /// Leaf backed by external storage. The value is referenced, not copied,
  /// and must outlive the tape. When `grad_sink` is non-null the gradient is
  /// added into it at the end of backward(); otherwise the leaf is constant.
  Var parameter(const Matrix& value, Matrix* grad_sink);

  /// Propagates d(loss)/d(node) to every node that requires a gradient.
  /// `loss` must be 1 x 1 and live on this tape. A tape supports a single
  /// backward pass; a second call throws ContractError.
  void backward(Var loss);

  bool has_grad(Var v) const;
  /// Gradient of the last backward() with respect to `v`.
  const Matrix& grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

  // Used by the primitives.
  Var record(Matrix value, std::span<const Var> inputs, BackwardFn fn);
  const Matrix& value(int id) const;
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  /// Gradient accumulator of node `id`, zero-initialised on first access.
  Matrix& grad_ref(int id);

 private:
  struct Node {
    Matrix owned;
    const Matrix* external = nullptr;
    Matrix grad;
    bool grad_ready = false;
    bool requires_grad = false;
    Matrix* sink = nullptr;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

// ---------------------------------------------------------------------------
// Primitives. Inputs must live on the same tape.

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
/// x * w + bias, with bias a 1 x n row broadcast over the rows of x.
Var affine(Var x, Var w, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// Adds the 1 x n row `row` to every row of `a`.
Var add_row(Var a, Var row);
Var relu(Var a);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// Sum of all entries, as a 1 x 1 variable.
Var sum(Var a);
/// Column vector whose i-th entry is a(i, ids[i]).
Var pick(Var a, std::span<const int> ids);
/// Rows of `table` selected by `ids`, in order.
Var gather_rows(Var table, std::span<const int> ids);
Var slice_rows(Var a, Index start, Index count);
Var concat_rows(std::span<const Var> parts);
/// Scaled dot-product attention over `heads` equal column blocks.
/// With `causal`, query row i only attends to key rows j <= i.
Var multihead_attention(Var q, Var k, Var v, int heads, bool causal);
/// Inverted dropout. `rate` of zero returns `a` unchanged.
Var dropout(Var a, double rate, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Plain kernels shared by the tape primitives and the inference path so that
// both produce bitwise-identical values for identical shapes.

namespace kernel {

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& bias);
Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps = 1e-5);
Matrix relu(const Matrix& a);
Matrix softmax_rows(const Matrix& a);
Matrix log_softmax_rows(const Matrix& a);
/// Attention of the rows of `q` against all rows of `k`/`v`. With `causal`,
/// query row i sees key rows j <= i + offset.
Matrix multihead_attention(const Matrix& q, const Matrix& k, const Matrix& v, int heads, bool causal,
                           Index offset = 0);

}  // namespace kernel

/// Numerically stable log-softmax of a vector. Throws NumericInputError on an
/// empty or non-finite input.
std::vector<double> log_softmax(std::span<const double> logits);

// ---------------------------------------------------------------------------
// Adam with bias correction and coupled (L2) weight decay.

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  std::int64_t step_count = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;

  static AdamState create(const std::vector<Matrix>& params, const AdamOptions& options);
};

/// One Adam update of `params` in place. The weight-decay term is added to
/// the gradient before the moment updates.
void adam_step(std::vector<Matrix>& params, const std::vector<Matrix>& grads, AdamState& state);

/// Zeroed gradient buffers shaped like `params`.
std::vector<Matrix> zeros_like(const std::vector<Matrix>& params);

}  // namespace chanmt::ad
