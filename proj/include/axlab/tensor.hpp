#pragma once

// Dense row-major 2-D tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto shared storage; copying a Tensor aliases the
// same values and gradient buffer. Values become tape participants either by
// Tape::watch (leaves) or by being produced by an op whose input participates.
// Ops record themselves on the tape of their participating inputs, so the
// recording order is a valid topological order by construction.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "axlab/errors.hpp"

namespace axlab {

class Tape;

namespace detail {

struct TensorNode {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // empty unless the node is on a tape
  Tape* tape = nullptr;
  std::size_t op_index = 0;  // 1 + index of producing op; 0 for leaves
};

using NodePtr = std::shared_ptr<TensorNode>;

}  // namespace detail

class Tensor {
 public:
  Tensor();
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);
  static Tensor scalar(double v);

  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  std::string shape_string() const;

  double operator()(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  std::span<const double> values() const { return node_->value; }
  /// Writable view for optimizer updates and test perturbations. Writes are
  /// not recorded; do not mutate a value that an un-differentiated tape still uses.
  std::span<double> mutable_values() { return node_->value; }

  /// Untracked deep copy of row r as a 1 x cols tensor.
  Tensor row(std::size_t r) const;
  /// Untracked deep copy.
  Tensor detach() const;

  bool tracked() const { return node_->tape != nullptr; }
  Tape* tape() const { return node_->tape; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  /// Gradient as an untracked tensor (zeros when no buffer exists).
  Tensor grad_tensor() const;
  void zero_grad();

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  const detail::NodePtr& node() const { return node_; }
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

 private:
  detail::NodePtr node_;
};

/// Records differentiable operations. Non-copyable and non-movable because
/// participating tensors hold a pointer back to it; on destruction or clear()
/// recorded values are detached and become plain constants.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers t as a leaf with a zeroed gradient buffer and returns it.
  Tensor watch(Tensor t);

  /// Propagates d(loss)/d(.) into every participant. Leaf gradients accumulate
  /// across calls until zero_grad(); intermediate gradients are recomputed.
  void backward(const Tensor& loss);

  void zero_grad();
  /// Forgets all recorded ops; leaves stay registered.
  void clear();
  std::size_t op_count() const { return ops_.size(); }

  void record(const detail::NodePtr& output, BackwardFn fn);

 private:
  struct Op {
    detail::NodePtr output;
    BackwardFn backward;
  };
  std::vector<Op> ops_;
  std::vector<std::weak_ptr<detail::TensorNode>> leaves_;
};

/// Boolean keep-mask; masked entries take -inf before softmax.
struct Mask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<unsigned char> keep;

  Mask() = default;
  Mask(std::size_t r, std::size_t c, bool fill = true) : rows(r), cols(c), keep(r * c, fill ? 1 : 0) {}
  bool operator()(std::size_t r, std::size_t c) const { return keep[r * cols + c] != 0; }
  void set(std::size_t r, std::size_t c, bool k) { keep[r * cols + c] = k ? 1 : 0; }
};

// ---- differentiable ops ---------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// out[k] = sum_{j != k} w[k][j] (v[k] - v[j]) for square w. Equal to
/// diag(rowsum(w)) v - w v, but without the cancellation when w[k][k] is near 1.
Tensor weighted_differences(const Tensor& w, const Tensor& v);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// Adds a 1 x cols row to every row of a.
Tensor add_row(const Tensor& a, const Tensor& row);
/// Sum of all entries as a 1x1 tensor.
Tensor sum(const Tensor& a);
/// Column means as a 1 x cols tensor.
Tensor mean_rows(const Tensor& a);
Tensor gelu(const Tensor& a);

Tensor softmax_rows(const Tensor& a);
Tensor softmax_rows(const Tensor& a, const Mask& mask);

inline constexpr double kLayerNormEps = 1e-5;
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps);

/// Mean negative log-softmax of the target class per row; 1x1.
Tensor cross_entropy_logits(const Tensor& logits, std::span<const int> targets);

Tensor concat_cols(std::span<const Tensor> parts);
/// Rows [begin, begin+count) of a.
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
/// Row lookup: out[r] = table[indices[r]] (embedding).
Tensor gather_rows(const Tensor& table, std::span<const int> indices);

// ---- numerical oracle -----------------------------------------------------

using ScalarFn = std::function<double(const Tensor&)>;

inline constexpr double kFiniteDiffStep = 1e-5;

/// Central differences (f(x+h e) - f(x-h e)) / 2h for every coordinate of x.
Tensor finite_diff_grad(const ScalarFn& f, const Tensor& x, double h = kFiniteDiffStep);

/// max|a-b| / max(max|a|, max|b|); 0 when both are identically zero.
double relative_error(std::span<const double> a, std::span<const double> b);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace axlab
