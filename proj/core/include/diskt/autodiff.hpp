#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace diskt {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Learnable array with a name (used by checkpoints and the gradient-check
// report), a gradient accumulator, and optionally frozen rows. Frozen rows
// stay pinned at their initial value: their gradients are zeroed after each
// backward pass and the optimizer never touches them.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  std::vector<int> frozen_rows;

  Parameter() = default;
  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) {
    grad = Mat::Zero(value.rows(), value.cols());
  }

  void zero_grad() { grad.setZero(); }
  void zero_frozen_grad() {
    for (int r : frozen_rows) grad.row(r).setZero();
  }
  bool row_is_frozen(int r) const {
    for (int fr : frozen_rows)
      if (fr == r) return true;
    return false;
  }
};

class Tape;

// Handle into a Tape node. Valid only while its tape is alive.
class Var {
 public:
  Var() = default;
  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* t, int i) : tape_(t), idx_(i) {}
  Tape* tape_ = nullptr;
  int idx_ = -1;
};

// Append-only reverse-mode tape over dense matrices. One tape records one
// forward pass; backward() sweeps the nodes in reverse creation order.
// Gradients with respect to Parameters accumulate into Parameter::grad, so a
// minibatch is a sequence of tapes sharing the same parameter set.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat v);
  Var leaf(Parameter& p);
  // Embedding lookups. gather_rows picks whole rows of a table; grads scatter
  // back into the same rows. gather_entries reads column 0 of a (n x 1) table
  // and yields an (ids x 1) column.
  Var gather_rows(Parameter& table, std::span<const int> ids);
  Var gather_entries(Parameter& table, std::span<const int> ids);

  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cmul(Var a, Var b);
  Var cmul_const(Var a, const Mat& m);
  Var scale(Var a, double s);
  Var add_row_broadcast(Var a, Var row);   // a + replicated 1xD row
  Var mul_rows_by_col(Var a, Var col);     // row t scaled by col(t)
  Var sub_col_broadcast(Var a, Var col);   // row t minus col(t) on every entry
  Var hcat(std::span<const Var> parts);
  Var slice_cols(Var a, int first, int count);

  // Drops the last row, shifts everything down one step and writes a zero
  // first row: out.row(0) = 0, out.row(i) = a.row(i-1).
  Var shift_down_zero_top(Var a);
  Var zero_rows_from(Var a, int first_invalid);

  // Row-wise softmax where row i sees keys 0..i only. Rows and keys at or
  // beyond valid_len are masked out entirely (their outputs are zero).
  Var causal_softmax(Var logits, int valid_len);
  // Double softmax from the contradiction shield: inner causal softmax, then
  // rows renormalized over M[i][j] = 1 - cv[j] * inner[i][j]. cv entries are
  // treated as constants: no gradient flows through the flags.
  Var selective_causal_softmax(Var logits, const Vec& cv, int valid_len);

  Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-8);
  Var gelu(Var a);
  Var relu(Var a);
  Var sigmoid(Var a);

  // Mean over rows of -[r log p + (1-r) log(1-p)], branch per target so a
  // saturated probability on the matching side contributes exactly 0.
  Var bce_mean(Var probs, std::span<const int> targets);
  // Mean over rows of the row's Euclidean norm.
  Var row_norm_mean(Var a);
  Var add_scaled(Var a, Var b, double s);  // a + s*b

  // Seeds d(root)/d(root) = seed and runs the reverse sweep.
  void backward(Var root, double seed = 1.0);

  const Mat& value_of(Var v) const { return nodes_[v.idx_].value; }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> backprop;  // may be empty for constants
  };

  friend class Var;
  Var push(Mat value, std::function<void()> backprop = nullptr);
  Mat& grad_of(Var v) { return nodes_[v.idx_].grad; }

  std::vector<Node> nodes_;
};

inline const Mat& Var::value() const { return tape_->value_of(*this); }

// Row-major uniform fill in [-bound, bound] from a dedicated stream, so each
// parameter's draw is independent of every other parameter's shape.
Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, uint64_t seed);

}  // namespace diskt
