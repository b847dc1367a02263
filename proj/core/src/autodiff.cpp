#include "diskt/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <utility>

#include "diskt/rng.hpp"

namespace diskt {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Softmax over the first `visible` entries of a logits row; the rest are 0.
void softmax_prefix(const Eigen::RowVectorXd& logits, int visible,
                    Eigen::RowVectorXd& out) {
  out.setZero(logits.size());
  if (visible <= 0) return;
  double mx = logits.head(visible).maxCoeff();
  double sum = 0.0;
  for (int j = 0; j < visible; ++j) {
    double e = std::exp(logits(j) - mx);
    out(j) = e;
    sum += e;
  }
  out.head(visible) /= sum;
}

// dL/dlogits for y = softmax(x) restricted to the first `visible` entries.
void softmax_prefix_backward(const Eigen::RowVectorXd& y,
                             const Eigen::RowVectorXd& gy, int visible,
                             Eigen::RowVectorXd& gx) {
  gx.setZero(y.size());
  if (visible <= 0) return;
  double dot = 0.0;
  for (int j = 0; j < visible; ++j) dot += gy(j) * y(j);
  for (int j = 0; j < visible; ++j) gx(j) = y(j) * (gy(j) - dot);
}

}  // namespace

Var Tape::push(Mat value, std::function<void()> backprop) {
  Node node;
  node.value = std::move(value);
  node.grad = Mat::Zero(node.value.rows(), node.value.cols());
  node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Mat v) { return push(std::move(v)); }

Var Tape::leaf(Parameter& p) {
  Parameter* pp = &p;
  Var out = push(p.value);
  int oi = out.idx_;
  nodes_[oi].backprop = [this, pp, oi] { pp->grad += nodes_[oi].grad; };
  return out;
}

Var Tape::gather_rows(Parameter& table, std::span<const int> ids) {
  Parameter* pp = &table;
  std::vector<int> idx(ids.begin(), ids.end());
  Mat v(static_cast<Eigen::Index>(idx.size()), table.value.cols());
  for (size_t t = 0; t < idx.size(); ++t) v.row(t) = table.value.row(idx[t]);
  Var out = push(std::move(v));
  int oi = out.idx_;
  nodes_[oi].backprop = [this, pp, oi, idx = std::move(idx)] {
    const Mat& g = nodes_[oi].grad;
    for (size_t t = 0; t < idx.size(); ++t) pp->grad.row(idx[t]) += g.row(t);
  };
  return out;
}

Var Tape::gather_entries(Parameter& table, std::span<const int> ids) {
  Parameter* pp = &table;
  std::vector<int> idx(ids.begin(), ids.end());
  Mat v(static_cast<Eigen::Index>(idx.size()), 1);
  for (size_t t = 0; t < idx.size(); ++t) v(t, 0) = table.value(idx[t], 0);
  Var out = push(std::move(v));
  int oi = out.idx_;
  nodes_[oi].backprop = [this, pp, oi, idx = std::move(idx)] {
    const Mat& g = nodes_[oi].grad;
    for (size_t t = 0; t < idx.size(); ++t) pp->grad(idx[t], 0) += g(t, 0);
  };
  return out;
}

Var Tape::matmul(Var a, Var b) {
  Var out = push(a.value() * b.value());
  int ai = a.idx_, bi = b.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, bi, oi] {
    const Mat& g = nodes_[oi].grad;
    nodes_[ai].grad.noalias() += g * nodes_[bi].value.transpose();
    nodes_[bi].grad.noalias() += nodes_[ai].value.transpose() * g;
  };
  return out;
}

Var Tape::matmul_nt(Var a, Var b) {
  Var out = push(a.value() * b.value().transpose());
  int ai = a.idx_, bi = b.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, bi, oi] {
    const Mat& g = nodes_[oi].grad;
    nodes_[ai].grad.noalias() += g * nodes_[bi].value;
    nodes_[bi].grad.noalias() += g.transpose() * nodes_[ai].value;
  };
  return out;
}

Var Tape::add(Var a, Var b) {
  Var out = push(a.value() + b.value());
  int ai = a.idx_, bi = b.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, bi, oi] {
    nodes_[ai].grad += nodes_[oi].grad;
    nodes_[bi].grad += nodes_[oi].grad;
  };
  return out;
}

Var Tape::sub(Var a, Var b) {
  Var out = push(a.value() - b.value());
  int ai = a.idx_, bi = b.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, bi, oi] {
    nodes_[ai].grad += nodes_[oi].grad;
    nodes_[bi].grad -= nodes_[oi].grad;
  };
  return out;
}

Var Tape::cmul(Var a, Var b) {
  Var out = push(a.value().cwiseProduct(b.value()));
  int ai = a.idx_, bi = b.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, bi, oi] {
    const Mat& g = nodes_[oi].grad;
    nodes_[ai].grad += g.cwiseProduct(nodes_[bi].value);
    nodes_[bi].grad += g.cwiseProduct(nodes_[ai].value);
  };
  return out;
}

Var Tape::cmul_const(Var a, const Mat& m) {
  Var out = push(a.value().cwiseProduct(m));
  int ai = a.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, oi, m] {
    nodes_[ai].grad += nodes_[oi].grad.cwiseProduct(m);
  };
  return out;
}

Var Tape::scale(Var a, double s) {
  Var out = push(a.value() * s);
  int ai = a.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, oi, s] {
    nodes_[ai].grad += nodes_[oi].grad * s;
  };
  return out;
}

Var Tape::add_row_broadcast(Var a, Var row) {
  assert(row.rows() == 1 && row.cols() == a.cols());
  Mat v = a.value();
  v.rowwise() += row.value().row(0);
  Var out = push(std::move(v));
  int ai = a.idx_, ri = row.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, ri, oi] {
    const Mat& g = nodes_[oi].grad;
    nodes_[ai].grad += g;
    nodes_[ri].grad.row(0) += g.colwise().sum();
  };
  return out;
}

Var Tape::mul_rows_by_col(Var a, Var col) {
  assert(col.cols() == 1 && col.rows() == a.rows());
  Mat v = a.value().array().colwise() * col.value().col(0).array();
  Var out = push(std::move(v));
  int ai = a.idx_, ci = col.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, ci, oi] {
    const Mat& g = nodes_[oi].grad;
    nodes_[ai].grad.array() += g.array().colwise() * nodes_[ci].value.col(0).array();
    nodes_[ci].grad.col(0) += g.cwiseProduct(nodes_[ai].value).rowwise().sum();
  };
  return out;
}

Var Tape::sub_col_broadcast(Var a, Var col) {
  assert(col.cols() == 1 && col.rows() == a.rows());
  Mat v = a.value().array().colwise() - col.value().col(0).array();
  Var out = push(std::move(v));
  int ai = a.idx_, ci = col.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, ci, oi] {
    const Mat& g = nodes_[oi].grad;
    nodes_[ai].grad += g;
    nodes_[ci].grad.col(0) -= g.rowwise().sum();
  };
  return out;
}

Var Tape::hcat(std::span<const Var> parts) {
  assert(!parts.empty());
  Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) cols += p.cols();
  Mat v(rows, cols);
  Eigen::Index at = 0;
  std::vector<int> pidx;
  std::vector<Eigen::Index> offs, widths;
  for (const Var& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    pidx.push_back(p.idx_);
    offs.push_back(at);
    widths.push_back(p.cols());
    at += p.cols();
  }
  Var out = push(std::move(v));
  int oi = out.idx_;
  nodes_[oi].backprop = [this, oi, pidx = std::move(pidx), offs = std::move(offs),
                         widths = std::move(widths)] {
    const Mat& g = nodes_[oi].grad;
    for (size_t k = 0; k < pidx.size(); ++k)
      nodes_[pidx[k]].grad += g.middleCols(offs[k], widths[k]);
  };
  return out;
}

Var Tape::slice_cols(Var a, int first, int count) {
  Var out = push(a.value().middleCols(first, count));
  int ai = a.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, oi, first, count] {
    nodes_[ai].grad.middleCols(first, count) += nodes_[oi].grad;
  };
  return out;
}

Var Tape::shift_down_zero_top(Var a) {
  const Mat& av = a.value();
  Mat v = Mat::Zero(av.rows(), av.cols());
  if (av.rows() > 1) v.bottomRows(av.rows() - 1) = av.topRows(av.rows() - 1);
  Var out = push(std::move(v));
  int ai = a.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, oi] {
    const Mat& g = nodes_[oi].grad;
    if (g.rows() > 1)
      nodes_[ai].grad.topRows(g.rows() - 1) += g.bottomRows(g.rows() - 1);
  };
  return out;
}

Var Tape::zero_rows_from(Var a, int first_invalid) {
  Mat v = a.value();
  for (Eigen::Index r = first_invalid; r < v.rows(); ++r) v.row(r).setZero();
  Var out = push(std::move(v));
  int ai = a.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, oi, first_invalid] {
    const Mat& g = nodes_[oi].grad;
    Eigen::Index n = std::min<Eigen::Index>(first_invalid, g.rows());
    nodes_[ai].grad.topRows(n) += g.topRows(n);
  };
  return out;
}

Var Tape::causal_softmax(Var logits, int valid_len) {
  const Mat& x = logits.value();
  const int T = static_cast<int>(x.rows());
  const int v = std::min(valid_len, T);
  Mat w = Mat::Zero(T, T);
  Eigen::RowVectorXd row;
  for (int i = 0; i < v; ++i) {
    int visible = std::min(i + 1, v);
    softmax_prefix(x.row(i), visible, row);
    w.row(i) = row;
  }
  Var out = push(std::move(w));
  int li = logits.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, li, oi, v] {
    const Mat& y = nodes_[oi].value;
    const Mat& gy = nodes_[oi].grad;
    Eigen::RowVectorXd gx;
    for (int i = 0; i < v; ++i) {
      int visible = std::min(i + 1, v);
      softmax_prefix_backward(y.row(i), gy.row(i), visible, gx);
      nodes_[li].grad.row(i) += gx;
    }
  };
  return out;
}

Var Tape::selective_causal_softmax(Var logits, const Vec& cv, int valid_len) {
  const Mat& x = logits.value();
  const int T = static_cast<int>(x.rows());
  const int v = std::min(valid_len, T);
  Mat inner = Mat::Zero(T, T);
  Mat outer = Mat::Zero(T, T);
  Eigen::RowVectorXd row, mrow;
  for (int i = 0; i < v; ++i) {
    int visible = std::min(i + 1, v);
    softmax_prefix(x.row(i), visible, row);
    inner.row(i) = row;
    mrow.setZero(T);
    for (int j = 0; j < visible; ++j) mrow(j) = 1.0 - cv(j) * row(j);
    softmax_prefix(mrow, visible, row);
    outer.row(i) = row;
  }
  Var out = push(std::move(outer));
  int li = logits.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, li, oi, v, cv, inner = std::move(inner)] {
    const Mat& y = nodes_[oi].value;
    const Mat& gy = nodes_[oi].grad;
    Eigen::RowVectorXd gm, ginner, gx;
    for (int i = 0; i < v; ++i) {
      int visible = std::min(i + 1, v);
      softmax_prefix_backward(y.row(i), gy.row(i), visible, gm);
      ginner.setZero(gm.size());
      for (int j = 0; j < visible; ++j) ginner(j) = -cv(j) * gm(j);
      softmax_prefix_backward(inner.row(i), ginner, visible, gx);
      nodes_[li].grad.row(i) += gx;
    }
  };
  return out;
}

Var Tape::layer_norm(Var a, Var gain, Var bias, double eps) {
  const Mat& x = a.value();
  const Eigen::Index T = x.rows(), d = x.cols();
  Mat xhat(T, d);
  Vec inv_sd(T);
  for (Eigen::Index i = 0; i < T; ++i) {
    double mu = x.row(i).mean();
    double var = (x.row(i).array() - mu).square().mean();
    double s = 1.0 / std::sqrt(var + eps);
    inv_sd(i) = s;
    xhat.row(i) = (x.row(i).array() - mu) * s;
  }
  Mat y = xhat.array().rowwise() * gain.value().row(0).array();
  y.rowwise() += bias.value().row(0);
  Var out = push(std::move(y));
  int ai = a.idx_, gi = gain.idx_, bi = bias.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, gi, bi, oi, xhat = std::move(xhat),
                         inv_sd = std::move(inv_sd)] {
    const Mat& g = nodes_[oi].grad;
    nodes_[bi].grad.row(0) += g.colwise().sum();
    nodes_[gi].grad.row(0) += g.cwiseProduct(xhat).colwise().sum();
    const Eigen::RowVectorXd& gain_row = nodes_[gi].value.row(0);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      Eigen::RowVectorXd dxhat = g.row(i).cwiseProduct(gain_row);
      double m1 = dxhat.mean();
      double m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
      nodes_[ai].grad.row(i) +=
          inv_sd(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2).matrix();
    }
  };
  return out;
}

Var Tape::gelu(Var a) {
  const Mat& x = a.value();
  Mat y = x.unaryExpr([](double t) { return 0.5 * t * (1.0 + std::erf(t * kInvSqrt2)); });
  Var out = push(std::move(y));
  int ai = a.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, oi] {
    const Mat& x0 = nodes_[ai].value;
    Mat d = x0.unaryExpr([](double t) {
      double phi = 0.5 * (1.0 + std::erf(t * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * t * t);
      return phi + t * pdf;
    });
    nodes_[ai].grad += nodes_[oi].grad.cwiseProduct(d);
  };
  return out;
}

Var Tape::relu(Var a) {
  Mat y = a.value().cwiseMax(0.0);
  Var out = push(std::move(y));
  int ai = a.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, oi] {
    const Mat& x0 = nodes_[ai].value;
    nodes_[ai].grad +=
        nodes_[oi].grad.cwiseProduct(x0.unaryExpr([](double t) { return t > 0.0 ? 1.0 : 0.0; }));
  };
  return out;
}

Var Tape::sigmoid(Var a) {
  Mat y = a.value().unaryExpr([](double t) { return 1.0 / (1.0 + std::exp(-t)); });
  Var out = push(std::move(y));
  int ai = a.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, oi] {
    const Mat& y0 = nodes_[oi].value;
    nodes_[ai].grad += nodes_[oi].grad.cwiseProduct(
        y0.cwiseProduct((1.0 - y0.array()).matrix()));
  };
  return out;
}

Var Tape::bce_mean(Var probs, std::span<const int> targets) {
  const Mat& p = probs.value();
  assert(p.cols() == 1 && p.rows() == static_cast<Eigen::Index>(targets.size()));
  std::vector<int> r(targets.begin(), targets.end());
  const double n = static_cast<double>(r.size());
  double loss = 0.0;
  for (size_t t = 0; t < r.size(); ++t)
    loss += r[t] == 1 ? -std::log(p(t, 0)) : -std::log(1.0 - p(t, 0));
  Mat v(1, 1);
  v(0, 0) = loss / n;
  Var out = push(std::move(v));
  int pi = probs.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, pi, oi, r = std::move(r), n] {
    double g = nodes_[oi].grad(0, 0);
    const Mat& p0 = nodes_[pi].value;
    for (size_t t = 0; t < r.size(); ++t) {
      double d = r[t] == 1 ? -1.0 / p0(t, 0) : 1.0 / (1.0 - p0(t, 0));
      nodes_[pi].grad(t, 0) += g * d / n;
    }
  };
  return out;
}

Var Tape::row_norm_mean(Var a) {
  const Mat& x = a.value();
  const double n = static_cast<double>(x.rows());
  Vec norms = x.rowwise().norm();
  Mat v(1, 1);
  v(0, 0) = norms.sum() / n;
  Var out = push(std::move(v));
  int ai = a.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, oi, norms = std::move(norms), n] {
    double g = nodes_[oi].grad(0, 0);
    const Mat& x0 = nodes_[ai].value;
    for (Eigen::Index i = 0; i < x0.rows(); ++i) {
      if (norms(i) > 0.0)
        nodes_[ai].grad.row(i) += (g / (n * norms(i))) * x0.row(i);
    }
  };
  return out;
}

Var Tape::add_scaled(Var a, Var b, double s) {
  Var out = push(a.value() + s * b.value());
  int ai = a.idx_, bi = b.idx_, oi = out.idx_;
  nodes_[oi].backprop = [this, ai, bi, oi, s] {
    nodes_[ai].grad += nodes_[oi].grad;
    nodes_[bi].grad += s * nodes_[oi].grad;
  };
  return out;
}

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, uint64_t seed) {
  RngStream rng(seed);
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

void Tape::backward(Var root, double seed) {
  assert(root.tape_ == this);
  assert(root.rows() == 1 && root.cols() == 1);
  nodes_[root.idx_].grad(0, 0) += seed;
  for (int i = root.idx_; i >= 0; --i) {
    if (nodes_[i].backprop) nodes_[i].backprop();
  }
}

}  // namespace diskt
