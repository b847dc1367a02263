#include "diskt/predictor.hpp"

#include <cmath>
#include <stdexcept>

#include "diskt/rng.hpp"

namespace diskt {

PredictorParams PredictorParams::init(int dim, int input_width, uint64_t seed) {
  double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  auto make = [&](const char* name, Eigen::Index rows, Eigen::Index cols) {
    return Parameter(name, uniform_init(rows, cols, bound, mix_seed(seed, {fnv1a(name)})));
  };
  PredictorParams p;
  p.w1 = make("head.w1", input_width, dim);
  p.b1 = make("head.b1", 1, dim);
  p.w2 = make("head.w2", dim, 1);
  p.b2 = make("head.b2", 1, 1);
  return p;
}

std::vector<Parameter*> PredictorParams::all() { return {&w1, &b1, &w2, &b2}; }

Var nde_subtract(Tape& tape, Var h_n, Var h_plus, Var h_minus) {
  return tape.sub(h_n, tape.add(h_plus, h_minus));
}

Mat nde_subtract_values(const Mat& h_n, const Mat& h_plus, const Mat& h_minus) {
  return h_n - (h_plus + h_minus);
}

Var predict(Tape& tape, PredictorParams& params, Var x, Var h_plus, Var h_minus,
            Var q_emb, Var d_col, HeadMode mode) {
  std::vector<Var> parts;
  switch (mode) {
    case HeadMode::variant_irt:
      parts = {tape.sub_col_broadcast(x, d_col), tape.sub(h_plus, h_minus), q_emb};
      break;
    case HeadMode::normal_irt:
      parts = {tape.sub_col_broadcast(x, d_col), q_emb};
      break;
    case HeadMode::no_irt:
      parts = {x, q_emb};
      break;
  }
  Var features = tape.hcat(parts);
  if (features.cols() != params.w1.value.rows())
    throw std::logic_error("head expects input width " +
                           std::to_string(params.w1.value.rows()) + ", got " +
                           std::to_string(features.cols()));
  Var hidden = tape.relu(tape.add_row_broadcast(tape.matmul(features, tape.leaf(params.w1)),
                                                tape.leaf(params.b1)));
  Var logit = tape.add_row_broadcast(tape.matmul(hidden, tape.leaf(params.w2)),
                                     tape.leaf(params.b2));
  return tape.sigmoid(logit);
}

Vec predict_values(PredictorParams& params, const Mat& x, const Mat& h_plus,
                   const Mat& h_minus, const Mat& q_emb, const Vec& d_q,
                   HeadMode mode) {
  Tape tape;
  Var xv = tape.constant(x);
  Var hp = tape.constant(h_plus);
  Var hm = tape.constant(h_minus);
  Var q = tape.constant(q_emb);
  Var d = tape.constant(d_q);
  return predict(tape, params, xv, hp, hm, q, d, mode).value().col(0);
}

namespace {

// min-max over the sequence; an all-equal series normalizes to 0.5
Vec normalize_series(const Vec& v) {
  double lo = v.minCoeff(), hi = v.maxCoeff();
  if (hi - lo <= 0.0) return Vec::Constant(v.size(), 0.5);
  return (v.array() - lo) / (hi - lo);
}

}  // namespace

std::string explain_label(double norm_dq, double norm_x, double norm_plus,
                          double norm_minus) {
  bool d_hi = norm_dq > 0.5;
  bool x_hi = norm_x > 0.5;
  bool plus_hi = norm_plus > 0.5;

  if (norm_plus > norm_minus && plus_hi && !x_hi) return "overperformer, mistaking";
  if (norm_minus > norm_plus && !plus_hi && x_hi && d_hi)
    return "underperformer, guessing";
  bool under = norm_plus == norm_minus ? x_hi : norm_minus > norm_plus;
  return under ? "underperformer, ordinary" : "overperformer, ordinary";
}

Explanation explain(const ForwardTrace& trace, int position) {
  const int T = trace.length();
  if (position < 1 || position > T)
    throw std::out_of_range("position " + std::to_string(position) +
                            " outside 1.." + std::to_string(T));

  Vec x_scalar = trace.x.rowwise().mean();
  Vec plus_scalar = trace.h_plus.rowwise().mean();
  Vec minus_scalar = trace.h_minus.rowwise().mean();
  Vec nd = normalize_series(trace.d_q);
  Vec nx = normalize_series(x_scalar);
  Vec np = normalize_series(plus_scalar);
  Vec nm = normalize_series(minus_scalar);

  Explanation e;
  e.position = position;
  int t = position - 1;
  e.d_q = nd(t);
  e.x = nx(t);
  e.h_plus = np(t);
  e.h_minus = nm(t);
  e.label = explain_label(e.d_q, e.x, e.h_plus, e.h_minus);
  e.probability = trace.r_hat(t);
  return e;
}

std::vector<Explanation> explain_all(const ForwardTrace& trace) {
  std::vector<Explanation> out;
  out.reserve(trace.length());
  for (int pos = 1; pos <= trace.length(); ++pos) out.push_back(explain(trace, pos));
  return out;
}

}  // namespace diskt
