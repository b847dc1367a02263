#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diskt/autodiff.hpp"
#include "diskt/trace.hpp"

namespace diskt {

// Which features feed the scoring MLP.
enum class HeadMode {
  variant_irt,  // [(X - d_q) ++ (H+ - H-) ++ Q], width 3d
  normal_irt,   // [(X - d_q) ++ Q], width 2d
  no_irt,       // [H_N ++ Q], width 2d
};

struct PredictorParams {
  Parameter w1;  // input_width x d
  Parameter b1;  // 1 x d
  Parameter w2;  // d x 1
  Parameter b2;  // 1 x 1

  static PredictorParams init(int dim, int input_width, uint64_t seed);
  std::vector<Parameter*> all();
  int input_width() const { return static_cast<int>(w1.value.rows()); }
};

// X = H_N - (H+ + H-): the direct effect of the historical correct-rate
// profile, carried by the two counterfactual states, is removed at the
// feature level.
Var nde_subtract(Tape& tape, Var h_n, Var h_plus, Var h_minus);
Mat nde_subtract_values(const Mat& h_n, const Mat& h_plus, const Mat& h_minus);

// sigmoid(ReLU(features W1 + b1) W2 + b2) per position; `x` carries H_N when
// mode is no_irt. d_col is the per-position difficulty scalar, broadcast
// across the feature dimension when subtracted.
Var predict(Tape& tape, PredictorParams& params, Var x, Var h_plus, Var h_minus,
            Var q_emb, Var d_col, HeadMode mode);
Vec predict_values(PredictorParams& params, const Mat& x, const Mat& h_plus,
                   const Mat& h_minus, const Mat& q_emb, const Vec& d_q,
                   HeadMode mode = HeadMode::variant_irt);

struct Explanation {
  int position = 0;   // 1-based
  double d_q = 0.5;   // all four scalars min-max normalized over the sequence
  double x = 0.5;
  double h_plus = 0.5;
  double h_minus = 0.5;
  std::string label;
  double probability = 0.0;
};

// Template over the normalized scalars: a clearly familiar-dominant state
// with a low overall score reads as an overperformer who slipped; a clearly
// unfamiliar-dominant state with a high score on a hard question reads as an
// underperformer who guessed; anything else is ordinary for its side.
std::string explain_label(double norm_dq, double norm_x, double norm_plus,
                          double norm_minus);

// position is 1-based; throws std::out_of_range outside 1..length.
Explanation explain(const ForwardTrace& trace, int position);
std::vector<Explanation> explain_all(const ForwardTrace& trace);

}  // namespace diskt
