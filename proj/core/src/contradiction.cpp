#include "diskt/contradiction.hpp"

#include <algorithm>
#include <cmath>

#include "diskt/errors.hpp"
#include "diskt/knowledge_extractor.hpp"
#include "diskt/rng.hpp"

namespace diskt {

ContraAttentionParams ContraAttentionParams::init(int dim, uint64_t seed) {
  double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  auto make = [&](const char* name, Eigen::Index rows, Eigen::Index cols) {
    return Parameter(name, uniform_init(rows, cols, bound, mix_seed(seed, {fnv1a(name)})));
  };
  ContraAttentionParams p;
  p.plus_w1 = make("contra.plus.ffn_w1", dim, dim);
  p.plus_b1 = make("contra.plus.ffn_b1", 1, dim);
  p.plus_w2 = make("contra.plus.ffn_w2", dim, dim);
  p.plus_b2 = make("contra.plus.ffn_b2", 1, dim);
  p.minus_w1 = make("contra.minus.ffn_w1", dim, dim);
  p.minus_b1 = make("contra.minus.ffn_b1", 1, dim);
  p.minus_w2 = make("contra.minus.ffn_w2", dim, dim);
  p.minus_b2 = make("contra.minus.ffn_b2", 1, dim);
  return p;
}

std::vector<Parameter*> ContraAttentionParams::all() {
  return {&plus_w1, &plus_b1, &plus_w2, &plus_b2,
          &minus_w1, &minus_b1, &minus_w2, &minus_b2};
}

double contradiction_score(int response, double diff_c, double lambda_t, double beta) {
  double gate = std::max(lambda_t, beta);
  return gate * (1.0 - response + (2.0 * response - 1.0) * diff_c);
}

double alpha_update(std::span<const double> history, double gamma) {
  if (history.empty()) return gamma;
  double sum = 0.0;
  for (double s : history) sum += s;
  return std::sqrt(sum / static_cast<double>(history.size()));
}

ContradictionState cv_flags(std::span<const int> concepts, std::span<const int> responses,
                            const DifficultyTable& diff, std::span<const double> lambda,
                            double beta, double gamma) {
  const size_t n = concepts.size();
  ContradictionState state;
  state.beta = beta;
  state.gamma = gamma;
  state.lambda_seq = Eigen::Map<const Vec>(lambda.data(), static_cast<Eigen::Index>(n));
  state.score_seq.resize(n);
  state.alpha_seq.resize(n);
  state.cv_seq.resize(n);

  double running_sum = 0.0;
  for (size_t t = 0; t < n; ++t) {
    double alpha = t == 0 ? gamma : std::sqrt(running_sum / static_cast<double>(t));
    double score = contradiction_score(responses[t], diff.value(concepts[t]),
                                       lambda[t], beta);
    state.alpha_seq(t) = alpha;
    state.score_seq(t) = score;
    state.cv_seq[t] = score < alpha * alpha ? 1 : 0;
    running_sum += score;
  }
  return state;
}

Mat selective_softmax(const Mat& logits, const std::vector<int>& cv, int valid_len) {
  Tape tape;
  Vec cvv(cv.size());
  for (size_t i = 0; i < cv.size(); ++i) cvv(i) = cv[i];
  Var l = tape.constant(logits);
  int valid = valid_len < 0 ? static_cast<int>(logits.rows()) : valid_len;
  return tape.selective_causal_softmax(l, cvv, valid).value();
}

namespace {

Var branch_ffn(Tape& tape, Parameter& w1, Parameter& b1, Parameter& w2, Parameter& b2,
               Var s) {
  Var hidden = tape.gelu(tape.add_row_broadcast(tape.matmul(s, tape.leaf(w1)),
                                                tape.leaf(b1)));
  return tape.add_row_broadcast(tape.matmul(hidden, tape.leaf(w2)), tape.leaf(b2));
}

}  // namespace

ContraOutputs contradictory_attention(Tape& tape, ContraAttentionParams& params,
                                      Var h_n, Var s_plus, Var s_minus,
                                      const std::vector<int>& cv, int heads,
                                      bool selective, int valid_len,
                                      bool keep_weights) {
  Vec cvv(cv.size());
  for (size_t i = 0; i < cv.size(); ++i) cvv(i) = cv[i];
  const Vec* cvp = selective ? &cvv : nullptr;

  Var v_plus = branch_ffn(tape, params.plus_w1, params.plus_b1, params.plus_w2,
                          params.plus_b2, s_plus);
  Var v_minus = branch_ffn(tape, params.minus_w1, params.minus_b1, params.minus_w2,
                           params.minus_b2, s_minus);

  ContraOutputs out;
  AttentionResult plus = shifted_causal_attention(tape, h_n, h_n, v_plus, heads,
                                                  nullptr, cvp, valid_len, keep_weights);
  AttentionResult minus = shifted_causal_attention(tape, h_n, h_n, v_minus, heads,
                                                   nullptr, cvp, valid_len, keep_weights);
  out.h_plus = plus.output;
  out.h_minus = minus.output;
  out.plus_weights = std::move(plus.weights);
  out.minus_weights = std::move(minus.weights);
  return out;
}

std::pair<Mat, Mat> contradictory_attention_values(ContraAttentionParams& params,
                                                   const Mat& h_n, const Mat& s_plus,
                                                   const Mat& s_minus,
                                                   const std::vector<int>& cv,
                                                   int heads, bool selective) {
  Tape tape;
  Var h = tape.constant(h_n);
  Var sp = tape.constant(s_plus);
  Var sm = tape.constant(s_minus);
  ContraOutputs out = contradictory_attention(tape, params, h, sp, sm, cv, heads,
                                              selective, -1, false);
  return {out.h_plus.value(), out.h_minus.value()};
}

}  // namespace diskt
