#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "diskt/autodiff.hpp"
#include "diskt/dataio.hpp"

namespace diskt {

// Value FFNs applied to the two counterfactual streams before attention.
// The branches model distinct abilities, so their parameters are separate.
struct ContraAttentionParams {
  Parameter plus_w1, plus_b1, plus_w2, plus_b2;
  Parameter minus_w1, minus_b1, minus_w2, minus_b2;

  static ContraAttentionParams init(int dim, uint64_t seed);
  std::vector<Parameter*> all();
};

// max(lambda, beta) * (1 - r + (2r - 1) * diff): small when a correct answer
// lands on a hard concept (guess) or a wrong answer on an easy one (slip).
double contradiction_score(int response, double diff_c, double lambda_t, double beta);

// Contradiction threshold: gamma at the first step, afterwards the square
// root of the running mean of past scores. `history` holds the scores at
// positions strictly before t.
double alpha_update(std::span<const double> history, double gamma);

struct ContradictionState {
  Vec lambda_seq;
  double beta = 0.1;
  double gamma = 0.2;
  Vec score_seq;
  Vec alpha_seq;
  std::vector<int> cv_seq;  // 1 = flagged contradictory
};

// Pure function of its inputs: replaying the same lambda stream reproduces
// identical flags. CV_t = 1 iff score_t < alpha_t^2.
ContradictionState cv_flags(std::span<const int> concepts, std::span<const int> responses,
                            const DifficultyTable& diff, std::span<const double> lambda,
                            double beta, double gamma);

// Value-level selective softmax over causally masked square logits: inner
// row-wise softmax, entries remapped to 1 - cv_j * inner, then renormalized.
// Flagged keys with weight are suppressed below every unflagged key.
Mat selective_softmax(const Mat& logits, const std::vector<int>& cv, int valid_len = -1);

struct ContraOutputs {
  Var h_plus;
  Var h_minus;
  std::vector<Mat> plus_weights, minus_weights;
};

// H+ / H- attention over the factual knowledge state with the counterfactual
// streams as values. `selective` false swaps in the plain causal softmax
// (the "without contradiction attention" ablation).
ContraOutputs contradictory_attention(Tape& tape, ContraAttentionParams& params,
                                      Var h_n, Var s_plus, Var s_minus,
                                      const std::vector<int>& cv, int heads,
                                      bool selective, int valid_len,
                                      bool keep_weights);

std::pair<Mat, Mat> contradictory_attention_values(ContraAttentionParams& params,
                                                   const Mat& h_n, const Mat& s_plus,
                                                   const Mat& s_minus,
                                                   const std::vector<int>& cv,
                                                   int heads, bool selective = true);

}  // namespace diskt
