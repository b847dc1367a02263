#pragma once

#include <vector>

#include "diskt/autodiff.hpp"

namespace diskt {

// Every intermediate of one forward pass over a single sequence, kept for
// diagnostics, explanations and tests. Row t is position t (0-based); the
// knowledge states at row t summarize interactions before t.
struct ForwardTrace {
  Mat question;     // Q embeddings
  Mat interaction;  // S embeddings
  Mat s_plus, s_minus;
  Mat h_n;              // knowledge extractor output
  Mat h_plus, h_minus;  // counterfactual knowledge states
  Mat x;                // h_n minus (h_plus + h_minus)
  Vec d_q;              // per-position question difficulty scalar
  Vec r_hat;
  std::vector<int> cv;
  Vec alpha, lambda, score;

  // attention weights, only filled when requested
  std::vector<std::vector<Mat>> encoder_weights;  // [layer][head] T x T
  std::vector<Mat> plus_weights, minus_weights;   // [head] T x T

  int length() const { return static_cast<int>(r_hat.size()); }
};

}  // namespace diskt
