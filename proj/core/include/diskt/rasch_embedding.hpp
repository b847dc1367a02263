#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "diskt/autodiff.hpp"

namespace diskt {

// Response vocabulary: 0 incorrect, 1 correct, 2 the counterfactual mask
// token. Question/concept id 0 is the pad/mask id.
constexpr int kResponseMask = 2;

// Learnable tables behind the difficulty-scaled embeddings:
//   question_t    = concept[c] + d[q] * concept_variation[c]
//   interaction_t = (concept[c] + response[r]) + d[q] * (concept[c] + response_variation[r])
// Pad rows (concept 0, question 0) are zero and frozen; the response mask row
// is a genuine trainable token.
struct EmbeddingTables {
  Parameter concept_table;              // (|C|+1) x d
  Parameter concept_variation;    // (|C|+1) x d
  Parameter question_difficulty;  // (|Q|+1) x 1
  Parameter response;             // 3 x d
  Parameter response_variation;   // 3 x d

  static EmbeddingTables init(int num_concepts, int num_questions, int dim,
                              uint64_t seed);
  std::vector<Parameter*> all();
  int dim() const { return static_cast<int>(concept_table.value.cols()); }
};

// Id-level masking that builds the two counterfactual streams: the plus
// stream keeps correct interactions and masks incorrect ones, the minus
// stream does the opposite. Masked questions/concepts become id 0 and masked
// responses become the mask token.
struct MaskedStreams {
  std::vector<int> q_plus, c_plus, r_plus;
  std::vector<int> q_minus, c_minus, r_minus;
};

MaskedStreams counterfactual_mask(std::span<const int> q, std::span<const int> c,
                                  std::span<const int> r,
                                  int mask_value = kResponseMask);

struct FactualEmbedding {
  Var question;     // T x d
  Var interaction;  // T x d
  Var difficulty;   // T x 1 gathered question difficulties
};

// valid_len < T zeroes the trailing pad rows; -1 means every row is real.
FactualEmbedding embed_factual(Tape& tape, EmbeddingTables& tables,
                               std::span<const int> q, std::span<const int> c,
                               std::span<const int> r, int valid_len = -1);

// Interaction embedding only; the question output of the masked pass is
// discarded by construction.
Var embed_interaction(Tape& tape, EmbeddingTables& tables, std::span<const int> q,
                      std::span<const int> c, std::span<const int> r,
                      int valid_len = -1);

struct CounterfactualEmbedding {
  Var s_plus;
  Var s_minus;
};

CounterfactualEmbedding embed_counterfactual(Tape& tape, EmbeddingTables& tables,
                                             const MaskedStreams& masked,
                                             int valid_len = -1);

// Value-level forms for tests and offline inspection.
std::pair<Mat, Mat> embed_factual_values(EmbeddingTables& tables,
                                         std::span<const int> q,
                                         std::span<const int> c,
                                         std::span<const int> r);
std::pair<Mat, Mat> embed_counterfactual_values(EmbeddingTables& tables,
                                                const MaskedStreams& masked);

}  // namespace diskt
