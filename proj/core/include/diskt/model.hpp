#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diskt/autodiff.hpp"
#include "diskt/contradiction.hpp"
#include "diskt/dataio.hpp"
#include "diskt/knowledge_extractor.hpp"
#include "diskt/predictor.hpp"
#include "diskt/rasch_embedding.hpp"
#include "diskt/trace.hpp"

namespace diskt {

struct AblationFlags {
  bool no_sub = false;     // skip the feature-level subtraction, X := H_N
  bool no_con = false;     // plain causal softmax instead of the selective one
  bool no_irt = false;     // head reads [H_N ++ Q]
  bool normal_irt = false; // head reads [(X - d_q) ++ Q]
  bool no_loss_cl = false; // drop the separation regularizer
};

struct ModelConfig {
  int dim = 64;
  int num_layers = 2;
  int num_heads = 2;
  int mask_value = kResponseMask;
  double beta = 0.1;    // lower bound on the per-step randomness gate
  double gamma = 0.2;   // initial contradiction threshold
  double dropout = 0.05;
  AblationFlags ablation;
  int num_questions = 0;
  int num_concepts = 0;

  void validate() const;
  HeadMode head_mode() const {
    if (ablation.no_irt) return HeadMode::no_irt;
    if (ablation.normal_irt) return HeadMode::normal_irt;
    return HeadMode::variant_irt;
  }
  int head_input_width() const {
    return head_mode() == HeadMode::variant_irt ? 3 * dim : 2 * dim;
  }
};

struct ModelParams {
  EmbeddingTables tables;
  EncoderParams encoder;
  ContraAttentionParams contra;
  PredictorParams head;

  static ModelParams init(const ModelConfig& cfg, uint64_t seed);
  std::vector<Parameter*> all();
  void zero_grads();
  void zero_frozen_grads();
};

// SoA view of one student's interactions, what the model actually consumes.
struct PackedSequence {
  std::string student_id;
  std::vector<int> questions, concepts, responses;
  int length() const { return static_cast<int>(questions.size()); }
};

PackedSequence pack(const StudentSequence& seq);
std::vector<PackedSequence> pack_dataset(const Dataset& data);

enum class Mode { train, eval };

struct ForwardOptions {
  Mode mode = Mode::eval;
  uint64_t lambda_seed = 0;   // per-position contradiction randomness
  uint64_t dropout_seed = 0;  // ignored in eval mode
  bool keep_weights = false;  // retain attention matrices in the trace
};

struct ForwardResult {
  Var r_hat;    // T x 1 probabilities
  Var s_plus;   // counterfactual interaction embeddings, for the regularizer
  Var s_minus;
  ForwardTrace trace;
};

// One sequence end to end: embeddings -> counterfactual streams -> knowledge
// extractor -> contradiction attention -> feature subtraction -> IRT head.
// Ablation flags reroute exactly the documented stage and nothing else.
ForwardResult forward(Tape& tape, ModelParams& params, const ModelConfig& cfg,
                      const PackedSequence& seq, const DifficultyTable& diff,
                      const ForwardOptions& opts);

// Deterministic per-student evaluation lambda stream.
uint64_t eval_lambda_seed(uint64_t base_seed, const std::string& student_id);

}  // namespace diskt
