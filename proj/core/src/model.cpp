#include "diskt/model.hpp"

#include <string>

#include "diskt/errors.hpp"
#include "diskt/rng.hpp"

namespace diskt {

void ModelConfig::validate() const {
  if (dim < 1) throw ConfigError("dim must be positive");
  if (num_layers < 1) throw ConfigError("need at least one encoder layer");
  if (num_heads < 1 || dim % num_heads != 0)
    throw ConfigError("head count " + std::to_string(num_heads) + " must divide dim " +
                      std::to_string(dim));
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0,1)");
  if (ablation.no_irt && ablation.normal_irt)
    throw ConfigError("no_irt and normal_irt are mutually exclusive");
  if (num_questions < 1 || num_concepts < 1)
    throw ConfigError("model needs non-empty question/concept vocabularies");
}

ModelParams ModelParams::init(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.tables = EmbeddingTables::init(cfg.num_concepts, cfg.num_questions, cfg.dim, seed);
  p.encoder = EncoderParams::init(cfg.dim, cfg.num_layers, cfg.num_heads, seed);
  p.contra = ContraAttentionParams::init(cfg.dim, seed);
  p.head = PredictorParams::init(cfg.dim, cfg.head_input_width(), seed);
  return p;
}

std::vector<Parameter*> ModelParams::all() {
  std::vector<Parameter*> out;
  for (Parameter* p : tables.all()) out.push_back(p);
  for (Parameter* p : encoder.all()) out.push_back(p);
  for (Parameter* p : contra.all()) out.push_back(p);
  for (Parameter* p : head.all()) out.push_back(p);
  return out;
}

void ModelParams::zero_grads() {
  for (Parameter* p : all()) p->zero_grad();
}

void ModelParams::zero_frozen_grads() {
  for (Parameter* p : all()) p->zero_frozen_grad();
}

PackedSequence pack(const StudentSequence& seq) {
  PackedSequence p;
  p.student_id = seq.student_id;
  p.questions.reserve(seq.interactions.size());
  p.concepts.reserve(seq.interactions.size());
  p.responses.reserve(seq.interactions.size());
  for (const auto& it : seq.interactions) {
    p.questions.push_back(it.question_id);
    p.concepts.push_back(it.concept_id());
    p.responses.push_back(it.response);
  }
  return p;
}

std::vector<PackedSequence> pack_dataset(const Dataset& data) {
  std::vector<PackedSequence> out;
  out.reserve(data.sequences.size());
  for (const auto& seq : data.sequences) out.push_back(pack(seq));
  return out;
}

uint64_t eval_lambda_seed(uint64_t base_seed, const std::string& student_id) {
  return mix_seed(base_seed, {fnv1a("eval-lambda"), fnv1a(student_id)});
}

ForwardResult forward(Tape& tape, ModelParams& params, const ModelConfig& cfg,
                      const PackedSequence& seq, const DifficultyTable& diff,
                      const ForwardOptions& opts) {
  const int T = seq.length();
  if (T < 1) throw ConfigError("forward needs a non-empty sequence");

  FactualEmbedding fe = embed_factual(tape, params.tables, seq.questions,
                                      seq.concepts, seq.responses);
  MaskedStreams masked = counterfactual_mask(seq.questions, seq.concepts,
                                             seq.responses, cfg.mask_value);
  CounterfactualEmbedding ce = embed_counterfactual(tape, params.tables, masked);

  // per-position contradiction randomness; frozen per (seed, sequence) so
  // evaluation replays bit-identically
  RngStream lambda_rng(opts.lambda_seed);
  std::vector<double> lambda(T);
  for (int t = 0; t < T; ++t) lambda[t] = lambda_rng.uniform();
  ContradictionState contra_state =
      cv_flags(seq.concepts, seq.responses, diff, lambda, cfg.beta, cfg.gamma);

  std::vector<Mat> dropout_masks;
  const std::vector<Mat>* masks_ptr = nullptr;
  if (opts.mode == Mode::train && cfg.dropout > 0.0) {
    RngStream drop_rng(opts.dropout_seed);
    double keep_scale = 1.0 / (1.0 - cfg.dropout);
    for (int l = 0; l < cfg.num_layers; ++l) {
      Mat m(T, cfg.dim);
      for (int i = 0; i < T; ++i)
        for (int j = 0; j < cfg.dim; ++j)
          m(i, j) = drop_rng.uniform() < cfg.dropout ? 0.0 : keep_scale;
      dropout_masks.push_back(std::move(m));
    }
    masks_ptr = &dropout_masks;
  }

  ForwardResult result;
  std::vector<std::vector<Mat>>* enc_w = opts.keep_weights ? &result.trace.encoder_weights
                                                           : nullptr;
  Var h_n = extract(tape, params.encoder, fe.question, fe.interaction, masks_ptr, -1,
                    enc_w);

  ContraOutputs contra = contradictory_attention(
      tape, params.contra, h_n, ce.s_plus, ce.s_minus, contra_state.cv_seq,
      cfg.num_heads, !cfg.ablation.no_con, -1, opts.keep_weights);

  Var x = cfg.ablation.no_sub ? h_n
                              : nde_subtract(tape, h_n, contra.h_plus, contra.h_minus);

  Var head_x = cfg.ablation.no_irt ? h_n : x;
  Var r_hat = predict(tape, params.head, head_x, contra.h_plus, contra.h_minus,
                      fe.question, fe.difficulty, cfg.head_mode());

  result.r_hat = r_hat;
  result.s_plus = ce.s_plus;
  result.s_minus = ce.s_minus;

  ForwardTrace& trace = result.trace;
  trace.question = fe.question.value();
  trace.interaction = fe.interaction.value();
  trace.s_plus = ce.s_plus.value();
  trace.s_minus = ce.s_minus.value();
  trace.h_n = h_n.value();
  trace.h_plus = contra.h_plus.value();
  trace.h_minus = contra.h_minus.value();
  trace.x = x.value();
  trace.d_q = fe.difficulty.value().col(0);
  trace.r_hat = r_hat.value().col(0);
  trace.cv = contra_state.cv_seq;
  trace.alpha = contra_state.alpha_seq;
  trace.lambda = contra_state.lambda_seq;
  trace.score = contra_state.score_seq;
  if (opts.keep_weights) {
    trace.plus_weights = std::move(contra.plus_weights);
    trace.minus_weights = std::move(contra.minus_weights);
  }
  return result;
}

}  // namespace diskt
