#pragma once

#include <cstdint>
#include <vector>

#include "diskt/autodiff.hpp"

namespace diskt {

struct EncoderLayerParams {
  Parameter attn_proj;  // d x d head-concat projection, no bias
  Parameter ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Parameter ln_gain, ln_bias;

  static EncoderLayerParams init(int dim, int layer_index, uint64_t seed);
  std::vector<Parameter*> all();
};

struct EncoderParams {
  std::vector<EncoderLayerParams> layers;
  int heads = 2;

  static EncoderParams init(int dim, int num_layers, int heads, uint64_t seed);
  std::vector<Parameter*> all();
  int num_layers() const { return static_cast<int>(layers.size()); }
};

struct AttentionResult {
  Var output;
  // post-softmax weights per head, before the shift; filled when requested
  std::vector<Mat> weights;
};

// Multi-head scaled dot-product attention with a strictly one-step delay:
// per head, row i of the softmax sees keys 0..i; the weighted values are then
// shifted down one row with a zero first row, so output row i summarizes
// values at positions < i and row 0 is exactly zero. `proj` (the head-concat
// projection) may be null; `cv` switches the softmax to its selective form.
AttentionResult shifted_causal_attention(Tape& tape, Var q, Var k, Var v, int heads,
                                         Var* proj, const Vec* cv, int valid_len,
                                         bool keep_weights);

// attention -> FFN -> residual -> dropout -> layernorm. dropout_mask is a
// precomputed keep/scale mask (null = no dropout, i.e. evaluation).
Var encoder_layer(Tape& tape, EncoderLayerParams& params, Var queries, Var values,
                  int heads, const Mat* dropout_mask, int valid_len,
                  std::vector<Mat>* weights_out);

// Layer 1 reads the question embeddings as queries/keys; deeper layers read
// the previous knowledge state. Every layer attends over the interaction
// embeddings as values.
Var extract(Tape& tape, EncoderParams& params, Var q_emb, Var s_emb,
            const std::vector<Mat>* dropout_masks, int valid_len,
            std::vector<std::vector<Mat>>* weights_out);

// Value-level forms for tests.
Mat shifted_causal_attention_values(const Mat& q, const Mat& k, const Mat& v,
                                    int heads, const Mat* proj = nullptr,
                                    int valid_len = -1,
                                    std::vector<Mat>* weights_out = nullptr);
Mat encoder_layer_values(EncoderLayerParams& params, const Mat& queries,
                         const Mat& values, int heads,
                         const Mat* dropout_mask = nullptr, int valid_len = -1);
Mat extract_values(EncoderParams& params, const Mat& q_emb, const Mat& s_emb,
                   int valid_len = -1);

}  // namespace diskt
