#include "diskt/knowledge_extractor.hpp"

#include <array>
#include <cmath>
#include <string>

#include "diskt/errors.hpp"
#include "diskt/rng.hpp"

namespace diskt {

EncoderLayerParams EncoderLayerParams::init(int dim, int layer_index, uint64_t seed) {
  double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::string prefix = "encoder." + std::to_string(layer_index) + ".";
  auto make = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    std::string full = prefix + name;
    return Parameter(full, uniform_init(rows, cols, bound, mix_seed(seed, {fnv1a(full)})));
  };
  EncoderLayerParams p;
  p.attn_proj = make("attn_proj", dim, dim);
  p.ffn_w1 = make("ffn_w1", dim, dim);
  p.ffn_b1 = make("ffn_b1", 1, dim);
  p.ffn_w2 = make("ffn_w2", dim, dim);
  p.ffn_b2 = make("ffn_b2", 1, dim);
  p.ln_gain = Parameter(prefix + "ln_gain", Mat::Ones(1, dim));
  p.ln_bias = Parameter(prefix + "ln_bias", Mat::Zero(1, dim));
  return p;
}

std::vector<Parameter*> EncoderLayerParams::all() {
  return {&attn_proj, &ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2, &ln_gain, &ln_bias};
}

EncoderParams EncoderParams::init(int dim, int num_layers, int heads, uint64_t seed) {
  if (num_layers < 1) throw ConfigError("encoder needs at least one layer");
  if (heads < 1 || dim % heads != 0)
    throw ConfigError("head count " + std::to_string(heads) + " must divide dim " +
                      std::to_string(dim));
  EncoderParams p;
  p.heads = heads;
  for (int l = 0; l < num_layers; ++l)
    p.layers.push_back(EncoderLayerParams::init(dim, l, seed));
  return p;
}

std::vector<Parameter*> EncoderParams::all() {
  std::vector<Parameter*> out;
  for (auto& layer : layers)
    for (Parameter* p : layer.all()) out.push_back(p);
  return out;
}

AttentionResult shifted_causal_attention(Tape& tape, Var q, Var k, Var v, int heads,
                                         Var* proj, const Vec* cv, int valid_len,
                                         bool keep_weights) {
  const int d = static_cast<int>(q.cols());
  const int T = static_cast<int>(q.rows());
  if (heads < 1 || d % heads != 0)
    throw ConfigError("head count " + std::to_string(heads) + " must divide dim " +
                      std::to_string(d));
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int valid = valid_len < 0 ? T : std::min(valid_len, T);

  AttentionResult result;
  std::vector<Var> parts;
  parts.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Var qh = tape.slice_cols(q, h * dh, dh);
    Var kh = tape.slice_cols(k, h * dh, dh);
    Var vh = tape.slice_cols(v, h * dh, dh);
    Var logits = tape.scale(tape.matmul_nt(qh, kh), scale);
    Var w = cv ? tape.selective_causal_softmax(logits, *cv, valid)
               : tape.causal_softmax(logits, valid);
    if (keep_weights) result.weights.push_back(w.value());
    parts.push_back(tape.matmul(w, vh));
  }
  Var cat = heads == 1 ? parts[0] : tape.hcat(parts);
  Var out = proj ? tape.matmul(cat, *proj) : cat;
  out = tape.shift_down_zero_top(out);
  // the shift slides the last real row into the first pad slot
  if (valid < T) out = tape.zero_rows_from(out, valid);
  result.output = out;
  return result;
}

Var encoder_layer(Tape& tape, EncoderLayerParams& params, Var queries, Var values,
                  int heads, const Mat* dropout_mask, int valid_len,
                  std::vector<Mat>* weights_out) {
  Var proj = tape.leaf(params.attn_proj);
  AttentionResult attn = shifted_causal_attention(tape, queries, queries, values,
                                                  heads, &proj, nullptr, valid_len,
                                                  weights_out != nullptr);
  if (weights_out) *weights_out = std::move(attn.weights);

  Var w1 = tape.leaf(params.ffn_w1);
  Var b1 = tape.leaf(params.ffn_b1);
  Var w2 = tape.leaf(params.ffn_w2);
  Var b2 = tape.leaf(params.ffn_b2);
  Var hidden = tape.gelu(tape.add_row_broadcast(tape.matmul(attn.output, w1), b1));
  Var ffn = tape.add_row_broadcast(tape.matmul(hidden, w2), b2);

  Var res = tape.add(attn.output, ffn);
  if (dropout_mask) res = tape.cmul_const(res, *dropout_mask);
  Var gain = tape.leaf(params.ln_gain);
  Var bias = tape.leaf(params.ln_bias);
  Var out = tape.layer_norm(res, gain, bias);
  const int T = static_cast<int>(queries.rows());
  if (valid_len >= 0 && valid_len < T) out = tape.zero_rows_from(out, valid_len);
  return out;
}

Var extract(Tape& tape, EncoderParams& params, Var q_emb, Var s_emb,
            const std::vector<Mat>* dropout_masks, int valid_len,
            std::vector<std::vector<Mat>>* weights_out) {
  if (weights_out) weights_out->assign(params.layers.size(), {});
  Var state = q_emb;
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const Mat* mask = dropout_masks ? &(*dropout_masks)[l] : nullptr;
    std::vector<Mat>* w = weights_out ? &(*weights_out)[l] : nullptr;
    state = encoder_layer(tape, params.layers[l], state, s_emb, params.heads, mask,
                          valid_len, w);
  }
  return state;
}

Mat shifted_causal_attention_values(const Mat& q, const Mat& k, const Mat& v,
                                    int heads, const Mat* proj, int valid_len,
                                    std::vector<Mat>* weights_out) {
  Tape tape;
  Var qv = tape.constant(q);
  Var kv = tape.constant(k);
  Var vv = tape.constant(v);
  Var pv;
  Var* pp = nullptr;
  if (proj) {
    pv = tape.constant(*proj);
    pp = &pv;
  }
  AttentionResult r = shifted_causal_attention(tape, qv, kv, vv, heads, pp, nullptr,
                                               valid_len, weights_out != nullptr);
  if (weights_out) *weights_out = std::move(r.weights);
  return r.output.value();
}

Mat encoder_layer_values(EncoderLayerParams& params, const Mat& queries,
                         const Mat& values, int heads, const Mat* dropout_mask,
                         int valid_len) {
  Tape tape;
  Var q = tape.constant(queries);
  Var v = tape.constant(values);
  return encoder_layer(tape, params, q, v, heads, dropout_mask, valid_len, nullptr)
      .value();
}

Mat extract_values(EncoderParams& params, const Mat& q_emb, const Mat& s_emb,
                   int valid_len) {
  Tape tape;
  Var q = tape.constant(q_emb);
  Var s = tape.constant(s_emb);
  return extract(tape, params, q, s, nullptr, valid_len, nullptr).value();
}

}  // namespace diskt
