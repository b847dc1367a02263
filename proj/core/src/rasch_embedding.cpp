#include "diskt/rasch_embedding.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "diskt/rng.hpp"

namespace diskt {

namespace {

void check_ids(std::span<const int> ids, Eigen::Index table_rows, const char* what) {
  for (int id : ids) {
    if (id < 0 || id >= table_rows)
      throw std::out_of_range(std::string(what) + " id " + std::to_string(id) +
                              " outside table of " + std::to_string(table_rows) + " rows");
  }
}

}  // namespace

EmbeddingTables EmbeddingTables::init(int num_concepts, int num_questions, int dim,
                                      uint64_t seed) {
  double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  auto make = [&](const char* name, Eigen::Index rows, Eigen::Index cols) {
    return Parameter(name, uniform_init(rows, cols, bound, mix_seed(seed, {fnv1a(name)})));
  };
  EmbeddingTables t;
  t.concept_table = make("tables.concept", num_concepts + 1, dim);
  t.concept_variation = make("tables.concept_variation", num_concepts + 1, dim);
  t.question_difficulty = make("tables.question_difficulty", num_questions + 1, 1);
  t.response = make("tables.response", 3, dim);
  t.response_variation = make("tables.response_variation", 3, dim);

  // pad rows carry no signal and never train
  t.concept_table.value.row(0).setZero();
  t.concept_table.frozen_rows = {0};
  t.concept_variation.value.row(0).setZero();
  t.concept_variation.frozen_rows = {0};
  t.question_difficulty.value.row(0).setZero();
  t.question_difficulty.frozen_rows = {0};
  return t;
}

std::vector<Parameter*> EmbeddingTables::all() {
  return {&concept_table, &concept_variation, &question_difficulty, &response,
          &response_variation};
}

MaskedStreams counterfactual_mask(std::span<const int> q, std::span<const int> c,
                                  std::span<const int> r, int mask_value) {
  MaskedStreams m;
  const size_t n = q.size();
  m.q_plus.resize(n);
  m.c_plus.resize(n);
  m.r_plus.resize(n);
  m.q_minus.resize(n);
  m.c_minus.resize(n);
  m.r_minus.resize(n);
  for (size_t t = 0; t < n; ++t) {
    m.q_plus[t] = r[t] * q[t];
    m.c_plus[t] = r[t] * c[t];
    m.r_plus[t] = mask_value + (1 - mask_value) * r[t];
    m.q_minus[t] = (1 - r[t]) * q[t];
    m.c_minus[t] = (1 - r[t]) * c[t];
    m.r_minus[t] = mask_value * r[t];
  }
  return m;
}

Var embed_interaction(Tape& tape, EmbeddingTables& tables, std::span<const int> q,
                      std::span<const int> c, std::span<const int> r, int valid_len) {
  check_ids(q, tables.question_difficulty.value.rows(), "question");
  check_ids(c, tables.concept_table.value.rows(), "concept");
  check_ids(r, tables.response.value.rows(), "response");

  Var c_rows = tape.gather_rows(tables.concept_table, c);
  Var d_col = tape.gather_entries(tables.question_difficulty, q);
  Var r_rows = tape.gather_rows(tables.response, r);
  Var g_rows = tape.gather_rows(tables.response_variation, r);

  Var e = tape.add(c_rows, r_rows);
  Var nu = tape.add(c_rows, g_rows);
  Var s = tape.add(e, tape.mul_rows_by_col(nu, d_col));
  if (valid_len >= 0 && valid_len < static_cast<int>(q.size()))
    s = tape.zero_rows_from(s, valid_len);
  return s;
}

FactualEmbedding embed_factual(Tape& tape, EmbeddingTables& tables,
                               std::span<const int> q, std::span<const int> c,
                               std::span<const int> r, int valid_len) {
  check_ids(q, tables.question_difficulty.value.rows(), "question");
  check_ids(c, tables.concept_table.value.rows(), "concept");

  Var c_rows = tape.gather_rows(tables.concept_table, c);
  Var mu_rows = tape.gather_rows(tables.concept_variation, c);
  Var d_col = tape.gather_entries(tables.question_difficulty, q);
  Var question = tape.add(c_rows, tape.mul_rows_by_col(mu_rows, d_col));

  Var interaction = embed_interaction(tape, tables, q, c, r, valid_len);
  if (valid_len >= 0 && valid_len < static_cast<int>(q.size()))
    question = tape.zero_rows_from(question, valid_len);
  return {question, interaction, d_col};
}

CounterfactualEmbedding embed_counterfactual(Tape& tape, EmbeddingTables& tables,
                                             const MaskedStreams& masked,
                                             int valid_len) {
  Var s_plus = embed_interaction(tape, tables, masked.q_plus, masked.c_plus,
                                 masked.r_plus, valid_len);
  Var s_minus = embed_interaction(tape, tables, masked.q_minus, masked.c_minus,
                                  masked.r_minus, valid_len);
  return {s_plus, s_minus};
}

std::pair<Mat, Mat> embed_factual_values(EmbeddingTables& tables,
                                         std::span<const int> q,
                                         std::span<const int> c,
                                         std::span<const int> r) {
  Tape tape;
  FactualEmbedding e = embed_factual(tape, tables, q, c, r);
  return {e.question.value(), e.interaction.value()};
}

std::pair<Mat, Mat> embed_counterfactual_values(EmbeddingTables& tables,
                                                const MaskedStreams& masked) {
  Tape tape;
  CounterfactualEmbedding e = embed_counterfactual(tape, tables, masked);
  return {e.s_plus.value(), e.s_minus.value()};
}

}  // namespace diskt
