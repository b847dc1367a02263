#include "diskt/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "diskt/errors.hpp"
#include "diskt/rng.hpp"

namespace diskt {

using nlohmann::json;

void TrainConfig::validate() const {
  model.validate();
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (window < 1) throw ConfigError("window must be positive");
  if (patience < 1) throw ConfigError("patience must be positive");
  if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
  if (cl_weight < 0.0) throw ConfigError("cl_weight must be non-negative");
}

double bce_loss(const Vec& r_hat, std::span<const int> responses) {
  double sum = 0.0;
  for (size_t t = 0; t < responses.size(); ++t)
    sum += responses[t] == 1 ? -std::log(r_hat(t)) : -std::log(1.0 - r_hat(t));
  return sum / static_cast<double>(responses.size());
}

double cl_regularizer(const Mat& s_plus, const Mat& s_minus) {
  return (s_plus - s_minus).rowwise().norm().mean();
}

double total_loss(double bce, double cl, const TrainConfig& cfg) {
  if (cfg.model.ablation.no_loss_cl) return bce;
  return bce - cfg.cl_weight * cl;
}

Adam::Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Parameter* p : params_) {
    m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++t_;
  double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    const Mat& g = params_[i]->grad;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    Mat mhat = m_[i] / c1;
    Mat vhat = v_[i] / c2;
    params_[i]->value.array() -=
        lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
  }
}

std::string epoch_stats_to_json(const EpochStats& s) {
  json j;
  j["epoch"] = s.epoch;
  j["train_loss"] = s.train_loss;
  j["bce"] = s.train_bce;
  j["cl"] = s.train_cl;
  j["val_auc"] = s.val_auc ? json(*s.val_auc) : json(nullptr);
  j["val_acc"] = s.val_acc;
  j["val_rmse"] = s.val_rmse;
  return j.dump();
}

PredictionDump evaluate_dump(ModelParams& params, const ModelConfig& cfg,
                             const Dataset& data, const DifficultyTable& difficulty,
                             uint64_t seed) {
  PredictionDump dump;
  for (const auto& student : data.sequences) {
    PackedSequence seq = pack(student);
    if (seq.length() == 0) continue;
    Tape tape;
    ForwardOptions opts;
    opts.mode = Mode::eval;
    opts.lambda_seed = eval_lambda_seed(seed, seq.student_id);
    ForwardResult fr = forward(tape, params, cfg, seq, difficulty, opts);
    for (int t = 0; t < seq.length(); ++t)
      dump.push_back({seq.student_id, t + 1, seq.concepts[t], seq.responses[t],
                      fr.trace.r_hat(t)});
  }
  return dump;
}

double evaluate_bce(ModelParams& params, const ModelConfig& cfg, const Dataset& data,
                    const DifficultyTable& difficulty, uint64_t seed) {
  double total = 0.0;
  long long count = 0;
  for (const auto& student : data.sequences) {
    PackedSequence seq = pack(student);
    if (seq.length() == 0) continue;
    Tape tape;
    ForwardOptions opts;
    opts.mode = Mode::eval;
    opts.lambda_seed = eval_lambda_seed(seed, seq.student_id);
    ForwardResult fr = forward(tape, params, cfg, seq, difficulty, opts);
    total += bce_loss(fr.trace.r_hat, seq.responses);
    ++count;
  }
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

TrainState fit(const Dataset& train, const Dataset& validation, const TrainConfig& cfg,
               const DifficultyTable* difficulty, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.sequences.empty()) throw ConfigError("fit needs a non-empty training split");

  TrainState state;
  state.config = cfg;
  state.difficulty = difficulty ? *difficulty : compute_difficulty(train);

  std::vector<PackedSequence> seqs = pack_dataset(train);
  for (const auto& s : seqs) {
    if (s.length() > cfg.window)
      throw ConfigError("sequence for student '" + s.student_id + "' exceeds window " +
                        std::to_string(cfg.window) + "; preprocess first");
  }

  state.params = ModelParams::init(cfg.model, mix_seed(cfg.seed, {fnv1a("init")}));
  Adam adam(state.params.all(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
            cfg.adam_eps);

  state.best_params = state.params;
  int epochs_since_best = 0;

  std::vector<size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    RngStream shuffle_rng(mix_seed(cfg.seed, {fnv1a("shuffle"), static_cast<uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);

    double sum_loss = 0.0, sum_bce = 0.0, sum_cl = 0.0;
    size_t done = 0;
    uint64_t batch_index = 0;
    while (done < order.size()) {
      size_t batch_n = std::min<size_t>(cfg.batch_size, order.size() - done);
      state.params.zero_grads();
      double batch_bce = 0.0, batch_cl = 0.0;
      for (size_t i = 0; i < batch_n; ++i) {
        const PackedSequence& seq = seqs[order[done + i]];
        Tape tape;
        ForwardOptions opts;
        opts.mode = Mode::train;
        opts.lambda_seed = mix_seed(cfg.seed, {fnv1a("lambda"), static_cast<uint64_t>(epoch),
                                               batch_index, static_cast<uint64_t>(i)});
        opts.dropout_seed = mix_seed(cfg.seed, {fnv1a("dropout"), static_cast<uint64_t>(epoch),
                                                batch_index, static_cast<uint64_t>(i)});
        ForwardResult fr = forward(tape, state.params, cfg.model, seq, state.difficulty, opts);

        Var bce = tape.bce_mean(fr.r_hat, seq.responses);
        Var diff_sm = tape.sub(fr.s_plus, fr.s_minus);
        Var cl = tape.row_norm_mean(diff_sm);
        Var total = cfg.model.ablation.no_loss_cl
                        ? bce
                        : tape.add_scaled(bce, cl, -cfg.cl_weight);
        tape.backward(total, 1.0 / static_cast<double>(batch_n));

        batch_bce += bce.value()(0, 0);
        batch_cl += cl.value()(0, 0);
      }
      batch_bce /= static_cast<double>(batch_n);
      batch_cl /= static_cast<double>(batch_n);
      double batch_total = total_loss(batch_bce, batch_cl, cfg);
      if (!std::isfinite(batch_total)) {
        std::string term = !std::isfinite(batch_bce) ? "bce" : "cl";
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) +
                               ": the " + term + " term diverged" +
                               (term == "cl" ? " (the separation term is unbounded; "
                                               "lower cl_weight)"
                                             : ""));
      }

      state.params.zero_frozen_grads();
      adam.step();

      sum_loss += batch_total * static_cast<double>(batch_n);
      sum_bce += batch_bce * static_cast<double>(batch_n);
      sum_cl += batch_cl * static_cast<double>(batch_n);
      done += batch_n;
      ++batch_index;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = sum_loss / static_cast<double>(order.size());
    stats.train_bce = sum_bce / static_cast<double>(order.size());
    stats.train_cl = sum_cl / static_cast<double>(order.size());

    const bool has_val = !validation.sequences.empty();
    if (has_val) {
      PredictionDump val_dump = evaluate_dump(state.params, cfg.model, validation,
                                              state.difficulty, cfg.seed);
      stats.val_auc = auc(val_dump);
      stats.val_acc = acc(val_dump);
      stats.val_rmse = rmse(val_dump);
    }
    state.history.push_back(stats);
    state.epochs_run = epoch;
    if (on_epoch) on_epoch(stats);

    if (!has_val) continue;  // no early-stopping signal, run to max_epochs
    bool improved = stats.val_auc && (!state.best_val_auc || *stats.val_auc > *state.best_val_auc);
    if (improved) {
      state.best_val_auc = stats.val_auc;
      state.best_epoch = epoch;
      state.best_params = state.params;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= cfg.patience) break;
    }
  }

  if (state.best_epoch == 0) {  // no validation signal at all
    state.best_params = state.params;
    state.best_epoch = state.epochs_run;
  }
  return state;
}

namespace {

double forward_loss(ModelParams& params, const TrainConfig& cfg,
                    const std::vector<PackedSequence>& seqs,
                    const DifficultyTable& difficulty,
                    const std::vector<uint64_t>& lambda_seeds) {
  double total = 0.0;
  for (size_t i = 0; i < seqs.size(); ++i) {
    Tape tape;
    ForwardOptions opts;
    opts.mode = Mode::eval;  // dropout off
    opts.lambda_seed = lambda_seeds[i];
    ForwardResult fr = forward(tape, params, cfg.model, seqs[i], difficulty, opts);
    double bce = bce_loss(fr.trace.r_hat, seqs[i].responses);
    double cl = cl_regularizer(fr.trace.s_plus, fr.trace.s_minus);
    total += total_loss(bce, cl, cfg);
  }
  return total / static_cast<double>(seqs.size());
}

}  // namespace

GradCheckReport gradient_check(const GradCheckConfig& cfg) {
  TrainConfig tc;
  tc.model.dim = cfg.dim;
  tc.model.num_layers = cfg.num_layers;
  tc.model.num_heads = cfg.heads;
  tc.model.dropout = 0.0;
  tc.model.num_questions = cfg.num_questions;
  tc.model.num_concepts = cfg.num_concepts;
  tc.cl_weight = cfg.cl_weight;
  tc.seed = cfg.seed;

  RngStream rng(mix_seed(cfg.seed, {fnv1a("gradcheck-data")}));
  std::vector<PackedSequence> seqs;
  std::vector<uint64_t> lambda_seeds;
  for (int b = 0; b < cfg.batch; ++b) {
    PackedSequence s;
    s.student_id = "g" + std::to_string(b);
    for (int t = 0; t < cfg.seq_len; ++t) {
      s.questions.push_back(rng.uniform_int(1, cfg.num_questions));
      s.concepts.push_back(rng.uniform_int(1, cfg.num_concepts));
      s.responses.push_back(rng.uniform() < 0.5 ? 1 : 0);
    }
    seqs.push_back(std::move(s));
    lambda_seeds.push_back(mix_seed(cfg.seed, {fnv1a("gradcheck-lambda"),
                                               static_cast<uint64_t>(b)}));
  }
  DifficultyTable difficulty;
  difficulty.diff.assign(cfg.num_concepts + 1, 0.5);
  difficulty.support.assign(cfg.num_concepts + 1, 1);
  for (int c = 1; c <= cfg.num_concepts; ++c) difficulty.diff[c] = rng.uniform(0.1, 0.9);

  ModelParams params = ModelParams::init(tc.model, mix_seed(cfg.seed, {fnv1a("init")}));

  // analytic gradients
  params.zero_grads();
  for (size_t i = 0; i < seqs.size(); ++i) {
    Tape tape;
    ForwardOptions opts;
    opts.mode = Mode::eval;
    opts.lambda_seed = lambda_seeds[i];
    ForwardResult fr = forward(tape, params, tc.model, seqs[i], difficulty, opts);
    Var bce = tape.bce_mean(fr.r_hat, seqs[i].responses);
    Var cl = tape.row_norm_mean(tape.sub(fr.s_plus, fr.s_minus));
    Var total = tc.model.ablation.no_loss_cl ? bce : tape.add_scaled(bce, cl, -tc.cl_weight);
    tape.backward(total, 1.0 / static_cast<double>(seqs.size()));
  }
  params.zero_frozen_grads();

  GradCheckReport report;
  report.tolerance = cfg.tolerance;
  for (Parameter* p : params.all()) {
    GradCheckEntry entry;
    entry.tensor = p->name;
    for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
      if (p->row_is_frozen(static_cast<int>(r))) continue;  // both sides exactly 0
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        double keep = p->value(r, c);
        p->value(r, c) = keep + cfg.fd_step;
        double up = forward_loss(params, tc, seqs, difficulty, lambda_seeds);
        p->value(r, c) = keep - cfg.fd_step;
        double down = forward_loss(params, tc, seqs, difficulty, lambda_seeds);
        p->value(r, c) = keep;
        double fd = (up - down) / (2.0 * cfg.fd_step);
        double analytic = p->grad(r, c);
        double denom = std::max({std::abs(fd), std::abs(analytic), 1e-4});
        entry.max_rel_err = std::max(entry.max_rel_err, std::abs(fd - analytic) / denom);
      }
    }
    entry.passed = entry.max_rel_err <= cfg.tolerance;
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

namespace {

json mat_to_json(const Mat& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Mat mat_from_json(const json& j) {
  Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const json& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw ValidationError("checkpoint tensor size mismatch");
  Mat m(rows, cols);
  size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  return m;
}

json config_to_json(const TrainConfig& cfg) {
  return json{
      {"dim", cfg.model.dim},
      {"num_layers", cfg.model.num_layers},
      {"num_heads", cfg.model.num_heads},
      {"mask_value", cfg.model.mask_value},
      {"beta", cfg.model.beta},
      {"gamma", cfg.model.gamma},
      {"dropout", cfg.model.dropout},
      {"no_sub", cfg.model.ablation.no_sub},
      {"no_con", cfg.model.ablation.no_con},
      {"no_irt", cfg.model.ablation.no_irt},
      {"normal_irt", cfg.model.ablation.normal_irt},
      {"no_loss_cl", cfg.model.ablation.no_loss_cl},
      {"num_questions", cfg.model.num_questions},
      {"num_concepts", cfg.model.num_concepts},
      {"batch_size", cfg.batch_size},
      {"learning_rate", cfg.learning_rate},
      {"window", cfg.window},
      {"patience", cfg.patience},
      {"max_epochs", cfg.max_epochs},
      {"seed", cfg.seed},
      {"cl_weight", cfg.cl_weight},
      {"adam_beta1", cfg.adam_beta1},
      {"adam_beta2", cfg.adam_beta2},
      {"adam_eps", cfg.adam_eps},
  };
}

TrainConfig config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.model.dim = j.at("dim").get<int>();
  cfg.model.num_layers = j.at("num_layers").get<int>();
  cfg.model.num_heads = j.at("num_heads").get<int>();
  cfg.model.mask_value = j.at("mask_value").get<int>();
  cfg.model.beta = j.at("beta").get<double>();
  cfg.model.gamma = j.at("gamma").get<double>();
  cfg.model.dropout = j.at("dropout").get<double>();
  cfg.model.ablation.no_sub = j.at("no_sub").get<bool>();
  cfg.model.ablation.no_con = j.at("no_con").get<bool>();
  cfg.model.ablation.no_irt = j.at("no_irt").get<bool>();
  cfg.model.ablation.normal_irt = j.at("normal_irt").get<bool>();
  cfg.model.ablation.no_loss_cl = j.at("no_loss_cl").get<bool>();
  cfg.model.num_questions = j.at("num_questions").get<int>();
  cfg.model.num_concepts = j.at("num_concepts").get<int>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.learning_rate = j.at("learning_rate").get<double>();
  cfg.window = j.at("window").get<int>();
  cfg.patience = j.at("patience").get<int>();
  cfg.max_epochs = j.at("max_epochs").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.cl_weight = j.at("cl_weight").get<double>();
  cfg.adam_beta1 = j.at("adam_beta1").get<double>();
  cfg.adam_beta2 = j.at("adam_beta2").get<double>();
  cfg.adam_eps = j.at("adam_eps").get<double>();
  return cfg;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  json j;
  j["format"] = "diskt-checkpoint-v1";
  j["config"] = config_to_json(state.config);
  j["best_epoch"] = state.best_epoch;
  j["best_val_auc"] = state.best_val_auc ? json(*state.best_val_auc) : json(nullptr);
  j["difficulty"] = {{"fallback", state.difficulty.fallback},
                     {"diff", state.difficulty.diff},
                     {"support", state.difficulty.support}};
  json tensors = json::object();
  // best_params is const through all(); copy once to walk the named tensors
  ModelParams best = state.best_params;
  for (Parameter* p : best.all()) tensors[p->name] = mat_to_json(p->value);
  j["params"] = tensors;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  json j = json::parse(in);
  if (j.value("format", "") != "diskt-checkpoint-v1")
    throw ValidationError(path + ": not a diskt checkpoint");

  Checkpoint ck;
  ck.config = config_from_json(j.at("config"));
  ck.best_epoch = j.at("best_epoch").get<int>();
  if (!j.at("best_val_auc").is_null())
    ck.best_val_auc = j.at("best_val_auc").get<double>();
  ck.difficulty.fallback = j.at("difficulty").at("fallback").get<double>();
  ck.difficulty.diff = j.at("difficulty").at("diff").get<std::vector<double>>();
  ck.difficulty.support = j.at("difficulty").at("support").get<std::vector<long long>>();

  ck.params = ModelParams::init(ck.config.model, mix_seed(ck.config.seed, {fnv1a("init")}));
  const json& tensors = j.at("params");
  for (Parameter* p : ck.params.all()) {
    if (!tensors.contains(p->name))
      throw ValidationError(path + ": checkpoint is missing tensor '" + p->name + "'");
    Mat m = mat_from_json(tensors.at(p->name));
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      throw ValidationError(path + ": tensor '" + p->name + "' has the wrong shape");
    p->value = std::move(m);
  }
  return ck;
}

}  // namespace diskt
