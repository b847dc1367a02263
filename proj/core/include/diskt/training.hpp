#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "diskt/metrics.hpp"
#include "diskt/model.hpp"

namespace diskt {

struct TrainConfig {
  ModelConfig model;
  int batch_size = 512;
  double learning_rate = 0.001;
  int window = 100;
  int patience = 10;  // epochs without a validation-AUC improvement
  int max_epochs = 200;
  uint64_t seed = 42;
  double cl_weight = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

// Mean over positions of -[r log p + (1-r) log(1-p)].
double bce_loss(const Vec& r_hat, std::span<const int> responses);
// Mean over positions of ||s_plus_t - s_minus_t||.
double cl_regularizer(const Mat& s_plus, const Mat& s_minus);
// bce - cl_weight * cl; the separation term is maximized. The no_loss_cl
// ablation reduces this to bce alone.
double total_loss(double bce, double cl, const TrainConfig& cfg);

class Adam {
 public:
  Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2, double eps);
  void step();

 private:
  std::vector<Parameter*> params_;
  std::vector<Mat> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_bce = 0.0;
  double train_cl = 0.0;
  std::optional<double> val_auc;
  double val_acc = 0.0;
  double val_rmse = 0.0;
};

std::string epoch_stats_to_json(const EpochStats& s);

struct TrainState {
  ModelParams params;       // after the final epoch
  ModelParams best_params;  // at the best validation AUC
  int best_epoch = 0;
  std::optional<double> best_val_auc;
  int epochs_run = 0;
  std::vector<EpochStats> history;
  TrainConfig config;
  DifficultyTable difficulty;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Minibatch Adam with epoch-end validation and early stopping on validation
// AUC. The difficulty table defaults to one computed from `train`; pass one
// explicitly to reuse an existing table. Throws TrainingDiverged on a
// non-finite loss, naming the term that broke.
TrainState fit(const Dataset& train, const Dataset& validation, const TrainConfig& cfg,
               const DifficultyTable* difficulty = nullptr,
               const EpochCallback& on_epoch = nullptr);

// Deterministic evaluation pass: dropout off, per-student lambda streams
// derived from (seed, student id). One dump row per position.
PredictionDump evaluate_dump(ModelParams& params, const ModelConfig& cfg,
                             const Dataset& data, const DifficultyTable& difficulty,
                             uint64_t seed);
// Same pass, BCE only (used by the overfit check).
double evaluate_bce(ModelParams& params, const ModelConfig& cfg, const Dataset& data,
                    const DifficultyTable& difficulty, uint64_t seed);

struct GradCheckConfig {
  int dim = 4;
  int seq_len = 6;
  int num_layers = 1;
  int heads = 2;
  int batch = 2;
  int num_questions = 6;
  int num_concepts = 4;
  double cl_weight = 1.0;
  double fd_step = 1e-5;
  double tolerance = 1e-4;
  uint64_t seed = 20240601;
};

struct GradCheckEntry {
  std::string tensor;
  double max_rel_err = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed = true;
  double tolerance = 1e-4;
};

// Central finite differences against the analytic gradients on a tiny
// double-precision configuration with dropout off and the contradiction
// randomness frozen. Frozen pad rows are excluded and report exactly zero.
GradCheckReport gradient_check(const GradCheckConfig& cfg = {});

struct Checkpoint {
  TrainConfig config;
  ModelParams params;
  DifficultyTable difficulty;
  int best_epoch = 0;
  std::optional<double> best_val_auc;
};

void save_checkpoint(const TrainState& state, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace diskt
