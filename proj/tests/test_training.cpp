#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "diskt/errors.hpp"
#include "diskt/training.hpp"

using namespace diskt;

namespace {

// small synthetic corpus split into train/validation on student boundaries
struct TinyData {
  Dataset train, val;
  TrainConfig cfg;
};

TinyData tiny_data(uint64_t seed, int students = 12, int train_students = 9) {
  SimConfig sim;
  sim.num_students = students;
  sim.num_questions = 12;
  sim.num_concepts = 5;
  sim.guess = 0.1;
  sim.slip = 0.1;
  sim.min_len = 6;
  sim.max_len = 12;
  sim.seed = seed;
  auto [data, truth] = simulate(sim);
  (void)truth;

  TinyData out;
  for (Dataset* d : {&out.train, &out.val}) {
    d->num_questions = data.num_questions;
    d->num_concepts = data.num_concepts;
  }
  for (size_t i = 0; i < data.sequences.size(); ++i)
    (static_cast<int>(i) < train_students ? out.train : out.val)
        .sequences.push_back(data.sequences[i]);

  out.cfg.model.dim = 8;
  out.cfg.model.num_layers = 1;
  out.cfg.model.num_heads = 2;
  out.cfg.model.dropout = 0.05;
  out.cfg.model.num_questions = data.num_questions;
  out.cfg.model.num_concepts = data.num_concepts;
  out.cfg.batch_size = 4;
  out.cfg.max_epochs = 4;
  out.cfg.patience = 10;
  out.cfg.seed = seed;
  return out;
}

ModelConfig tiny_model_config(int num_q, int num_c) {
  ModelConfig cfg;
  cfg.dim = 8;
  cfg.num_layers = 1;
  cfg.num_heads = 2;
  cfg.dropout = 0.0;
  cfg.num_questions = num_q;
  cfg.num_concepts = num_c;
  return cfg;
}

PackedSequence demo_sequence() {
  PackedSequence s;
  s.student_id = "demo";
  s.questions = {3, 1, 4, 1, 5};
  s.concepts = {2, 1, 3, 1, 2};
  s.responses = {1, 0, 1, 1, 0};
  return s;
}

DifficultyTable flat_difficulty(int concepts, double value = 0.5) {
  DifficultyTable t;
  t.diff.assign(concepts + 1, value);
  t.support.assign(concepts + 1, 1);
  return t;
}

}  // namespace

TEST_CASE("bce hand values") {
  Vec half = Vec::Constant(4, 0.5);
  std::vector<int> any = {1, 0, 1, 0};
  CHECK(bce_loss(half, any) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Vec two(2);
  two << 0.9, 0.1;
  std::vector<int> r = {1, 0};
  CHECK(bce_loss(two, r) == doctest::Approx(0.105361).epsilon(1e-5));

  Vec fitted(2);
  fitted << 0.999999, 1e-6;
  CHECK(bce_loss(fitted, r) < 1e-5);
}

TEST_CASE("separation regularizer hand values") {
  Mat a = Mat::Random(3, 4);
  CHECK(cl_regularizer(a, a) == 0.0);

  Mat unit = Mat::Zero(2, 4);
  unit(0, 1) = 1.0;
  unit(1, 3) = 1.0;
  CHECK(cl_regularizer(unit, Mat::Zero(2, 4)) == doctest::Approx(1.0));

  Mat d = Mat::Zero(2, 3);
  d(0, 0) = 3.0;
  d(1, 1) = 4.0;
  CHECK(cl_regularizer(d, Mat::Zero(2, 3)) == doctest::Approx(3.5));
}

TEST_CASE("total loss subtracts the weighted separation term") {
  TrainConfig cfg;
  cfg.cl_weight = 1.0;
  CHECK(total_loss(0.7, 0.1, cfg) == doctest::Approx(0.6));
  cfg.model.ablation.no_loss_cl = true;
  CHECK(total_loss(0.7, 0.1, cfg) == doctest::Approx(0.7));
  cfg.model.ablation.no_loss_cl = false;
  cfg.cl_weight = 0.0;
  CHECK(total_loss(0.7, 0.1, cfg) == doctest::Approx(0.7));
  // decomposition: total + weight * cl == bce exactly
  cfg.cl_weight = 0.37;
  double total = total_loss(0.7, 0.13, cfg);
  CHECK(total + cfg.cl_weight * 0.13 == 0.7);
}

TEST_CASE("forward in eval mode is deterministic") {
  ModelConfig cfg = tiny_model_config(6, 4);
  ModelParams params = ModelParams::init(cfg, 99);
  DifficultyTable diff = flat_difficulty(4);
  PackedSequence seq = demo_sequence();

  ForwardOptions opts;
  opts.mode = Mode::eval;
  opts.lambda_seed = eval_lambda_seed(7, seq.student_id);
  Tape t1, t2;
  ForwardResult a = forward(t1, params, cfg, seq, diff, opts);
  ForwardResult b = forward(t2, params, cfg, seq, diff, opts);
  CHECK((a.trace.r_hat - b.trace.r_hat).norm() == 0.0);
  CHECK(a.trace.cv == b.trace.cv);
}

TEST_CASE("the first prediction ignores the first response") {
  ModelConfig cfg = tiny_model_config(6, 4);
  ModelParams params = ModelParams::init(cfg, 100);
  DifficultyTable diff = flat_difficulty(4, 0.3);
  PackedSequence seq;
  seq.student_id = "one";
  seq.questions = {4};
  seq.concepts = {2};
  seq.responses = {1};

  ForwardOptions opts;
  opts.lambda_seed = eval_lambda_seed(3, seq.student_id);
  Tape t1;
  double with_correct = forward(t1, params, cfg, seq, diff, opts).trace.r_hat(0);
  seq.responses = {0};
  Tape t2;
  double with_wrong = forward(t2, params, cfg, seq, diff, opts).trace.r_hat(0);
  CHECK(with_correct == with_wrong);
}

TEST_CASE("ablation flags reroute exactly the documented stage") {
  ModelConfig base = tiny_model_config(6, 4);
  DifficultyTable diff = flat_difficulty(4, 0.3);
  PackedSequence seq = demo_sequence();
  ForwardOptions opts;
  opts.lambda_seed = eval_lambda_seed(11, seq.student_id);

  auto run = [&](ModelConfig cfg) {
    ModelParams params = ModelParams::init(cfg, 123);
    Tape tape;
    return forward(tape, params, cfg, seq, diff, opts).trace;
  };
  ForwardTrace full = run(base);

  ModelConfig cfg_no_sub = base;
  cfg_no_sub.ablation.no_sub = true;
  ForwardTrace ns = run(cfg_no_sub);
  CHECK((ns.h_n - full.h_n).norm() == 0.0);
  CHECK((ns.h_plus - full.h_plus).norm() == 0.0);
  CHECK((ns.x - ns.h_n).norm() == 0.0);        // X collapses onto H_N
  CHECK((ns.x - full.x).norm() != 0.0);
  CHECK((ns.r_hat - full.r_hat).norm() != 0.0);

  ModelConfig cfg_no_con = base;
  cfg_no_con.ablation.no_con = true;
  ForwardTrace nc = run(cfg_no_con);
  CHECK((nc.h_n - full.h_n).norm() == 0.0);    // factual path untouched
  CHECK((nc.s_plus - full.s_plus).norm() == 0.0);
  CHECK(nc.cv == full.cv);                     // flags still computed
  CHECK((nc.h_plus - full.h_plus).norm() != 0.0);  // attention differs

  ModelConfig cfg_no_irt = base;
  cfg_no_irt.ablation.no_irt = true;
  ForwardTrace ni = run(cfg_no_irt);
  CHECK((ni.h_n - full.h_n).norm() == 0.0);
  CHECK((ni.h_plus - full.h_plus).norm() == 0.0);
  CHECK((ni.x - full.x).norm() == 0.0);        // X still recorded
  CHECK((ni.r_hat - full.r_hat).norm() != 0.0);

  ModelConfig cfg_cl = base;
  cfg_cl.ablation.no_loss_cl = true;
  ForwardTrace ncl = run(cfg_cl);
  CHECK((ncl.r_hat - full.r_hat).norm() == 0.0);  // loss-only flag

  // the stacked-ablation baseline still runs
  ModelConfig plain = base;
  plain.ablation.no_sub = true;
  plain.ablation.no_con = true;
  plain.ablation.normal_irt = true;
  ForwardTrace pb = run(plain);
  CHECK(pb.r_hat.size() == seq.length());

  ModelConfig bad = base;
  bad.ablation.no_irt = true;
  bad.ablation.normal_irt = true;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("fit is deterministic and checkpoints byte-identically") {
  TinyData d = tiny_data(404);
  TrainState a = fit(d.train, d.val, d.cfg);
  TrainState b = fit(d.train, d.val, d.cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (size_t e = 0; e < a.history.size(); ++e) {
    CHECK(std::abs(a.history[e].train_loss - b.history[e].train_loss) <= 1e-10);
    CHECK(std::abs(a.history[e].train_bce - b.history[e].train_bce) <= 1e-10);
    CHECK(a.history[e].val_auc.value_or(-1) == b.history[e].val_auc.value_or(-1));
  }

  std::string pa = "/tmp/diskt_ck_a.json", pb = "/tmp/diskt_ck_b.json";
  save_checkpoint(a, pa);
  save_checkpoint(b, pb);
  std::ifstream fa(pa), fb(pb);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  CHECK(sa.str() == sb.str());
  CHECK(!sa.str().empty());
}

TEST_CASE("checkpoints restore parameters exactly") {
  TinyData d = tiny_data(505);
  TrainState state = fit(d.train, d.val, d.cfg);
  std::string path = "/tmp/diskt_ck_restore.json";
  save_checkpoint(state, path);
  Checkpoint ck = load_checkpoint(path);

  ModelParams best = state.best_params;
  auto orig = best.all();
  auto restored = ck.params.all();
  REQUIRE(orig.size() == restored.size());
  for (size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i]->name == restored[i]->name);
    CHECK((orig[i]->value - restored[i]->value).norm() == 0.0);
  }
  CHECK(ck.difficulty.diff == state.difficulty.diff);
  CHECK(ck.best_epoch == state.best_epoch);

  // the restored model reproduces the stored validation AUC bit for bit
  PredictionDump dump = evaluate_dump(ck.params, ck.config.model, d.val,
                                      ck.difficulty, ck.config.seed);
  if (state.best_val_auc)
    CHECK(std::abs(*auc(dump) - *state.best_val_auc) <= 1e-10);
}

TEST_CASE("early stopping returns the checkpoint from the best epoch") {
  TinyData d = tiny_data(606);
  d.cfg.max_epochs = 40;
  d.cfg.patience = 3;
  TrainState state = fit(d.train, d.val, d.cfg);

  auto best = state.best_val_auc;
  REQUIRE(best.has_value());
  for (const EpochStats& s : state.history)
    if (s.val_auc) CHECK(*s.val_auc <= *best);
  CHECK(state.history[state.best_epoch - 1].val_auc.value_or(-1) == *best);
  if (state.epochs_run < d.cfg.max_epochs)  // stopped early
    CHECK(state.epochs_run == state.best_epoch + d.cfg.patience);
}

TEST_CASE("an exploding separation weight aborts with a named term") {
  TinyData d = tiny_data(707);
  d.cfg.cl_weight = 1e9;
  d.cfg.learning_rate = 10.0;
  d.cfg.max_epochs = 60;
  try {
    fit(d.train, d.val, d.cfg);
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    std::string what = e.what();
    CHECK((what.find("cl") != std::string::npos || what.find("bce") != std::string::npos));
  }
}

TEST_CASE("epoch log lines carry every field") {
  EpochStats s;
  s.epoch = 3;
  s.train_loss = 0.5;
  s.train_bce = 0.6;
  s.train_cl = 0.1;
  s.val_auc = 0.71;
  s.val_acc = 0.66;
  s.val_rmse = 0.44;
  std::string line = epoch_stats_to_json(s);
  for (const char* key : {"epoch", "train_loss", "bce", "cl", "val_auc", "val_acc",
                          "val_rmse"})
    CHECK(line.find(key) != std::string::npos);
}

TEST_CASE("gradient check passes on the tiny configuration") {
  GradCheckReport report = gradient_check();
  CHECK(report.passed);
  CHECK(report.entries.size() >= 20);  // every named tensor is covered
  for (const auto& e : report.entries) {
    INFO(e.tensor);
    CHECK(e.max_rel_err <= report.tolerance);
  }
}

TEST_CASE("gradient check exercises the separation path too") {
  GradCheckConfig cfg;
  cfg.cl_weight = 0.0;
  GradCheckReport without = gradient_check(cfg);
  CHECK(without.passed);
  cfg.cl_weight = 1.0;
  GradCheckReport with = gradient_check(cfg);
  CHECK(with.passed);
}

TEST_CASE("frozen pad rows report exactly zero gradient") {
  ModelConfig cfg = tiny_model_config(6, 4);
  ModelParams params = ModelParams::init(cfg, 44);
  DifficultyTable diff = flat_difficulty(4);
  PackedSequence seq = demo_sequence();

  params.zero_grads();
  Tape tape;
  ForwardOptions opts;
  opts.lambda_seed = eval_lambda_seed(5, seq.student_id);
  ForwardResult fr = forward(tape, params, cfg, seq, diff, opts);
  Var bce = tape.bce_mean(fr.r_hat, seq.responses);
  Var cl = tape.row_norm_mean(tape.sub(fr.s_plus, fr.s_minus));
  tape.backward(tape.add_scaled(bce, cl, -1.0));
  params.zero_frozen_grads();

  CHECK(params.tables.concept_table.grad.row(0).norm() == 0.0);
  CHECK(params.tables.concept_variation.grad.row(0).norm() == 0.0);
  CHECK(params.tables.question_difficulty.grad(0, 0) == 0.0);
  // the response mask row is trainable and used by the masked streams
  CHECK(params.tables.response.grad.row(2).norm() != 0.0);
}

TEST_CASE("training on too-long sequences is rejected") {
  TinyData d = tiny_data(808);
  d.cfg.window = 4;  // sequences run 6..12
  CHECK_THROWS_AS(fit(d.train, d.val, d.cfg), ConfigError);
}
