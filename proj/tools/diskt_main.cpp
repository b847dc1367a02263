#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "diskt/dataio.hpp"
#include "diskt/errors.hpp"
#include "diskt/metrics.hpp"
#include "diskt/model.hpp"
#include "diskt/predictor.hpp"
#include "diskt/training.hpp"

using nlohmann::json;

namespace {

// Ingest a CSV for modeling. Raw files (multi-concept cells or id 0) go
// through the full preprocessing pipeline; files that are already
// single-concept with 1-based ids only get the length filter and window
// truncation, so ids stay aligned across files cut from the same parent
// (bias bins, fold exports).
diskt::Dataset ingest(const std::string& path, int window, int min_len) {
  diskt::Dataset raw = diskt::parse_csv(path);
  bool needs_pipeline = false;
  for (const auto& seq : raw.sequences) {
    for (const auto& it : seq.interactions) {
      if (it.concept_ids.size() != 1 || it.question_id == 0 || it.concept_ids[0] == 0) {
        needs_pipeline = true;
        break;
      }
    }
    if (needs_pipeline) break;
  }
  if (needs_pipeline) return diskt::preprocess(raw, window, min_len);

  diskt::Dataset out;
  out.num_questions = raw.num_questions;
  out.num_concepts = raw.num_concepts;
  for (auto& seq : raw.sequences) {
    if (static_cast<int>(seq.interactions.size()) < min_len) continue;
    std::stable_sort(seq.interactions.begin(), seq.interactions.end(),
                     [](const diskt::Interaction& a, const diskt::Interaction& b) {
                       return a.timestamp < b.timestamp;
                     });
    if (static_cast<int>(seq.interactions.size()) > window)
      seq.interactions.erase(seq.interactions.begin(), seq.interactions.end() - window);
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

struct TrainCli {
  std::string data, val_data, folds_path, checkpoint = "checkpoint.json";
  std::string log_path, difficulty_out;
  int fold = 0;
  int k = 5;
  double val_frac = 0.10;
  int min_len = 5;
  int num_questions = 0, num_concepts = 0;
  std::vector<std::string> ablations;
  diskt::TrainConfig cfg;
};

// Flat key=value file with TrainConfig field names as keys. Applied only to
// options that were not given on the command line, so flags always win.
void apply_config_file(const std::string& path, TrainCli& opt, const CLI::App* train) {
  std::ifstream in(path);
  if (!in) throw diskt::ParseError("cannot open config '" + path + "'");
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      size_t b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      size_t e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw diskt::ConfigError(path + ":" + std::to_string(line_no) +
                               ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));

    auto given = [&](const char* flag) { return train->count(flag) > 0; };
    auto as_bool = [&]() { return value == "true" || value == "1" || value == "yes"; };
    try {
      if (key == "dim") {
        if (!given("--dim")) opt.cfg.model.dim = std::stoi(value);
      } else if (key == "num_layers") {
        if (!given("--layers")) opt.cfg.model.num_layers = std::stoi(value);
      } else if (key == "num_heads") {
        if (!given("--heads")) opt.cfg.model.num_heads = std::stoi(value);
      } else if (key == "dropout") {
        if (!given("--dropout")) opt.cfg.model.dropout = std::stod(value);
      } else if (key == "beta") {
        if (!given("--beta")) opt.cfg.model.beta = std::stod(value);
      } else if (key == "gamma") {
        if (!given("--gamma")) opt.cfg.model.gamma = std::stod(value);
      } else if (key == "batch_size") {
        if (!given("--batch-size")) opt.cfg.batch_size = std::stoi(value);
      } else if (key == "learning_rate") {
        if (!given("--lr")) opt.cfg.learning_rate = std::stod(value);
      } else if (key == "window") {
        if (!given("--window")) opt.cfg.window = std::stoi(value);
      } else if (key == "patience") {
        if (!given("--patience")) opt.cfg.patience = std::stoi(value);
      } else if (key == "max_epochs") {
        if (!given("--max-epochs")) opt.cfg.max_epochs = std::stoi(value);
      } else if (key == "seed") {
        if (!given("--seed")) opt.cfg.seed = std::stoull(value);
      } else if (key == "cl_weight") {
        if (!given("--cl-weight")) opt.cfg.cl_weight = std::stod(value);
      } else if (key == "no_sub") {
        if (as_bool()) opt.ablations.push_back("no_sub");
      } else if (key == "no_con") {
        if (as_bool()) opt.ablations.push_back("no_con");
      } else if (key == "no_irt") {
        if (as_bool()) opt.ablations.push_back("no_irt");
      } else if (key == "normal_irt") {
        if (as_bool()) opt.ablations.push_back("normal_irt");
      } else if (key == "no_loss_cl") {
        if (as_bool()) opt.ablations.push_back("no_loss_cl");
      } else {
        throw diskt::ConfigError(path + ":" + std::to_string(line_no) +
                                 ": unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw diskt::ConfigError(path + ":" + std::to_string(line_no) + ": bad value for '" +
                               key + "'");
    }
  }
}

void apply_ablations(diskt::ModelConfig& model, const std::vector<std::string>& names) {
  for (const std::string& name : names) {
    if (name == "no_sub")
      model.ablation.no_sub = true;
    else if (name == "no_con")
      model.ablation.no_con = true;
    else if (name == "no_irt")
      model.ablation.no_irt = true;
    else if (name == "normal_irt")
      model.ablation.normal_irt = true;
    else if (name == "no_loss_cl")
      model.ablation.no_loss_cl = true;
    else
      throw diskt::ConfigError("unknown ablation '" + name + "'");
  }
}

int run_train(TrainCli& opt) {
  diskt::Dataset data = ingest(opt.data, opt.cfg.window, opt.min_len);
  apply_ablations(opt.cfg.model, opt.ablations);

  diskt::Dataset train, val;
  if (!opt.val_data.empty()) {
    train = data;
    val = ingest(opt.val_data, opt.cfg.window, opt.min_len);
  } else {
    diskt::FoldSplit split =
        opt.folds_path.empty()
            ? diskt::kfold_split(data, opt.k, opt.val_frac, opt.cfg.seed)
            : diskt::read_fold_manifest(opt.folds_path);
    diskt::SplitDatasets parts = diskt::split_by_fold(data, split, opt.fold);
    train = std::move(parts.train);
    val = std::move(parts.validation);
  }

  opt.cfg.model.num_questions =
      opt.num_questions > 0 ? opt.num_questions
                            : std::max(train.num_questions, val.num_questions);
  opt.cfg.model.num_concepts =
      opt.num_concepts > 0 ? opt.num_concepts
                           : std::max(train.num_concepts, val.num_concepts);

  std::ofstream log;
  if (!opt.log_path.empty()) {
    log.open(opt.log_path);
    if (!log) throw diskt::ParseError("cannot write '" + opt.log_path + "'");
  }
  diskt::EpochCallback on_epoch = [&](const diskt::EpochStats& s) {
    std::string line = diskt::epoch_stats_to_json(s);
    if (log.is_open()) log << line << '\n';
    std::fprintf(stderr, "%s\n", line.c_str());
  };

  diskt::TrainState state = diskt::fit(train, val, opt.cfg, nullptr, on_epoch);
  diskt::save_checkpoint(state, opt.checkpoint);
  if (!opt.difficulty_out.empty())
    diskt::write_difficulty(state.difficulty, opt.difficulty_out);

  std::printf("trained %d epoch(s); best epoch %d", state.epochs_run, state.best_epoch);
  if (state.best_val_auc) std::printf(", best validation AUC %.6f", *state.best_val_auc);
  std::printf("; checkpoint written to %s\n", opt.checkpoint.c_str());
  return 0;
}

struct EvaluateCli {
  std::string data, checkpoint, folds_path;
  std::optional<int> fold;
  std::string dump_path = "dump.csv", report_path = "report.json";
  std::string dump_cv_path, difficulty_out;
  int min_len = 5;
  bool literal_ekl = false;
  bool all_rows = false;
};

int run_evaluate(EvaluateCli& opt) {
  diskt::Checkpoint ck = diskt::load_checkpoint(opt.checkpoint);
  diskt::Dataset data = ingest(opt.data, ck.config.window, opt.min_len);

  diskt::Dataset target;
  if (opt.fold) {
    diskt::FoldSplit split =
        opt.folds_path.empty()
            ? diskt::kfold_split(data, 5, 0.10, ck.config.seed)
            : diskt::read_fold_manifest(opt.folds_path);
    target = diskt::split_by_fold(data, split, *opt.fold).test;
  } else {
    target = data;
  }

  diskt::PredictionDump dump = diskt::evaluate_dump(ck.params, ck.config.model, target,
                                                    ck.difficulty, ck.config.seed);
  diskt::write_dump(dump, opt.dump_path);
  diskt::MetricsReport rep =
      diskt::report(dump, ck.difficulty, opt.literal_ekl, opt.all_rows);
  diskt::write_report(rep, opt.report_path);
  if (!opt.difficulty_out.empty()) diskt::write_difficulty(ck.difficulty, opt.difficulty_out);

  if (!opt.dump_cv_path.empty()) {
    json students = json::object();
    for (const auto& seq : target.sequences) {
      diskt::PackedSequence packed = diskt::pack(seq);
      diskt::Tape tape;
      diskt::ForwardOptions fopts;
      fopts.mode = diskt::Mode::eval;
      fopts.lambda_seed = diskt::eval_lambda_seed(ck.config.seed, seq.student_id);
      diskt::ForwardResult fr = diskt::forward(tape, ck.params, ck.config.model, packed,
                                               ck.difficulty, fopts);
      json entry;
      entry["cv"] = fr.trace.cv;
      entry["alpha"] = std::vector<double>(fr.trace.alpha.data(),
                                           fr.trace.alpha.data() + fr.trace.alpha.size());
      entry["lambda"] = std::vector<double>(
          fr.trace.lambda.data(), fr.trace.lambda.data() + fr.trace.lambda.size());
      students[seq.student_id] = entry;
    }
    std::ofstream out(opt.dump_cv_path);
    if (!out) throw diskt::ParseError("cannot write '" + opt.dump_cv_path + "'");
    out << json{{"students", students}}.dump(2) << '\n';
  }

  std::string summary = diskt::report_to_json(rep);
  std::printf("%s\n", summary.c_str());
  return 0;
}

int run_explain(const std::string& data_path, const std::string& checkpoint,
                const std::string& student, std::optional<int> position,
                const std::string& out_path, int min_len) {
  diskt::Checkpoint ck = diskt::load_checkpoint(checkpoint);
  diskt::Dataset data = ingest(data_path, ck.config.window, min_len);

  const diskt::StudentSequence* found = nullptr;
  for (const auto& seq : data.sequences)
    if (seq.student_id == student) found = &seq;
  if (!found) throw diskt::ValidationError("student '" + student + "' not in dataset");

  diskt::PackedSequence packed = diskt::pack(*found);
  diskt::Tape tape;
  diskt::ForwardOptions fopts;
  fopts.mode = diskt::Mode::eval;
  fopts.lambda_seed = diskt::eval_lambda_seed(ck.config.seed, student);
  diskt::ForwardResult fr =
      diskt::forward(tape, ck.params, ck.config.model, packed, ck.difficulty, fopts);

  auto to_json = [&](const diskt::Explanation& e) {
    return json{{"position", e.position}, {"d_q", e.d_q},           {"X", e.x},
                {"H_plus", e.h_plus},     {"H_minus", e.h_minus},   {"label", e.label},
                {"probability", e.probability}};
  };
  json out;
  if (position) {
    out = to_json(diskt::explain(fr.trace, *position));
  } else {
    out = json::array();
    for (const auto& e : diskt::explain_all(fr.trace)) out.push_back(to_json(e));
  }
  std::string text = out.dump(2);
  if (out_path.empty()) {
    std::printf("%s\n", text.c_str());
  } else {
    std::ofstream f(out_path);
    if (!f) throw diskt::ParseError("cannot write '" + out_path + "'");
    f << text << '\n';
  }
  return 0;
}

int run_gradcheck(const diskt::GradCheckConfig& cfg) {
  diskt::GradCheckReport report = diskt::gradient_check(cfg);
  std::printf("%-32s %14s  %s\n", "tensor", "max_rel_err", "status");
  for (const auto& e : report.entries)
    std::printf("%-32s %14.3e  %s\n", e.tensor.c_str(), e.max_rel_err,
                e.passed ? "ok" : "FAIL");
  std::printf("gradient check %s (tolerance %.1e)\n",
              report.passed ? "PASSED" : "FAILED", report.tolerance);
  return report.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diskt: knowledge tracing with counterfactual interaction streams,\n"
               "contradiction-aware attention, and a difficulty-calibrated scoring head"};
  app.require_subcommand(1);

  // ---- preprocess ----
  auto* pre = app.add_subcommand("preprocess",
                                 "Filter, merge multi-concept tags, truncate and re-index a raw CSV");
  std::string pre_data, pre_out = "processed.csv", pre_folds;
  int pre_window = 100, pre_min_len = 5, pre_k = 5;
  double pre_val_frac = 0.10;
  uint64_t pre_seed = 42;
  pre->add_option("--data", pre_data, "input CSV")->required();
  pre->add_option("--out", pre_out, "output CSV (default processed.csv)");
  pre->add_option("--window", pre_window, "keep the most recent N interactions (default 100)");
  pre->add_option("--min-len", pre_min_len, "drop students with fewer interactions (default 5)");
  pre->add_option("--folds", pre_folds, "also write a fold manifest JSON here");
  pre->add_option("--k", pre_k, "fold count for the manifest (default 5)");
  pre->add_option("--val-frac", pre_val_frac, "validation share of training students (default 0.10)");
  pre->add_option("--seed", pre_seed, "fold shuffle seed");

  // ---- simulate ----
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic corpus with guess/slip channels");
  diskt::SimConfig sim_cfg;
  std::string sim_out = "synthetic.csv", sim_sidecar;
  sim->add_option("--students", sim_cfg.num_students, "number of students")->required();
  sim->add_option("--questions", sim_cfg.num_questions, "question pool size")->required();
  sim->add_option("--concepts", sim_cfg.num_concepts, "concept count")->required();
  sim->add_option("--guess", sim_cfg.guess, "guess channel probability (default 0)");
  sim->add_option("--slip", sim_cfg.slip, "slip channel probability (default 0)");
  sim->add_option("--difficulty-skew", sim_cfg.difficulty_skew,
                  "positive values make the corpus easier (default 0)");
  sim->add_option("--min-len", sim_cfg.min_len, "shortest sequence (default 50)");
  sim->add_option("--max-len", sim_cfg.max_len, "longest sequence (default 50)");
  sim->add_option("--seed", sim_cfg.seed, "generator seed");
  sim->add_option("--out", sim_out, "output CSV (default synthetic.csv)");
  sim->add_option("--sidecar", sim_sidecar, "ground-truth JSON (theta, b, channel flags)");

  // ---- bias-split ----
  auto* bias = app.add_subcommand("bias-split",
                                  "Split students into low/medium/high correct-rate bins");
  std::string bias_data, bias_prefix = "bins";
  int bias_window = 100, bias_min_len = 5;
  bias->add_option("--data", bias_data, "input CSV")->required();
  bias->add_option("--out-prefix", bias_prefix, "writes <prefix>_{low,medium,high}.csv");
  bias->add_option("--window", bias_window, "ingest window (default 100)");
  bias->add_option("--min-len", bias_min_len, "ingest length filter (default 5)");

  // ---- train ----
  auto* train = app.add_subcommand("train", "Fit a model with early stopping");
  TrainCli tr;
  train->add_option("--data", tr.data, "training CSV")->required();
  train->add_option("--val-data", tr.val_data,
                    "explicit validation CSV (otherwise a fold split is used)");
  train->add_option("--folds", tr.folds_path, "fold manifest JSON (computed when absent)");
  train->add_option("--fold", tr.fold, "test fold to hold out (default 0)");
  train->add_option("--k", tr.k, "fold count when computing the split (paper default 5)");
  train->add_option("--val-frac", tr.val_frac, "validation share (paper default 0.10)");
  train->add_option("--checkpoint", tr.checkpoint, "output checkpoint (default checkpoint.json)");
  train->add_option("--log", tr.log_path, "per-epoch JSONL log");
  train->add_option("--difficulty-out", tr.difficulty_out, "write the training difficulty table");
  train->add_option("--dim", tr.cfg.model.dim, "embedding width (paper default 64)");
  train->add_option("--layers", tr.cfg.model.num_layers, "encoder depth (default 2)");
  train->add_option("--heads", tr.cfg.model.num_heads, "attention heads (paper example 2)");
  train->add_option("--dropout", tr.cfg.model.dropout, "dropout rate (paper default 0.05)");
  train->add_option("--beta", tr.cfg.model.beta, "lower bound on the randomness gate (paper example 0.1)");
  train->add_option("--gamma", tr.cfg.model.gamma, "initial contradiction threshold (paper example 0.2)");
  train->add_option("--batch-size", tr.cfg.batch_size, "minibatch size (paper default 512)");
  train->add_option("--lr", tr.cfg.learning_rate, "Adam learning rate (paper default 0.001)");
  train->add_option("--window", tr.cfg.window, "sequence window (paper default 100)");
  train->add_option("--min-len", tr.min_len, "ingest length filter (default 5)");
  train->add_option("--patience", tr.cfg.patience, "early-stop patience in epochs (paper default 10)");
  train->add_option("--max-epochs", tr.cfg.max_epochs, "epoch cap (default 200)");
  train->add_option("--seed", tr.cfg.seed, "master seed (default 42)");
  train->add_option("--cl-weight", tr.cfg.cl_weight, "separation term weight (default 1.0)");
  train->add_option("--num-questions", tr.num_questions,
                    "vocabulary override for files cut from a larger corpus");
  train->add_option("--num-concepts", tr.num_concepts, "vocabulary override (see --num-questions)");
  train->add_option("--ablation", tr.ablations,
                    "disable a component: no_sub, no_con, no_irt, normal_irt, no_loss_cl")
      ->delimiter(',');
  std::string train_config;
  train->add_option("--config", train_config,
                    "flat key=value file (TrainConfig field names); command-line flags win");

  // ---- evaluate ----
  auto* eval = app.add_subcommand("evaluate", "Score a dataset with a trained checkpoint");
  EvaluateCli ev;
  int eval_fold = -1;
  eval->add_option("--data", ev.data, "CSV to evaluate")->required();
  eval->add_option("--checkpoint", ev.checkpoint, "trained checkpoint")->required();
  eval->add_option("--fold", eval_fold, "restrict to this fold's test students");
  eval->add_option("--folds", ev.folds_path, "fold manifest (recomputed when absent)");
  eval->add_option("--dump", ev.dump_path, "prediction dump CSV (default dump.csv)");
  eval->add_option("--report", ev.report_path, "metrics JSON (default report.json)");
  eval->add_option("--dump-cv", ev.dump_cv_path, "write per-student contradiction flags JSON");
  eval->add_option("--difficulty-out", ev.difficulty_out, "export the checkpoint difficulty table");
  eval->add_option("--min-len", ev.min_len, "ingest length filter (default 5)");
  eval->add_flag("--literal-ekl", ev.literal_ekl,
                 "use the verbatim calibration expression instead of the KL form");
  eval->add_flag("--all-rows", ev.all_rows,
                 "rate denominators count every row in the difficulty band");

  // ---- explain ----
  auto* expl = app.add_subcommand("explain", "Interpret one student's predictions");
  std::string ex_data, ex_ck, ex_student, ex_out;
  int ex_position = -1, ex_min_len = 5;
  expl->add_option("--data", ex_data, "CSV with the student's history")->required();
  expl->add_option("--checkpoint", ex_ck, "trained checkpoint")->required();
  expl->add_option("--student", ex_student, "student id")->required();
  expl->add_option("--position", ex_position, "1-based position (all positions when absent)");
  expl->add_option("--out", ex_out, "output JSON path (stdout when absent)");
  expl->add_option("--min-len", ex_min_len, "ingest length filter (default 5)");

  // ---- gradcheck ----
  auto* gc = app.add_subcommand("gradcheck",
                                "Verify analytic gradients against finite differences");
  diskt::GradCheckConfig gc_cfg;
  gc->add_option("--dim", gc_cfg.dim, "embedding width (default 4)");
  gc->add_option("--seq-len", gc_cfg.seq_len, "sequence length (default 6)");
  gc->add_option("--layers", gc_cfg.num_layers, "encoder depth (default 1)");
  gc->add_option("--heads", gc_cfg.heads, "attention heads (default 2)");
  gc->add_option("--batch", gc_cfg.batch, "sequences in the probe batch (default 2)");
  gc->add_option("--cl-weight", gc_cfg.cl_weight, "separation weight in the probed loss");
  gc->add_option("--step", gc_cfg.fd_step, "finite-difference step (default 1e-5)");
  gc->add_option("--tolerance", gc_cfg.tolerance, "max relative error (default 1e-4)");
  gc->add_option("--seed", gc_cfg.seed, "probe seed");

  // ---- audit ----
  auto* audit = app.add_subcommand("audit",
                                   "Bias metrics for an external prediction dump");
  std::string au_dump, au_diff, au_report = "report.json";
  bool au_literal = false, au_all_rows = false;
  audit->add_option("--dump", au_dump, "prediction dump CSV")->required();
  audit->add_option("--difficulty", au_diff, "difficulty table JSON")->required();
  audit->add_option("--report", au_report, "metrics JSON (default report.json)");
  audit->add_flag("--literal-ekl", au_literal, "verbatim calibration expression");
  audit->add_flag("--all-rows", au_all_rows, "widen rate denominators");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (pre->parsed()) {
      diskt::Dataset processed = diskt::preprocess(diskt::parse_csv(pre_data),
                                                   pre_window, pre_min_len);
      diskt::write_csv(processed, pre_out);
      std::printf("wrote %zu student(s), %zu interaction(s), %d question(s), %d concept(s) to %s\n",
                  processed.sequences.size(), processed.total_interactions(),
                  processed.num_questions, processed.num_concepts, pre_out.c_str());
      if (!pre_folds.empty()) {
        diskt::FoldSplit split = diskt::kfold_split(processed, pre_k, pre_val_frac, pre_seed);
        diskt::write_fold_manifest(split, pre_folds);
        std::printf("fold manifest written to %s\n", pre_folds.c_str());
      }
      return 0;
    }
    if (sim->parsed()) {
      auto [data, truth] = diskt::simulate(sim_cfg);
      diskt::write_csv(data, sim_out);
      if (!sim_sidecar.empty()) diskt::write_sidecar(data, truth, sim_sidecar);
      std::printf("wrote %zu student(s), %zu interaction(s) to %s\n", data.sequences.size(),
                  data.total_interactions(), sim_out.c_str());
      return 0;
    }
    if (bias->parsed()) {
      diskt::Dataset data = ingest(bias_data, bias_window, bias_min_len);
      diskt::BiasPartition part = diskt::bias_partition(data);
      diskt::write_csv(part.low, bias_prefix + "_low.csv");
      diskt::write_csv(part.medium, bias_prefix + "_medium.csv");
      diskt::write_csv(part.high, bias_prefix + "_high.csv");
      diskt::write_bias_manifest(part, bias_prefix + "_manifest.json");
      std::printf("bins: low=%zu medium=%zu high=%zu students; vocabulary: %d question(s), %d concept(s)\n",
                  part.low.sequences.size(), part.medium.sequences.size(),
                  part.high.sequences.size(), data.num_questions, data.num_concepts);
      return 0;
    }
    if (train->parsed()) {
      if (!train_config.empty()) apply_config_file(train_config, tr, train);
      return run_train(tr);
    }
    if (eval->parsed()) {
      if (eval_fold >= 0) ev.fold = eval_fold;
      return run_evaluate(ev);
    }
    if (expl->parsed()) {
      std::optional<int> pos;
      if (ex_position >= 0) pos = ex_position;
      return run_explain(ex_data, ex_ck, ex_student, pos, ex_out, ex_min_len);
    }
    if (gc->parsed()) return run_gradcheck(gc_cfg);
    if (audit->parsed()) {
      diskt::PredictionDump dump = diskt::read_dump(au_dump);
      diskt::DifficultyTable diff = diskt::read_difficulty(au_diff);
      diskt::MetricsReport rep = diskt::report(dump, diff, au_literal, au_all_rows);
      diskt::write_report(rep, au_report);
      std::printf("%s\n", diskt::report_to_json(rep).c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "diskt: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
