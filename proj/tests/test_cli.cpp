#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kCli = DISKT_CLI_PATH;

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() / ("diskt_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }
};

int run(const std::string& args, const std::string& log = "/dev/null") {
  std::string cmd = std::string(kCli) + " " + args + " >" + log + " 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli pipeline: simulate, train, evaluate, explain, audit") {
  Workspace ws;

  // simulate twice: byte-identical artifacts under the same seed
  std::string sim_args = "simulate --students 30 --questions 24 --concepts 6 --guess 0.1 "
                         "--slip 0.1 --min-len 8 --max-len 16 --seed 11 ";
  REQUIRE(run(sim_args + "--out " + ws.p("a.csv") + " --sidecar " + ws.p("a.json")) == 0);
  REQUIRE(run(sim_args + "--out " + ws.p("b.csv") + " --sidecar " + ws.p("b.json")) == 0);
  CHECK(slurp(ws.p("a.csv")) == slurp(ws.p("b.csv")));
  CHECK(slurp(ws.p("a.json")) == slurp(ws.p("b.json")));
  CHECK(!slurp(ws.p("a.json")).empty());

  // train twice with one seed: byte-identical checkpoints and logs
  std::string train_args = "train --data " + ws.p("a.csv") +
                           " --dim 8 --layers 1 --heads 2 --batch-size 16 "
                           "--max-epochs 3 --seed 9 ";
  REQUIRE(run(train_args + "--checkpoint " + ws.p("ck1.json") + " --log " + ws.p("l1.jsonl")) == 0);
  REQUIRE(run(train_args + "--checkpoint " + ws.p("ck2.json") + " --log " + ws.p("l2.jsonl")) == 0);
  CHECK(slurp(ws.p("ck1.json")) == slurp(ws.p("ck2.json")));
  CHECK(slurp(ws.p("l1.jsonl")) == slurp(ws.p("l2.jsonl")));

  // the epoch log is one JSON object per line with the full field set
  std::istringstream log(slurp(ws.p("l1.jsonl")));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    json j = json::parse(line);
    for (const char* key : {"epoch", "train_loss", "bce", "cl", "val_auc", "val_acc",
                            "val_rmse"})
      CHECK(j.contains(key));
    ++lines;
  }
  CHECK(lines == 3);

  // evaluate on one fold: dump + report + cv diagnostics
  REQUIRE(run("evaluate --data " + ws.p("a.csv") + " --checkpoint " + ws.p("ck1.json") +
              " --fold 0 --dump " + ws.p("dump.csv") + " --report " + ws.p("report.json") +
              " --dump-cv " + ws.p("cv.json") + " --difficulty-out " + ws.p("diff.json")) == 0);
  json report = json::parse(slurp(ws.p("report.json")));
  for (const char* key : {"auc", "acc", "rmse", "e_kl", "p_table", "q_table",
                          "guessing_rate", "mistaking_rate"})
    CHECK(report.contains(key));
  json cv = json::parse(slurp(ws.p("cv.json")));
  CHECK(!cv.at("students").empty());

  // explain emits the documented JSON schema
  std::string student;
  {
    std::istringstream csv(slurp(ws.p("a.csv")));
    std::string header, first;
    std::getline(csv, header);
    std::getline(csv, first);
    student = first.substr(0, first.find(','));
  }
  REQUIRE(run("explain --data " + ws.p("a.csv") + " --checkpoint " + ws.p("ck1.json") +
              " --student " + student + " --position 2 --out " + ws.p("explain.json")) == 0);
  json exp = json::parse(slurp(ws.p("explain.json")));
  for (const char* key : {"position", "d_q", "X", "H_plus", "H_minus", "label",
                          "probability"})
    CHECK(exp.contains(key));

  // audit reproduces the model-agnostic part of the report from files alone
  REQUIRE(run("evaluate --data " + ws.p("a.csv") + " --checkpoint " + ws.p("ck1.json") +
              " --dump " + ws.p("full_dump.csv") + " --report " + ws.p("full_report.json")) == 0);
  REQUIRE(run("audit --dump " + ws.p("full_dump.csv") + " --difficulty " + ws.p("diff.json") +
              " --report " + ws.p("audit.json")) == 0);
  json from_eval = json::parse(slurp(ws.p("full_report.json")));
  json from_audit = json::parse(slurp(ws.p("audit.json")));
  CHECK(from_eval.at("e_kl") == from_audit.at("e_kl"));
  CHECK(from_eval.at("acc") == from_audit.at("acc"));
}

TEST_CASE("cli preprocess merges multi-concept rows and writes fold manifests") {
  Workspace ws;
  {
    std::ofstream raw(ws.p("raw.csv"));
    raw << "student_id,question_id,concept_ids,response,timestamp\n";
    for (int s = 0; s < 8; ++s)
      for (int t = 0; t < 6; ++t)
        raw << "st" << s << ',' << (t + 1) << ',' << (t % 2 ? "2;7" : "3") << ','
            << (t % 3 ? 1 : 0) << ',' << t << '\n';
  }
  REQUIRE(run("preprocess --data " + ws.p("raw.csv") + " --out " + ws.p("proc.csv") +
              " --folds " + ws.p("folds.json") + " --k 4 --seed 2") == 0);
  std::string processed = slurp(ws.p("proc.csv"));
  CHECK(processed.find(';') == std::string::npos);  // merged to single concepts
  json folds = json::parse(slurp(ws.p("folds.json")));
  CHECK(folds.at("k") == 4);
  CHECK(folds.at("folds").size() == 8);
}

TEST_CASE("cli bias-split writes three bins plus a manifest") {
  Workspace ws;
  REQUIRE(run("simulate --students 40 --questions 20 --concepts 5 --min-len 10 "
              "--max-len 10 --difficulty-skew 0.5 --seed 4 --out " + ws.p("sim.csv")) == 0);
  REQUIRE(run("bias-split --data " + ws.p("sim.csv") + " --out-prefix " + ws.p("bins")) == 0);
  for (const char* name : {"bins_low.csv", "bins_medium.csv", "bins_high.csv",
                           "bins_manifest.json"})
    CHECK(fs::exists(ws.p(name)));
  json manifest = json::parse(slurp(ws.p("bins_manifest.json")));
  CHECK(manifest.at("bins").size() == 40);
}

TEST_CASE("cli gradcheck passes and reports per-tensor errors") {
  Workspace ws;
  REQUIRE(run("gradcheck", ws.p("gc.txt")) == 0);
  std::string out = slurp(ws.p("gc.txt"));
  CHECK(out.find("gradient check PASSED") != std::string::npos);
  CHECK(out.find("tables.concept") != std::string::npos);
  CHECK(out.find("head.w1") != std::string::npos);
}

TEST_CASE("cli exit codes distinguish usage and runtime failures") {
  Workspace ws;
  CHECK(run("train --no-such-flag") == 2);
  CHECK(run("nonsense-command") == 2);
  CHECK(run("train --data " + ws.p("missing.csv")) == 1);
  CHECK(run("audit --dump " + ws.p("nope.csv") + " --difficulty " + ws.p("nope.json")) == 1);
  CHECK(run("--help") == 0);
  CHECK(run("train --help") == 0);
}

TEST_CASE("cli train accepts a flat config file with flag precedence") {
  Workspace ws;
  REQUIRE(run("simulate --students 20 --questions 15 --concepts 4 --min-len 8 "
              "--max-len 12 --seed 6 --out " + ws.p("sim.csv")) == 0);
  {
    std::ofstream cfg(ws.p("train.cfg"));
    cfg << "dim=8\nnum_layers=1\nnum_heads=2\nbatch_size=8\nmax_epochs=2\nseed=21\n";
  }
  REQUIRE(run("train --data " + ws.p("sim.csv") + " --config " + ws.p("train.cfg") +
              " --checkpoint " + ws.p("ck.json"), ws.p("out.txt")) == 0);
  json ck = json::parse(slurp(ws.p("ck.json")));
  CHECK(ck.at("config").at("dim") == 8);
  CHECK(ck.at("config").at("seed") == 21);
  CHECK(ck.at("config").at("max_epochs") == 2);

  // a command-line flag overrides the config file
  REQUIRE(run("train --data " + ws.p("sim.csv") + " --config " + ws.p("train.cfg") +
              " --dim 4 --checkpoint " + ws.p("ck4.json"), ws.p("out4.txt")) == 0);
  json ck4 = json::parse(slurp(ws.p("ck4.json")));
  CHECK(ck4.at("config").at("dim") == 4);
}

TEST_CASE("cli train works against an explicit validation file and vocab override") {
  Workspace ws;
  REQUIRE(run("simulate --students 30 --questions 25 --concepts 6 --min-len 10 "
              "--max-len 14 --difficulty-skew 0.8 --guess 0.15 --seed 8 --out " +
              ws.p("sim.csv")) == 0);
  REQUIRE(run("bias-split --data " + ws.p("sim.csv") + " --out-prefix " + ws.p("bins")) == 0);
  // bins share the parent vocabulary via explicit overrides
  CHECK(run("train --data " + ws.p("bins_high.csv") + " --val-data " + ws.p("bins_low.csv") +
            " --num-questions 25 --num-concepts 6 --dim 8 --layers 1 --batch-size 8 "
            "--max-epochs 2 --seed 13 --checkpoint " + ws.p("ck.json"),
            ws.p("train.txt")) == 0);
  json ck = json::parse(slurp(ws.p("ck.json")));
  CHECK(ck.at("config").at("num_questions") == 25);
}
