#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <vector>

#include "diskt/errors.hpp"
#include "diskt/metrics.hpp"
#include "diskt/rng.hpp"

using namespace diskt;

namespace {

double brute_force_auc(const PredictionDump& dump) {
  double num = 0.0;
  long long pairs = 0;
  for (const auto& a : dump) {
    if (a.response != 1) continue;
    for (const auto& b : dump) {
      if (b.response != 0) continue;
      ++pairs;
      if (a.score > b.score)
        num += 1.0;
      else if (a.score == b.score)
        num += 0.5;
    }
  }
  return num / static_cast<double>(pairs);
}

// From-scratch re-derivation of the calibration divergence straight from the
// rows, structured differently from the library implementation.
double rederive_ekl(const PredictionDump& dump, double eps = 1e-9) {
  std::unordered_map<int, std::vector<const DumpRow*>> buckets;
  for (const auto& r : dump)
    if ((r.score < 0.5 ? 1 : 0) == r.response) buckets[r.concept_id].push_back(&r);
  if (buckets.empty()) return 0.0;
  std::vector<int> concepts;
  for (const auto& [c, rows] : buckets) concepts.push_back(c);
  std::sort(concepts.begin(), concepts.end());
  std::vector<double> p, q;
  for (int c : concepts) {
    const auto& rows = buckets[c];
    double correct = 0.0, score = 0.0;
    for (const DumpRow* r : rows) {
      correct += r->response;
      score += r->score;
    }
    p.push_back(correct / rows.size());
    q.push_back(score / rows.size() + eps);
  }
  double ps = 0.0, qs = 0.0;
  for (double v : p) ps += v;
  for (double v : q) qs += v;
  if (ps <= 0.0) return 0.0;
  double kl = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    double pn = p[i] / ps;
    if (pn > 0.0) kl += pn * std::log(pn / (q[i] / qs));
  }
  return kl;
}

PredictionDump random_dump(uint64_t seed, int rows, int concepts = 6) {
  RngStream rng(seed);
  PredictionDump dump;
  for (int i = 0; i < rows; ++i) {
    DumpRow r;
    r.student_id = "s" + std::to_string(rng.uniform_int(0, 9));
    r.position = i + 1;
    r.concept_id = rng.uniform_int(1, concepts);
    r.response = rng.uniform() < 0.55 ? 1 : 0;
    // quantized scores produce plenty of exact ties
    r.score = 0.05 + 0.9 * (rng.uniform_int(0, 19) / 19.0);
    if (r.score <= 0.0) r.score = 0.01;
    if (r.score >= 1.0) r.score = 0.99;
    dump.push_back(std::move(r));
  }
  return dump;
}

DifficultyTable table_with(std::vector<double> diffs) {
  DifficultyTable t;
  t.diff.assign(diffs.size() + 1, 0.5);
  t.support.assign(diffs.size() + 1, 1);
  for (size_t i = 0; i < diffs.size(); ++i) t.diff[i + 1] = diffs[i];
  return t;
}

}  // namespace

TEST_CASE("auc anchors: perfect ranking and all-tied scores") {
  PredictionDump perfect = {{"a", 1, 1, 1, 0.9}, {"a", 2, 1, 0, 0.1}};
  CHECK(*auc(perfect) == 1.0);
  PredictionDump tied = {{"a", 1, 1, 1, 0.4}, {"a", 2, 1, 0, 0.4}, {"a", 3, 1, 1, 0.4}};
  CHECK(*auc(tied) == 0.5);
}

TEST_CASE("auc equals brute-force pair counting exactly") {
  for (uint64_t seed = 1; seed <= 30; ++seed) {
    PredictionDump dump = random_dump(seed, 50 + static_cast<int>(seed) * 3);
    auto fast = auc(dump);
    REQUIRE(fast.has_value());
    CHECK(*fast == brute_force_auc(dump));  // bitwise, no tolerance
  }
}

TEST_CASE("single-class dumps have no auc") {
  PredictionDump ones = {{"a", 1, 1, 1, 0.9}, {"a", 2, 1, 1, 0.2}};
  CHECK(!auc(ones).has_value());
}

TEST_CASE("accuracy thresholds at one half, counting 0.5 as a positive call") {
  PredictionDump dump = {{"a", 1, 1, 1, 0.5},      // predicted 1, correct
                         {"a", 2, 1, 1, 0.4999},   // predicted 0, wrong
                         {"a", 3, 1, 0, 0.4999}};  // predicted 0, correct
  CHECK(acc(dump) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("rmse hand value and perfect fit") {
  PredictionDump dump = {{"a", 1, 1, 1, 0.6}, {"a", 2, 1, 1, 0.2}};
  CHECK(rmse(dump) == doctest::Approx(0.632456).epsilon(1e-6));
  PredictionDump exact = {{"a", 1, 1, 1, 0.999999999}, {"a", 2, 1, 0, 1e-9}};
  CHECK(rmse(exact) < 1e-8);
  CHECK(acc(exact) == 1.0);
}

TEST_CASE("matched actual and predicted tables give zero divergence") {
  // single concept: P and Q both normalize to the point mass
  PredictionDump dump = {{"a", 1, 1, 1, 0.3}, {"a", 2, 1, 0, 0.7}};
  EklResult r = e_kl(dump);
  CHECK(r.value == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("two-concept worked divergence value") {
  PredictionDump dump;
  // concept 1: three correct at 0.4, one incorrect at 0.8 -> p=0.75, q=0.5
  for (int i = 0; i < 3; ++i) dump.push_back({"a", i + 1, 1, 1, 0.4});
  dump.push_back({"a", 4, 1, 0, 0.8});
  // concept 2: one correct at 0.2, three incorrect at 0.6 -> p=0.25, q=0.5
  dump.push_back({"a", 5, 2, 1, 0.2});
  for (int i = 0; i < 3; ++i) dump.push_back({"a", 6 + i, 2, 0, 0.6});

  EklResult r = e_kl(dump);
  CHECK(r.p_table.at(1) == doctest::Approx(0.75));
  CHECK(r.p_table.at(2) == doctest::Approx(0.25));
  CHECK(r.q_table.at(1) == doctest::Approx(0.5));
  CHECK(r.q_table.at(2) == doctest::Approx(0.5));
  CHECK(r.value == doctest::Approx(0.130812).epsilon(1e-5));
  CHECK(std::abs(r.value - (0.75 * std::log(1.5) + 0.25 * std::log(0.5))) < 1e-6);
}

TEST_CASE("divergence matches an independent re-derivation") {
  for (uint64_t seed = 40; seed < 60; ++seed) {
    PredictionDump dump = random_dump(seed, 120);
    EklResult r = e_kl(dump);
    CHECK(r.value == doctest::Approx(rederive_ekl(dump)).epsilon(1e-9));
    CHECK(r.value >= -1e-12);  // KL form is non-negative
  }
}

TEST_CASE("an always-right model leaves empty support") {
  PredictionDump dump = {{"a", 1, 1, 1, 0.9}, {"a", 2, 1, 0, 0.1}};
  EklResult r = e_kl(dump);
  CHECK(r.empty_support);
  CHECK(r.value == 0.0);
}

TEST_CASE("the literal expression differs from the divergence form") {
  PredictionDump dump = random_dump(70, 100);
  double kl = e_kl(dump, false).value;
  double literal = e_kl(dump, true).value;
  CHECK(kl != literal);
}

TEST_CASE("an inverted model concentrates mispredictions everywhere") {
  // score = 1 - response (clamped inside (0,1)): every row is mispredicted
  RngStream rng(80);
  PredictionDump dump;
  for (int i = 0; i < 60; ++i) {
    int response = rng.uniform() < 0.5;
    dump.push_back({"s", i + 1, rng.uniform_int(1, 3), response,
                    response == 1 ? 0.05 : 0.95});
  }
  EklResult r = e_kl(dump);
  CHECK(!r.empty_support);
  long long mis = 0;
  for (const auto& row : dump) mis += mispredicted(row);
  CHECK(mis == static_cast<long long>(dump.size()));
  CHECK(r.value == doctest::Approx(rederive_ekl(dump)).epsilon(1e-9));
}

TEST_CASE("guessing rate of one when every hard misprediction was correct") {
  DifficultyTable diff = table_with({0.2, 0.9});
  PredictionDump dump = {{"a", 1, 1, 1, 0.2},  // hard concept, mispredicted, r=1
                         {"a", 2, 1, 1, 0.3},
                         {"a", 3, 2, 1, 0.9}};  // easy, predicted right
  RatesResult r = contradiction_rates(dump, diff);
  CHECK(*r.guessing_rate == 1.0);
  CHECK(!r.mistaking_rate.has_value());  // no easy-concept mispredictions
}

TEST_CASE("hand-built dump gives a two-thirds guessing rate") {
  DifficultyTable diff = table_with({0.25, 0.5, 0.8});
  PredictionDump dump;
  // three hard-concept mispredictions, two of them correct responses
  dump.push_back({"a", 1, 1, 1, 0.3});
  dump.push_back({"a", 2, 1, 1, 0.4});
  dump.push_back({"a", 3, 1, 0, 0.6});
  // the rest of the ten rows are predicted correctly or on other concepts
  dump.push_back({"a", 4, 1, 1, 0.7});
  dump.push_back({"a", 5, 2, 0, 0.2});
  dump.push_back({"a", 6, 2, 1, 0.8});
  dump.push_back({"a", 7, 3, 1, 0.9});
  dump.push_back({"a", 8, 3, 0, 0.1});
  dump.push_back({"a", 9, 2, 1, 0.6});
  dump.push_back({"a", 10, 3, 1, 0.55});
  RatesResult r = contradiction_rates(dump, diff);
  CHECK(*r.guessing_rate == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("flipping a hard-concept row to correct never lowers the guessing rate") {
  DifficultyTable diff = table_with({0.1, 0.3, 0.6, 0.9});
  for (uint64_t seed = 90; seed < 100; ++seed) {
    PredictionDump dump = random_dump(seed, 80, 4);
    RatesResult before = contradiction_rates(dump, diff);
    // flip the first hard-concept incorrect row
    for (auto& row : dump) {
      if (diff.value(row.concept_id) <= 0.3 && row.response == 0) {
        row.response = 1;
        break;
      }
    }
    RatesResult after = contradiction_rates(dump, diff);
    double b = before.guessing_rate.value_or(0.0);
    double a = after.guessing_rate.value_or(b);
    CHECK(a >= b);
  }
}

TEST_CASE("widened denominators count every row in the difficulty band") {
  DifficultyTable diff = table_with({0.2});
  PredictionDump dump = {{"a", 1, 1, 1, 0.3},   // mispredicted, r=1
                         {"a", 2, 1, 1, 0.8},   // predicted right
                         {"a", 3, 1, 0, 0.2}};  // predicted right
  RatesResult strict = contradiction_rates(dump, diff);
  CHECK(*strict.guessing_rate == 1.0);
  CHECK(strict.hard_rows == 1);
  RatesResult wide = contradiction_rates(dump, diff, 0.3, 0.7, /*all_rows=*/true);
  CHECK(wide.hard_rows == 3);
  CHECK(*wide.guessing_rate == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("report bundles every metric and is permutation invariant") {
  DifficultyTable diff = table_with({0.2, 0.5, 0.8});
  PredictionDump dump = random_dump(101, 90, 3);
  MetricsReport a = report(dump, diff);
  RngStream rng(5);
  rng.shuffle(dump);
  MetricsReport b = report(dump, diff);
  CHECK(a.auc_value == b.auc_value);
  CHECK(a.acc_value == b.acc_value);
  CHECK(a.rmse_value == doctest::Approx(b.rmse_value).epsilon(1e-12));
  CHECK(a.e_kl_value == doctest::Approx(b.e_kl_value).epsilon(1e-12));
  CHECK(a.guessing_rate.value_or(-1) == b.guessing_rate.value_or(-1));
  CHECK(a.mistaking_rate.value_or(-1) == b.mistaking_rate.value_or(-1));

  std::string json_text = report_to_json(a);
  for (const char* key : {"auc", "acc", "rmse", "e_kl", "p_table", "q_table",
                          "guessing_rate", "mistaking_rate"})
    CHECK(json_text.find(key) != std::string::npos);
}

TEST_CASE("report rejects a dump outside the difficulty vocabulary") {
  DifficultyTable diff = table_with({0.5});
  PredictionDump dump = {{"a", 1, 7, 1, 0.5}};
  CHECK_THROWS_AS(report(dump, diff), ValidationError);
}

TEST_CASE("dump files round trip and validate their domains") {
  PredictionDump dump = random_dump(111, 40);
  std::string path = "/tmp/diskt_test_dump.csv";
  write_dump(dump, path);
  PredictionDump back = read_dump(path);
  REQUIRE(back.size() == dump.size());
  for (size_t i = 0; i < dump.size(); ++i) {
    CHECK(back[i].student_id == dump[i].student_id);
    CHECK(back[i].score == dump[i].score);
    CHECK(back[i].response == dump[i].response);
  }

  std::ofstream bad("/tmp/diskt_test_dump_bad.csv");
  bad << "student_id,position,concept_id,response,score\na,1,1,2,0.5\n";
  bad.close();
  CHECK_THROWS_AS(read_dump("/tmp/diskt_test_dump_bad.csv"), ValidationError);
}
