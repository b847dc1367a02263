#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "diskt/dataio.hpp"

namespace diskt {

struct DumpRow {
  std::string student_id;
  int position = 0;  // 1-based within the student's sequence
  int concept_id = 0;
  int response = 0;
  double score = 0.5;  // model probability, strictly inside (0,1)
};

using PredictionDump = std::vector<DumpRow>;

void write_dump(const PredictionDump& dump, const std::string& path);
PredictionDump read_dump(const std::string& path);

// Probability that a random positive outranks a random negative, ties worth
// half. Absent when the dump is single-class.
std::optional<double> auc(const PredictionDump& dump);
double acc(const PredictionDump& dump, double threshold = 0.5);
double rmse(const PredictionDump& dump);

// A row is mispredicted when (score < 0.5) == response: the thresholded
// prediction disagrees with the outcome. All bias diagnostics run on these
// rows by default.
bool mispredicted(const DumpRow& row);

struct EklResult {
  double value = 0.0;
  bool empty_support = false;          // no mispredicted rows at all
  std::map<int, double> p_table;       // concept -> actual correct rate
  std::map<int, double> q_table;       // concept -> mean predicted score
};

// Divergence between the actual and predicted per-concept correct-rate
// distributions over mispredicted rows. The default is KL(P || Q) after
// normalizing both tables; literal_form instead evaluates
// sum P * log(P) / Q, the same expression without the log quotient.
EklResult e_kl(const PredictionDump& dump, bool literal_form = false,
               double epsilon = 1e-9);

struct RatesResult {
  std::optional<double> guessing_rate;   // absent when no hard-concept rows
  std::optional<double> mistaking_rate;  // absent when no easy-concept rows
  long long hard_rows = 0;
  long long easy_rows = 0;
};

// Guessing: fraction of mispredicted hard-concept rows (train diff <= hard_cut)
// answered correctly. Mistaking: fraction of mispredicted easy-concept rows
// (diff >= easy_cut) answered incorrectly. all_rows widens the denominators to
// every row in the difficulty band, keeping the mispredicted numerators.
RatesResult contradiction_rates(const PredictionDump& dump, const DifficultyTable& diff,
                                double hard_cut = 0.3, double easy_cut = 0.7,
                                bool all_rows = false);

struct MetricsReport {
  std::optional<double> auc_value;
  double acc_value = 0.0;
  double rmse_value = 0.0;
  double e_kl_value = 0.0;
  bool e_kl_empty_support = false;
  std::map<int, double> p_table, q_table;
  std::optional<double> guessing_rate, mistaking_rate;
  long long rows = 0;
  long long mispredicted_rows = 0;
  long long hard_rows = 0;
  long long easy_rows = 0;
  bool literal_ekl = false;
  bool all_rows = false;
};

// Validates that every concept in the dump fits the difficulty vocabulary.
MetricsReport report(const PredictionDump& dump, const DifficultyTable& diff,
                     bool literal_ekl = false, bool all_rows = false);
std::string report_to_json(const MetricsReport& r);
void write_report(const MetricsReport& r, const std::string& path);

}  // namespace diskt
