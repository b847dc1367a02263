#include "diskt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "diskt/errors.hpp"

namespace diskt {

using nlohmann::json;

void write_dump(const PredictionDump& dump, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << "student_id,position,concept_id,response,score\n";
  out.precision(17);
  for (const auto& row : dump)
    out << row.student_id << ',' << row.position << ',' << row.concept_id << ','
        << row.response << ',' << row.score << '\n';
}

PredictionDump read_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  PredictionDump dump;
  std::string line;
  size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (!header_seen) {
      header_seen = true;
      if (line.rfind("student_id,", 0) != 0)
        throw ParseError(path + ": expected dump header on line " + std::to_string(line_no));
      continue;
    }
    std::istringstream row(line);
    DumpRow r;
    std::string cell;
    try {
      std::getline(row, r.student_id, ',');
      std::getline(row, cell, ',');
      r.position = std::stoi(cell);
      std::getline(row, cell, ',');
      r.concept_id = std::stoi(cell);
      std::getline(row, cell, ',');
      r.response = std::stoi(cell);
      std::getline(row, cell, ',');
      r.score = std::stod(cell);
    } catch (const std::exception&) {
      throw ParseError(path + ": malformed row on line " + std::to_string(line_no));
    }
    if (r.response != 0 && r.response != 1)
      throw ValidationError(path + ": response outside {0,1} on line " +
                            std::to_string(line_no));
    if (!(r.score > 0.0 && r.score < 1.0))
      throw ValidationError(path + ": score outside (0,1) on line " +
                            std::to_string(line_no));
    dump.push_back(std::move(r));
  }
  return dump;
}

std::optional<double> auc(const PredictionDump& dump) {
  long long positives = 0, negatives = 0;
  for (const auto& r : dump) (r.response == 1 ? positives : negatives)++;
  if (positives == 0 || negatives == 0) return std::nullopt;

  std::vector<const DumpRow*> rows;
  rows.reserve(dump.size());
  for (const auto& r : dump) rows.push_back(&r);
  std::sort(rows.begin(), rows.end(),
            [](const DumpRow* a, const DumpRow* b) { return a->score < b->score; });

  // average ranks across tie groups; rank sums stay half-integers, so this
  // matches brute-force pair counting exactly
  double pos_rank_sum = 0.0;
  size_t i = 0;
  while (i < rows.size()) {
    size_t j = i;
    while (j < rows.size() && rows[j]->score == rows[i]->score) ++j;
    double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k)
      if (rows[k]->response == 1) pos_rank_sum += avg_rank;
    i = j;
  }
  double p = static_cast<double>(positives);
  double n = static_cast<double>(negatives);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double acc(const PredictionDump& dump, double threshold) {
  if (dump.empty()) return 0.0;
  long long hits = 0;
  for (const auto& r : dump)
    if ((r.score >= threshold ? 1 : 0) == r.response) ++hits;
  return static_cast<double>(hits) / static_cast<double>(dump.size());
}

double rmse(const PredictionDump& dump) {
  if (dump.empty()) return 0.0;
  double sq = 0.0;
  for (const auto& r : dump) {
    double d = r.score - static_cast<double>(r.response);
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(dump.size()));
}

bool mispredicted(const DumpRow& row) {
  return (row.score < 0.5 ? 1 : 0) == row.response;
}

EklResult e_kl(const PredictionDump& dump, bool literal_form, double epsilon) {
  struct Cell {
    long long count = 0;
    long long correct = 0;
    double score_sum = 0.0;
  };
  std::map<int, Cell> cells;
  for (const auto& r : dump) {
    if (!mispredicted(r)) continue;
    Cell& c = cells[r.concept_id];
    c.count += 1;
    c.correct += r.response;
    c.score_sum += r.score;
  }

  EklResult result;
  if (cells.empty()) {
    result.empty_support = true;
    return result;
  }

  double p_sum = 0.0, q_sum = 0.0;
  for (const auto& [cid, cell] : cells) {
    double p = static_cast<double>(cell.correct) / static_cast<double>(cell.count);
    double q = cell.score_sum / static_cast<double>(cell.count);
    result.p_table[cid] = p;
    result.q_table[cid] = q;
    p_sum += p;
    q_sum += q + epsilon;
  }

  if (p_sum <= 0.0) return result;  // P is the zero measure; divergence is 0

  double total = 0.0;
  for (const auto& [cid, cell] : cells) {
    double pn = result.p_table.at(cid) / p_sum;
    if (pn <= 0.0) continue;
    double qn = (result.q_table.at(cid) + epsilon) / q_sum;
    total += literal_form ? pn * std::log(pn) / qn : pn * std::log(pn / qn);
  }
  result.value = total;
  return result;
}

RatesResult contradiction_rates(const PredictionDump& dump, const DifficultyTable& diff,
                                double hard_cut, double easy_cut, bool all_rows) {
  long long hard_total = 0, hard_correct = 0;
  long long easy_total = 0, easy_wrong = 0;
  for (const auto& r : dump) {
    bool miss = mispredicted(r);
    double d = diff.value(r.concept_id);
    if (d <= hard_cut && (all_rows || miss)) {
      hard_total += 1;
      if (miss && r.response == 1) hard_correct += 1;
    }
    if (d >= easy_cut && (all_rows || miss)) {
      easy_total += 1;
      if (miss && r.response == 0) easy_wrong += 1;
    }
  }
  RatesResult result;
  result.hard_rows = hard_total;
  result.easy_rows = easy_total;
  if (hard_total > 0)
    result.guessing_rate = static_cast<double>(hard_correct) / static_cast<double>(hard_total);
  if (easy_total > 0)
    result.mistaking_rate = static_cast<double>(easy_wrong) / static_cast<double>(easy_total);
  return result;
}

MetricsReport report(const PredictionDump& dump, const DifficultyTable& diff,
                     bool literal_ekl, bool all_rows) {
  for (const auto& r : dump) {
    if (r.concept_id < 1 || r.concept_id > diff.num_concepts())
      throw ValidationError("dump concept " + std::to_string(r.concept_id) +
                            " outside difficulty vocabulary of " +
                            std::to_string(diff.num_concepts()) + " concepts");
  }

  MetricsReport rep;
  rep.rows = static_cast<long long>(dump.size());
  rep.auc_value = auc(dump);
  rep.acc_value = acc(dump);
  rep.rmse_value = rmse(dump);

  EklResult ekl = e_kl(dump, literal_ekl);
  rep.e_kl_value = ekl.value;
  rep.e_kl_empty_support = ekl.empty_support;
  rep.p_table = std::move(ekl.p_table);
  rep.q_table = std::move(ekl.q_table);

  for (const auto& r : dump)
    if (mispredicted(r)) ++rep.mispredicted_rows;

  RatesResult rates = contradiction_rates(dump, diff, 0.3, 0.7, all_rows);
  rep.guessing_rate = rates.guessing_rate;
  rep.mistaking_rate = rates.mistaking_rate;
  rep.hard_rows = rates.hard_rows;
  rep.easy_rows = rates.easy_rows;
  rep.literal_ekl = literal_ekl;
  rep.all_rows = all_rows;
  return rep;
}

std::string report_to_json(const MetricsReport& r) {
  json j;
  j["auc"] = r.auc_value ? json(*r.auc_value) : json(nullptr);
  j["acc"] = r.acc_value;
  j["rmse"] = r.rmse_value;
  j["e_kl"] = r.e_kl_value;
  j["e_kl_empty_support"] = r.e_kl_empty_support;
  json p = json::object(), q = json::object();
  for (const auto& [c, v] : r.p_table) p[std::to_string(c)] = v;
  for (const auto& [c, v] : r.q_table) q[std::to_string(c)] = v;
  j["p_table"] = p;
  j["q_table"] = q;
  j["guessing_rate"] = r.guessing_rate ? json(*r.guessing_rate) : json(nullptr);
  j["mistaking_rate"] = r.mistaking_rate ? json(*r.mistaking_rate) : json(nullptr);
  j["counts"] = {{"rows", r.rows},
                 {"mispredicted", r.mispredicted_rows},
                 {"hard_rows", r.hard_rows},
                 {"easy_rows", r.easy_rows}};
  j["literal_ekl"] = r.literal_ekl;
  j["all_rows"] = r.all_rows;
  return j.dump(2);
}

void write_report(const MetricsReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << report_to_json(r) << '\n';
}

}  // namespace diskt
