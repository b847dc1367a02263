#include "diskt/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "diskt/errors.hpp"

namespace diskt {

using nlohmann::json;

int Interaction::concept_id() const {
  if (concept_ids.size() != 1)
    throw std::logic_error("interaction has " + std::to_string(concept_ids.size()) +
                           " concepts; preprocess first");
  return concept_ids[0];
}

size_t Dataset::total_interactions() const {
  size_t n = 0;
  for (const auto& s : sequences) n += s.interactions.size();
  return n;
}

double DifficultyTable::value(int concept_id) const {
  if (concept_id <= 0 || concept_id >= static_cast<int>(diff.size())) return fallback;
  if (support[concept_id] == 0) return fallback;
  return diff[concept_id];
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& text, const std::string& field, size_t line_no) {
  std::string t = strip(text);
  if (t.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty " + field);
  size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(t, &pos);
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": bad " + field + " '" + t + "'");
  }
  if (pos != t.size())
    throw ParseError("line " + std::to_string(line_no) + ": bad " + field + " '" + t + "'");
  return v;
}

}  // namespace

Dataset parse_csv_text(const std::string& text, const std::string& origin) {
  Dataset data;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;

  // header
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!strip(line).empty()) {
      header = split(strip(line), ',');
      break;
    }
  }
  if (header.empty()) return data;  // empty file: empty dataset

  const std::vector<std::string> wanted = {"student_id", "question_id", "concept_ids",
                                           "response", "timestamp"};
  std::vector<int> col(wanted.size(), -1);
  for (size_t i = 0; i < header.size(); ++i) {
    std::string name = strip(header[i]);
    for (size_t w = 0; w < wanted.size(); ++w)
      if (name == wanted[w]) col[w] = static_cast<int>(i);
  }
  for (size_t w = 0; w < wanted.size(); ++w)
    if (col[w] < 0)
      throw ParseError(origin + ": header is missing column '" + wanted[w] + "'");

  std::unordered_map<std::string, size_t> seq_of;
  int max_q = 0, max_c = 0;

  while (std::getline(in, line)) {
    ++line_no;
    std::string stripped = strip(line);
    if (stripped.empty()) continue;
    std::vector<std::string> cells = split(stripped, ',');
    if (cells.size() < header.size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " columns, got " +
                       std::to_string(cells.size()));

    Interaction it;
    std::string sid = strip(cells[col[0]]);
    if (sid.empty())
      throw ParseError("line " + std::to_string(line_no) + ": empty student_id");

    long long q = parse_int(cells[col[1]], "question_id", line_no);
    if (q < 0)
      throw ValidationError("line " + std::to_string(line_no) + ": negative question_id");
    it.question_id = static_cast<int>(q);

    std::set<int> cs;
    for (const std::string& part : split(strip(cells[col[2]]), ';')) {
      long long c = parse_int(part, "concept id", line_no);
      if (c < 0)
        throw ValidationError("line " + std::to_string(line_no) + ": negative concept id");
      cs.insert(static_cast<int>(c));
    }
    it.concept_ids.assign(cs.begin(), cs.end());

    long long r = parse_int(cells[col[3]], "response", line_no);
    if (r != 0 && r != 1)
      throw ValidationError("line " + std::to_string(line_no) + ": response " +
                            std::to_string(r) + " outside {0,1}");
    it.response = static_cast<int>(r);
    it.timestamp = parse_int(cells[col[4]], "timestamp", line_no);

    auto [iter, fresh] = seq_of.try_emplace(sid, data.sequences.size());
    if (fresh) data.sequences.push_back({sid, {}});
    data.sequences[iter->second].interactions.push_back(std::move(it));

    max_q = std::max(max_q, data.sequences[iter->second].interactions.back().question_id);
    for (int c : data.sequences[iter->second].interactions.back().concept_ids)
      max_c = std::max(max_c, c);
  }

  data.num_questions = max_q;
  data.num_concepts = max_c;
  return data;
}

Dataset parse_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv_text(buf.str(), path);
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << "student_id,question_id,concept_ids,response,timestamp\n";
  for (const auto& seq : data.sequences) {
    for (const auto& it : seq.interactions) {
      out << seq.student_id << ',' << it.question_id << ',';
      for (size_t i = 0; i < it.concept_ids.size(); ++i) {
        if (i) out << ';';
        out << it.concept_ids[i];
      }
      out << ',' << it.response << ',' << it.timestamp << '\n';
    }
  }
}

std::map<std::vector<int>, int> assign_merged_ids(const Dataset& data) {
  // Singleton sets keep their id; distinct multi-sets get fresh ids above the
  // largest singleton id, in first-seen order.
  int max_single = 0;
  for (const auto& seq : data.sequences)
    for (const auto& it : seq.interactions)
      if (it.concept_ids.size() == 1) max_single = std::max(max_single, it.concept_ids[0]);

  std::map<std::vector<int>, int> merged;
  int next = max_single + 1;
  for (const auto& seq : data.sequences) {
    for (const auto& it : seq.interactions) {
      if (merged.count(it.concept_ids)) continue;
      if (it.concept_ids.size() == 1)
        merged[it.concept_ids] = it.concept_ids[0];
      else
        merged[it.concept_ids] = next++;
    }
  }
  return merged;
}

Dataset preprocess(const Dataset& raw, int window, int min_len) {
  Dataset filtered;
  for (const auto& seq : raw.sequences) {
    if (static_cast<int>(seq.interactions.size()) < min_len) continue;
    StudentSequence s = seq;
    std::stable_sort(s.interactions.begin(), s.interactions.end(),
                     [](const Interaction& a, const Interaction& b) {
                       return a.timestamp < b.timestamp;
                     });
    filtered.sequences.push_back(std::move(s));
  }

  auto merged = assign_merged_ids(filtered);

  // merge, truncate to the most recent `window`, then compact ids to 1..n in
  // first-seen order
  for (auto& seq : filtered.sequences) {
    for (auto& it : seq.interactions) it.concept_ids = {merged.at(it.concept_ids)};
    if (static_cast<int>(seq.interactions.size()) > window)
      seq.interactions.erase(seq.interactions.begin(),
                             seq.interactions.end() - window);
  }

  std::unordered_map<int, int> q_new, c_new;
  for (auto& seq : filtered.sequences) {
    for (auto& it : seq.interactions) {
      auto [qi, qf] = q_new.try_emplace(it.question_id, static_cast<int>(q_new.size()) + 1);
      it.question_id = qi->second;
      (void)qf;
      auto [ci, cf] = c_new.try_emplace(it.concept_ids[0], static_cast<int>(c_new.size()) + 1);
      it.concept_ids[0] = ci->second;
      (void)cf;
    }
  }

  filtered.num_questions = static_cast<int>(q_new.size());
  filtered.num_concepts = static_cast<int>(c_new.size());
  for (const auto& [set, mid] : merged) {
    auto survived = c_new.find(mid);
    if (survived != c_new.end()) filtered.concept_map[set] = survived->second;
  }
  return filtered;
}

DifficultyTable compute_difficulty(const Dataset& train) {
  DifficultyTable table;
  table.diff.assign(train.num_concepts + 1, table.fallback);
  table.support.assign(train.num_concepts + 1, 0);
  std::vector<long long> correct(train.num_concepts + 1, 0);
  for (const auto& seq : train.sequences) {
    for (const auto& it : seq.interactions) {
      int c = it.concept_id();
      table.support[c] += 1;
      correct[c] += it.response;
    }
  }
  for (int c = 1; c <= train.num_concepts; ++c)
    if (table.support[c] > 0)
      table.diff[c] = static_cast<double>(correct[c]) / static_cast<double>(table.support[c]);
  return table;
}

void write_difficulty(const DifficultyTable& table, const std::string& path) {
  json j;
  j["fallback"] = table.fallback;
  j["diff"] = table.diff;
  j["support"] = table.support;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

DifficultyTable read_difficulty(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  json j = json::parse(in);
  DifficultyTable table;
  table.fallback = j.at("fallback").get<double>();
  table.diff = j.at("diff").get<std::vector<double>>();
  table.support = j.at("support").get<std::vector<long long>>();
  if (table.diff.size() != table.support.size())
    throw ValidationError(path + ": diff/support size mismatch");
  return table;
}

FoldSplit kfold_split(const Dataset& data, int k, double val_frac, uint64_t seed) {
  const int n = static_cast<int>(data.sequences.size());
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  if (n < k)
    throw ConfigError("k-fold with k=" + std::to_string(k) + " needs at least " +
                      std::to_string(k) + " students, got " + std::to_string(n));

  std::vector<std::string> students;
  students.reserve(n);
  for (const auto& s : data.sequences) students.push_back(s.student_id);
  RngStream rng(mix_seed(seed, {0x666f6c64}));
  rng.shuffle(students);

  FoldSplit split;
  split.k = k;
  split.validation_fraction = val_frac;
  split.seed = seed;
  // balanced chunks: the first n%k folds take one extra student
  int base = n / k, extra = n % k, at = 0;
  for (int f = 0; f < k; ++f) {
    int size = base + (f < extra ? 1 : 0);
    for (int i = 0; i < size; ++i) split.fold_of[students[at + i]] = f;
    at += size;
  }

  split.validation.resize(k);
  for (int f = 0; f < k; ++f) {
    std::vector<std::string> rest;
    for (const auto& s : students)
      if (split.fold_of.at(s) != f) rest.push_back(s);
    RngStream vr(mix_seed(seed, {0x76616c, static_cast<uint64_t>(f)}));
    vr.shuffle(rest);
    int want = static_cast<int>(std::llround(val_frac * static_cast<double>(rest.size())));
    if (val_frac > 0.0) want = std::max(want, 1);
    want = std::min(want, static_cast<int>(rest.size()) - 1);
    split.validation[f].assign(rest.begin(), rest.begin() + std::max(want, 0));
    std::sort(split.validation[f].begin(), split.validation[f].end());
  }
  return split;
}

SplitDatasets split_by_fold(const Dataset& data, const FoldSplit& split, int fold) {
  if (fold < 0 || fold >= split.k)
    throw ConfigError("fold " + std::to_string(fold) + " out of range 0.." +
                      std::to_string(split.k - 1));
  SplitDatasets out;
  for (Dataset* d : {&out.train, &out.validation, &out.test}) {
    d->num_questions = data.num_questions;
    d->num_concepts = data.num_concepts;
    d->concept_map = data.concept_map;
  }
  const auto& val = split.validation[fold];
  for (const auto& seq : data.sequences) {
    auto f = split.fold_of.find(seq.student_id);
    if (f == split.fold_of.end())
      throw ValidationError("student '" + seq.student_id + "' missing from fold split");
    if (f->second == fold) {
      out.test.sequences.push_back(seq);
    } else if (std::binary_search(val.begin(), val.end(), seq.student_id)) {
      out.validation.sequences.push_back(seq);
    } else {
      out.train.sequences.push_back(seq);
    }
  }
  return out;
}

void write_fold_manifest(const FoldSplit& split, const std::string& path) {
  json j;
  j["k"] = split.k;
  j["seed"] = split.seed;
  j["validation_fraction"] = split.validation_fraction;
  json folds = json::object();
  for (const auto& [sid, f] : std::map<std::string, int>(split.fold_of.begin(),
                                                         split.fold_of.end()))
    folds[sid] = f;
  j["folds"] = folds;
  j["validation"] = split.validation;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

FoldSplit read_fold_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  json j = json::parse(in);
  FoldSplit split;
  split.k = j.at("k").get<int>();
  split.seed = j.at("seed").get<uint64_t>();
  split.validation_fraction = j.at("validation_fraction").get<double>();
  for (const auto& [sid, f] : j.at("folds").items())
    split.fold_of[sid] = f.get<int>();
  split.validation = j.at("validation").get<std::vector<std::vector<std::string>>>();
  return split;
}

BiasPartition bias_partition(const Dataset& data) {
  BiasPartition part;
  for (Dataset* d : {&part.low, &part.medium, &part.high}) {
    d->num_questions = data.num_questions;
    d->num_concepts = data.num_concepts;
    d->concept_map = data.concept_map;
  }
  for (const auto& seq : data.sequences) {
    long long correct = 0;
    for (const auto& it : seq.interactions) correct += it.response;
    double rate = seq.interactions.empty()
                      ? 0.0
                      : static_cast<double>(correct) / static_cast<double>(seq.interactions.size());
    if (rate < 0.60) {
      part.low.sequences.push_back(seq);
      part.bin_of[seq.student_id] = "low";
    } else if (rate < 0.80) {
      part.medium.sequences.push_back(seq);
      part.bin_of[seq.student_id] = "medium";
    } else {
      part.high.sequences.push_back(seq);
      part.bin_of[seq.student_id] = "high";
    }
  }
  return part;
}

void write_bias_manifest(const BiasPartition& part, const std::string& path) {
  json bins = json::object();
  for (const auto& [sid, bin] : std::map<std::string, std::string>(part.bin_of.begin(),
                                                                   part.bin_of.end()))
    bins[sid] = bin;
  json j;
  j["bins"] = bins;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

double correct_probability(double theta, double b, double guess, double slip) {
  double base = 1.0 / (1.0 + std::exp(-(theta - b)));
  return guess + (1.0 - guess - slip) * base;
}

SampledResponse sample_response(RngStream& rng, double theta, double b,
                                double guess, double slip) {
  double channel = rng.uniform();
  if (channel < guess) return {1, true, false};
  if (channel < guess + slip) return {0, false, true};
  double base = 1.0 / (1.0 + std::exp(-(theta - b)));
  return {rng.uniform() < base ? 1 : 0, false, false};
}

std::pair<Dataset, SimTruth> simulate(const SimConfig& cfg) {
  if (cfg.num_students <= 0 || cfg.num_questions <= 0 || cfg.num_concepts <= 0)
    throw ConfigError("simulate needs positive counts");
  if (cfg.guess < 0.0 || cfg.guess >= 1.0 || cfg.slip < 0.0 || cfg.slip >= 1.0)
    throw ConfigError("guess and slip must lie in [0,1)");
  if (cfg.guess + cfg.slip >= 1.0)
    throw ConfigError("guess + slip must be < 1");
  if (cfg.min_len < 1 || cfg.max_len < cfg.min_len)
    throw ConfigError("need 1 <= min_len <= max_len");

  RngStream rng(mix_seed(cfg.seed, {0x73696d}));
  Dataset data;
  data.num_questions = cfg.num_questions;
  data.num_concepts = cfg.num_concepts;
  SimTruth truth;
  truth.question_difficulty.assign(cfg.num_questions + 1, 0.0);
  truth.question_concept.assign(cfg.num_questions + 1, 0);

  // Question difficulties cluster around a per-concept level so training-set
  // correct rates genuinely differ across concepts.
  std::vector<double> concept_level(cfg.num_concepts + 1, 0.0);
  for (int c = 1; c <= cfg.num_concepts; ++c)
    concept_level[c] = -cfg.difficulty_skew + 1.5 * rng.normal();
  for (int q = 1; q <= cfg.num_questions; ++q) {
    int c = rng.uniform_int(1, cfg.num_concepts);
    truth.question_concept[q] = c;
    truth.question_difficulty[q] = concept_level[c] + 0.3 * rng.normal();
  }

  int width = static_cast<int>(std::to_string(cfg.num_students).size());
  for (int s = 0; s < cfg.num_students; ++s) {
    double theta = rng.normal();
    truth.theta.push_back(theta);
    int len = rng.uniform_int(cfg.min_len, cfg.max_len);

    StudentSequence seq;
    std::string num = std::to_string(s + 1);
    seq.student_id = "s" + std::string(width - std::min<int>(width, num.size()), '0') + num;
    std::vector<SimInteractionTruth> flags;
    for (int t = 1; t <= len; ++t) {
      int q = rng.uniform_int(1, cfg.num_questions);
      SampledResponse sr = sample_response(rng, theta, truth.question_difficulty[q],
                                           cfg.guess, cfg.slip);
      Interaction it;
      it.question_id = q;
      it.concept_ids = {truth.question_concept[q]};
      it.response = sr.response;
      it.timestamp = t;
      seq.interactions.push_back(std::move(it));
      flags.push_back({sr.guess_flag, sr.slip_flag});
    }
    data.sequences.push_back(std::move(seq));
    truth.flags.push_back(std::move(flags));
  }
  return {std::move(data), std::move(truth)};
}

void write_sidecar(const Dataset& data, const SimTruth& truth, const std::string& path) {
  json j;
  json theta = json::object();
  json flags = json::object();
  for (size_t s = 0; s < data.sequences.size(); ++s) {
    theta[data.sequences[s].student_id] = truth.theta[s];
    json fl = json::array();
    for (const auto& f : truth.flags[s])
      fl.push_back({{"guess_flag", f.guess_flag}, {"slip_flag", f.slip_flag}});
    flags[data.sequences[s].student_id] = fl;
  }
  j["theta"] = theta;
  j["question_difficulty"] = truth.question_difficulty;
  j["question_concept"] = truth.question_concept;
  j["flags"] = flags;
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace diskt
