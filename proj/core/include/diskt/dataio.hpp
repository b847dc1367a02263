#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "diskt/rng.hpp"

namespace diskt {

// One graded event. Raw rows may tag a question with several concepts;
// preprocessing replaces every distinct combination by a single merged id,
// so downstream code can rely on concept() being well defined.
struct Interaction {
  int question_id = 0;
  std::vector<int> concept_ids;  // sorted, unique; exactly one after preprocess
  int response = 0;              // 0 incorrect, 1 correct
  long long timestamp = 0;

  int concept_id() const;
};

struct StudentSequence {
  std::string student_id;
  std::vector<Interaction> interactions;  // time-ordered after preprocess
};

// Index 0 of both vocabularies is reserved as the mask/pad token; real ids
// run 1..num_questions and 1..num_concepts once preprocessed.
struct Dataset {
  std::vector<StudentSequence> sequences;
  int num_questions = 0;
  int num_concepts = 0;
  std::map<std::vector<int>, int> concept_map;  // original set -> merged id

  size_t total_interactions() const;
};

// Per-concept correct rate measured on a training split only. Concepts with
// no training support fall back to a neutral 0.5.
struct DifficultyTable {
  std::vector<double> diff;        // size num_concepts+1, index 0 unused
  std::vector<long long> support;  // same indexing
  double fallback = 0.5;

  double value(int concept_id) const;
  int num_concepts() const { return static_cast<int>(diff.size()) - 1; }
};

struct FoldSplit {
  int k = 5;
  double validation_fraction = 0.10;
  uint64_t seed = 0;
  std::unordered_map<std::string, int> fold_of;
  // validation[f] = students held out of fold f's training set
  std::vector<std::vector<std::string>> validation;
};

struct SplitDatasets {
  Dataset train, validation, test;
};

// Students binned by overall correct rate: low < 0.60, medium in
// [0.60, 0.80), high >= 0.80. Bins share the parent vocabularies.
struct BiasPartition {
  Dataset low, medium, high;
  std::unordered_map<std::string, std::string> bin_of;
};

Dataset parse_csv(const std::string& path);
Dataset parse_csv_text(const std::string& text, const std::string& origin = "<memory>");
void write_csv(const Dataset& data, const std::string& path);

Dataset preprocess(const Dataset& raw, int window = 100, int min_len = 5);
// Merge-stage mapping on its own, before compaction: singleton sets keep
// their id, multi-sets get fresh ids above the largest singleton id in
// first-seen order. Exposed so the assignment rule is testable directly.
std::map<std::vector<int>, int> assign_merged_ids(const Dataset& data);

DifficultyTable compute_difficulty(const Dataset& train);
void write_difficulty(const DifficultyTable& table, const std::string& path);
DifficultyTable read_difficulty(const std::string& path);

FoldSplit kfold_split(const Dataset& data, int k = 5, double val_frac = 0.10,
                      uint64_t seed = 0);
SplitDatasets split_by_fold(const Dataset& data, const FoldSplit& split, int fold);
void write_fold_manifest(const FoldSplit& split, const std::string& path);
FoldSplit read_fold_manifest(const std::string& path);

BiasPartition bias_partition(const Dataset& data);
void write_bias_manifest(const BiasPartition& part, const std::string& path);

// Synthetic corpus: ability theta ~ N(0,1) per student, concept-clustered
// question difficulties shifted by -difficulty_skew (positive skew = easier
// corpus), and response channels for guessing and slipping:
//   P(correct) = guess + (1 - guess - slip) * sigmoid(theta - b).
struct SimConfig {
  int num_students = 100;
  int num_questions = 50;
  int num_concepts = 10;
  double guess = 0.0;
  double slip = 0.0;
  double difficulty_skew = 0.0;
  int min_len = 50;
  int max_len = 50;
  uint64_t seed = 0;
};

struct SimInteractionTruth {
  bool guess_flag = false;
  bool slip_flag = false;
};

struct SimTruth {
  std::vector<double> theta;                 // by student index
  std::vector<double> question_difficulty;   // index 1..num_questions
  std::vector<int> question_concept;         // index 1..num_questions
  std::vector<std::vector<SimInteractionTruth>> flags;  // parallel to sequences
};

std::pair<Dataset, SimTruth> simulate(const SimConfig& cfg);
void write_sidecar(const Dataset& data, const SimTruth& truth, const std::string& path);

double correct_probability(double theta, double b, double guess, double slip);
struct SampledResponse {
  int response;
  bool guess_flag;
  bool slip_flag;
};
SampledResponse sample_response(RngStream& rng, double theta, double b,
                                double guess, double slip);

}  // namespace diskt
