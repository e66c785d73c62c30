#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lmke/types.hpp"

namespace lmke {

// query_id -> landmark label; -1 marks a distractor query.
struct GroundTruth {
  std::unordered_map<std::string, LandmarkLabel> labels;

  // CSV `query_id,landmark_id` with -1 or an empty field for distractors.
  static GroundTruth load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;
};

struct GapTraceRow {
  std::string query_id;
  LandmarkLabel landmark = kNonLandmark;
  double confidence = 0.0;
  bool correct = false;
  double precision_at_rank = 0.0;
};

// Micro average precision at k=1 over the pooled prediction list: rank all
// non-abstention predictions by confidence descending (ties by query_id
// ascending); GAP = (1/M) * sum_i P(i) * rel(i) with M the number of
// landmark queries in the truth. Abstentions contribute nothing.
double gap_at_1(std::span<const Prediction> predictions, const GroundTruth& truth,
                std::vector<GapTraceRow>* trace = nullptr);

// Per-query ranked retrieval list, by id.
struct RankedRetrieval {
  std::string query_id;
  std::vector<std::string> neighbor_ids;  // rank order, duplicate-free
};

using RelevantSets =
    std::unordered_map<std::string, std::unordered_set<std::string>>;

// Mean over queries of average precision truncated at rank 100:
// AP@100 = (1/min(R, 100)) * sum_{r<=100} P(r) * rel(r). Queries with an
// empty relevant set are excluded from the mean; num_skipped reports how
// many were.
double map_at_100(std::span<const RankedRetrieval> ranked, const RelevantSets& truth,
                  std::size_t* num_skipped = nullptr);

}  // namespace lmke
