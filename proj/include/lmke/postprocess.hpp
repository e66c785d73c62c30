#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lmke/knn.hpp"
#include "lmke/recognition.hpp"
#include "lmke/types.hpp"

namespace lmke {

enum class PenaltyMode { kSubtract, kZero };

struct PostprocessParams {
  double tau = 0.3;           // non-landmark similarity threshold, strict >
  std::size_t topk_nl = 3;    // neighbors consulted in the non-landmark set
  std::size_t cap = 20;       // frequency cap, strict >
  PenaltyMode penalty_mode = PenaltyMode::kSubtract;
  bool per_neighbor_max = false;  // use the max of the top-topk_nl sims
                                  // instead of their mean
};

void validate(const PostprocessParams& params);

// Rule 1: let s be the mean (or max) of the query's top-topk_nl similarities
// against the non-landmark set. If s > tau the confidence drops to
// max(0, confidence - s) in subtract mode or to 0 in zero mode. The
// predicted landmark id never changes.
std::vector<Prediction> nonlandmark_penalty(std::vector<Prediction> predictions,
                                            const DescriptorSet& queries,
                                            const DescriptorSet& nonlandmark_set,
                                            const PostprocessParams& params,
                                            const SearchOptions& opts = {});

// Same rule on precomputed non-landmark search results aligned with the
// prediction list.
std::vector<Prediction> nonlandmark_penalty_from_results(
    std::vector<Prediction> predictions, const SearchResults& nonlandmark_results,
    std::span<const std::string> query_ids, const PostprocessParams& params);

// Rule 2: any landmark predicted (top-1) strictly more than cap times has
// all its predictions shifted by -(1 + max confidence), demoting them below
// every unsuppressed prediction while keeping their relative order and
// landmark ids. Counting uses the top-1 labels only; rows already demoted
// (negative confidence) are left alone, which makes the rule idempotent.
std::vector<Prediction> frequency_suppression(std::vector<Prediction> predictions,
                                              std::size_t cap);

// Per-prediction inputs for the tree re-ranker, in serialization order.
struct RerankFeatures {
  double top1_sim = 0.0;
  double mean_top3_sim = 0.0;
  double top1_nonlandmark_sim = 0.0;
  double mean_top3_nonlandmark_sim = 0.0;
  double class_vote_count = 0.0;       // neighbors of the predicted class in top-k
  double class_test_frequency = 0.0;   // top-1 predictions of this landmark
  double classifier_prob = 0.0;        // 0 when absent

  static constexpr std::size_t kCount = 7;
  static const std::array<const char*, kCount>& field_names();
  std::array<double, kCount> as_array() const;
};

// One feature row per prediction. All inputs are aligned on query ids;
// a mismatch raises IntegrityError. Abstention rows still get a feature row
// (vote count 0, frequency 0).
std::vector<RerankFeatures> extract_rerank_features(
    std::span<const Prediction> predictions, const SearchResults& index_results,
    const SearchResults& nonlandmark_results,
    std::span<const std::string> query_ids,
    std::span<const LandmarkLabel> index_labels,
    const ClassifierProbs* probs = nullptr);

// CSV with header `query_id,<field names in order>`.
void write_features_csv(const std::filesystem::path& path,
                        std::span<const std::string> query_ids,
                        std::span<const RerankFeatures> features);

std::pair<std::vector<std::string>, std::vector<RerankFeatures>> read_features_csv(
    const std::filesystem::path& path);

}  // namespace lmke
