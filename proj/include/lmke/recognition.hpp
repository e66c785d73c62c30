#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lmke/knn.hpp"
#include "lmke/types.hpp"

namespace lmke {

struct FusionParams {
  std::size_t k_agg = 3;  // neighbors aggregated per class
  double alpha = 0.5;     // classifier-fusion exponent, in [0, 1]
};

// Per-query aggregated retrieval score per landmark. Ordered by landmark id
// so argmax ties resolve to the lowest id.
using ClassScores = std::map<LandmarkLabel, double>;

// score(class) = sum of the top-min(k_agg, count) similarities among the
// query's neighbors of that class. Neighbors labeled -1 are excluded, and
// classes whose aggregate is not positive are dropped (negative cosine
// evidence is no vote).
ClassScores aggregate_class_scores(const SearchResult& result,
                                   std::span<const LandmarkLabel> index_labels,
                                   std::size_t k_agg);

// confidence = retrieval_score * prob^alpha when a classifier probability is
// present, plain retrieval_score otherwise.
double fuse_with_classifier(double retrieval_score, std::optional<double> class_prob,
                            double alpha);

// Sparse (query id, landmark) -> probability table ingested from CSV
// `query_id,landmark_id,prob`.
class ClassifierProbs {
 public:
  ClassifierProbs() = default;

  void set(const std::string& query_id, LandmarkLabel landmark, double prob);
  std::optional<double> lookup(const std::string& query_id,
                               LandmarkLabel landmark) const;

  static ClassifierProbs load_csv(const std::filesystem::path& path);

 private:
  std::unordered_map<std::string, std::map<LandmarkLabel, double>> probs_;
};

// One prediction per query: landmark = argmax of fused scores (ties to the
// lowest landmark id), or (-1, 0) when no class has positive evidence.
std::vector<Prediction> predict_from_results(
    const SearchResults& results, std::span<const std::string> query_ids,
    std::span<const LandmarkLabel> index_labels, const FusionParams& params,
    const ClassifierProbs* probs = nullptr);

// Search + predict in one call.
std::vector<Prediction> predict(const DescriptorSet& queries,
                                const DescriptorSet& index, std::size_t k_search,
                                const FusionParams& params,
                                const ClassifierProbs* probs = nullptr,
                                const SearchOptions& search_opts = {});

// CSV `query_id,landmark_id,confidence`, confidence at 6 decimal places.
// Abstention rows write an empty landmark field when empty_nonlandmark is
// set (competition submission style), literal -1 otherwise.
void write_predictions_csv(const std::filesystem::path& path,
                           std::span<const Prediction> predictions,
                           bool empty_nonlandmark = true);

std::vector<Prediction> read_predictions_csv(const std::filesystem::path& path);

}  // namespace lmke
