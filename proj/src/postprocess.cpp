#include "lmke/postprocess.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "lmke/errors.hpp"

namespace lmke {

namespace {

double top_sim_stat(const SearchResult& result, std::size_t topk, bool use_max) {
  const std::size_t count = std::min(topk, result.similarities.size());
  if (count == 0) return 0.0;
  if (use_max) return static_cast<double>(result.similarities.front());
  double sum = 0.0;
  for (std::size_t r = 0; r < count; ++r) {
    sum += static_cast<double>(result.similarities[r]);
  }
  return sum / static_cast<double>(count);
}

double mean_top(const SearchResult& result, std::size_t topk) {
  return top_sim_stat(result, topk, /*use_max=*/false);
}

}  // namespace

void validate(const PostprocessParams& params) {
  if (params.tau < 0.0 || params.tau > 1.0) throw ParamError("tau must lie in [0, 1]");
  if (params.topk_nl == 0) throw ParamError("topk_nl must be >= 1");
  if (params.cap == 0) throw ParamError("cap must be >= 1");
}

std::vector<Prediction> nonlandmark_penalty_from_results(
    std::vector<Prediction> predictions, const SearchResults& nonlandmark_results,
    std::span<const std::string> query_ids, const PostprocessParams& params) {
  validate(params);
  if (predictions.size() != nonlandmark_results.size() ||
      predictions.size() != query_ids.size()) {
    throw IntegrityError("rule 1 inputs are not aligned");
  }
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].query_id != query_ids[i]) {
      throw IntegrityError("rule 1 query ids out of order at row " +
                           std::to_string(i));
    }
    const double stat = top_sim_stat(nonlandmark_results[i], params.topk_nl,
                                     params.per_neighbor_max);
    if (stat > params.tau) {
      predictions[i].confidence =
          params.penalty_mode == PenaltyMode::kZero
              ? 0.0
              : std::max(0.0, predictions[i].confidence - stat);
    }
  }
  return predictions;
}

std::vector<Prediction> nonlandmark_penalty(std::vector<Prediction> predictions,
                                            const DescriptorSet& queries,
                                            const DescriptorSet& nonlandmark_set,
                                            const PostprocessParams& params,
                                            const SearchOptions& opts) {
  validate(params);
  const std::size_t k = std::min<std::size_t>(params.topk_nl, nonlandmark_set.size());
  const auto results = top_k_search(queries, nonlandmark_set, k, opts);
  return nonlandmark_penalty_from_results(std::move(predictions), results,
                                          queries.ids(), params);
}

std::vector<Prediction> frequency_suppression(std::vector<Prediction> predictions,
                                              std::size_t cap) {
  if (cap == 0) throw ParamError("cap must be >= 1");
  if (predictions.empty()) return predictions;

  std::unordered_map<LandmarkLabel, std::size_t> counts;
  double max_confidence = 0.0;
  bool any_active = false;
  for (const auto& p : predictions) {
    if (p.landmark != kNonLandmark) ++counts[p.landmark];
    if (p.confidence >= 0.0) {
      max_confidence = any_active ? std::max(max_confidence, p.confidence)
                                  : p.confidence;
      any_active = true;
    }
  }
  if (!any_active) return predictions;

  const double shift = 1.0 + max_confidence;
  for (auto& p : predictions) {
    if (p.landmark == kNonLandmark) continue;
    if (p.confidence < 0.0) continue;  // already demoted by a previous pass
    if (counts[p.landmark] > cap) p.confidence -= shift;
  }
  return predictions;
}

const std::array<const char*, RerankFeatures::kCount>& RerankFeatures::field_names() {
  static const std::array<const char*, kCount> names = {
      "top1_sim",          "mean_top3_sim",
      "top1_nonlandmark_sim", "mean_top3_nonlandmark_sim",
      "class_vote_count",  "class_test_frequency",
      "classifier_prob"};
  return names;
}

std::array<double, RerankFeatures::kCount> RerankFeatures::as_array() const {
  return {top1_sim,          mean_top3_sim,        top1_nonlandmark_sim,
          mean_top3_nonlandmark_sim, class_vote_count, class_test_frequency,
          classifier_prob};
}

std::vector<RerankFeatures> extract_rerank_features(
    std::span<const Prediction> predictions, const SearchResults& index_results,
    const SearchResults& nonlandmark_results,
    std::span<const std::string> query_ids,
    std::span<const LandmarkLabel> index_labels, const ClassifierProbs* probs) {
  if (predictions.size() != index_results.size() ||
      predictions.size() != nonlandmark_results.size() ||
      predictions.size() != query_ids.size()) {
    throw IntegrityError("feature extraction inputs are not aligned");
  }

  std::unordered_map<LandmarkLabel, std::size_t> frequency;
  for (const auto& p : predictions) {
    if (p.landmark != kNonLandmark) ++frequency[p.landmark];
  }

  std::vector<RerankFeatures> rows;
  rows.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    if (p.query_id != query_ids[i]) {
      throw IntegrityError("feature extraction query ids out of order at row " +
                           std::to_string(i));
    }
    const auto& res = index_results[i];
    RerankFeatures f;
    if (!res.similarities.empty()) {
      f.top1_sim = res.similarities.front();
      f.mean_top3_sim = mean_top(res, 3);
    }
    const auto& nl = nonlandmark_results[i];
    if (!nl.similarities.empty()) {
      f.top1_nonlandmark_sim = nl.similarities.front();
      f.mean_top3_nonlandmark_sim = mean_top(nl, 3);
    }
    if (p.landmark != kNonLandmark) {
      std::size_t votes = 0;
      for (std::uint32_t row : res.indices) {
        if (row >= index_labels.size()) {
          throw IntegrityError("neighbor row outside the label table");
        }
        if (index_labels[row] == p.landmark) ++votes;
      }
      f.class_vote_count = static_cast<double>(votes);
      f.class_test_frequency = static_cast<double>(frequency[p.landmark]);
    }
    if (probs && p.landmark != kNonLandmark) {
      if (auto prob = probs->lookup(p.query_id, p.landmark)) {
        f.classifier_prob = *prob;
      }
    }
    rows.push_back(f);
  }
  return rows;
}

void write_features_csv(const std::filesystem::path& path,
                        std::span<const std::string> query_ids,
                        std::span<const RerankFeatures> features) {
  if (query_ids.size() != features.size()) {
    throw IntegrityError("feature rows do not match query ids");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "query_id";
  for (const char* name : RerankFeatures::field_names()) out << ',' << name;
  out << '\n';
  char buf[40];
  for (std::size_t i = 0; i < features.size(); ++i) {
    out << query_ids[i];
    for (double v : features[i].as_array()) {
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

std::pair<std::vector<std::string>, std::vector<RerankFeatures>> read_features_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string line;
  std::getline(in, line);
  std::string expected = "query_id";
  for (const char* name : RerankFeatures::field_names()) {
    expected += ',';
    expected += name;
  }
  if (line != expected) throw FormatError("unexpected features CSV header");

  std::vector<std::string> ids;
  std::vector<RerankFeatures> features;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (!std::getline(ss, cell, ',')) throw FormatError("malformed features row");
    ids.push_back(cell);
    std::array<double, RerankFeatures::kCount> values{};
    for (std::size_t c = 0; c < values.size(); ++c) {
      if (!std::getline(ss, cell, ',')) {
        throw FormatError("features row has too few columns: " + line);
      }
      values[c] = std::stod(cell);
    }
    RerankFeatures f;
    f.top1_sim = values[0];
    f.mean_top3_sim = values[1];
    f.top1_nonlandmark_sim = values[2];
    f.mean_top3_nonlandmark_sim = values[3];
    f.class_vote_count = values[4];
    f.class_test_frequency = values[5];
    f.classifier_prob = values[6];
    features.push_back(f);
  }
  return {std::move(ids), std::move(features)};
}

}  // namespace lmke
