#include "lmke/recognition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lmke/errors.hpp"

namespace lmke {

namespace {

void check_fusion_params(const FusionParams& params, std::size_t k_search) {
  if (params.k_agg == 0 || params.k_agg > k_search) {
    throw ParamError("k_agg must lie in [1, k_search]");
  }
  if (params.alpha < 0.0 || params.alpha > 1.0) {
    throw ParamError("alpha must lie in [0, 1]");
  }
}

}  // namespace

ClassScores aggregate_class_scores(const SearchResult& result,
                                   std::span<const LandmarkLabel> index_labels,
                                   std::size_t k_agg) {
  if (k_agg == 0) throw ParamError("k_agg must be >= 1");
  // Neighbors arrive similarity-descending, so the first k_agg hits per
  // class are already its top ones.
  std::map<LandmarkLabel, std::pair<std::size_t, double>> partial;
  for (std::size_t r = 0; r < result.indices.size(); ++r) {
    const std::uint32_t row = result.indices[r];
    if (row >= index_labels.size()) {
      throw IntegrityError("neighbor row outside the label table");
    }
    const LandmarkLabel label = index_labels[row];
    if (label == kNonLandmark) continue;
    auto& [count, sum] = partial[label];
    if (count < k_agg) {
      sum += static_cast<double>(result.similarities[r]);
      ++count;
    }
  }
  ClassScores scores;
  for (const auto& [label, cs] : partial) {
    if (cs.second > 0.0) scores[label] = cs.second;
  }
  return scores;
}

double fuse_with_classifier(double retrieval_score, std::optional<double> class_prob,
                            double alpha) {
  if (retrieval_score < 0.0) throw ParamError("retrieval score must be >= 0");
  if (alpha < 0.0 || alpha > 1.0) throw ParamError("alpha must lie in [0, 1]");
  if (!class_prob) return retrieval_score;
  if (*class_prob < 0.0 || *class_prob > 1.0) {
    throw ParamError("classifier probability outside [0, 1]");
  }
  return retrieval_score * std::pow(*class_prob, alpha);
}

void ClassifierProbs::set(const std::string& query_id, LandmarkLabel landmark,
                          double prob) {
  if (prob < 0.0 || prob > 1.0) {
    throw ParamError("classifier probability outside [0, 1]");
  }
  probs_[query_id][landmark] = prob;
}

std::optional<double> ClassifierProbs::lookup(const std::string& query_id,
                                              LandmarkLabel landmark) const {
  auto it = probs_.find(query_id);
  if (it == probs_.end()) return std::nullopt;
  auto jt = it->second.find(landmark);
  if (jt == it->second.end()) return std::nullopt;
  return jt->second;
}

ClassifierProbs ClassifierProbs::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  ClassifierProbs table;
  std::string line;
  std::getline(in, line);
  if (line != "query_id,landmark_id,prob") {
    throw FormatError("unexpected classifier probs CSV header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string qid, lm, prob;
    if (!std::getline(ss, qid, ',') || !std::getline(ss, lm, ',') ||
        !std::getline(ss, prob)) {
      throw FormatError("malformed classifier probs row: " + line);
    }
    table.set(qid, std::stoll(lm), std::stod(prob));
  }
  return table;
}

std::vector<Prediction> predict_from_results(
    const SearchResults& results, std::span<const std::string> query_ids,
    std::span<const LandmarkLabel> index_labels, const FusionParams& params,
    const ClassifierProbs* probs) {
  if (results.size() != query_ids.size()) {
    throw IntegrityError("result count does not match query id count");
  }
  if (params.alpha < 0.0 || params.alpha > 1.0) {
    throw ParamError("alpha must lie in [0, 1]");
  }
  std::vector<Prediction> predictions;
  predictions.reserve(results.size());
  for (std::size_t q = 0; q < results.size(); ++q) {
    const auto scores = aggregate_class_scores(results[q], index_labels, params.k_agg);
    Prediction pred;
    pred.query_id = query_ids[q];
    double best = 0.0;
    for (const auto& [label, retrieval] : scores) {
      const double fused = fuse_with_classifier(
          retrieval, probs ? probs->lookup(query_ids[q], label) : std::nullopt,
          params.alpha);
      // Strict > keeps the lowest landmark id on ties.
      if (fused > best) {
        best = fused;
        pred.landmark = label;
      }
    }
    pred.confidence = pred.landmark == kNonLandmark ? 0.0 : best;
    predictions.push_back(std::move(pred));
  }
  return predictions;
}

std::vector<Prediction> predict(const DescriptorSet& queries,
                                const DescriptorSet& index, std::size_t k_search,
                                const FusionParams& params,
                                const ClassifierProbs* probs,
                                const SearchOptions& search_opts) {
  check_fusion_params(params, k_search);
  if (!index.has_labels()) {
    throw IntegrityError("index set carries no landmark labels");
  }
  const auto results = top_k_search(queries, index, k_search, search_opts);
  return predict_from_results(results, queries.ids(), index.labels(), params, probs);
}

void write_predictions_csv(const std::filesystem::path& path,
                           std::span<const Prediction> predictions,
                           bool empty_nonlandmark) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "query_id,landmark_id,confidence\n";
  char buf[32];
  for (const auto& p : predictions) {
    std::snprintf(buf, sizeof(buf), "%.6f", p.confidence);
    out << p.query_id << ',';
    if (p.landmark == kNonLandmark && empty_nonlandmark) {
      out << ',' << buf << '\n';
    } else {
      out << p.landmark << ',' << buf << '\n';
    }
  }
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

std::vector<Prediction> read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<Prediction> predictions;
  std::string line;
  std::getline(in, line);
  if (line != "query_id,landmark_id,confidence") {
    throw FormatError("unexpected predictions CSV header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string qid, lm, conf;
    if (!std::getline(ss, qid, ',') || !std::getline(ss, lm, ',') ||
        !std::getline(ss, conf)) {
      throw FormatError("malformed predictions CSV row: " + line);
    }
    Prediction p;
    p.query_id = qid;
    p.landmark = lm.empty() ? kNonLandmark : std::stoll(lm);
    p.confidence = std::stod(conf);
    predictions.push_back(std::move(p));
  }
  return predictions;
}

}  // namespace lmke
