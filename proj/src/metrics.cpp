#include "lmke/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "lmke/errors.hpp"

namespace lmke {

namespace {

constexpr std::size_t kMapCutoff = 100;

}  // namespace

GroundTruth GroundTruth::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  GroundTruth truth;
  std::string line;
  std::getline(in, line);
  if (line != "query_id,landmark_id") {
    throw FormatError("unexpected truth CSV header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string qid, lm;
    if (!std::getline(ss, qid, ',')) throw FormatError("malformed truth row: " + line);
    std::getline(ss, lm);
    const LandmarkLabel label = lm.empty() ? kNonLandmark : std::stoll(lm);
    if (label < kNonLandmark) throw FormatError("truth label below -1");
    if (!truth.labels.emplace(qid, label).second) {
      throw IntegrityError("duplicate truth query id '" + qid + "'");
    }
  }
  return truth;
}

void GroundTruth::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "query_id,landmark_id\n";
  std::vector<std::pair<std::string, LandmarkLabel>> rows(labels.begin(), labels.end());
  std::sort(rows.begin(), rows.end());
  for (const auto& [qid, label] : rows) {
    out << qid << ',' << label << '\n';
  }
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

double gap_at_1(std::span<const Prediction> predictions, const GroundTruth& truth,
                std::vector<GapTraceRow>* trace) {
  std::size_t num_landmark_queries = 0;
  for (const auto& [qid, label] : truth.labels) {
    (void)qid;
    if (label != kNonLandmark) ++num_landmark_queries;
  }
  if (num_landmark_queries == 0) {
    throw UndefinedMetricError("truth contains no landmark queries");
  }

  std::unordered_set<std::string> seen;
  std::vector<const Prediction*> ranked;
  ranked.reserve(predictions.size());
  for (const auto& p : predictions) {
    if (!seen.insert(p.query_id).second) {
      throw IntegrityError("duplicate prediction for query '" + p.query_id + "'");
    }
    if (truth.labels.find(p.query_id) == truth.labels.end()) {
      throw IntegrityError("prediction for unknown query '" + p.query_id + "'");
    }
    if (p.landmark != kNonLandmark) ranked.push_back(&p);
  }

  std::sort(ranked.begin(), ranked.end(), [](const Prediction* a, const Prediction* b) {
    if (a->confidence != b->confidence) return a->confidence > b->confidence;
    return a->query_id < b->query_id;
  });

  if (trace) trace->clear();
  double sum = 0.0;
  std::size_t correct_so_far = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& p = *ranked[i];
    const bool correct = truth.labels.at(p.query_id) == p.landmark;
    if (correct) ++correct_so_far;
    const double precision =
        static_cast<double>(correct_so_far) / static_cast<double>(i + 1);
    if (correct) sum += precision;
    if (trace) {
      trace->push_back({p.query_id, p.landmark, p.confidence, correct, precision});
    }
  }
  return sum / static_cast<double>(num_landmark_queries);
}

double map_at_100(std::span<const RankedRetrieval> ranked, const RelevantSets& truth,
                  std::size_t* num_skipped) {
  double total = 0.0;
  std::size_t scored = 0;
  std::size_t skipped = 0;
  for (const auto& query : ranked) {
    std::unordered_set<std::string> dedup;
    for (const auto& id : query.neighbor_ids) {
      if (!dedup.insert(id).second) {
        throw IntegrityError("duplicate neighbor '" + id + "' for query '" +
                             query.query_id + "'");
      }
    }
    auto it = truth.find(query.query_id);
    if (it == truth.end() || it->second.empty()) {
      ++skipped;
      continue;
    }
    const auto& relevant = it->second;
    const std::size_t denom = std::min(relevant.size(), kMapCutoff);
    double ap = 0.0;
    std::size_t hits = 0;
    const std::size_t limit = std::min(query.neighbor_ids.size(), kMapCutoff);
    for (std::size_t r = 0; r < limit; ++r) {
      if (relevant.count(query.neighbor_ids[r])) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(r + 1);
      }
    }
    total += ap / static_cast<double>(denom);
    ++scored;
  }
  if (num_skipped) *num_skipped = skipped;
  if (scored == 0) {
    throw UndefinedMetricError("no query has a nonempty relevant set");
  }
  return total / static_cast<double>(scored);
}

}  // namespace lmke
