#include "lmke/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lmke/knn.hpp"
#include "lmke/metrics.hpp"
#include "lmke/rerank_tree.hpp"

namespace lmke {

namespace {

class StageClock {
 public:
  explicit StageClock(std::vector<StageTiming>& sink) : sink_(sink) {}

  template <typename Fn>
  auto run(const std::string& stage, Fn&& fn) -> decltype(fn()) {
    const auto start = std::chrono::steady_clock::now();
    try {
      if constexpr (std::is_void_v<decltype(fn())>) {
        fn();
        record(stage, start);
      } else {
        auto result = fn();
        record(stage, start);
        return result;
      }
    } catch (const StageError&) {
      throw;
    } catch (const Error& e) {
      throw StageError(stage, e);
    }
  }

 private:
  void record(const std::string& stage,
              std::chrono::steady_clock::time_point start) {
    const auto end = std::chrono::steady_clock::now();
    sink_.push_back(
        {stage, std::chrono::duration<double, std::milli>(end - start).count()});
  }

  std::vector<StageTiming>& sink_;
};

DescriptorSet load_normalized(const std::string& path) {
  auto set = load_descriptors(path);
  return set.normalized() ? std::move(set) : l2_normalize(set);
}

SearchResults empty_results(std::size_t n) { return SearchResults(n); }

}  // namespace

std::string PipelineReport::to_json_string() const {
  nlohmann::ordered_json doc;
  doc["num_queries"] = num_queries;
  doc["num_index"] = num_index;
  doc["num_feature_sets"] = num_feature_sets;
  doc["seed"] = seed;
  auto scores = nlohmann::ordered_json::object();
  auto put = [&scores](const char* key, const std::optional<double>& v) {
    if (v) scores[key] = *v;
  };
  put("gap_raw", gap_raw);
  put("gap_rule1", gap_rule1);
  put("gap_rule2", gap_rule2);
  put("gap_rerank", gap_rerank);
  put("map_at_100", map100);
  if (map100) scores["map_skipped_queries"] = map_skipped;
  doc["scores"] = std::move(scores);
  auto files = nlohmann::ordered_json::object();
  for (const auto& [stage, path] : outputs) files[stage] = path;
  doc["outputs"] = std::move(files);
  return doc.dump(2) + "\n";
}

PipelineReport run_pipeline(const PipelineConfig& config) {
  PipelineReport report;
  report.seed = config.seed;
  StageClock clock(report.timings);

  if (config.query_paths.empty() || config.index_paths.empty()) {
    throw ParamError("at least one query and one index path are required");
  }
  if (config.query_paths.size() != config.index_paths.size()) {
    throw ParamError("query and index path counts differ");
  }
  std::vector<double> weights = config.feature_weights;
  if (weights.empty()) weights.assign(config.query_paths.size(), 1.0);

  const std::filesystem::path out_dir(config.out_dir);
  std::filesystem::create_directories(out_dir);

  // -- load ---------------------------------------------------------------
  std::vector<DescriptorSet> query_sets, index_sets;
  clock.run("load", [&] {
    for (const auto& p : config.query_paths) query_sets.push_back(load_normalized(p));
    for (const auto& p : config.index_paths) index_sets.push_back(load_normalized(p));
  });
  if (!index_sets.front().has_labels()) {
    throw StageError("load", IntegrityError("index set carries no landmark labels"));
  }
  const std::vector<LandmarkLabel> index_labels = index_sets.front().labels();
  const std::vector<std::string> query_ids = query_sets.front().ids();
  const std::vector<std::string> index_ids = index_sets.front().ids();
  report.num_queries = query_sets.front().size();
  report.num_index = index_sets.front().size();
  report.num_feature_sets = query_sets.size();

  std::optional<DescriptorSet> nonlandmark;
  if (!config.nonlandmark_path.empty()) {
    clock.run("load_nonlandmark",
              [&] { nonlandmark = load_normalized(config.nonlandmark_path); });
  }
  std::optional<ClassifierProbs> probs;
  if (!config.classifier_probs_path.empty()) {
    clock.run("load_probs",
              [&] { probs = ClassifierProbs::load_csv(config.classifier_probs_path); });
  }

  const std::size_t k_search = std::min(config.k_search, report.num_index);
  FusionParams fusion = config.fusion;
  fusion.k_agg = std::min(fusion.k_agg, k_search);

  // -- search ---------------------------------------------------------------
  SearchResults results = clock.run("search", [&]() -> SearchResults {
    if (query_sets.size() == 1) {
      return top_k_search(query_sets[0], index_sets[0], k_search, config.search);
    }
    std::vector<std::string> names;
    for (std::size_t f = 0; f < query_sets.size(); ++f) {
      names.push_back("feature" + std::to_string(f));
    }
    FeatureSetBundle qb(names, query_sets, weights);
    FeatureSetBundle ib(names, index_sets, weights);
    return top_k_search_fused(qb, ib, k_search, config.search);
  });
  if (config.write_neighbors) {
    clock.run("write_neighbors", [&] {
      const auto path = out_dir / "neighbors.csv";
      write_neighbors_csv(path, query_ids, index_ids, results);
      report.outputs["neighbors"] = path.string();
    });
  }

  // -- predict --------------------------------------------------------------
  auto predictions = clock.run("predict", [&] {
    return predict_from_results(results, query_ids, index_labels, fusion,
                                probs ? &*probs : nullptr);
  });
  const auto dump = [&](const char* stage, std::span<const Prediction> preds) {
    const auto path = out_dir / (std::string("predictions_") + stage + ".csv");
    write_predictions_csv(path, preds, config.empty_nonlandmark_field);
    report.outputs[stage] = path.string();
  };
  clock.run("dump_raw", [&] { dump("raw", predictions); });

  // -- rule 1 -----------------------------------------------------------
  // With multiple feature sets the non-landmark search runs on the first
  // one; the reference set is a single descriptor file.
  SearchResults nl_results = empty_results(predictions.size());
  auto rule1_preds = predictions;
  if (nonlandmark) {
    clock.run("nonlandmark_search", [&] {
      const std::size_t k = std::min<std::size_t>(config.post.topk_nl,
                                                  nonlandmark->size());
      nl_results = top_k_search(query_sets[0], *nonlandmark, k, config.search);
    });
  }
  if (config.rule1 && nonlandmark) {
    rule1_preds = clock.run("rule1", [&] {
      return nonlandmark_penalty_from_results(std::move(rule1_preds), nl_results,
                                              query_ids, config.post);
    });
  }
  clock.run("dump_rule1", [&] { dump("rule1", rule1_preds); });

  // -- rule 2 -----------------------------------------------------------
  auto rule2_preds = rule1_preds;
  if (config.rule2) {
    rule2_preds = clock.run("rule2", [&] {
      return frequency_suppression(std::move(rule2_preds), config.post.cap);
    });
  }
  clock.run("dump_rule2", [&] { dump("rule2", rule2_preds); });

  // -- re-rank features (labels are stable across the rule stages) --------
  auto features = clock.run("features", [&] {
    return extract_rerank_features(rule2_preds, results, nl_results, query_ids,
                                   index_labels, probs ? &*probs : nullptr);
  });
  clock.run("dump_features", [&] {
    const auto path = out_dir / "features.csv";
    write_features_csv(path, query_ids, features);
    report.outputs["features"] = path.string();
  });

  std::optional<std::vector<Prediction>> rerank_preds;
  if (!config.rerank_model_path.empty()) {
    rerank_preds = clock.run("rerank", [&] {
      const auto model = TreeModel::load(config.rerank_model_path);
      std::vector<std::vector<double>> rows;
      rows.reserve(features.size());
      for (const auto& f : features) {
        const auto arr = f.as_array();
        rows.emplace_back(arr.begin(), arr.end());
      }
      const auto scores = apply_rerank(model, rows);
      auto preds = rule2_preds;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!preds[i].is_abstention()) preds[i].confidence = scores[i];
      }
      return preds;
    });
    clock.run("dump_rerank", [&] { dump("rerank", *rerank_preds); });
  }

  // -- evaluate -----------------------------------------------------------
  if (!config.truth_path.empty()) {
    clock.run("evaluate", [&] {
      const auto truth = GroundTruth::load_csv(config.truth_path);
      report.gap_raw = gap_at_1(predictions, truth);
      report.gap_rule1 = gap_at_1(rule1_preds, truth);
      report.gap_rule2 = gap_at_1(rule2_preds, truth);
      if (rerank_preds) report.gap_rerank = gap_at_1(*rerank_preds, truth);

      // mAP@100 against the labeled index: relevant = rows of the truth class.
      std::unordered_map<LandmarkLabel, std::unordered_set<std::string>> by_class;
      for (std::size_t i = 0; i < index_labels.size(); ++i) {
        if (index_labels[i] != kNonLandmark) {
          by_class[index_labels[i]].insert(index_ids[i]);
        }
      }
      RelevantSets relevant;
      std::vector<RankedRetrieval> ranked(results.size());
      for (std::size_t q = 0; q < results.size(); ++q) {
        ranked[q].query_id = query_ids[q];
        for (std::uint32_t row : results[q].indices) {
          ranked[q].neighbor_ids.push_back(index_ids[row]);
        }
        auto it = truth.labels.find(query_ids[q]);
        if (it != truth.labels.end() && it->second != kNonLandmark) {
          auto ct = by_class.find(it->second);
          if (ct != by_class.end()) relevant[query_ids[q]] = ct->second;
        }
      }
      std::size_t skipped = 0;
      report.map100 = map_at_100(ranked, relevant, &skipped);
      report.map_skipped = skipped;
    });
  }

  clock.run("report", [&] {
    const auto path = out_dir / "report.json";
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << report.to_json_string();
    if (!out) throw IoError("write failure on '" + path.string() + "'");
    report.outputs["report"] = path.string();
  });
  return report;
}

}  // namespace lmke
