#include "lmke/pipeline.hpp"

#include <gtest/gtest.h>

#include "lmke/knn.hpp"
#include "lmke/metrics.hpp"
#include "lmke/rerank_tree.hpp"
#include "lmke/synth.hpp"
#include "test_util.hpp"

using namespace lmke;

namespace {

struct Fixture {
  testing::TempDir data_dir;
  SynthDataset data;

  explicit Fixture(std::uint64_t seed = 5, std::size_t distractors = 30)
      : data(make(seed, distractors)) {
    write_synthetic(data, data_dir.path);
  }

  static SynthDataset make(std::uint64_t seed, std::size_t distractors) {
    SynthSpec spec;
    spec.num_landmarks = 10;
    spec.images_per_landmark = 8;
    spec.queries_per_landmark = 3;
    spec.num_distractor_queries = distractors;
    spec.num_nonlandmark_refs = 40;
    spec.dim = 512;
    spec.sigma = 0.05;
    spec.rho = 0.5;
    spec.seed = seed;
    return generate_synthetic(spec);
  }

  PipelineConfig config(const std::filesystem::path& out_dir) const {
    PipelineConfig cfg;
    cfg.query_paths = {(data_dir.path / "queries.lmke").string()};
    cfg.index_paths = {(data_dir.path / "index.lmke").string()};
    cfg.nonlandmark_path = (data_dir.path / "nonlandmark.lmke").string();
    cfg.truth_path = (data_dir.path / "truth.csv").string();
    cfg.out_dir = out_dir.string();
    cfg.k_search = 20;
    return cfg;
  }
};

}  // namespace

TEST(Pipeline, DisabledPostprocessingEqualsPlainPredict) {
  Fixture fx;
  testing::TempDir out;
  auto cfg = fx.config(out.path);
  cfg.rule1 = false;
  cfg.rule2 = false;
  const auto report = run_pipeline(cfg);

  const auto raw = read_predictions_csv(out.file("predictions_raw.csv"));
  const auto rule2 = read_predictions_csv(out.file("predictions_rule2.csv"));
  ASSERT_EQ(raw.size(), rule2.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    EXPECT_EQ(raw[i].query_id, rule2[i].query_id);
    EXPECT_EQ(raw[i].landmark, rule2[i].landmark);
    EXPECT_EQ(raw[i].confidence, rule2[i].confidence);
  }

  const auto direct = predict(fx.data.queries, fx.data.index, 20, {3, 0.5});
  ASSERT_EQ(direct.size(), raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    EXPECT_EQ(raw[i].landmark, direct[i].landmark);
    EXPECT_NEAR(raw[i].confidence, direct[i].confidence, 1e-6);
  }
  EXPECT_TRUE(report.gap_raw.has_value());
}

TEST(Pipeline, DuplicatedFeatureSetEqualsSingle) {
  Fixture fx;
  testing::TempDir out_single, out_double;
  auto single = fx.config(out_single.path);
  const auto report_single = run_pipeline(single);

  auto doubled = fx.config(out_double.path);
  doubled.query_paths.push_back(doubled.query_paths[0]);
  doubled.index_paths.push_back(doubled.index_paths[0]);
  doubled.feature_weights = {1.0, 1.0};
  const auto report_double = run_pipeline(doubled);

  for (const char* name : {"predictions_raw.csv", "predictions_rule1.csv",
                           "predictions_rule2.csv"}) {
    EXPECT_EQ(testing::read_file(out_single.file(name)),
              testing::read_file(out_double.file(name)))
        << name;
  }
  EXPECT_EQ(report_single.gap_rule2, report_double.gap_rule2);
}

TEST(Pipeline, ByteIdenticalAcrossRunsAndThreadCounts) {
  Fixture fx;
  testing::TempDir out_a, out_b, out_c;
  auto cfg_a = fx.config(out_a.path);
  cfg_a.search.threads = 1;
  auto cfg_b = fx.config(out_b.path);
  cfg_b.search.threads = 8;
  auto cfg_c = fx.config(out_c.path);
  cfg_c.search.threads = 8;
  run_pipeline(cfg_a);
  run_pipeline(cfg_b);
  run_pipeline(cfg_c);
  for (const char* name :
       {"predictions_raw.csv", "predictions_rule1.csv", "predictions_rule2.csv",
        "neighbors.csv", "features.csv", "report.json"}) {
    const auto a = testing::read_file(out_a.file(name));
    EXPECT_EQ(a, testing::read_file(out_b.file(name))) << name;
    EXPECT_EQ(a, testing::read_file(out_c.file(name))) << name;
    ASSERT_FALSE(a.empty());
  }
}

TEST(Pipeline, StageComposabilityMatchesLibraryCalls) {
  Fixture fx;
  testing::TempDir out;
  const auto report = run_pipeline(fx.config(out.path));

  // Re-create the stages by hand from the same inputs.
  const auto results = top_k_search(fx.data.queries, fx.data.index, 20);
  auto preds = predict_from_results(results, fx.data.queries.ids(),
                                    fx.data.index.labels(), {3, 0.5});
  preds = nonlandmark_penalty(std::move(preds), fx.data.queries,
                              fx.data.nonlandmark, {});
  const auto rule1 = read_predictions_csv(out.file("predictions_rule1.csv"));
  ASSERT_EQ(rule1.size(), preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EXPECT_EQ(rule1[i].landmark, preds[i].landmark);
    EXPECT_NEAR(rule1[i].confidence, preds[i].confidence, 1e-6);
  }

  preds = frequency_suppression(std::move(preds), 20);
  const auto rule2 = read_predictions_csv(out.file("predictions_rule2.csv"));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EXPECT_NEAR(rule2[i].confidence, preds[i].confidence, 1e-6);
  }

  const auto truth = GroundTruth::load_csv(fx.data_dir.file("truth.csv"));
  EXPECT_EQ(report.gap_rule2, gap_at_1(preds, truth));
}

TEST(Pipeline, RerankStageRecalibratesConfidences) {
  Fixture fx;
  testing::TempDir out1;
  run_pipeline(fx.config(out1.path));

  // Train a model on this run's own features (sanity, not generalization).
  const auto [ids, features] = read_features_csv(out1.file("features.csv"));
  const auto preds = read_predictions_csv(out1.file("predictions_rule2.csv"));
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].is_abstention()) continue;
    const auto arr = features[i].as_array();
    rows.emplace_back(arr.begin(), arr.end());
    labels.push_back(preds[i].landmark == fx.data.truth.labels.at(preds[i].query_id)
                         ? 1
                         : 0);
  }
  TreeTrainParams params;
  params.n_trees = 30;
  const auto model = train_rerank_tree(rows, labels, params);
  const auto model_path = out1.file("model.json");
  model.save(model_path);

  testing::TempDir out2;
  auto cfg = fx.config(out2.path);
  cfg.rerank_model_path = model_path.string();
  const auto report = run_pipeline(cfg);
  ASSERT_TRUE(report.gap_rerank.has_value());
  const auto reranked = read_predictions_csv(out2.file("predictions_rerank.csv"));
  for (const auto& p : reranked) {
    if (!p.is_abstention()) {
      EXPECT_GE(p.confidence, 0.0);
      EXPECT_LE(p.confidence, 1.0);
    } else {
      EXPECT_EQ(p.confidence, 0.0);
    }
  }
}

TEST(Pipeline, StageErrorsNameTheStage) {
  Fixture fx;
  testing::TempDir out;
  auto cfg = fx.config(out.path);
  cfg.truth_path = (fx.data_dir.path / "missing.csv").string();
  try {
    run_pipeline(cfg);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "evaluate");
    EXPECT_EQ(e.category(), "io");
  }
}

TEST(Pipeline, ReportJsonIsDeterministic) {
  Fixture fx;
  testing::TempDir out;
  const auto report = run_pipeline(fx.config(out.path));
  const auto text = report.to_json_string();
  EXPECT_EQ(text, testing::read_file(out.file("report.json")));
  EXPECT_NE(text.find("gap_raw"), std::string::npos);
  EXPECT_NE(text.find("map_at_100"), std::string::npos);
  // Timings vary run to run and must stay out of the serialized report.
  EXPECT_EQ(text.find("millis"), std::string::npos);
  EXPECT_EQ(text.find("timing"), std::string::npos);
}
