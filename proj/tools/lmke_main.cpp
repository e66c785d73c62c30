// lmke: landmark recognition-by-retrieval engine CLI.
//
// Subcommands cover the whole pipeline: synthetic data generation, index
// building, exact kNN search, prediction, distractor suppression, tree
// re-ranking, and GAP/mAP evaluation. Exit code 0 on success; on failure a
// single machine-readable JSON error line goes to stderr.

#include <cinttypes>
#include <cstdio>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>

#include "lmke/descriptor_math.hpp"
#include "lmke/embedding_store.hpp"
#include "lmke/errors.hpp"
#include "lmke/knn.hpp"
#include "lmke/metrics.hpp"
#include "lmke/pipeline.hpp"
#include "lmke/postprocess.hpp"
#include "lmke/recognition.hpp"
#include "lmke/rerank_tree.hpp"
#include "lmke/synth.hpp"

namespace {

using namespace lmke;

struct SearchFlags {
  unsigned threads = 0;
  std::size_t query_block = 64;
  std::size_t index_tile = 512;

  SearchOptions options() const { return {threads, query_block, index_tile}; }
};

void add_search_flags(CLI::App* cmd, SearchFlags& flags) {
  cmd->add_option("--threads", flags.threads, "Worker threads (0 = all cores)");
  cmd->add_option("--query-block", flags.query_block, "Queries per work unit");
  cmd->add_option("--index-tile", flags.index_tile, "Index rows per tile");
}

struct BundleFlags {
  std::vector<std::string> query_paths;
  std::vector<std::string> index_paths;
  std::vector<double> weights;
};

void add_bundle_flags(CLI::App* cmd, BundleFlags& flags) {
  cmd->add_option("--queries", flags.query_paths, "Query LMKE file (repeatable)")
      ->required();
  cmd->add_option("--index", flags.index_paths, "Index LMKE file (repeatable)")
      ->required();
  cmd->add_option("--weights", flags.weights,
                  "Per-feature fusion weights (default: uniform)");
}

std::pair<FeatureSetBundle, FeatureSetBundle> load_bundles(const BundleFlags& flags) {
  if (flags.query_paths.size() != flags.index_paths.size()) {
    throw ParamError("--queries and --index counts differ");
  }
  std::vector<double> weights = flags.weights;
  if (weights.empty()) weights.assign(flags.query_paths.size(), 1.0);
  std::vector<std::string> names;
  std::vector<DescriptorSet> qsets, isets;
  for (std::size_t f = 0; f < flags.query_paths.size(); ++f) {
    names.push_back("feature" + std::to_string(f));
    auto q = load_descriptors(flags.query_paths[f]);
    auto i = load_descriptors(flags.index_paths[f]);
    qsets.push_back(q.normalized() ? std::move(q) : l2_normalize(q));
    isets.push_back(i.normalized() ? std::move(i) : l2_normalize(i));
  }
  return {FeatureSetBundle(names, std::move(qsets), weights),
          FeatureSetBundle(names, std::move(isets), weights)};
}

SearchResults run_search(const FeatureSetBundle& queries,
                         const FeatureSetBundle& index, std::size_t k,
                         const SearchOptions& opts) {
  if (queries.num_sets() == 1) {
    return top_k_search(queries.set(0), index.set(0), k, opts);
  }
  return top_k_search_fused(queries, index, k, opts);
}

int cmd_synth(const SynthSpec& spec, const std::string& out_dir) {
  const auto data = generate_synthetic(spec);
  write_synthetic(data, out_dir);
  std::cout << "wrote " << data.index.size() << " index rows, "
            << data.queries.size() << " queries, " << data.nonlandmark.size()
            << " non-landmark refs to " << out_dir << "\n";
  return 0;
}

int cmd_build_index(const std::string& in, const std::string& out) {
  auto set = load_descriptors(in);
  if (!set.normalized()) set = l2_normalize(set);
  save_descriptors(set, out);
  std::cout << "wrote " << set.size() << " x " << set.dim() << " normalized rows to "
            << out << "\n";
  return 0;
}

PenaltyMode parse_mode(const std::string& mode) {
  if (mode == "subtract") return PenaltyMode::kSubtract;
  if (mode == "zero") return PenaltyMode::kZero;
  throw ParamError("penalty mode must be 'subtract' or 'zero'");
}

// Gradient verification suite: analytic GeM gradients against central
// finite differences, plus the margin-free ArcMargin reduction.
int cmd_check_grad(std::size_t num_maps, std::uint64_t seed) {
  SynthRng rng(seed);
  double worst = 0.0;
  for (std::size_t m = 0; m < num_maps; ++m) {
    const std::size_t c = 1 + rng.next_u64() % 8;
    const std::size_t h = 1 + rng.next_u64() % 8;
    const std::size_t w = 1 + rng.next_u64() % 8;
    std::vector<float> data(c * h * w);
    for (auto& v : data) v = static_cast<float>(0.1 + 0.9 * rng.uniform());
    FeatureMap map(c, h, w, data);
    GemParams params{3.0, 1e-6};
    std::vector<double> upstream(c);
    for (auto& u : upstream) u = 0.5 + rng.uniform();

    const auto grad = gem_pool_grad(map, params, upstream);
    for (std::size_t i = 0; i < data.size(); ++i) {
      FeatureMap plus = map, minus = map;
      plus.data[i] = static_cast<float>(static_cast<double>(map.data[i]) + 1e-3);
      minus.data[i] = static_cast<float>(static_cast<double>(map.data[i]) - 1e-3);
      const double step = 0.5 * (static_cast<double>(plus.data[i]) -
                                 static_cast<double>(minus.data[i]));
      const auto f_plus = gem_pool(plus, params);
      const auto f_minus = gem_pool(minus, params);
      double fd = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        fd += upstream[ch] * (f_plus[ch] - f_minus[ch]);
      }
      fd /= 2.0 * step;
      const double denom = std::max(1e-12, std::abs(fd));
      worst = std::max(worst, std::abs(grad[i] - fd) / denom);
    }
  }
  const bool grad_ok = worst < 1e-4;
  std::printf("[%s] gem_gradient_check max_rel_err=%.3g over %zu maps\n",
              grad_ok ? "PASS" : "FAIL", worst, num_maps);

  // m = 0 must reduce to s-scaled cosine logits exactly.
  bool arc_ok = true;
  for (std::size_t trial = 0; trial < 20 && arc_ok; ++trial) {
    const std::size_t dim = 8, classes = 5;
    Matrix weights(classes);
    std::vector<double> emb(dim);
    auto unit = [&](std::vector<double>& v) {
      double n2 = 0.0;
      for (auto& x : v) {
        x = rng.normal();
        n2 += x * x;
      }
      for (auto& x : v) x /= std::sqrt(n2);
    };
    unit(emb);
    for (auto& row : weights) {
      row.resize(dim);
      unit(row);
    }
    ArcMarginParams params{30.0, 0.0, classes, dim};
    const auto logits = arcmargin_logits(emb, weights, 0, params);
    for (std::size_t j = 0; j < classes; ++j) {
      double dot = 0.0;
      for (std::size_t t = 0; t < dim; ++t) dot += emb[t] * weights[j][t];
      if (logits[j] != params.scale * dot) arc_ok = false;
    }
  }
  std::printf("[%s] arcmargin_margin_free_reduction\n", arc_ok ? "PASS" : "FAIL");
  return grad_ok && arc_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lmke: landmark recognition-by-retrieval engine"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  SynthSpec spec;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--landmarks", spec.num_landmarks, "Landmark classes");
  synth->add_option("--images-per-landmark", spec.images_per_landmark, "Index images per class");
  synth->add_option("--queries-per-landmark", spec.queries_per_landmark, "Queries per class");
  synth->add_option("--distractors", spec.num_distractor_queries, "Distractor queries");
  synth->add_option("--nonlandmark-refs", spec.num_nonlandmark_refs, "Non-landmark reference images");
  synth->add_option("--dim", spec.dim, "Descriptor dimension");
  synth->add_option("--sigma", spec.sigma, "Intra-class noise");
  synth->add_option("--rho", spec.rho, "Fraction of distractors above the 0.3 band");
  synth->add_option("--seed", spec.seed, "RNG seed");

  // ---- build-index ----
  auto* build = app.add_subcommand("build-index", "Normalize descriptors and save as LMKE");
  std::string build_in, build_out;
  build->add_option("--in", build_in, "Input LMKE file")->required();
  build->add_option("--out", build_out, "Output LMKE file")->required();

  // ---- search ----
  auto* search = app.add_subcommand("search", "Exact top-k cosine search");
  BundleFlags search_bundle;
  SearchFlags search_flags;
  std::size_t search_k = 100;
  std::string search_out;
  add_bundle_flags(search, search_bundle);
  add_search_flags(search, search_flags);
  search->add_option("-k,--k", search_k, "Neighbors per query");
  search->add_option("--out", search_out, "Neighbors CSV path")->required();

  // ---- predict ----
  auto* predict_cmd = app.add_subcommand("predict", "Predict landmarks from retrieval");
  BundleFlags predict_bundle;
  SearchFlags predict_search;
  FusionParams fusion;
  std::size_t predict_k = 100;
  std::string predict_probs, predict_out;
  bool numeric_nonlandmark = false;
  add_bundle_flags(predict_cmd, predict_bundle);
  add_search_flags(predict_cmd, predict_search);
  predict_cmd->add_option("-k,--k", predict_k, "Neighbors per query");
  predict_cmd->add_option("--k-agg", fusion.k_agg, "Neighbors aggregated per class");
  predict_cmd->add_option("--alpha", fusion.alpha, "Classifier fusion exponent");
  predict_cmd->add_option("--probs", predict_probs, "Classifier probabilities CSV");
  predict_cmd->add_option("--out", predict_out, "Predictions CSV path")->required();
  predict_cmd->add_flag("--numeric-nonlandmark", numeric_nonlandmark,
                        "Write -1 instead of an empty landmark field");

  // ---- postprocess ----
  auto* post = app.add_subcommand("postprocess", "Apply distractor suppression rules");
  PostprocessParams post_params;
  SearchFlags post_search;
  std::string post_in, post_out, post_queries, post_nonlandmark, post_mode = "subtract";
  bool skip_rule1 = false, skip_rule2 = false, post_numeric = false;
  post->add_option("--predictions", post_in, "Input predictions CSV")->required();
  post->add_option("--out", post_out, "Output predictions CSV")->required();
  post->add_option("--queries", post_queries, "Query LMKE file (rule 1)");
  post->add_option("--nonlandmark", post_nonlandmark, "Non-landmark LMKE file (rule 1)");
  post->add_option("--tau", post_params.tau, "Rule 1 similarity threshold");
  post->add_option("--topk-nl", post_params.topk_nl, "Rule 1 neighbors consulted");
  post->add_option("--cap", post_params.cap, "Rule 2 frequency cap");
  post->add_option("--mode", post_mode, "Rule 1 penalty: subtract|zero");
  post->add_flag("--max-stat", post_params.per_neighbor_max,
                 "Rule 1 uses max of top sims instead of mean");
  post->add_flag("--skip-rule1", skip_rule1, "Skip the non-landmark penalty");
  post->add_flag("--skip-rule2", skip_rule2, "Skip frequency suppression");
  post->add_flag("--numeric-nonlandmark", post_numeric,
                 "Write -1 instead of an empty landmark field");
  add_search_flags(post, post_search);

  // ---- rerank-train ----
  auto* rtrain = app.add_subcommand("rerank-train", "Train the tree re-rank model");
  TreeTrainParams train_params;
  std::string rt_features, rt_predictions, rt_truth, rt_out;
  rtrain->add_option("--features", rt_features, "Features CSV")->required();
  rtrain->add_option("--predictions", rt_predictions, "Predictions CSV")->required();
  rtrain->add_option("--truth", rt_truth, "Ground truth CSV")->required();
  rtrain->add_option("--out", rt_out, "Model JSON path")->required();
  rtrain->add_option("--trees", train_params.n_trees, "Boosting rounds");
  rtrain->add_option("--depth", train_params.max_depth, "Max tree depth");
  rtrain->add_option("--shrinkage", train_params.shrinkage, "Learning rate");
  rtrain->add_option("--min-leaf", train_params.min_leaf, "Minimum rows per leaf");

  // ---- rerank-apply ----
  auto* rapply = app.add_subcommand("rerank-apply", "Recalibrate confidences with a model");
  std::string ra_model, ra_features, ra_predictions, ra_out;
  bool ra_numeric = false;
  rapply->add_option("--model", ra_model, "Model JSON path")->required();
  rapply->add_option("--features", ra_features, "Features CSV")->required();
  rapply->add_option("--predictions", ra_predictions, "Predictions CSV")->required();
  rapply->add_option("--out", ra_out, "Output predictions CSV")->required();
  rapply->add_flag("--numeric-nonlandmark", ra_numeric,
                   "Write -1 instead of an empty landmark field");

  // ---- evaluate ----
  auto* eval = app.add_subcommand("evaluate", "Score predictions with GAP@1 / mAP@100");
  std::string ev_predictions, ev_truth, ev_trace, ev_neighbors, ev_index;
  eval->add_option("--predictions", ev_predictions, "Predictions CSV")->required();
  eval->add_option("--truth", ev_truth, "Ground truth CSV")->required();
  eval->add_option("--trace", ev_trace, "Optional per-rank precision trace CSV");
  eval->add_option("--neighbors", ev_neighbors, "Neighbors CSV for mAP@100");
  eval->add_option("--index", ev_index, "Labeled index LMKE for mAP@100");

  // ---- run ----
  auto* run = app.add_subcommand("run", "Run the full pipeline");
  run->set_config("--config", "", "Flat key=value config file (flags win)");
  PipelineConfig config;
  std::string run_mode = "subtract";
  bool run_skip_rule1 = false, run_skip_rule2 = false;
  bool run_no_neighbors = false, run_numeric = false;
  run->add_option("--queries", config.query_paths, "Query LMKE file (repeatable)")->required();
  run->add_option("--index", config.index_paths, "Index LMKE file (repeatable)")->required();
  run->add_option("--weights", config.feature_weights, "Per-feature fusion weights");
  run->add_option("--nonlandmark", config.nonlandmark_path, "Non-landmark LMKE file");
  run->add_option("--probs", config.classifier_probs_path, "Classifier probabilities CSV");
  run->add_option("--truth", config.truth_path, "Ground truth CSV");
  run->add_option("--rerank-model", config.rerank_model_path, "Tree model JSON");
  run->add_option("--out-dir", config.out_dir, "Output directory");
  run->add_option("-k,--k", config.k_search, "Neighbors per query");
  run->add_option("--k-agg", config.fusion.k_agg, "Neighbors aggregated per class");
  run->add_option("--alpha", config.fusion.alpha, "Classifier fusion exponent");
  run->add_option("--tau", config.post.tau, "Rule 1 similarity threshold");
  run->add_option("--topk-nl", config.post.topk_nl, "Rule 1 neighbors consulted");
  run->add_option("--cap", config.post.cap, "Rule 2 frequency cap");
  run->add_option("--mode", run_mode, "Rule 1 penalty: subtract|zero");
  run->add_flag("--max-stat", config.post.per_neighbor_max,
                "Rule 1 uses max of top sims instead of mean");
  run->add_flag("--skip-rule1", run_skip_rule1, "Skip the non-landmark penalty");
  run->add_flag("--skip-rule2", run_skip_rule2, "Skip frequency suppression");
  run->add_flag("--no-neighbors", run_no_neighbors, "Do not write neighbors.csv");
  run->add_flag("--numeric-nonlandmark", run_numeric,
                "Write -1 instead of an empty landmark field");
  run->add_option("--seed", config.seed, "Seed recorded in the report");
  SearchFlags run_search_flags;
  add_search_flags(run, run_search_flags);

  // ---- check-grad ----
  auto* grad = app.add_subcommand("check-grad", "Run the gradient verification suite");
  std::size_t grad_maps = 20;
  std::uint64_t grad_seed = 1;
  grad->add_option("--maps", grad_maps, "Random feature maps to test");
  grad->add_option("--seed", grad_seed, "RNG seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(spec, synth_out);
    if (*build) return cmd_build_index(build_in, build_out);

    if (*search) {
      auto [qb, ib] = load_bundles(search_bundle);
      const auto results = run_search(qb, ib, search_k, search_flags.options());
      write_neighbors_csv(search_out, qb.ids(), ib.ids(), results);
      std::cout << "wrote " << results.size() << " neighbor lists to " << search_out
                << "\n";
      return 0;
    }

    if (*predict_cmd) {
      auto [qb, ib] = load_bundles(predict_bundle);
      if (!ib.set(0).has_labels()) {
        throw IntegrityError("index set carries no landmark labels");
      }
      std::optional<ClassifierProbs> probs;
      if (!predict_probs.empty()) probs = ClassifierProbs::load_csv(predict_probs);
      const std::size_t k = std::min<std::size_t>(predict_k, ib.num_images());
      FusionParams params = fusion;
      params.k_agg = std::min(params.k_agg, k);
      const auto results = run_search(qb, ib, k, predict_search.options());
      const auto preds = predict_from_results(results, qb.ids(), ib.set(0).labels(),
                                              params, probs ? &*probs : nullptr);
      write_predictions_csv(predict_out, preds, !numeric_nonlandmark);
      std::cout << "wrote " << preds.size() << " predictions to " << predict_out
                << "\n";
      return 0;
    }

    if (*post) {
      post_params.penalty_mode = parse_mode(post_mode);
      auto preds = read_predictions_csv(post_in);
      if (!skip_rule1) {
        if (post_queries.empty() || post_nonlandmark.empty()) {
          throw ParamError("rule 1 needs --queries and --nonlandmark");
        }
        auto queries = load_descriptors(post_queries);
        if (!queries.normalized()) queries = l2_normalize(queries);
        auto nl = load_descriptors(post_nonlandmark);
        if (!nl.normalized()) nl = l2_normalize(nl);
        preds = nonlandmark_penalty(std::move(preds), queries, nl, post_params,
                                    post_search.options());
      }
      if (!skip_rule2) {
        preds = frequency_suppression(std::move(preds), post_params.cap);
      }
      write_predictions_csv(post_out, preds, !post_numeric);
      std::cout << "wrote " << preds.size() << " predictions to " << post_out << "\n";
      return 0;
    }

    if (*rtrain) {
      auto [ids, features] = read_features_csv(rt_features);
      const auto preds = read_predictions_csv(rt_predictions);
      const auto truth = GroundTruth::load_csv(rt_truth);
      if (preds.size() != ids.size()) {
        throw IntegrityError("features and predictions row counts differ");
      }
      std::vector<std::vector<double>> rows;
      std::vector<int> labels;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].query_id != ids[i]) {
          throw IntegrityError("features and predictions query ids differ at row " +
                               std::to_string(i));
        }
        if (preds[i].is_abstention()) continue;  // unranked rows carry no signal
        auto it = truth.labels.find(preds[i].query_id);
        if (it == truth.labels.end()) {
          throw IntegrityError("prediction for unknown query '" +
                               preds[i].query_id + "'");
        }
        const auto arr = features[i].as_array();
        rows.emplace_back(arr.begin(), arr.end());
        labels.push_back(preds[i].landmark == it->second ? 1 : 0);
      }
      const auto model = train_rerank_tree(rows, labels, train_params);
      model.save(rt_out);
      std::cout << "trained " << model.trees.size() << " trees on " << rows.size()
                << " rows; wrote " << rt_out << "\n";
      return 0;
    }

    if (*rapply) {
      const auto model = TreeModel::load(ra_model);
      auto [ids, features] = read_features_csv(ra_features);
      auto preds = read_predictions_csv(ra_predictions);
      if (preds.size() != ids.size()) {
        throw IntegrityError("features and predictions row counts differ");
      }
      std::vector<std::vector<double>> rows;
      rows.reserve(features.size());
      for (const auto& f : features) {
        const auto arr = f.as_array();
        rows.emplace_back(arr.begin(), arr.end());
      }
      const auto scores = apply_rerank(model, rows);
      for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].query_id != ids[i]) {
          throw IntegrityError("features and predictions query ids differ at row " +
                               std::to_string(i));
        }
        if (!preds[i].is_abstention()) preds[i].confidence = scores[i];
      }
      write_predictions_csv(ra_out, preds, !ra_numeric);
      std::cout << "wrote " << preds.size() << " re-ranked predictions to " << ra_out
                << "\n";
      return 0;
    }

    if (*eval) {
      const auto preds = read_predictions_csv(ev_predictions);
      const auto truth = GroundTruth::load_csv(ev_truth);
      std::vector<GapTraceRow> trace;
      const double gap = gap_at_1(preds, truth, ev_trace.empty() ? nullptr : &trace);
      std::printf("GAP@1 %.6f over %zu predictions\n", gap, preds.size());
      if (!ev_trace.empty()) {
        std::ofstream out(ev_trace, std::ios::trunc);
        if (!out) throw IoError("cannot open '" + ev_trace + "' for writing");
        out << "rank,query_id,landmark_id,confidence,correct,precision\n";
        char buf[64];
        for (std::size_t i = 0; i < trace.size(); ++i) {
          std::snprintf(buf, sizeof(buf), "%.6f,%d,%.6f", trace[i].confidence,
                        trace[i].correct ? 1 : 0, trace[i].precision_at_rank);
          out << (i + 1) << ',' << trace[i].query_id << ',' << trace[i].landmark
              << ',' << buf << '\n';
        }
      }
      if (!ev_neighbors.empty()) {
        if (ev_index.empty()) throw ParamError("mAP@100 needs --index");
        const auto index = load_descriptors(ev_index);
        if (!index.has_labels()) {
          throw IntegrityError("index set carries no landmark labels");
        }
        std::vector<std::string> query_ids;
        query_ids.reserve(truth.labels.size());
        for (const auto& [qid, label] : truth.labels) query_ids.push_back(qid);
        std::sort(query_ids.begin(), query_ids.end());
        const auto results = read_neighbors_csv(ev_neighbors, query_ids, index.ids());
        std::unordered_map<LandmarkLabel, std::unordered_set<std::string>> by_class;
        for (std::size_t i = 0; i < index.size(); ++i) {
          if (index.label(i) != kNonLandmark) by_class[index.label(i)].insert(index.id(i));
        }
        RelevantSets relevant;
        std::vector<RankedRetrieval> ranked(query_ids.size());
        for (std::size_t q = 0; q < query_ids.size(); ++q) {
          ranked[q].query_id = query_ids[q];
          for (std::uint32_t row : results[q].indices) {
            ranked[q].neighbor_ids.push_back(index.id(row));
          }
          const auto label = truth.labels.at(query_ids[q]);
          if (label != kNonLandmark && by_class.count(label)) {
            relevant[query_ids[q]] = by_class.at(label);
          }
        }
        std::size_t skipped = 0;
        const double map = map_at_100(ranked, relevant, &skipped);
        std::printf("mAP@100 %.6f over %zu queries (%zu skipped)\n", map,
                    ranked.size() - skipped, skipped);
      }
      return 0;
    }

    if (*run) {
      config.post.penalty_mode = parse_mode(run_mode);
      config.rule1 = !run_skip_rule1;
      config.rule2 = !run_skip_rule2;
      config.write_neighbors = !run_no_neighbors;
      config.empty_nonlandmark_field = !run_numeric;
      config.search = run_search_flags.options();
      const auto report = run_pipeline(config);
      for (const auto& t : report.timings) {
        std::printf("stage %-20s %10.2f ms\n", t.stage.c_str(), t.millis);
      }
      auto print_score = [](const char* name, const std::optional<double>& v) {
        if (v) std::printf("%s %.6f\n", name, *v);
      };
      print_score("GAP@1(raw)", report.gap_raw);
      print_score("GAP@1(rule1)", report.gap_rule1);
      print_score("GAP@1(rule2)", report.gap_rule2);
      print_score("GAP@1(rerank)", report.gap_rerank);
      print_score("mAP@100", report.map100);
      std::cout << "report: " << report.outputs.at("report") << "\n";
      return 0;
    }

    if (*grad) return cmd_check_grad(grad_maps, grad_seed);
  } catch (const StageError& e) {
    nlohmann::ordered_json err{{"error", e.category()},
                               {"stage", e.stage()},
                               {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const Error& e) {
    nlohmann::ordered_json err{{"error", e.category()}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    nlohmann::ordered_json err{{"error", "internal"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 2;
  }
  return 0;
}
