#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lmke/errors.hpp"
#include "lmke/postprocess.hpp"
#include "lmke/recognition.hpp"

namespace lmke {

// Wraps a module error with the pipeline stage it surfaced in; later stages
// are skipped once one fails.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.category(),
              "stage '" + stage + "': " + std::string(cause.what())),
        stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct PipelineConfig {
  // One entry per feature set; queries and index pair up by position.
  std::vector<std::string> query_paths;
  std::vector<std::string> index_paths;
  std::vector<double> feature_weights;  // empty = uniform 1.0

  std::string nonlandmark_path;      // empty disables rule 1
  std::string classifier_probs_path; // optional
  std::string truth_path;            // empty disables metrics
  std::string rerank_model_path;     // empty disables the re-rank stage
  std::string out_dir = ".";

  std::size_t k_search = 100;
  FusionParams fusion;
  PostprocessParams post;
  SearchOptions search;
  bool rule1 = true;
  bool rule2 = true;
  bool write_neighbors = true;
  bool empty_nonlandmark_field = true;
  std::uint64_t seed = 0;  // recorded for provenance only
};

struct StageTiming {
  std::string stage;
  double millis = 0.0;
};

struct PipelineReport {
  std::optional<double> gap_raw;
  std::optional<double> gap_rule1;
  std::optional<double> gap_rule2;
  std::optional<double> gap_rerank;
  std::optional<double> map100;
  std::size_t map_skipped = 0;
  std::size_t num_queries = 0;
  std::size_t num_index = 0;
  std::size_t num_feature_sets = 0;
  std::uint64_t seed = 0;
  std::vector<StageTiming> timings;
  std::map<std::string, std::string> outputs;  // stage -> emitted file

  // Deterministic for a fixed config and inputs: timings are reported on
  // the console only, never serialized.
  std::string to_json_string() const;
};

// index -> search -> predict -> rule 1 -> rule 2 -> optional re-rank ->
// evaluate. Every stage's predictions are dumped so ablations between the
// raw and post-processed scores fall out of one run.
PipelineReport run_pipeline(const PipelineConfig& config);

}  // namespace lmke
