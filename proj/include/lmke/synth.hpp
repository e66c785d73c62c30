#pragma once

#include <cstdint>
#include <filesystem>

#include "lmke/embedding_store.hpp"
#include "lmke/metrics.hpp"

namespace lmke {

// Synthetic stand-in for the index / query / non-landmark split roles:
// per-class unit centroids with Gaussian coordinate noise sigma, plus
// distractor queries of which a fraction rho is constructed to trip the
// non-landmark similarity rule (mean top-3 similarity > 0.3 against the
// emitted reference set) while carrying landmark-grade retrieval confidence.
struct SynthSpec {
  std::size_t num_landmarks = 50;
  std::size_t images_per_landmark = 20;
  std::size_t queries_per_landmark = 5;
  std::size_t num_distractor_queries = 200;
  std::size_t num_nonlandmark_refs = 100;
  std::size_t dim = 512;
  double sigma = 0.05;  // per-coordinate noise std before re-normalization
  double rho = 0.3;     // fraction of distractors that must trip the rule
  std::uint64_t seed = 0;
};

struct SynthDataset {
  DescriptorSet index;        // labeled, normalized
  DescriptorSet queries;      // landmark queries then distractors, normalized
  DescriptorSet nonlandmark;  // reference set, normalized
  GroundTruth truth;
};

// Deterministic: identical seed gives bit-identical descriptor matrices and
// therefore bit-identical files. Exactly ceil(rho * num_distractor_queries)
// distractors exceed the 0.3 mean-top-3 target against the emitted
// reference set; the rest stay below it. Throws GenerationError when the
// requested rho is unreachable for the given sigma.
SynthDataset generate_synthetic(const SynthSpec& spec);

// Writes index.lmke, queries.lmke, nonlandmark.lmke and truth.csv.
void write_synthetic(const SynthDataset& data, const std::filesystem::path& out_dir);

// splitmix64 stream with Box-Muller normals; self-contained so that files
// are reproducible independent of the standard library's distributions.
class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double normal();

 private:
  std::uint64_t state_;
};

}  // namespace lmke
