#include "lmke/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

#include "lmke/errors.hpp"
#include "lmke/knn.hpp"

namespace lmke {

namespace {

// Mirrors the rule-1 default threshold; the generator manufactures
// distractors on either side of it with a small safety band.
constexpr double kSimTarget = 0.3;
constexpr double kSimBand = 0.005;
constexpr std::size_t kTopK = 3;
constexpr std::size_t kMaxTries = 200;
constexpr std::size_t kRefsPerCluster = 25;

// Hot distractors mix a landmark direction (for retrieval confidence) with a
// non-landmark cluster direction (to trip the rule) plus mild noise.
constexpr double kHotLandmarkWeight = 0.72;
constexpr double kHotNoiseShrink = 0.25;

std::vector<double> random_unit(SynthRng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm2 += x * x;
    }
  } while (norm2 <= 1e-24);
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : v) x *= inv;
  return v;
}

// normalize(base + sigma * g) cast to float32 storage.
std::vector<float> noisy_unit_row(SynthRng& rng, std::span<const double> base,
                                  double sigma) {
  std::vector<double> v(base.size());
  double norm2 = 0.0;
  for (std::size_t t = 0; t < base.size(); ++t) {
    v[t] = base[t] + sigma * rng.normal();
    norm2 += v[t] * v[t];
  }
  if (norm2 <= 1e-24) throw GenerationError("degenerate sample with zero norm");
  const double inv = 1.0 / std::sqrt(norm2);
  std::vector<float> row(base.size());
  for (std::size_t t = 0; t < base.size(); ++t) {
    row[t] = static_cast<float>(v[t] * inv);
  }
  return row;
}

// Mean of the top-3 float32 similarities against the reference rows,
// accumulated exactly the way the search engine does it.
double mean_top3_against(std::span<const float> row, const std::vector<float>& refs,
                         std::size_t num_refs, std::size_t dim) {
  std::vector<float> sims(num_refs);
  for (std::size_t i = 0; i < num_refs; ++i) {
    sims[i] = dot_f32(row, std::span<const float>(refs.data() + i * dim, dim));
  }
  const std::size_t k = std::min(kTopK, num_refs);
  std::partial_sort(sims.begin(), sims.begin() + k, sims.end(), std::greater<>());
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += static_cast<double>(sims[i]);
  return sum / static_cast<double>(k);
}

std::string sequential_id(const char* prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%06zu", prefix, n);
  return buf;
}

}  // namespace

std::uint64_t SynthRng::next_u64() {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double SynthRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SynthRng::normal() {
  const double u1 =
      (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

SynthDataset generate_synthetic(const SynthSpec& spec) {
  if (spec.num_landmarks == 0 || spec.images_per_landmark == 0 ||
      spec.queries_per_landmark == 0 || spec.num_nonlandmark_refs == 0 ||
      spec.dim == 0) {
    throw ParamError("synthetic spec counts must be >= 1");
  }
  if (!(spec.sigma > 0.0)) throw ParamError("sigma must be positive");
  if (spec.rho < 0.0 || spec.rho > 1.0) throw ParamError("rho must lie in [0, 1]");

  SynthRng rng(spec.seed);
  const std::size_t dim = spec.dim;

  std::vector<std::vector<double>> centroids(spec.num_landmarks);
  for (auto& c : centroids) c = random_unit(rng, dim);

  const std::size_t num_clusters =
      std::max<std::size_t>(1, (spec.num_nonlandmark_refs + kRefsPerCluster - 1) /
                                   kRefsPerCluster);
  std::vector<std::vector<double>> nl_centroids(num_clusters);
  for (auto& c : nl_centroids) c = random_unit(rng, dim);

  // Index set.
  const std::size_t n_index = spec.num_landmarks * spec.images_per_landmark;
  std::vector<float> index_matrix;
  index_matrix.reserve(n_index * dim);
  std::vector<std::string> index_ids;
  std::vector<LandmarkLabel> index_labels;
  for (std::size_t c = 0; c < spec.num_landmarks; ++c) {
    for (std::size_t i = 0; i < spec.images_per_landmark; ++i) {
      const auto row = noisy_unit_row(rng, centroids[c], spec.sigma);
      index_matrix.insert(index_matrix.end(), row.begin(), row.end());
      index_ids.push_back(sequential_id("ix", index_ids.size()));
      index_labels.push_back(static_cast<LandmarkLabel>(c));
    }
  }

  // Landmark queries.
  std::vector<float> query_matrix;
  std::vector<std::string> query_ids;
  GroundTruth truth;
  for (std::size_t c = 0; c < spec.num_landmarks; ++c) {
    for (std::size_t i = 0; i < spec.queries_per_landmark; ++i) {
      const auto row = noisy_unit_row(rng, centroids[c], spec.sigma);
      query_matrix.insert(query_matrix.end(), row.begin(), row.end());
      const auto id = sequential_id("qr", query_ids.size());
      truth.labels[id] = static_cast<LandmarkLabel>(c);
      query_ids.push_back(id);
    }
  }

  // Non-landmark reference set, emitted before distractors so they can be
  // measured against the final rows.
  std::vector<float> nl_matrix;
  std::vector<std::string> nl_ids;
  for (std::size_t i = 0; i < spec.num_nonlandmark_refs; ++i) {
    const auto row = noisy_unit_row(rng, nl_centroids[i % num_clusters], spec.sigma);
    nl_matrix.insert(nl_matrix.end(), row.begin(), row.end());
    nl_ids.push_back(sequential_id("nl", nl_ids.size()));
  }

  // Distractor queries: exactly hot_count of them above the target band.
  const std::size_t hot_count = static_cast<std::size_t>(
      std::ceil(spec.rho * static_cast<double>(spec.num_distractor_queries)));
  const double hot_weight = kHotLandmarkWeight;
  const double nl_weight = std::sqrt(1.0 - hot_weight * hot_weight);
  std::vector<double> mix(dim);
  for (std::size_t i = 0; i < spec.num_distractor_queries; ++i) {
    const bool hot = i < hot_count;
    std::vector<float> row;
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kMaxTries && !placed; ++attempt) {
      if (hot) {
        const auto& lm = centroids[i % spec.num_landmarks];
        const auto& nlc = nl_centroids[i % num_clusters];
        for (std::size_t t = 0; t < dim; ++t) {
          mix[t] = hot_weight * lm[t] + nl_weight * nlc[t];
        }
        row = noisy_unit_row(rng, mix, spec.sigma * kHotNoiseShrink);
        placed = mean_top3_against(row, nl_matrix, spec.num_nonlandmark_refs, dim) >
                 kSimTarget + kSimBand;
      } else {
        const auto cold = random_unit(rng, dim);
        row = noisy_unit_row(rng, cold, spec.sigma);
        placed = mean_top3_against(row, nl_matrix, spec.num_nonlandmark_refs, dim) <
                 kSimTarget - kSimBand;
      }
    }
    if (!placed) {
      throw GenerationError(
          std::string("cannot place a ") + (hot ? "hot" : "cold") +
          " distractor relative to the 0.3 mean-top-3 target; rho " +
          std::to_string(spec.rho) + " is infeasible at sigma " +
          std::to_string(spec.sigma));
    }
    query_matrix.insert(query_matrix.end(), row.begin(), row.end());
    const auto id = sequential_id("qr", query_ids.size());
    truth.labels[id] = kNonLandmark;
    query_ids.push_back(id);
  }

  DescriptorSet index(std::move(index_ids), std::move(index_matrix), dim,
                      /*normalized=*/true, std::move(index_labels));
  DescriptorSet queries(std::move(query_ids), std::move(query_matrix), dim,
                        /*normalized=*/true);
  DescriptorSet nonlandmark(std::move(nl_ids), std::move(nl_matrix), dim,
                            /*normalized=*/true);
  return SynthDataset{std::move(index), std::move(queries), std::move(nonlandmark),
                      std::move(truth)};
}

void write_synthetic(const SynthDataset& data, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  save_descriptors(data.index, out_dir / "index.lmke");
  save_descriptors(data.queries, out_dir / "queries.lmke");
  save_descriptors(data.nonlandmark, out_dir / "nonlandmark.lmke");
  data.truth.save_csv(out_dir / "truth.csv");
}

}  // namespace lmke
