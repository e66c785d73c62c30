#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lmke/embedding_store.hpp"

namespace lmke {

// Top-k neighbors of one query: similarities descending, ties broken by
// ascending index row, indices unique.
struct SearchResult {
  std::vector<std::uint32_t> indices;
  std::vector<float> similarities;
};

using SearchResults = std::vector<SearchResult>;

struct SearchOptions {
  unsigned threads = 0;        // 0 = hardware_concurrency
  std::size_t query_block = 64;
  std::size_t index_tile = 512;
};

// Exact top-k cosine search of normalized queries against a normalized
// index. Equals the naive O(n_index) scan per query: the k largest inner
// products in descending order, ties by ascending row index. Each dot
// product accumulates in ascending coordinate order, so output bytes are
// identical for any worker count or block size.
SearchResults top_k_search(const DescriptorSet& queries,
                           const DescriptorSet& index, std::size_t k,
                           const SearchOptions& opts = {});

// Named descriptor sets over the same images (one per feature extractor /
// TTA variant) plus non-negative fusion weights, at least one positive.
// Member sets must share ids in identical order; dims may differ.
class FeatureSetBundle {
 public:
  FeatureSetBundle(std::vector<std::string> names,
                   std::vector<DescriptorSet> sets, std::vector<double> weights);

  std::size_t num_sets() const { return sets_.size(); }
  std::size_t num_images() const { return sets_.front().size(); }
  const std::vector<std::string>& names() const { return names_; }
  const DescriptorSet& set(std::size_t f) const { return sets_[f]; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<std::string>& ids() const { return sets_.front().ids(); }

 private:
  std::vector<std::string> names_;
  std::vector<DescriptorSet> sets_;
  std::vector<double> weights_;
};

// Exact top-k search on the weighted-mean similarity across feature sets:
// fused(q,i) = sum_f w_f * sim_f(q,i) / sum_f w_f. Query and index bundles
// pair up by position and must carry matching feature names.
SearchResults top_k_search_fused(const FeatureSetBundle& queries,
                                 const FeatureSetBundle& index, std::size_t k,
                                 const SearchOptions& opts = {});

// Sparse per-query similarity rows keyed by index row, ascending.
using SimRow = std::vector<std::pair<std::uint32_t, float>>;
using SimTable = std::vector<SimRow>;

// Weighted-mean fusion over the (query, index) pairs present in every
// table. With a single weight-1 table this is the identity.
SimTable fuse_similarities(std::span<const SimTable> tables,
                           std::span<const double> weights);

SimTable to_sim_table(const SearchResults& results);

// CSV `query_id,rank,index_id,similarity`, rank 1-based, similarity at 6
// decimal places.
void write_neighbors_csv(const std::filesystem::path& path,
                         std::span<const std::string> query_ids,
                         std::span<const std::string> index_ids,
                         const SearchResults& results);

SearchResults read_neighbors_csv(const std::filesystem::path& path,
                                 std::span<const std::string> query_ids,
                                 std::span<const std::string> index_ids);

// Sequential inner product in ascending coordinate order; the canonical
// per-pair similarity every search path reproduces bit-for-bit.
float dot_f32(std::span<const float> a, std::span<const float> b);

}  // namespace lmke
