#include "lmke/knn.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "lmke/errors.hpp"
#include "lmke/parallel.hpp"

namespace lmke {

namespace {

// Index rows transposed tile by tile: within a tile, coordinate t of the
// tile's rows is contiguous, so the kernel's inner loop vectorizes while
// each (query, row) pair still accumulates in ascending t order.
struct TransposedIndex {
  std::size_t tile = 0;
  std::size_t dim = 0;
  std::size_t rows = 0;
  std::vector<float> data;  // tile-major: [tile_base * dim + t * tile_width + r]
  std::vector<std::size_t> tile_offsets;

  TransposedIndex(const DescriptorSet& index, std::size_t tile_rows)
      : tile(tile_rows), dim(index.dim()), rows(index.size()) {
    const std::size_t num_tiles = (rows + tile - 1) / tile;
    data.resize(rows * dim);
    tile_offsets.resize(num_tiles);
    std::size_t offset = 0;
    for (std::size_t t = 0; t < num_tiles; ++t) {
      tile_offsets[t] = offset;
      const std::size_t row0 = t * tile;
      const std::size_t width = std::min(tile, rows - row0);
      for (std::size_t r = 0; r < width; ++r) {
        const auto row = index.row(row0 + r);
        for (std::size_t c = 0; c < dim; ++c) {
          data[offset + c * width + r] = row[c];
        }
      }
      offset += width * dim;
    }
  }
};

// sims[r] += q . row_r over one transposed tile.
void accumulate_tile(const float* __restrict__ query, const float* __restrict__ tile,
                     std::size_t dim, std::size_t width, float* __restrict__ sims) {
  for (std::size_t t = 0; t < dim; ++t) {
    const float qt = query[t];
    const float* row = tile + t * width;
    for (std::size_t r = 0; r < width; ++r) {
      sims[r] += qt * row[r];
    }
  }
}

struct Candidate {
  float sim;
  std::uint32_t idx;
};

bool ranks_before(const Candidate& a, const Candidate& b) {
  if (a.sim != b.sim) return a.sim > b.sim;
  return a.idx < b.idx;
}

SearchResult select_top_k(std::vector<Candidate>& candidates, std::size_t k) {
  if (k < candidates.size()) {
    std::nth_element(candidates.begin(), candidates.begin() + k,
                     candidates.end(), ranks_before);
    candidates.resize(k);
  }
  std::sort(candidates.begin(), candidates.end(), ranks_before);
  SearchResult result;
  result.indices.reserve(candidates.size());
  result.similarities.reserve(candidates.size());
  for (const auto& c : candidates) {
    result.indices.push_back(c.idx);
    result.similarities.push_back(c.sim);
  }
  return result;
}

void check_search_inputs(const DescriptorSet& queries, const DescriptorSet& index,
                         std::size_t k) {
  if (!queries.normalized()) throw NormError("queries are not normalized");
  if (!index.normalized()) throw NormError("index is not normalized");
  if (queries.dim() != index.dim()) {
    throw ParamError("query dim " + std::to_string(queries.dim()) +
                     " != index dim " + std::to_string(index.dim()));
  }
  if (k == 0 || k > index.size()) {
    throw ParamError("k must lie in [1, n_index]");
  }
}

}  // namespace

float dot_f32(std::span<const float> a, std::span<const float> b) {
  float acc = 0.0f;
  for (std::size_t t = 0; t < a.size(); ++t) acc += a[t] * b[t];
  return acc;
}

SearchResults top_k_search(const DescriptorSet& queries, const DescriptorSet& index,
                           std::size_t k, const SearchOptions& opts) {
  check_search_inputs(queries, index, k);
  const std::size_t n = index.size();
  const std::size_t d = index.dim();
  const TransposedIndex tindex(index, std::max<std::size_t>(1, opts.index_tile));

  SearchResults results(queries.size());
  parallel_for_blocks(
      queries.size(), std::max<std::size_t>(1, opts.query_block), opts.threads,
      [&](std::size_t begin, std::size_t end) {
        std::vector<float> sims(n);
        std::vector<Candidate> candidates;
        for (std::size_t q = begin; q < end; ++q) {
          std::fill(sims.begin(), sims.end(), 0.0f);
          const float* qrow = queries.row(q).data();
          for (std::size_t tb = 0; tb < tindex.tile_offsets.size(); ++tb) {
            const std::size_t row0 = tb * tindex.tile;
            const std::size_t width = std::min(tindex.tile, n - row0);
            accumulate_tile(qrow, tindex.data.data() + tindex.tile_offsets[tb],
                            d, width, sims.data() + row0);
          }
          candidates.resize(n);
          for (std::size_t i = 0; i < n; ++i) {
            candidates[i] = {sims[i], static_cast<std::uint32_t>(i)};
          }
          results[q] = select_top_k(candidates, k);
        }
      });
  return results;
}

FeatureSetBundle::FeatureSetBundle(std::vector<std::string> names,
                                   std::vector<DescriptorSet> sets,
                                   std::vector<double> weights)
    : names_(std::move(names)), sets_(std::move(sets)), weights_(std::move(weights)) {
  if (sets_.empty()) throw ParamError("bundle needs at least one feature set");
  if (names_.size() != sets_.size() || weights_.size() != sets_.size()) {
    throw ParamError("bundle names/sets/weights lengths differ");
  }
  double total = 0.0;
  for (double w : weights_) {
    if (w < 0.0) throw ParamError("feature weights must be non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw ParamError("at least one feature weight must be positive");
  for (std::size_t f = 1; f < sets_.size(); ++f) {
    if (sets_[f].ids() != sets_[0].ids()) {
      throw IntegrityError("feature set '" + names_[f] +
                           "' does not share ids with '" + names_[0] + "'");
    }
  }
}

SearchResults top_k_search_fused(const FeatureSetBundle& queries,
                                 const FeatureSetBundle& index, std::size_t k,
                                 const SearchOptions& opts) {
  if (queries.num_sets() != index.num_sets()) {
    throw IntegrityError("query and index bundles hold different feature counts");
  }
  if (queries.names() != index.names()) {
    throw IntegrityError("query and index bundle feature names differ");
  }
  const std::size_t num_sets = queries.num_sets();
  for (std::size_t f = 0; f < num_sets; ++f) {
    check_search_inputs(queries.set(f), index.set(f), k);
  }

  const double weight_sum =
      std::accumulate(queries.weights().begin(), queries.weights().end(), 0.0);
  const std::size_t n = index.num_images();
  std::vector<TransposedIndex> tindex;
  tindex.reserve(num_sets);
  for (std::size_t f = 0; f < num_sets; ++f) {
    tindex.emplace_back(index.set(f), std::max<std::size_t>(1, opts.index_tile));
  }

  SearchResults results(queries.num_images());
  parallel_for_blocks(
      queries.num_images(), std::max<std::size_t>(1, opts.query_block), opts.threads,
      [&](std::size_t begin, std::size_t end) {
        std::vector<float> sims(n);
        std::vector<double> fused(n);
        std::vector<Candidate> candidates;
        for (std::size_t q = begin; q < end; ++q) {
          std::fill(fused.begin(), fused.end(), 0.0);
          for (std::size_t f = 0; f < num_sets; ++f) {
            const double w = queries.weights()[f];
            std::fill(sims.begin(), sims.end(), 0.0f);
            const float* qrow = queries.set(f).row(q).data();
            const auto& ti = tindex[f];
            for (std::size_t tb = 0; tb < ti.tile_offsets.size(); ++tb) {
              const std::size_t row0 = tb * ti.tile;
              const std::size_t width = std::min(ti.tile, n - row0);
              accumulate_tile(qrow, ti.data.data() + ti.tile_offsets[tb],
                              ti.dim, width, sims.data() + row0);
            }
            for (std::size_t i = 0; i < n; ++i) {
              fused[i] += w * static_cast<double>(sims[i]);
            }
          }
          candidates.resize(n);
          for (std::size_t i = 0; i < n; ++i) {
            candidates[i] = {static_cast<float>(fused[i] / weight_sum),
                             static_cast<std::uint32_t>(i)};
          }
          results[q] = select_top_k(candidates, k);
        }
      });
  return results;
}

SimTable fuse_similarities(std::span<const SimTable> tables,
                           std::span<const double> weights) {
  if (tables.empty()) throw ParamError("no similarity tables to fuse");
  if (tables.size() != weights.size()) {
    throw ParamError("table and weight counts differ");
  }
  double weight_sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ParamError("fusion weights must be non-negative");
    weight_sum += w;
  }
  if (!(weight_sum > 0.0)) throw ParamError("fusion weights sum to zero");
  const std::size_t num_queries = tables[0].size();
  for (const auto& t : tables) {
    if (t.size() != num_queries) {
      throw IntegrityError("similarity tables cover different query counts");
    }
  }

  SimTable out(num_queries);
  std::vector<std::size_t> cursor(tables.size());
  for (std::size_t q = 0; q < num_queries; ++q) {
    std::fill(cursor.begin(), cursor.end(), 0);
    const SimRow& lead = tables[0][q];
    for (const auto& [idx, sim] : lead) {
      double acc = weights[0] * static_cast<double>(sim);
      bool in_all = true;
      for (std::size_t f = 1; f < tables.size(); ++f) {
        const SimRow& row = tables[f][q];
        std::size_t& c = cursor[f];
        while (c < row.size() && row[c].first < idx) ++c;
        if (c == row.size() || row[c].first != idx) {
          in_all = false;
          break;
        }
        acc += weights[f] * static_cast<double>(row[c].second);
      }
      if (in_all) {
        out[q].emplace_back(idx, static_cast<float>(acc / weight_sum));
      }
    }
  }
  return out;
}

SimTable to_sim_table(const SearchResults& results) {
  SimTable table(results.size());
  for (std::size_t q = 0; q < results.size(); ++q) {
    SimRow& row = table[q];
    row.reserve(results[q].indices.size());
    for (std::size_t r = 0; r < results[q].indices.size(); ++r) {
      row.emplace_back(results[q].indices[r], results[q].similarities[r]);
    }
    std::sort(row.begin(), row.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  return table;
}

void write_neighbors_csv(const std::filesystem::path& path,
                         std::span<const std::string> query_ids,
                         std::span<const std::string> index_ids,
                         const SearchResults& results) {
  if (query_ids.size() != results.size()) {
    throw IntegrityError("query id count does not match result count");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "query_id,rank,index_id,similarity\n";
  char buf[32];
  for (std::size_t q = 0; q < results.size(); ++q) {
    const auto& r = results[q];
    for (std::size_t rank = 0; rank < r.indices.size(); ++rank) {
      std::snprintf(buf, sizeof(buf), "%.6f", r.similarities[rank]);
      out << query_ids[q] << ',' << (rank + 1) << ',' << index_ids[r.indices[rank]]
          << ',' << buf << '\n';
    }
  }
  if (!out) throw IoError("write failure on '" + path.string() + "'");
}

SearchResults read_neighbors_csv(const std::filesystem::path& path,
                                 std::span<const std::string> query_ids,
                                 std::span<const std::string> index_ids) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::unordered_map<std::string, std::size_t> qpos, ipos;
  for (std::size_t i = 0; i < query_ids.size(); ++i) qpos[query_ids[i]] = i;
  for (std::size_t i = 0; i < index_ids.size(); ++i) ipos[index_ids[i]] = i;

  SearchResults results(query_ids.size());
  std::string line;
  std::getline(in, line);  // header
  if (line != "query_id,rank,index_id,similarity") {
    throw FormatError("unexpected neighbors CSV header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string qid, rank_s, iid, sim_s;
    if (!std::getline(ss, qid, ',') || !std::getline(ss, rank_s, ',') ||
        !std::getline(ss, iid, ',') || !std::getline(ss, sim_s)) {
      throw FormatError("malformed neighbors CSV row: " + line);
    }
    auto qit = qpos.find(qid);
    if (qit == qpos.end()) throw IntegrityError("unknown query id '" + qid + "'");
    auto iit = ipos.find(iid);
    if (iit == ipos.end()) throw IntegrityError("unknown index id '" + iid + "'");
    results[qit->second].indices.push_back(static_cast<std::uint32_t>(iit->second));
    results[qit->second].similarities.push_back(std::stof(sim_s));
  }
  return results;
}

}  // namespace lmke
