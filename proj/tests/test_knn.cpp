#include "lmke/knn.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "lmke/errors.hpp"
#include "test_util.hpp"

using namespace lmke;

namespace {

// Independent naive scan: sequential float32 dot per pair, full sort,
// prefix k. This is the reference every engine configuration must equal.
SearchResults naive_top_k(const DescriptorSet& queries, const DescriptorSet& index,
                          std::size_t k) {
  SearchResults results(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::vector<std::pair<float, std::uint32_t>> sims(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
      float acc = 0.0f;
      const auto qr = queries.row(q);
      const auto ir = index.row(i);
      for (std::size_t t = 0; t < queries.dim(); ++t) acc += qr[t] * ir[t];
      sims[i] = {acc, static_cast<std::uint32_t>(i)};
    }
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t r = 0; r < k; ++r) {
      results[q].indices.push_back(sims[r].second);
      results[q].similarities.push_back(sims[r].first);
    }
  }
  return results;
}

void expect_identical(const SearchResults& a, const SearchResults& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t q = 0; q < a.size(); ++q) {
    ASSERT_EQ(a[q].indices, b[q].indices) << "query " << q;
    ASSERT_EQ(a[q].similarities, b[q].similarities) << "query " << q;
  }
}

}  // namespace

TEST(TopKSearch, SelfMatch) {
  std::mt19937 rng(3);
  const auto index = testing::random_unit_set(rng, 25, 16);
  DescriptorSet queries({"probe"},
                        {index.row(7).begin(), index.row(7).end()}, 16,
                        /*normalized=*/true);
  const auto results = top_k_search(queries, index, 1);
  ASSERT_EQ(results.size(), 1u);
  EXPECT_EQ(results[0].indices[0], 7u);
  EXPECT_NEAR(results[0].similarities[0], 1.0f, 1e-5f);
}

TEST(TopKSearch, FullOrderAtKEqualsN) {
  std::mt19937 rng(5);
  const auto queries = testing::random_unit_set(rng, 4, 8);
  const auto index = testing::random_unit_set(rng, 50, 8);
  const auto results = top_k_search(queries, index, index.size());
  expect_identical(results, naive_top_k(queries, index, index.size()));
  for (const auto& r : results) {
    for (std::size_t i = 1; i < r.similarities.size(); ++i) {
      EXPECT_GE(r.similarities[i - 1], r.similarities[i]);
    }
  }
}

TEST(TopKSearch, MatchesNaiveOracle) {
  for (unsigned seed = 0; seed < 20; ++seed) {
    std::mt19937 rng(seed + 100);
    const auto queries = testing::random_unit_set(rng, 30, 32);
    const auto index = testing::random_unit_set(rng, 400, 32);
    for (std::size_t k : {std::size_t{1}, std::size_t{5}, std::size_t{37}}) {
      expect_identical(top_k_search(queries, index, k),
                       naive_top_k(queries, index, k));
    }
  }
}

TEST(TopKSearch, IdenticalAcrossWorkerCounts) {
  std::mt19937 rng(7);
  const auto queries = testing::random_unit_set(rng, 64, 24);
  const auto index = testing::random_unit_set(rng, 300, 24);
  SearchOptions one{1, 16, 64}, two{2, 16, 64}, eight{8, 16, 64};
  const auto r1 = top_k_search(queries, index, 10, one);
  const auto r2 = top_k_search(queries, index, 10, two);
  const auto r8 = top_k_search(queries, index, 10, eight);
  expect_identical(r1, r2);
  expect_identical(r1, r8);
}

TEST(TopKSearch, BlockSizesDoNotChangeResults) {
  std::mt19937 rng(9);
  const auto queries = testing::random_unit_set(rng, 10, 16);
  const auto index = testing::random_unit_set(rng, 123, 16);
  const auto base = top_k_search(queries, index, 7, {2, 64, 512});
  expect_identical(base, top_k_search(queries, index, 7, {2, 1, 1}));
  expect_identical(base, top_k_search(queries, index, 7, {2, 3, 17}));
  expect_identical(base, top_k_search(queries, index, 7, {2, 1000, 1000}));
}

TEST(TopKSearch, PermutationEquivariance) {
  std::mt19937 rng(11);
  const auto queries = testing::random_unit_set(rng, 12, 16);
  const auto index = testing::random_unit_set(rng, 60, 16);
  const auto base = top_k_search(queries, index, 5);

  // Permute queries: results permute identically.
  std::vector<std::size_t> qperm(queries.size());
  std::iota(qperm.begin(), qperm.end(), 0);
  std::shuffle(qperm.begin(), qperm.end(), rng);
  std::vector<float> qmat;
  std::vector<std::string> qids;
  for (std::size_t q : qperm) {
    qmat.insert(qmat.end(), queries.row(q).begin(), queries.row(q).end());
    qids.push_back(queries.id(q));
  }
  const auto permuted_q =
      top_k_search(DescriptorSet(qids, std::move(qmat), 16, true), index, 5);
  for (std::size_t q = 0; q < qperm.size(); ++q) {
    EXPECT_EQ(permuted_q[q].indices, base[qperm[q]].indices);
    EXPECT_EQ(permuted_q[q].similarities, base[qperm[q]].similarities);
  }

  // Permute index rows: neighbor indices relabel, similarities unchanged.
  std::vector<std::size_t> iperm(index.size());
  std::iota(iperm.begin(), iperm.end(), 0);
  std::shuffle(iperm.begin(), iperm.end(), rng);
  std::vector<float> imat;
  std::vector<std::string> iids;
  for (std::size_t i : iperm) {
    imat.insert(imat.end(), index.row(i).begin(), index.row(i).end());
    iids.push_back(index.id(i));
  }
  std::vector<std::uint32_t> new_pos(index.size());
  for (std::size_t pos = 0; pos < iperm.size(); ++pos) {
    new_pos[iperm[pos]] = static_cast<std::uint32_t>(pos);
  }
  const auto permuted_i =
      top_k_search(queries, DescriptorSet(iids, std::move(imat), 16, true), 5);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    EXPECT_EQ(permuted_i[q].similarities, base[q].similarities);
    for (std::size_t r = 0; r < 5; ++r) {
      EXPECT_EQ(permuted_i[q].indices[r], new_pos[base[q].indices[r]]);
    }
  }
}

TEST(TopKSearch, TieBreakByAscendingIndex) {
  // Three identical index rows: the tie must resolve 0, 1, 2.
  std::vector<float> row = {0.6f, 0.8f};
  std::vector<float> mat;
  for (int i = 0; i < 3; ++i) mat.insert(mat.end(), row.begin(), row.end());
  DescriptorSet index({"a", "b", "c"}, std::move(mat), 2, true);
  DescriptorSet query({"q"}, {0.6f, 0.8f}, 2, true);
  const auto results = top_k_search(query, index, 3);
  EXPECT_EQ(results[0].indices, (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST(TopKSearch, InputValidation) {
  std::mt19937 rng(13);
  const auto raw = testing::random_set(rng, 5, 8);
  const auto unit = l2_normalize(raw);
  EXPECT_THROW(top_k_search(raw, unit, 1), NormError);
  EXPECT_THROW(top_k_search(unit, raw, 1), NormError);
  EXPECT_THROW(top_k_search(unit, unit, 0), ParamError);
  EXPECT_THROW(top_k_search(unit, unit, 6), ParamError);
}

TEST(FuseSimilarities, SingleSetIdentity) {
  SimTable table = {{{0u, 0.9f}, {3u, 0.1f}}, {{1u, 0.5f}}};
  const std::vector<double> weights = {1.0};
  const auto fused = fuse_similarities(std::span<const SimTable>(&table, 1), weights);
  ASSERT_EQ(fused.size(), table.size());
  EXPECT_EQ(fused[0], table[0]);
  EXPECT_EQ(fused[1], table[1]);
}

TEST(FuseSimilarities, IdenticalTablesAreFixedPoint) {
  SimTable table = {{{0u, 0.25f}, {2u, -0.5f}, {7u, 0.125f}}};
  std::vector<SimTable> tables = {table, table};
  const std::vector<double> weights = {1.0, 1.0};
  const auto fused = fuse_similarities(tables, weights);
  EXPECT_EQ(fused[0], table[0]);

  const std::vector<double> uneven = {0.3, 1.7};
  const auto fused2 = fuse_similarities(tables, uneven);
  for (std::size_t i = 0; i < table[0].size(); ++i) {
    EXPECT_EQ(fused2[0][i].first, table[0][i].first);
    EXPECT_NEAR(fused2[0][i].second, table[0][i].second, 1e-6f);
  }
}

TEST(FuseSimilarities, HandComputedMean) {
  SimTable a = {{{0u, 0.9f}, {1u, 0.1f}}};
  SimTable b = {{{0u, 0.5f}, {1u, 0.5f}}};
  std::vector<SimTable> tables = {a, b};
  const std::vector<double> weights = {1.0, 1.0};
  const auto fused = fuse_similarities(tables, weights);
  ASSERT_EQ(fused[0].size(), 2u);
  EXPECT_NEAR(fused[0][0].second, 0.7f, 1e-6f);
  EXPECT_NEAR(fused[0][1].second, 0.3f, 1e-6f);
}

TEST(FuseSimilarities, OrderInvariantWithUniformWeights) {
  SimTable a = {{{0u, 0.9f}, {1u, 0.1f}, {4u, 0.3f}}};
  SimTable b = {{{0u, 0.5f}, {1u, 0.5f}, {4u, -0.2f}}};
  SimTable c = {{{0u, 0.1f}, {1u, 0.8f}, {4u, 0.0f}}};
  const std::vector<double> w = {1.0, 1.0, 1.0};
  std::vector<SimTable> abc = {a, b, c};
  std::vector<SimTable> cba = {c, b, a};
  const auto f1 = fuse_similarities(abc, w);
  const auto f2 = fuse_similarities(cba, w);
  ASSERT_EQ(f1[0].size(), f2[0].size());
  for (std::size_t i = 0; i < f1[0].size(); ++i) {
    EXPECT_EQ(f1[0][i].first, f2[0][i].first);
    EXPECT_NEAR(f1[0][i].second, f2[0][i].second, 1e-6f);
  }
}

TEST(FuseSimilarities, IntersectionOnlyAndErrors) {
  SimTable a = {{{0u, 0.9f}, {1u, 0.1f}}};
  SimTable b = {{{1u, 0.5f}, {2u, 0.5f}}};
  std::vector<SimTable> tables = {a, b};
  const std::vector<double> w = {1.0, 1.0};
  const auto fused = fuse_similarities(tables, w);
  ASSERT_EQ(fused[0].size(), 1u);  // only index 1 is present in both
  EXPECT_EQ(fused[0][0].first, 1u);

  SimTable short_table = {};
  std::vector<SimTable> mismatched = {a, short_table};
  EXPECT_THROW(fuse_similarities(mismatched, w), IntegrityError);
  const std::vector<double> zero = {0.0, 0.0};
  EXPECT_THROW(fuse_similarities(tables, zero), ParamError);
}

TEST(FusedSearch, SingleSetMatchesPlainSearch) {
  std::mt19937 rng(17);
  auto queries = testing::random_unit_set(rng, 10, 16);
  auto index = testing::random_unit_set(rng, 80, 16);
  FeatureSetBundle qb({"f0"}, {queries}, {1.0});
  FeatureSetBundle ib({"f0"}, {index}, {1.0});
  expect_identical(top_k_search_fused(qb, ib, 9), top_k_search(queries, index, 9));
}

TEST(FusedSearch, DuplicatedSetMatchesSingle) {
  std::mt19937 rng(19);
  auto queries = testing::random_unit_set(rng, 10, 16);
  auto index = testing::random_unit_set(rng, 80, 16);
  FeatureSetBundle qb({"f0", "f1"}, {queries, queries}, {1.0, 1.0});
  FeatureSetBundle ib({"f0", "f1"}, {index, index}, {1.0, 1.0});
  expect_identical(top_k_search_fused(qb, ib, 9), top_k_search(queries, index, 9));
}

TEST(FusedSearch, MatchesPerPairOracle) {
  std::mt19937 rng(23);
  auto q0 = testing::random_unit_set(rng, 8, 16);
  auto q1 = testing::random_unit_set(rng, 8, 24);  // different dim is fine
  auto i0 = testing::random_unit_set(rng, 50, 16);
  auto i1 = testing::random_unit_set(rng, 50, 24);
  const std::vector<double> w = {2.0, 1.0};
  FeatureSetBundle qb({"a", "b"}, {q0, q1}, w);
  FeatureSetBundle ib({"a", "b"}, {i0, i1}, w);
  const auto fused = top_k_search_fused(qb, ib, 50);
  for (std::size_t q = 0; q < 8; ++q) {
    for (std::size_t r = 0; r < 50; ++r) {
      const auto i = fused[q].indices[r];
      const float s0 = dot_f32(q0.row(q), i0.row(i));
      const float s1 = dot_f32(q1.row(q), i1.row(i));
      const float expected = static_cast<float>(
          (2.0 * static_cast<double>(s0) + 1.0 * static_cast<double>(s1)) / 3.0);
      EXPECT_EQ(fused[q].similarities[r], expected);
    }
  }
}

TEST(FeatureSetBundle, RejectsMismatchedIds) {
  std::mt19937 rng(29);
  auto a = testing::random_unit_set(rng, 5, 8);
  DescriptorSet b(testing::sequential_ids("other", 5),
                  std::vector<float>(a.matrix()), 8, true);
  EXPECT_THROW(FeatureSetBundle({"a", "b"}, {a, b}, {1.0, 1.0}), IntegrityError);
}

TEST(NeighborsCsv, RoundTripAndFormat) {
  testing::TempDir dir;
  std::mt19937 rng(31);
  const auto queries = testing::random_unit_set(rng, 3, 8);
  const auto index = testing::random_unit_set(rng, 20, 8);
  const auto results = top_k_search(queries, index, 4);
  const auto path = dir.file("neighbors.csv");
  write_neighbors_csv(path, queries.ids(), index.ids(), results);

  const auto text = testing::read_file(path);
  EXPECT_EQ(text.substr(0, 34), "query_id,rank,index_id,similarity\n");
  // 6 decimal places in every similarity cell.
  std::size_t lines = std::count(text.begin(), text.end(), '\n');
  EXPECT_EQ(lines, 1u + 3u * 4u);

  const auto loaded = read_neighbors_csv(path, queries.ids(), index.ids());
  ASSERT_EQ(loaded.size(), results.size());
  for (std::size_t q = 0; q < results.size(); ++q) {
    EXPECT_EQ(loaded[q].indices, results[q].indices);
    for (std::size_t r = 0; r < results[q].similarities.size(); ++r) {
      EXPECT_NEAR(loaded[q].similarities[r], results[q].similarities[r], 1e-6f);
    }
  }
}
