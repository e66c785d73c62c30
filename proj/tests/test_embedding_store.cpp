#include "lmke/embedding_store.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "lmke/errors.hpp"
#include "test_util.hpp"

using namespace lmke;
using lmke::testing::TempDir;

namespace {

// Hand-assembled LMKE bytes, independent of save_descriptors.
std::string raw_lmke(std::uint8_t flags, std::uint32_t d, std::uint64_t n,
                     const std::vector<float>& payload,
                     const std::vector<std::string>& ids,
                     const std::vector<std::int64_t>& labels = {}) {
  std::string out = "LMKE";
  const std::uint32_t version = 1;
  out.append(reinterpret_cast<const char*>(&version), 4);
  out.push_back(static_cast<char>(flags));
  out.append(reinterpret_cast<const char*>(&d), 4);
  out.append(reinterpret_cast<const char*>(&n), 8);
  out.append(reinterpret_cast<const char*>(payload.data()),
             payload.size() * sizeof(float));
  for (const auto& id : ids) {
    out += id;
    out += '\n';
  }
  for (std::int64_t v : labels) {
    out.append(reinterpret_cast<const char*>(&v), 8);
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(EmbeddingStore, LoadSingleRowFile) {
  TempDir dir;
  const auto path = dir.file("one.lmke");
  write_file(path, raw_lmke(0, 2, 1, {3.0f, 4.0f}, {"q1"}));
  const auto set = load_descriptors(path);
  EXPECT_EQ(set.size(), 1u);
  EXPECT_EQ(set.dim(), 2u);
  EXPECT_FALSE(set.normalized());
  EXPECT_EQ(set.id(0), "q1");
  EXPECT_EQ(set.row(0)[0], 3.0f);
  EXPECT_EQ(set.row(0)[1], 4.0f);
}

TEST(EmbeddingStore, TruncatedPayloadRejected) {
  TempDir dir;
  const auto path = dir.file("short.lmke");
  // Header says n=10 but only 9 rows of payload follow.
  std::vector<float> payload(9 * 2, 1.0f);
  write_file(path, raw_lmke(0, 2, 10, payload, testing::sequential_ids("i", 10)));
  EXPECT_THROW(load_descriptors(path), TruncationError);
}

TEST(EmbeddingStore, BadMagicRejected) {
  TempDir dir;
  const auto path = dir.file("bad.lmke");
  auto bytes = raw_lmke(0, 2, 1, {1.0f, 2.0f}, {"a"});
  bytes[0] = 'X';
  write_file(path, bytes);
  EXPECT_THROW(load_descriptors(path), FormatError);
}

TEST(EmbeddingStore, BadVersionRejected) {
  TempDir dir;
  const auto path = dir.file("v9.lmke");
  auto bytes = raw_lmke(0, 2, 1, {1.0f, 2.0f}, {"a"});
  bytes[4] = 9;
  write_file(path, bytes);
  EXPECT_THROW(load_descriptors(path), FormatError);
}

TEST(EmbeddingStore, DuplicateIdsRejected) {
  TempDir dir;
  const auto path = dir.file("dup.lmke");
  write_file(path, raw_lmke(0, 2, 2, {1, 0, 0, 1}, {"same", "same"}));
  EXPECT_THROW(load_descriptors(path), IntegrityError);
}

TEST(EmbeddingStore, TrailingBytesRejected) {
  TempDir dir;
  const auto path = dir.file("trail.lmke");
  write_file(path, raw_lmke(0, 2, 1, {1, 0}, {"a"}) + "junk");
  EXPECT_THROW(load_descriptors(path), FormatError);
}

TEST(EmbeddingStore, NormalizedFlagVerifiedOnLoad) {
  TempDir dir;
  const auto path = dir.file("lying.lmke");
  write_file(path, raw_lmke(0x01, 2, 1, {3.0f, 4.0f}, {"a"}));
  EXPECT_THROW(load_descriptors(path), IntegrityError);
}

TEST(EmbeddingStore, EmptySetRejectedAtConstruction) {
  EXPECT_THROW(DescriptorSet({}, {}, 2), EmptySetError);
}

TEST(EmbeddingStore, SaveByteLayout) {
  TempDir dir;
  const auto path = dir.file("tiny.lmke");
  DescriptorSet set({"ab"}, {0.6f, 0.8f}, 2, /*normalized=*/true);
  save_descriptors(set, path);
  // 21 header bytes + 8 payload bytes + "ab\n".
  EXPECT_EQ(std::filesystem::file_size(path), 21u + 8u + 3u);
  const auto loaded = load_descriptors(path);
  EXPECT_TRUE(loaded.normalized());
  EXPECT_EQ(loaded.row(0)[0], 0.6f);
  EXPECT_EQ(loaded.row(0)[1], 0.8f);
}

TEST(EmbeddingStore, LabelsRoundTrip) {
  TempDir dir;
  const auto path = dir.file("labeled.lmke");
  DescriptorSet set({"a", "b", "c"}, {1, 0, 0, 1, 1, 1}, 2, false,
                    std::vector<LandmarkLabel>{5, -1, 123456789012345});
  save_descriptors(set, path);
  const auto loaded = load_descriptors(path);
  ASSERT_TRUE(loaded.has_labels());
  EXPECT_EQ(loaded.labels(), set.labels());
}

TEST(EmbeddingStore, RoundTripBitExact) {
  TempDir dir;
  std::mt19937 rng(7);
  const auto set = testing::random_set(rng, 100, 512, /*with_labels=*/true);
  const auto path = dir.file("big.lmke");
  save_descriptors(set, path);
  const auto loaded = load_descriptors(path);
  EXPECT_EQ(loaded.ids(), set.ids());
  EXPECT_EQ(loaded.labels(), set.labels());
  EXPECT_EQ(loaded.normalized(), set.normalized());
  ASSERT_EQ(loaded.matrix().size(), set.matrix().size());
  EXPECT_EQ(std::memcmp(loaded.matrix().data(), set.matrix().data(),
                        set.matrix().size() * sizeof(float)),
            0);
}

TEST(EmbeddingStore, RoundTripPropertyRandomShapes) {
  TempDir dir;
  std::mt19937 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    const std::size_t d = 1 + rng() % 48;
    const bool labels = (rng() % 2) == 0;
    const bool norm = (rng() % 2) == 0;
    auto set = testing::random_set(rng, n, d, labels);
    if (norm) set = l2_normalize(set);
    const auto path = dir.file("prop.lmke");
    save_descriptors(set, path);
    const auto loaded = load_descriptors(path);
    ASSERT_EQ(loaded.ids(), set.ids());
    ASSERT_EQ(loaded.normalized(), set.normalized());
    ASSERT_EQ(loaded.has_labels(), set.has_labels());
    if (labels) ASSERT_EQ(loaded.labels(), set.labels());
    ASSERT_EQ(std::memcmp(loaded.matrix().data(), set.matrix().data(),
                          set.matrix().size() * sizeof(float)),
              0);
  }
}

TEST(EmbeddingStore, SaveToUnwritablePath) {
  std::mt19937 rng(3);
  const auto set = testing::random_set(rng, 2, 4);
  EXPECT_THROW(save_descriptors(set, "/nonexistent_dir_zz/file.lmke"), IoError);
}

TEST(EmbeddingStore, NormalizeThreeFourFive) {
  DescriptorSet set({"a"}, {3.0f, 4.0f}, 2);
  const auto out = l2_normalize(set);
  EXPECT_TRUE(out.normalized());
  EXPECT_NEAR(out.row(0)[0], 0.6f, 1e-7);
  EXPECT_NEAR(out.row(0)[1], 0.8f, 1e-7);
}

TEST(EmbeddingStore, NormalizeIdempotent) {
  std::mt19937 rng(11);
  const auto once = l2_normalize(testing::random_set(rng, 20, 32));
  const auto twice = l2_normalize(once);
  for (std::size_t i = 0; i < once.size(); ++i) {
    for (std::size_t t = 0; t < once.dim(); ++t) {
      EXPECT_NEAR(once.row(i)[t], twice.row(i)[t], 1e-7f);
    }
  }
}

TEST(EmbeddingStore, NormalizeRowNorms) {
  std::mt19937 rng(13);
  const auto set = l2_normalize(testing::random_set(rng, 50, 512));
  for (std::size_t i = 0; i < set.size(); ++i) {
    double norm = 0.0;
    for (float v : set.row(i)) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    EXPECT_GE(norm, 1.0 - 1e-6);
    EXPECT_LE(norm, 1.0 + 1e-6);
  }
}

TEST(EmbeddingStore, NormalizeZeroRowNamesOffender) {
  DescriptorSet set({"ok", "bad_row"}, {1.0f, 0.0f, 0.0f, 0.0f}, 2);
  try {
    l2_normalize(set);
    FAIL() << "expected ZeroVectorError";
  } catch (const ZeroVectorError& e) {
    EXPECT_NE(std::string(e.what()).find("bad_row"), std::string::npos);
  }
}

// Positive per-row scaling must not change which other row is nearest to a
// fixed query once everything is normalized.
TEST(EmbeddingStore, NormalizationPreservesNearestNeighbor) {
  std::mt19937 rng(17);
  std::uniform_real_distribution<float> scale_dist(0.05f, 20.0f);
  for (int trial = 0; trial < 10; ++trial) {
    const auto base = testing::random_set(rng, 30, 16);
    std::vector<float> scaled = base.matrix();
    for (std::size_t i = 0; i < base.size(); ++i) {
      const float s = scale_dist(rng);
      for (std::size_t t = 0; t < base.dim(); ++t) scaled[i * base.dim() + t] *= s;
    }
    const auto a = l2_normalize(base);
    const auto b = l2_normalize(
        DescriptorSet(base.ids(), std::move(scaled), base.dim()));
    const auto query = a.row(0);
    auto argmax_other = [&](const DescriptorSet& set) {
      std::size_t best = 1;
      double best_sim = -2.0;
      for (std::size_t i = 1; i < set.size(); ++i) {
        double dot = 0.0;
        for (std::size_t t = 0; t < set.dim(); ++t) dot += query[t] * set.row(i)[t];
        if (dot > best_sim) {
          best_sim = dot;
          best = i;
        }
      }
      return best;
    };
    EXPECT_EQ(argmax_other(a), argmax_other(b));
  }
}
