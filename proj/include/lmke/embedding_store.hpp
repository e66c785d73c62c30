#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmke/types.hpp"

namespace lmke {

// Immutable n x d float32 descriptor matrix with per-row image ids and
// optional landmark labels. Safe to share read-only across workers.
//
// Invariants enforced at construction: ids unique and newline-free, matching
// lengths, d >= 1, n >= 1, labels >= -1, and (when the normalized flag is
// set) every row within 1e-5 of unit L2 norm.
class DescriptorSet {
 public:
  DescriptorSet(std::vector<std::string> ids, std::vector<float> matrix,
                std::size_t dim, bool normalized = false,
                std::optional<std::vector<LandmarkLabel>> labels = std::nullopt);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  bool normalized() const { return normalized_; }
  bool has_labels() const { return labels_.has_value(); }

  const std::vector<std::string>& ids() const { return ids_; }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  const std::vector<LandmarkLabel>& labels() const;
  LandmarkLabel label(std::size_t i) const;

  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(matrix_.data() + i * dim_, dim_);
  }
  const std::vector<float>& matrix() const { return matrix_; }

 private:
  std::vector<std::string> ids_;
  std::optional<std::vector<LandmarkLabel>> labels_;
  std::vector<float> matrix_;
  std::size_t dim_ = 0;
  bool normalized_ = false;
};

// LMKE binary container, little-endian:
//   bytes 0-3   magic "LMKE"
//   bytes 4-7   version u32 = 1
//   byte  8     flags u8: bit0 = normalized, bit1 = labels present
//   bytes 9-12  d u32
//   bytes 13-20 n u64
//   n*d float32 row-major payload
//   ids sidecar: n newline-terminated UTF-8 strings
//   labels sidecar (if bit1): n little-endian i64
DescriptorSet load_descriptors(const std::filesystem::path& path);

// Atomic: writes a temp file in the target directory then renames it.
void save_descriptors(const DescriptorSet& set, const std::filesystem::path& path);

// Returns a copy with every row scaled to unit L2 norm and the normalized
// flag set. Rows with norm <= 1e-12 raise ZeroVectorError naming the id.
DescriptorSet l2_normalize(const DescriptorSet& set);

}  // namespace lmke
