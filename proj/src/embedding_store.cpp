#include "lmke/embedding_store.hpp"

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "lmke/errors.hpp"

namespace lmke {

namespace {

constexpr char kMagic[4] = {'L', 'M', 'K', 'E'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kFlagNormalized = 0x01;
constexpr std::uint8_t kFlagLabels = 0x02;
constexpr double kNormTolerance = 1e-5;

double row_norm(std::span<const float> row) {
  double sum = 0.0;
  for (float v : row) sum += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(sum);
}

template <typename T>
void append_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));  // host is little-endian
}

template <typename T>
T read_le(const std::string& data, std::size_t& offset) {
  if (offset + sizeof(T) > data.size()) {
    throw TruncationError("file ends inside a fixed-width field");
  }
  T value;
  std::memcpy(&value, data.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace

DescriptorSet::DescriptorSet(std::vector<std::string> ids,
                             std::vector<float> matrix, std::size_t dim,
                             bool normalized,
                             std::optional<std::vector<LandmarkLabel>> labels)
    : ids_(std::move(ids)),
      labels_(std::move(labels)),
      matrix_(std::move(matrix)),
      dim_(dim),
      normalized_(normalized) {
  if (ids_.empty()) throw EmptySetError("descriptor set must contain at least one row");
  if (dim_ == 0) throw ParamError("descriptor dimension must be >= 1");
  if (matrix_.size() != ids_.size() * dim_) {
    throw IntegrityError("matrix size does not match n x d");
  }
  if (labels_ && labels_->size() != ids_.size()) {
    throw IntegrityError("labels length does not match ids length");
  }
  std::unordered_set<std::string_view> seen;
  seen.reserve(ids_.size());
  for (const auto& id : ids_) {
    if (id.find('\n') != std::string::npos || id.find('\r') != std::string::npos) {
      throw IntegrityError("id contains a newline: '" + id + "'");
    }
    if (!seen.insert(id).second) {
      throw IntegrityError("duplicate id: '" + id + "'");
    }
  }
  if (labels_) {
    for (LandmarkLabel v : *labels_) {
      if (v < kNonLandmark) throw IntegrityError("label below -1");
    }
  }
  if (normalized_) {
    for (std::size_t i = 0; i < ids_.size(); ++i) {
      const double norm = row_norm(row(i));
      if (std::abs(norm - 1.0) > kNormTolerance) {
        throw IntegrityError("row '" + ids_[i] +
                             "' claims normalized but has norm " +
                             std::to_string(norm));
      }
    }
  }
}

const std::vector<LandmarkLabel>& DescriptorSet::labels() const {
  if (!labels_) throw IntegrityError("descriptor set has no labels");
  return *labels_;
}

LandmarkLabel DescriptorSet::label(std::size_t i) const { return labels().at(i); }

DescriptorSet load_descriptors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path.string() + "'");

  std::size_t offset = 0;
  if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0) {
    throw FormatError("bad magic, not an LMKE file: '" + path.string() + "'");
  }
  offset = 4;
  const auto version = read_le<std::uint32_t>(data, offset);
  if (version != kVersion) {
    throw FormatError("unsupported LMKE version " + std::to_string(version));
  }
  const auto flags = read_le<std::uint8_t>(data, offset);
  if (flags & ~(kFlagNormalized | kFlagLabels)) {
    throw FormatError("unknown flag bits set");
  }
  const auto dim = read_le<std::uint32_t>(data, offset);
  const auto n = read_le<std::uint64_t>(data, offset);
  if (dim == 0) throw FormatError("header declares d = 0");
  if (n == 0) throw EmptySetError("header declares n = 0");

  const std::size_t payload_bytes = static_cast<std::size_t>(n) * dim * sizeof(float);
  if (offset + payload_bytes > data.size()) {
    throw TruncationError("payload shorter than header's n x d");
  }
  std::vector<float> matrix(static_cast<std::size_t>(n) * dim);
  std::memcpy(matrix.data(), data.data() + offset, payload_bytes);
  offset += payload_bytes;

  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::size_t nl = data.find('\n', offset);
    if (nl == std::string::npos) {
      throw TruncationError("ids sidecar ends before row " + std::to_string(i));
    }
    ids.emplace_back(data.substr(offset, nl - offset));
    offset = nl + 1;
  }

  std::optional<std::vector<LandmarkLabel>> labels;
  if (flags & kFlagLabels) {
    std::vector<LandmarkLabel> values(n);
    for (std::uint64_t i = 0; i < n; ++i) {
      values[i] = static_cast<LandmarkLabel>(read_le<std::int64_t>(data, offset));
    }
    labels = std::move(values);
  }
  if (offset != data.size()) {
    throw FormatError("trailing bytes after the last sidecar");
  }

  return DescriptorSet(std::move(ids), std::move(matrix), dim,
                       (flags & kFlagNormalized) != 0, std::move(labels));
}

void save_descriptors(const DescriptorSet& set, const std::filesystem::path& path) {
  std::string out;
  out.reserve(21 + set.size() * set.dim() * sizeof(float));
  out.append(kMagic, 4);
  append_le<std::uint32_t>(out, kVersion);
  std::uint8_t flags = 0;
  if (set.normalized()) flags |= kFlagNormalized;
  if (set.has_labels()) flags |= kFlagLabels;
  append_le<std::uint8_t>(out, flags);
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.dim()));
  append_le<std::uint64_t>(out, static_cast<std::uint64_t>(set.size()));
  out.append(reinterpret_cast<const char*>(set.matrix().data()),
             set.matrix().size() * sizeof(float));
  for (const auto& id : set.ids()) {
    out.append(id);
    out.push_back('\n');
  }
  if (set.has_labels()) {
    for (LandmarkLabel v : set.labels()) {
      append_le<std::int64_t>(out, static_cast<std::int64_t>(v));
    }
  }

  const auto tmp = path.parent_path() /
                   (path.filename().string() + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + tmp.string() + "' for writing");
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    os.flush();
    if (!os) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw IoError("write failure on '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename temp file onto '" + path.string() + "'");
  }
}

DescriptorSet l2_normalize(const DescriptorSet& set) {
  const std::size_t n = set.size();
  const std::size_t d = set.dim();
  std::vector<float> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = set.row(i);
    const double norm = row_norm(row);
    if (norm <= 1e-12) {
      throw ZeroVectorError("zero descriptor for id '" + set.id(i) + "'");
    }
    for (std::size_t t = 0; t < d; ++t) {
      out[i * d + t] = static_cast<float>(static_cast<double>(row[t]) / norm);
    }
  }
  std::optional<std::vector<LandmarkLabel>> labels;
  if (set.has_labels()) labels = set.labels();
  return DescriptorSet(set.ids(), std::move(out), d, /*normalized=*/true,
                       std::move(labels));
}

}  // namespace lmke
