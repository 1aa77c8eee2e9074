#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dialign/corpus.hpp"
#include "dialign/error.hpp"
#include "dialign/fbank.hpp"

namespace dialign {

/// T x D frame embeddings of one utterance, row-major.
struct EmbeddingSequence {
  std::size_t num_frames = 0;
  std::size_t dim = 0;
  std::vector<float> values;
  float frame_rate_hz = 0.0f;
  bool normalized = false;

  EmbeddingSequence() = default;
  EmbeddingSequence(std::size_t t, std::size_t d, float rate = 0.0f)
      : num_frames(t), dim(d), values(t * d, 0.0f), frame_rate_hz(rate) {}

  /// Builds a sequence from nested rows; all rows must share one length.
  static EmbeddingSequence from_rows(const std::vector<std::vector<float>>& rows, float rate = 0.0f) {
    EmbeddingSequence e(rows.size(), rows.empty() ? 0 : rows.front().size(), rate);
    for (std::size_t t = 0; t < rows.size(); ++t) {
      if (rows[t].size() != e.dim) throw validation_error("ragged embedding rows");
      std::copy(rows[t].begin(), rows[t].end(), e.values.begin() + t * e.dim);
    }
    return e;
  }

  std::span<const float> row(std::size_t t) const { return {values.data() + t * dim, dim}; }
  std::span<float> row(std::size_t t) { return {values.data() + t * dim, dim}; }

  friend bool operator==(const EmbeddingSequence&, const EmbeddingSequence&) = default;
};

/// Rows with an L2 norm below this are treated as zero vectors.
inline constexpr double kZeroNormThreshold = 1e-12;

/// Divides every row by its L2 norm. Near-zero rows become exact zero rows
/// (never NaN); their count is written to `zero_rows` when given.
inline EmbeddingSequence l2_normalize(const EmbeddingSequence& e, std::size_t* zero_rows = nullptr) {
  EmbeddingSequence out = e;
  std::size_t zeros = 0;
  for (std::size_t t = 0; t < e.num_frames; ++t) {
    auto r = out.row(t);
    double sq = 0.0;
    for (float v : r) sq += static_cast<double>(v) * v;
    const double norm = std::sqrt(sq);
    if (norm < kZeroNormThreshold) {
      std::fill(r.begin(), r.end(), 0.0f);
      ++zeros;
      continue;
    }
    for (float& v : r) v = static_cast<float>(v / norm);
  }
  out.normalized = true;
  if (zero_rows) *zero_rows = zeros;
  return out;
}

/// Converts log-mel features to an f32 sequence with D = number of bins.
inline EmbeddingSequence features_to_sequence(const FeatureMatrix& f) {
  EmbeddingSequence e(f.num_frames, f.num_bins, static_cast<float>(f.frame_rate_hz()));
  for (std::size_t i = 0; i < f.data.size(); ++i) e.values[i] = static_cast<float>(f.data[i]);
  return e;
}

inline FeatureMatrix sequence_to_features(const EmbeddingSequence& e) {
  FeatureMatrix f;
  f.num_frames = e.num_frames;
  f.num_bins = e.dim;
  if (e.frame_rate_hz > 0.0f) f.frame_shift_ms = 1000.0 / e.frame_rate_hz;
  f.data.assign(e.values.begin(), e.values.end());
  return f;
}

// ---------------------------------------------------------------------------
// SQE binary format
//
//   offset  size  field
//   0       4     magic "SQE1"
//   4       4     u32 version (1)
//   8       4     u32 D
//   12      4     u32 T
//   16      4     f32 frame_rate_hz
//   20      1     u8 normalized (0/1)
//   21      3     padding (zero)
//   24      T*D*4 f32 values, row-major
//
// All multi-byte fields are little-endian.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kSqeVersion = 1;
inline constexpr std::size_t kSqeHeaderBytes = 24;

inline std::vector<unsigned char> encode_sqe(const EmbeddingSequence& e) {
  std::vector<unsigned char> out;
  out.reserve(kSqeHeaderBytes + e.values.size() * 4);
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
  };
  out.insert(out.end(), {'S', 'Q', 'E', '1'});
  put32(kSqeVersion);
  put32(static_cast<std::uint32_t>(e.dim));
  put32(static_cast<std::uint32_t>(e.num_frames));
  put32(std::bit_cast<std::uint32_t>(e.frame_rate_hz));
  out.push_back(e.normalized ? 1 : 0);
  out.insert(out.end(), {0, 0, 0});
  for (float v : e.values) put32(std::bit_cast<std::uint32_t>(v));
  return out;
}

inline EmbeddingSequence decode_sqe(std::span<const unsigned char> bytes) {
  auto get32 = [&](std::size_t off) {
    return std::uint32_t{bytes[off]} | (std::uint32_t{bytes[off + 1]} << 8) |
           (std::uint32_t{bytes[off + 2]} << 16) | (std::uint32_t{bytes[off + 3]} << 24);
  };
  if (bytes.size() < kSqeHeaderBytes || std::memcmp(bytes.data(), "SQE1", 4) != 0)
    throw validation_error("corrupt header: bad magic");
  if (get32(4) != kSqeVersion)
    throw validation_error("corrupt header: unsupported version " + std::to_string(get32(4)));
  const std::uint32_t d = get32(8);
  const std::uint32_t t = get32(12);
  const unsigned char flag = bytes[20];
  if (flag > 1) throw validation_error("corrupt header: normalized flag must be 0 or 1");
  const std::uint64_t expect = kSqeHeaderBytes + std::uint64_t{t} * d * 4;
  if (bytes.size() != expect) {
    throw validation_error("corrupt header: declared " + std::to_string(t) + "x" + std::to_string(d) +
                           " needs " + std::to_string(expect) + " bytes, file has " +
                           std::to_string(bytes.size()));
  }
  EmbeddingSequence e(t, d, std::bit_cast<float>(get32(16)));
  e.normalized = flag == 1;
  for (std::size_t i = 0; i < e.values.size(); ++i)
    e.values[i] = std::bit_cast<float>(get32(kSqeHeaderBytes + 4 * i));
  return e;
}

inline EmbeddingSequence read_sqe(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  try {
    return decode_sqe(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

inline void write_sqe(const std::filesystem::path& path, const EmbeddingSequence& e) {
  const auto bytes = encode_sqe(e);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw runtime_error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------

struct UtteranceKey {
  std::string site_id;
  std::int64_t sentence_id = 0;

  friend auto operator<=>(const UtteranceKey&, const UtteranceKey&) = default;
};

/// `<site_id>__<sentence_id>.sqe`
inline std::string sqe_file_name(const UtteranceKey& key) {
  return key.site_id + "__" + std::to_string(key.sentence_id) + ".sqe";
}

inline std::optional<UtteranceKey> parse_sqe_file_name(std::string_view name) {
  if (name.size() < 4 || name.substr(name.size() - 4) != ".sqe") return std::nullopt;
  name.remove_suffix(4);
  const auto sep = name.rfind("__");
  if (sep == std::string_view::npos || sep == 0) return std::nullopt;
  UtteranceKey key{std::string(name.substr(0, sep)), 0};
  const std::string_view num = name.substr(sep + 2);
  auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), key.sentence_id);
  if (ec != std::errc() || p != num.data() + num.size() || key.sentence_id < 1) return std::nullopt;
  return key;
}

/// Immutable map from utterance to embedding sequence with one uniform D.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  explicit EmbeddingStore(std::map<UtteranceKey, EmbeddingSequence> entries, std::string provider_id = "import")
      : entries_(std::move(entries)), provider_id_(std::move(provider_id)) {
    for (const auto& [key, seq] : entries_) {
      if (seq.num_frames == 0)
        throw validation_error("empty sequence for " + sqe_file_name(key) + " (T must be >= 1)");
      if (dim_ == 0) dim_ = seq.dim;
      if (seq.dim != dim_) {
        throw validation_error("dimension mismatch: " + sqe_file_name(key) + " has D=" +
                               std::to_string(seq.dim) + ", store has D=" + std::to_string(dim_));
      }
    }
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::string& provider_id() const { return provider_id_; }

  const EmbeddingSequence* find(const UtteranceKey& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }
  const EmbeddingSequence* find(std::string_view site, std::int64_t sentence) const {
    return find(UtteranceKey{std::string(site), sentence});
  }

  const std::map<UtteranceKey, EmbeddingSequence>& entries() const { return entries_; }

  /// Copy with every sequence L2-normalized; zero rows are counted.
  EmbeddingStore normalized(std::size_t* zero_rows = nullptr) const {
    std::map<UtteranceKey, EmbeddingSequence> out;
    std::size_t zeros = 0;
    for (const auto& [key, seq] : entries_) {
      std::size_t z = 0;
      out.emplace(key, l2_normalize(seq, &z));
      zeros += z;
    }
    if (zero_rows) *zero_rows = zeros;
    return EmbeddingStore(std::move(out), provider_id_);
  }

 private:
  std::map<UtteranceKey, EmbeddingSequence> entries_;
  std::size_t dim_ = 0;
  std::string provider_id_ = "import";
};

struct ImportResult {
  EmbeddingStore store;
  std::vector<std::string> warnings;
  std::size_t missing = 0;
};

/// Reads one file per manifest utterance. Missing files are warnings (the
/// utterance drops out of retrieval); dimension mismatches, empty sequences
/// and corrupt files are hard errors naming the file.
inline ImportResult import_embeddings(const std::filesystem::path& dir, const Manifest& m,
                                      const std::string& provider_id = "import") {
  ImportResult res;
  std::map<UtteranceKey, EmbeddingSequence> entries;
  std::size_t dim = 0;
  std::string dim_file;
  for (const Utterance& u : m.utterances()) {
    UtteranceKey key{u.site_id, u.sentence_id};
    const auto path = dir / sqe_file_name(key);
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
      res.warnings.push_back("missing embedding file " + path.string());
      ++res.missing;
      continue;
    }
    EmbeddingSequence seq = read_sqe(path);
    if (seq.num_frames == 0) throw validation_error(path.string() + ": empty sequence (T must be >= 1)");
    if (dim == 0) {
      dim = seq.dim;
      dim_file = path.string();
    } else if (seq.dim != dim) {
      throw validation_error("dimension mismatch: " + path.string() + " has D=" + std::to_string(seq.dim) +
                             ", expected D=" + std::to_string(dim) + " (from " + dim_file + ")");
    }
    entries.emplace(std::move(key), std::move(seq));
  }
  res.store = EmbeddingStore(std::move(entries), provider_id);
  return res;
}

/// Reads every `*.sqe` file in a directory whose name parses as a key.
inline EmbeddingStore import_directory(const std::filesystem::path& dir, const std::string& provider_id = "import") {
  if (!std::filesystem::is_directory(dir)) throw validation_error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && parse_sqe_file_name(entry.path().filename().string())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::map<UtteranceKey, EmbeddingSequence> entries;
  for (const auto& p : files) {
    EmbeddingSequence seq = read_sqe(p);
    if (seq.num_frames == 0) throw validation_error(p.string() + ": empty sequence (T must be >= 1)");
    if (!entries.empty() && seq.dim != entries.begin()->second.dim) {
      throw validation_error("dimension mismatch: " + p.string() + " has D=" + std::to_string(seq.dim) +
                             ", expected D=" + std::to_string(entries.begin()->second.dim));
    }
    entries.emplace(*parse_sqe_file_name(p.filename().string()), std::move(seq));
  }
  return EmbeddingStore(std::move(entries), provider_id);
}

inline void export_store(const EmbeddingStore& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [key, seq] : store.entries()) write_sqe(dir / sqe_file_name(key), seq);
}

}  // namespace dialign
