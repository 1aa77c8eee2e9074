#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "dialign/embedding.hpp"
#include "dialign/random.hpp"

namespace testing_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("dialign-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// T x D sequence with entries uniform in [lo, hi).
inline dialign::EmbeddingSequence random_sequence(dialign::SplitMix64& rng, std::size_t t, std::size_t d,
                                                  double lo = -1.0, double hi = 1.0) {
  dialign::EmbeddingSequence e;
  e.num_frames = t;
  e.dim = d;
  e.values.resize(t * d);
  for (float& v : e.values) v = static_cast<float>(rng.uniform(lo, hi));
  return e;
}

inline dialign::EmbeddingSequence random_unit_sequence(dialign::SplitMix64& rng, std::size_t t, std::size_t d) {
  return dialign::l2_normalize(random_sequence(rng, t, d));
}

inline dialign::EmbeddingSequence permute_rows(const dialign::EmbeddingSequence& e, dialign::SplitMix64& rng) {
  std::vector<std::size_t> order(e.num_frames);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  dialign::EmbeddingSequence out = e;
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t k = 0; k < e.dim; ++k) out.values[i * e.dim + k] = e.values[order[i] * e.dim + k];
  return out;
}

}  // namespace testing_support
