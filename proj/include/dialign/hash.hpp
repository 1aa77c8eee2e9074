#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>

#include "dialign/error.hpp"

namespace dialign {

/// Incremental 64-bit FNV-1a. Used for content hashes (cache keys, manifest
/// and config fingerprints); not a cryptographic hash.
class Fnv1a64 {
 public:
  static constexpr std::string_view kId = "fnv1a64";

  Fnv1a64& update(std::span<const unsigned char> bytes) {
    for (unsigned char b : bytes) {
      state_ ^= b;
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }

  Fnv1a64& update(std::string_view text) {
    return update(std::span<const unsigned char>(
        reinterpret_cast<const unsigned char*>(text.data()), text.size()));
  }

  std::uint64_t digest() const { return state_; }

  std::string hex() const { return to_hex(state_); }

  static std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(v));
    return buf;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string hash_text(std::string_view text) {
  return Fnv1a64().update(text).hex();
}

inline Fnv1a64& hash_file_into(Fnv1a64& h, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw runtime_error("cannot open " + path.string());
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    auto n = in.gcount();
    if (n > 0) h.update(std::string_view(buf, static_cast<std::size_t>(n)));
  }
  return h;
}

}  // namespace dialign
