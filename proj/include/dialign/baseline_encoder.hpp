#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dialign/embedding.hpp"
#include "dialign/error.hpp"
#include "dialign/fbank.hpp"
#include "dialign/random.hpp"

namespace dialign {

struct BaselineEncoderOptions {
  int stack = 4;
  int stride = 4;
  int out_dim = 64;
  std::uint64_t seed = 17;
  /// Subtract the per-utterance mean of each feature bin before stacking.
  bool mean_normalize = true;
};

/// Number of stacked frame groups for T input frames.
inline std::size_t baseline_output_frames(std::size_t t, int stack, int stride) {
  if (t == 0) return 0;
  if (t <= static_cast<std::size_t>(stack)) return 1;
  const std::size_t rest = t - stack;
  return 1 + (rest + stride - 1) / stride;
}

/// Deterministic stand-in for a trained speech encoder: stacks consecutive
/// feature frames, applies a fixed random projection and L2-normalizes.
///
/// Projection entries are uniform in [-sqrt(3/n), sqrt(3/n)) for an n-wide
/// input, drawn from SplitMix64 in row-major order. Only integer operations
/// and one IEEE multiply touch the seed stream, so the matrix is identical
/// across platforms.
class BaselineEncoder {
 public:
  BaselineEncoder(std::size_t feature_dim, BaselineEncoderOptions opts = {})
      : opts_(opts), feature_dim_(feature_dim) {
    if (opts.stack < 1 || opts.stride < 1 || opts.out_dim < 1)
      throw validation_error("stack, stride and out_dim must be >= 1");
    if (feature_dim == 0) throw validation_error("feature dimension must be >= 1");
    in_dim_ = feature_dim * static_cast<std::size_t>(opts.stack);
    projection_.resize(static_cast<std::size_t>(opts.out_dim) * in_dim_);
    SplitMix64 rng(opts.seed);
    const double scale = std::sqrt(3.0 / static_cast<double>(in_dim_));
    for (float& w : projection_) w = static_cast<float>(rng.uniform(-1.0, 1.0) * scale);
  }

  const BaselineEncoderOptions& options() const { return opts_; }

  /// Provider identifier recorded in reports and cache keys.
  std::string id() const {
    return "baseline-v1/" + std::string(SplitMix64::kId) + "/stack" + std::to_string(opts_.stack) + "/stride" +
           std::to_string(opts_.stride) + "/dim" + std::to_string(opts_.out_dim) + "/seed" +
           std::to_string(opts_.seed) + (opts_.mean_normalize ? "/cmn" : "");
  }

  EmbeddingSequence encode(const FeatureMatrix& f) const {
    if (f.num_frames == 0) throw validation_error("cannot encode an empty feature matrix");
    if (f.num_bins != feature_dim_) {
      throw validation_error("feature dimension " + std::to_string(f.num_bins) + " != encoder input " +
                             std::to_string(feature_dim_));
    }
    const std::size_t t_in = f.num_frames;
    const std::size_t fd = feature_dim_;

    std::vector<double> mean(fd, 0.0);
    if (opts_.mean_normalize) {
      for (std::size_t t = 0; t < t_in; ++t)
        for (std::size_t b = 0; b < fd; ++b) mean[b] += f.at(t, b);
      for (double& m : mean) m /= static_cast<double>(t_in);
    }

    const std::size_t t_out = baseline_output_frames(t_in, opts_.stack, opts_.stride);
    const auto out_dim = static_cast<std::size_t>(opts_.out_dim);
    EmbeddingSequence out(t_out, out_dim, static_cast<float>(f.frame_rate_hz() / opts_.stride));
    std::vector<double> stacked(in_dim_);
    for (std::size_t g = 0; g < t_out; ++g) {
      for (int s = 0; s < opts_.stack; ++s) {
        const std::size_t src = std::min(g * opts_.stride + s, t_in - 1);  // repeat-last padding
        for (std::size_t b = 0; b < fd; ++b) stacked[s * fd + b] = f.at(src, b) - mean[b];
      }
      auto row = out.row(g);
      for (std::size_t o = 0; o < out_dim; ++o) {
        const float* w = projection_.data() + o * in_dim_;
        double acc = 0.0;
        for (std::size_t i = 0; i < in_dim_; ++i) acc += w[i] * stacked[i];
        row[o] = static_cast<float>(acc);
      }
    }
    return l2_normalize(out);
  }

 private:
  BaselineEncoderOptions opts_;
  std::size_t feature_dim_;
  std::size_t in_dim_ = 0;
  std::vector<float> projection_;  // out_dim x in_dim, row-major
};

inline EmbeddingSequence baseline_encode(const FeatureMatrix& f, const BaselineEncoderOptions& opts = {}) {
  return BaselineEncoder(f.num_bins, opts).encode(f);
}

}  // namespace dialign
