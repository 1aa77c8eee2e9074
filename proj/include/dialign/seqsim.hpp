#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "dialign/embedding.hpp"
#include "dialign/error.hpp"
#include "dialign/parallel.hpp"

namespace dialign {

/// Sequence-level recall, precision and their harmonic mean (SeqSim).
struct SeqSimScore {
  double recall = 0.0;     // mean over X frames of the best match in Y
  double precision = 0.0;  // mean over Y frames of the best match in X
  double f1 = 0.0;
};

/// Harmonic mean of precision and recall; 0 when p + r <= 1e-12. Equal inputs
/// return that value exactly, and the result is bitwise symmetric in (p, r).
inline double harmonic_f1(double precision, double recall) {
  const double den = precision + recall;
  if (!(den > 1e-12)) return 0.0;
  if (precision == recall) return precision;
  return 2.0 * (precision * recall) / den;
}

namespace detail {

inline void check_seqsim_inputs(const EmbeddingSequence& x, const EmbeddingSequence& y) {
  if (x.num_frames == 0 || y.num_frames == 0) throw validation_error("seqsim: empty sequence");
  if (x.dim != y.dim) {
    throw validation_error("seqsim: dimension mismatch (" + std::to_string(x.dim) + " vs " +
                           std::to_string(y.dim) + ")");
  }
}

inline SeqSimScore score_from_maxima(const std::vector<float>& row_max, const std::vector<float>& col_max) {
  double re = 0.0, pr = 0.0;
  for (float v : row_max) re += v;
  for (float v : col_max) pr += v;
  SeqSimScore s;
  s.recall = re / static_cast<double>(row_max.size());
  s.precision = pr / static_cast<double>(col_max.size());
  s.f1 = harmonic_f1(s.precision, s.recall);
  return s;
}

#ifndef DIALIGN_VEC_BYTES
#define DIALIGN_VEC_BYTES 64
#endif

inline constexpr std::size_t kVecWidth = DIALIGN_VEC_BYTES / sizeof(float);
inline constexpr std::size_t kLanes = 32;  // columns per register tile
inline constexpr std::size_t kVecsPerTile = kLanes / kVecWidth;
inline constexpr std::size_t kTileRows = 4;

typedef float FloatVec __attribute__((vector_size(DIALIGN_VEC_BYTES)));
typedef float UnalignedFloatVec
    __attribute__((vector_size(DIALIGN_VEC_BYTES), aligned(alignof(float)), may_alias));

inline FloatVec load_vec(const float* p) { return *reinterpret_cast<const UnalignedFloatVec*>(p); }

inline void store_vec(float* p, FloatVec v) { *reinterpret_cast<UnalignedFloatVec*>(p) = v; }

inline FloatVec max_vec(FloatVec a, FloatVec b) { return a > b ? a : b; }

/// Dot products of R consecutive X rows against one packed column strip,
/// folded straight into the running maxima. Each dot product accumulates
/// over k in index order, independent of R and of the block size. `mask`
/// holds 0 for real columns and -inf for padding.
template <std::size_t R>
inline void tile_maxima(const float* x, std::size_t dim, const float* packed, std::size_t padded_cols,
                        const float* mask, float* row_max, float* col_max) {
  for (std::size_t jc = 0; jc < padded_cols; jc += kLanes) {
    FloatVec acc[R][kVecsPerTile] = {};
    for (std::size_t k = 0; k < dim; ++k) {
      const float* yrow = packed + k * padded_cols + jc;
      FloatVec y[kVecsPerTile];
      for (std::size_t v = 0; v < kVecsPerTile; ++v) y[v] = load_vec(yrow + v * kVecWidth);
      for (std::size_t r = 0; r < R; ++r) {
        const float xv = x[r * dim + k];
        for (std::size_t v = 0; v < kVecsPerTile; ++v) acc[r][v] += xv * y[v];
      }
    }
    for (std::size_t v = 0; v < kVecsPerTile; ++v) {
      const FloatVec m = load_vec(mask + jc + v * kVecWidth);
      for (std::size_t r = 0; r < R; ++r) acc[r][v] += m;
    }
    for (std::size_t r = 0; r < R; ++r) {
      FloatVec best = acc[r][0];
      for (std::size_t v = 1; v < kVecsPerTile; ++v) best = max_vec(best, acc[r][v]);
      float rm = row_max[r];
      for (std::size_t l = 0; l < kVecWidth; ++l) rm = std::max(rm, best[l]);
      row_max[r] = rm;
    }
    for (std::size_t v = 0; v < kVecsPerTile; ++v) {
      FloatVec best = acc[0][v];
      for (std::size_t r = 1; r < R; ++r) best = max_vec(best, acc[r][v]);
      float* c = col_max + jc + v * kVecWidth;
      store_vec(c, max_vec(load_vec(c), best));
    }
  }
}

}  // namespace detail

/// Reference implementation: explicit double loop, 64-bit accumulation.
inline SeqSimScore seqsim_naive(const EmbeddingSequence& x, const EmbeddingSequence& y) {
  detail::check_seqsim_inputs(x, y);
  const std::size_t t1 = x.num_frames, t2 = y.num_frames, d = x.dim;
  std::vector<double> row_max(t1, -std::numeric_limits<double>::infinity());
  std::vector<double> col_max(t2, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < t1; ++i) {
    for (std::size_t j = 0; j < t2; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k)
        dot += static_cast<double>(x.values[i * d + k]) * static_cast<double>(y.values[j * d + k]);
      row_max[i] = std::max(row_max[i], dot);
      col_max[j] = std::max(col_max[j], dot);
    }
  }
  double re = 0.0, pr = 0.0;
  for (double v : row_max) re += v;
  for (double v : col_max) pr += v;
  SeqSimScore s;
  s.recall = re / static_cast<double>(t1);
  s.precision = pr / static_cast<double>(t2);
  s.f1 = harmonic_f1(s.precision, s.recall);
  return s;
}

struct SeqSimOptions {
  /// Y frames per packed block. Changing it never changes results.
  std::size_t block = 64;
};

/// Scratch buffers reused across seqsim_fast calls on one thread.
struct SeqSimWorkspace {
  std::vector<float> packed;
  std::vector<float> row_max;
  std::vector<float> col_max;
  std::vector<float> mask;
};

/// Blocked evaluation. Y is processed in blocks of `block` frames, each packed
/// transposed (D x block, zero-padded to the tile width); every X row is
/// multiplied against the packed block and folded into running row/column
/// maxima, so memory is O(block * D + T1 + T2). Dot products accumulate in
/// 32-bit; the final means accumulate in 64-bit.
inline SeqSimScore seqsim_fast(const EmbeddingSequence& x, const EmbeddingSequence& y,
                               const SeqSimOptions& opts = {}, SeqSimWorkspace* ws = nullptr) {
  detail::check_seqsim_inputs(x, y);
  using detail::kLanes;
  using detail::kTileRows;
  SeqSimWorkspace local;
  SeqSimWorkspace& w = ws ? *ws : local;

  const std::size_t t1 = x.num_frames, t2 = y.num_frames, d = x.dim;
  // Blocks are whole tiles so that only the final block carries padding.
  const std::size_t block = (std::max<std::size_t>(opts.block, 1) + kLanes - 1) / kLanes * kLanes;
  constexpr float kNegInf = -std::numeric_limits<float>::infinity();
  w.row_max.assign(t1, kNegInf);
  w.col_max.assign(t2 + kLanes, kNegInf);
  w.mask.assign(block, 0.0f);

  for (std::size_t j0 = 0; j0 < t2; j0 += block) {
    const std::size_t nb = std::min(block, t2 - j0);
    const std::size_t np = (nb + kLanes - 1) / kLanes * kLanes;
    w.packed.assign(d * np, 0.0f);
    for (std::size_t j = 0; j < nb; ++j) {
      const float* src = y.values.data() + (j0 + j) * d;
      for (std::size_t k = 0; k < d; ++k) w.packed[k * np + j] = src[k];
    }
    for (std::size_t j = 0; j < np; ++j) w.mask[j] = j < nb ? 0.0f : kNegInf;
    float* cmax = w.col_max.data() + j0;
    std::size_t i = 0;
    for (; i + kTileRows <= t1; i += kTileRows)
      detail::tile_maxima<kTileRows>(x.values.data() + i * d, d, w.packed.data(), np, w.mask.data(),
                                     w.row_max.data() + i, cmax);
    for (; i < t1; ++i)
      detail::tile_maxima<1>(x.values.data() + i * d, d, w.packed.data(), np, w.mask.data(), w.row_max.data() + i,
                             cmax);
  }
  w.col_max.resize(t2);
  return detail::score_from_maxima(w.row_max, w.col_max);
}

/// |queries| x |targets| matrix of f1 scores, row-major.
struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

struct BatchOptions {
  SeqSimOptions seqsim{};
  unsigned workers = 0;  // 0 = all cores
};

/// Cell (i, j) = seqsim_fast(queries[i], targets[j]).f1, computed in parallel
/// over query rows. Errors carry the offending (i, j).
inline ScoreMatrix seqsim_batch(const std::vector<EmbeddingSequence>& queries,
                                const std::vector<EmbeddingSequence>& targets, const BatchOptions& opts = {}) {
  ScoreMatrix out;
  out.rows = queries.size();
  out.cols = targets.size();
  out.values.assign(out.rows * out.cols, 0.0);
  std::size_t dim = 0;
  auto check = [&](const EmbeddingSequence& e, const char* side, std::size_t idx) {
    if (dim == 0) dim = e.dim;
    if (e.dim != dim) {
      throw validation_error(std::string("seqsim_batch: ") + side + "[" + std::to_string(idx) + "] has D=" +
                             std::to_string(e.dim) + ", expected D=" + std::to_string(dim));
    }
  };
  for (std::size_t i = 0; i < queries.size(); ++i) check(queries[i], "queries", i);
  for (std::size_t j = 0; j < targets.size(); ++j) check(targets[j], "targets", j);

  parallel_for(out.rows, opts.workers, [&](std::size_t i) {
    SeqSimWorkspace ws;
    for (std::size_t j = 0; j < out.cols; ++j) {
      try {
        out.values[i * out.cols + j] = seqsim_fast(queries[i], targets[j], opts.seqsim, &ws).f1;
      } catch (const Error& e) {
        throw Error(e.kind(), "pair (" + std::to_string(i) + ", " + std::to_string(j) + "): " + e.what());
      }
    }
  });
  return out;
}

}  // namespace dialign
