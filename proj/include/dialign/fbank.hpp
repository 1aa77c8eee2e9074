#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "dialign/error.hpp"
#include "dialign/wav.hpp"

namespace dialign {

struct FbankOptions {
  int num_bins = 80;
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  double low_freq_hz = 20.0;
  double high_freq_hz = 0.0;  // <= 0 means Nyquist
  int sample_rate_hz = kSampleRateHz;
  double energy_floor = 1e-10;

  int window_samples() const {
    return static_cast<int>(std::lround(sample_rate_hz * frame_length_ms / 1000.0));
  }
  int hop_samples() const {
    return static_cast<int>(std::lround(sample_rate_hz * frame_shift_ms / 1000.0));
  }
  double upper_freq_hz() const { return high_freq_hz > 0.0 ? high_freq_hz : sample_rate_hz / 2.0; }

  /// Canonical parameter string; part of feature cache keys.
  std::string id() const {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "fbank-v1/bins%d/len%.3f/shift%.3f/lo%.3f/hi%.3f/sr%d/floor%g",
                  num_bins, frame_length_ms, frame_shift_ms, low_freq_hz, upper_freq_hz(),
                  sample_rate_hz, energy_floor);
    return buf;
  }
};

/// T x F log-mel energies, row-major.
struct FeatureMatrix {
  std::size_t num_frames = 0;
  std::size_t num_bins = 0;
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  std::vector<double> data;

  std::span<const double> row(std::size_t t) const {
    return {data.data() + t * num_bins, num_bins};
  }
  std::span<double> row(std::size_t t) { return {data.data() + t * num_bins, num_bins}; }
  double at(std::size_t t, std::size_t b) const { return data[t * num_bins + b]; }
  double frame_rate_hz() const { return 1000.0 / frame_shift_ms; }
};

inline double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

/// Number of frames produced for `num_samples` samples.
inline std::size_t num_frames_for(std::size_t num_samples, int window, int hop) {
  if (num_samples < static_cast<std::size_t>(window) || hop <= 0) return 0;
  return 1 + (num_samples - window) / hop;
}

/// In-place iterative radix-2 complex FFT. Size must be a power of two.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n), twiddle_(n / 2), rev_(n) {
    if (n == 0 || (n & (n - 1)) != 0) throw validation_error("FFT size must be a power of two");
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = {std::cos(a), std::sin(a)};
    }
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b)
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      rev_[i] = r;
    }
  }

  std::size_t size() const { return n_; }

  void forward(std::span<std::complex<double>> x) const {
    for (std::size_t i = 0; i < n_; ++i)
      if (i < rev_[i]) std::swap(x[i], x[rev_[i]]);
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t step = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t k = 0; k < half; ++k) {
          const std::complex<double> t = twiddle_[k * step] * x[start + k + half];
          x[start + k + half] = x[start + k] - t;
          x[start + k] += t;
        }
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::complex<double>> twiddle_;
  std::vector<std::size_t> rev_;
};

/// One triangular filter, stored sparsely over FFT bins.
struct MelFilter {
  std::size_t first_fft_bin = 0;
  std::vector<double> weights;
  double center_hz = 0.0;
};

/// Triangular filters equally spaced on the mel scale between low and high
/// frequency; weights are evaluated at FFT bin centre frequencies.
inline std::vector<MelFilter> make_mel_filters(const FbankOptions& opts, std::size_t fft_size) {
  if (opts.num_bins < 1) throw validation_error("num_bins must be >= 1");
  const double lo = hz_to_mel(opts.low_freq_hz);
  const double hi = hz_to_mel(opts.upper_freq_hz());
  if (!(hi > lo)) throw validation_error("mel range is empty");
  const double delta = (hi - lo) / (opts.num_bins + 1);
  const std::size_t n_fft_bins = fft_size / 2 + 1;
  const double bin_hz = static_cast<double>(opts.sample_rate_hz) / static_cast<double>(fft_size);

  std::vector<MelFilter> filters(opts.num_bins);
  for (int b = 0; b < opts.num_bins; ++b) {
    const double left = lo + b * delta;
    const double center = lo + (b + 1) * delta;
    const double right = lo + (b + 2) * delta;
    MelFilter& f = filters[b];
    f.center_hz = mel_to_hz(center);
    bool started = false;
    for (std::size_t k = 0; k < n_fft_bins; ++k) {
      const double mel = hz_to_mel(bin_hz * static_cast<double>(k));
      double w = 0.0;
      if (mel > left && mel < right)
        w = mel <= center ? (mel - left) / (center - left) : (right - mel) / (right - center);
      if (w > 0.0) {
        if (!started) {
          f.first_fft_bin = k;
          started = true;
        }
        f.weights.resize(k - f.first_fft_bin + 1, 0.0);
        f.weights.back() = w;
      }
    }
  }
  return filters;
}

/// Log-mel filterbank extractor: Hann window, power spectrum, triangular mel
/// filters, natural log with an energy floor. No pre-emphasis, dither, DC
/// removal or mean normalization. Reusable across calls; const methods are
/// thread-safe.
class FbankComputer {
 public:
  explicit FbankComputer(FbankOptions opts = {})
      : opts_(opts),
        window_(opts.window_samples()),
        hop_(opts.hop_samples()),
        fft_(padded_size(opts.window_samples())),
        filters_(make_mel_filters(opts, fft_.size())),
        hann_(window_) {
    if (window_ <= 0 || hop_ <= 0) throw validation_error("frame length and shift must be positive");
    for (int i = 0; i < window_; ++i)
      hann_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (window_ - 1));
  }

  const FbankOptions& options() const { return opts_; }
  const std::vector<MelFilter>& filters() const { return filters_; }
  std::size_t fft_size() const { return fft_.size(); }

  FeatureMatrix compute(const AudioBuffer& audio) const {
    if (audio.sample_rate_hz != opts_.sample_rate_hz) {
      throw validation_error("audio is " + std::to_string(audio.sample_rate_hz) + " Hz, features expect " +
                             std::to_string(opts_.sample_rate_hz) + " Hz");
    }
    FeatureMatrix out;
    out.num_bins = static_cast<std::size_t>(opts_.num_bins);
    out.frame_length_ms = opts_.frame_length_ms;
    out.frame_shift_ms = opts_.frame_shift_ms;
    out.num_frames = num_frames_for(audio.samples.size(), window_, hop_);
    out.data.resize(out.num_frames * out.num_bins);

    const std::size_t n_fft = fft_.size();
    std::vector<std::complex<double>> buf(n_fft);
    std::vector<double> power(n_fft / 2 + 1);
    const double log_floor = std::log(opts_.energy_floor);
    for (std::size_t t = 0; t < out.num_frames; ++t) {
      const float* frame = audio.samples.data() + t * hop_;
      for (int i = 0; i < window_; ++i) buf[i] = {frame[i] * hann_[i], 0.0};
      for (std::size_t i = window_; i < n_fft; ++i) buf[i] = {0.0, 0.0};
      fft_.forward(buf);
      for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(buf[k]);

      auto row = out.row(t);
      for (std::size_t b = 0; b < filters_.size(); ++b) {
        const MelFilter& f = filters_[b];
        double e = 0.0;
        for (std::size_t k = 0; k < f.weights.size(); ++k) e += f.weights[k] * power[f.first_fft_bin + k];
        row[b] = e > opts_.energy_floor ? std::log(e) : log_floor;
      }
    }
    return out;
  }

 private:
  static std::size_t padded_size(int window) {
    std::size_t n = 1;
    while (n < static_cast<std::size_t>(std::max(window, 1))) n <<= 1;
    return n;
  }

  FbankOptions opts_;
  int window_;
  int hop_;
  Fft fft_;
  std::vector<MelFilter> filters_;
  std::vector<double> hann_;
};

inline FeatureMatrix compute_fbank(const AudioBuffer& audio, const FbankOptions& opts = {}) {
  return FbankComputer(opts).compute(audio);
}

}  // namespace dialign
