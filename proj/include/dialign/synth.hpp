#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "dialign/corpus.hpp"
#include "dialign/error.hpp"
#include "dialign/random.hpp"
#include "dialign/wav.hpp"

namespace dialign {

enum class SynthMode { kClone, kPerturbed, kRandom };

inline SynthMode parse_synth_mode(const std::string& s) {
  if (s == "clone") return SynthMode::kClone;
  if (s == "perturbed") return SynthMode::kPerturbed;
  if (s == "random") return SynthMode::kRandom;
  throw validation_error("unknown synth mode '" + s + "' (clone|perturbed|random)");
}

inline const char* synth_mode_name(SynthMode m) {
  switch (m) {
    case SynthMode::kClone: return "clone";
    case SynthMode::kPerturbed: return "perturbed";
    case SynthMode::kRandom: return "random";
  }
  return "?";
}

struct SynthOptions {
  int n_subgroups = 2;
  int sites_per_subgroup = 2;
  int n_sentences = 10;
  SynthMode mode = SynthMode::kClone;
  double noise_db = 10.0;  // SNR for perturbed mode
  std::uint64_t seed = 1;
  int sample_rate_hz = kSampleRateHz;
};

/// Subgroup used for the i-th synthetic subgroup. Starts at MandarinDialect so
/// that no synthetic corpus carries several MandarinStd sites.
inline Subgroup synth_subgroup(int i) {
  static const SubgroupKind kinds[] = {SubgroupKind::kMandarinDialect, SubgroupKind::kMin, SubgroupKind::kWu,
                                       SubgroupKind::kYue, SubgroupKind::kXiang, SubgroupKind::kGan,
                                       SubgroupKind::kHakka};
  if (i < 7) return Subgroup(kinds[i]);
  return Subgroup::parse("synthetic" + std::to_string(i));
}

/// Sequence of 4-8 harmonic tones, 120-300 ms each, frequencies log-uniform
/// in [200, 4000] Hz, with 10 ms raised-cosine fades.
inline std::vector<float> synth_tone_sequence(std::uint64_t seed, int sample_rate_hz) {
  SplitMix64 rng(seed);
  const int n_tones = 4 + static_cast<int>(rng.below(5));
  std::vector<float> out;
  const int fade = sample_rate_hz / 100;
  for (int t = 0; t < n_tones; ++t) {
    const double dur = rng.uniform(0.12, 0.30);
    const double freq = 200.0 * std::pow(20.0, rng.uniform());
    const double amp = rng.uniform(0.15, 0.35);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const int n = static_cast<int>(dur * sample_rate_hz);
    for (int i = 0; i < n; ++i) {
      const double time = static_cast<double>(i) / sample_rate_hz;
      double env = 1.0;
      if (i < fade) env = 0.5 - 0.5 * std::cos(std::numbers::pi * i / fade);
      else if (i >= n - fade) env = 0.5 - 0.5 * std::cos(std::numbers::pi * (n - 1 - i) / fade);
      const double w = 2.0 * std::numbers::pi * freq * time + phase;
      out.push_back(static_cast<float>(amp * env * (std::sin(w) + 0.4 * std::sin(2.0 * w))));
    }
  }
  return out;
}

/// Adds white Gaussian noise at the given signal-to-noise ratio.
inline void add_noise(std::vector<float>& x, double snr_db, std::uint64_t seed) {
  double power = 0.0;
  for (float v : x) power += static_cast<double>(v) * v;
  power /= std::max<std::size_t>(x.size(), 1);
  const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  SplitMix64 rng(seed);
  for (float& v : x) v = static_cast<float>(std::clamp(v + sigma * rng.gaussian(), -1.0, 1.0));
}

struct SynthCorpus {
  std::filesystem::path manifest_path;
  Manifest manifest;
};

/// Writes `<out>/manifest.jsonl` and `<out>/audio/<site>/<sentence>.wav`.
/// Clone mode uses one waveform per sentence for every site; perturbed mode
/// adds per-site noise to it; random mode draws every (site, sentence)
/// independently.
inline SynthCorpus make_synthetic_corpus(const SynthOptions& opts, const std::filesystem::path& out_dir) {
  if (opts.n_subgroups < 1 || opts.sites_per_subgroup < 1 || opts.n_sentences < 1)
    throw validation_error("synthetic corpus counts must be >= 1");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "audio");

  std::vector<Site> sites;
  std::vector<Utterance> utts;
  for (int g = 0; g < opts.n_subgroups; ++g) {
    for (int k = 0; k < opts.sites_per_subgroup; ++k) {
      const int site_index = g * opts.sites_per_subgroup + k;
      char id[32];
      std::snprintf(id, sizeof(id), "s%03d", site_index);
      sites.push_back({id, "synthetic site " + std::to_string(site_index), synth_subgroup(g)});
      fs::create_directories(out_dir / "audio" / id);
      for (int s = 1; s <= opts.n_sentences; ++s) {
        const auto sentence = static_cast<std::uint64_t>(s);
        const auto site = static_cast<std::uint64_t>(site_index);
        std::vector<float> audio =
            opts.mode == SynthMode::kRandom
                ? synth_tone_sequence(derive_seed(opts.seed, {1, site, sentence}), opts.sample_rate_hz)
                : synth_tone_sequence(derive_seed(opts.seed, {0, sentence}), opts.sample_rate_hz);
        if (opts.mode == SynthMode::kPerturbed) add_noise(audio, opts.noise_db, derive_seed(opts.seed, {2, site, sentence}));
        const std::string rel = std::string("audio/") + id + "/" + std::to_string(s) + ".wav";
        write_wav(out_dir / rel, audio, opts.sample_rate_hz);
        Utterance u;
        u.site_id = id;
        u.sentence_id = s;
        u.audio_path = rel;
        u.transcript = "sentence " + std::to_string(s);
        u.duration_s = static_cast<double>(audio.size()) / opts.sample_rate_hz;
        utts.push_back(std::move(u));
      }
    }
  }
  SynthCorpus out{out_dir / "manifest.jsonl", Manifest(std::move(sites), std::move(utts), out_dir.string())};
  save_manifest(out.manifest_path, out.manifest);
  return out;
}

}  // namespace dialign
