// Builds a small perturbed synthetic corpus, runs the baseline pipeline on
// it and prints the recall matrix.
#include <filesystem>
#include <iostream>

#include "dialign/dialign.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "dialign-quickstart";

  dialign::SynthOptions synth;
  synth.n_subgroups = 3;
  synth.sites_per_subgroup = 2;
  synth.n_sentences = 20;
  synth.mode = dialign::SynthMode::kPerturbed;
  synth.noise_db = 5.0;
  const auto corpus = dialign::make_synthetic_corpus(synth, work / "corpus");
  std::cout << dialign::format_stats(dialign::corpus_stats(corpus.manifest)) << '\n';

  dialign::RunConfig cfg;
  cfg.manifest = (work / "corpus" / "manifest.jsonl").string();
  cfg.output = (work / "report").string();
  const auto report = dialign::run_pipeline(cfg);
  std::cout << dialign::render_markdown(report.recall.matrix, report.provenance) << '\n';
  std::cout << "artifacts in " << cfg.output << '\n';
}
