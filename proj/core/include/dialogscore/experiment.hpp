#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dialogscore/bilstm.hpp"
#include "dialogscore/corpus.hpp"
#include "dialogscore/features.hpp"
#include "dialogscore/linear_model.hpp"
#include "dialogscore/memn2n.hpp"
#include "dialogscore/synth.hpp"

namespace dialogscore {

inline constexpr std::array<const char*, 5> kInternalSystems = {"svm", "svm_pp", "lstm",
                                                                "lstm_att", "memn2n"};

struct ExperimentConfig {
  // Corpus source: a JSONL path or the seeded generator.
  std::string corpus_path;
  bool use_synth = false;
  std::uint64_t synth_seed = 7;
  std::size_t synth_n = 500;
  SignalSpec synth_spec{};

  std::vector<Construct> constructs{Construct::kOverall};
  std::vector<std::string> systems{"svm"};
  int folds = 10;
  std::uint64_t seed = 42;
  std::filesystem::path out_dir = "results";
  std::string lexicon_dir;      // optional politeness lexicon override
  std::string embeddings_path;  // optional pretrained vectors

  FeatureConfig features{};
  GridSpec grid{};
  LinearTrainOptions linear{};
  BilstmConfig bilstm{};
  MemN2NConfig memn2n{};

  std::filesystem::path source_file;  // config file this was read from, if any

  static ExperimentConfig from_yaml_file(const std::filesystem::path& path);
  void validate() const;
};

// Runs per-construct, per-system 10-fold CV and persists, under out_dir:
//   corpus.jsonl, report.md/report.csv, and per construct:
//   gold.csv, folds.csv, predictions/<system>.jsonl, models/, failures.json.
// Worker count is bounded by the DIALOGSCORE_THREADS environment variable.
void run_cv(const ExperimentConfig& cfg);

// Best-subset fusion over the persisted prediction sets of each construct,
// optionally extended with externally generated prediction files
// (system id -> JSONL path). Writes fusion.json per construct and refreshes
// the reports.
void run_fusion(const std::filesystem::path& results_dir,
                const std::vector<std::pair<std::string, std::string>>& externals = {});

}  // namespace dialogscore
