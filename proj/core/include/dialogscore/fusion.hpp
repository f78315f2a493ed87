#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dialogscore {

using Posterior = std::array<double, 4>;  // labels 1..4

// argmax label; ties resolved toward the lower label.
int posterior_argmax_label(const Posterior& p);

// Per-dialog class posteriors from one scoring system: the currency of
// fusion and of persisted experiment results.
struct PredictionSet {
  std::string system_id;
  std::map<std::string, Posterior> posteriors;

  // Checks non-negativity and sum-to-one within 1e-6.
  void validate() const;
  std::map<std::string, int> argmax_labels() const;
};

// JSONL: {"dialog_id": "...", "posterior": [p1,p2,p3,p4]} per line.
PredictionSet load_predictions_jsonl(const std::filesystem::path& path, std::string system_id);
void save_predictions_jsonl(const PredictionSet& set, const std::filesystem::path& path);

// Arithmetic mean of posteriors per dialog. All sets must cover exactly the
// same dialog ids.
PredictionSet fuse(std::span<const PredictionSet> sets,
                   std::string fused_id = "fusion");

struct SubsetSearchResult {
  std::vector<std::string> system_ids;  // sorted
  double fused_qwk = 0.0;
  PredictionSet fused;
};

// Exhaustive search over all 2^M - 1 non-empty subsets, maximizing fused QWK
// against the given gold labels. Ties prefer the smaller subset, then the
// lexicographically smallest sorted id list.
SubsetSearchResult best_subset(std::span<const PredictionSet> systems,
                               const std::map<std::string, int>& gold);

}  // namespace dialogscore
