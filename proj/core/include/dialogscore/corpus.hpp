#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dialogscore {

enum class Speaker { kSystem, kUser };

// The nine rubric dimensions, scored 1-4; 0 marks an unscorable response.
enum class Construct {
  kTopic,
  kElaboration,
  kStructure,
  kTask,
  kEngagement,
  kTurnTaking,
  kRepair,
  kAppropriateness,
  kOverall,
};

inline constexpr std::array<Construct, 9> kAllConstructs = {
    Construct::kTopic,       Construct::kElaboration,     Construct::kStructure,
    Construct::kTask,        Construct::kEngagement,      Construct::kTurnTaking,
    Construct::kRepair,      Construct::kAppropriateness, Construct::kOverall,
};

std::string_view to_string(Construct c);
std::optional<Construct> construct_from_string(std::string_view s);

// head/dependent are token indices into the tokenized turn text.
struct DependencyArc {
  int head = 0;
  int dependent = 0;
  std::string relation;
};

struct Turn {
  Speaker speaker = Speaker::kSystem;
  std::string text;
  std::optional<std::vector<DependencyArc>> deps;
};

struct Dialog {
  std::string id;
  std::vector<Turn> turns;
  std::map<Construct, std::vector<int>> ratings;

  std::size_t user_turn_count() const;
};

struct ScoredDialog {
  const Dialog* dialog = nullptr;
  int label = 0;  // 1..4
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// JSON Lines, one dialog per line. Malformed lines raise CorpusError naming
// the line number; non-alternating turns only warn (real transcripts may
// merge turns).
std::vector<Dialog> load_corpus(const std::filesystem::path& path);
void save_corpus(std::span<const Dialog> dialogs, const std::filesystem::path& path);

// Lower median: element at index floor((n-1)/2) of the sorted list. Keeps
// labels integral.
int median_label(std::span<const int> scores);

// Dialogs whose median rating for `construct` is 1..4; median 0 filtered out
// as unscorable. Throws if the construct is missing from a dialog's ratings.
std::vector<ScoredDialog> filter_scorable(std::span<const Dialog> dialogs, Construct construct);

struct FoldAssignment {
  std::uint64_t seed = 0;
  int k = 0;
  std::map<std::string, int> membership;  // dialog id -> fold index
};

// Deterministic: ids sorted lexicographically, shuffled by seeded PRNG,
// assigned round-robin. Fold sizes differ by at most one.
FoldAssignment kfold(std::span<const ScoredDialog> dialogs, int k, std::uint64_t seed);

void save_folds_csv(const FoldAssignment& folds, const std::filesystem::path& path);
FoldAssignment load_folds_csv(const std::filesystem::path& path);

// 80/20 split over indices [0,n): seeded shuffle, first ceil(0.8*n) are
// train. Requires n >= 5.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_dev_split(
    std::size_t n, std::uint64_t seed);

}  // namespace dialogscore
