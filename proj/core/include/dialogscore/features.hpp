#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dialogscore/corpus.hpp"

namespace dialogscore {

// Lowercases, splits on whitespace, and peels leading/trailing punctuation
// off each chunk into separate tokens.
std::vector<std::string> tokenize(std::string_view text);

// Contiguous word n-grams, keys namespaced "w1:", "w2:", ... with tokens of
// higher-order grams joined by '_'.
std::map<std::string, double> word_ngrams(std::span<const std::string> tokens, int n_lo = 1,
                                          int n_hi = 2);

// Contiguous character n-grams over the raw lowercased text (whitespace
// included), keys "c2:".."c5:".
std::map<std::string, double> char_ngrams(std::string_view text, int n_lo = 2, int n_hi = 5);

// log(chars) over the concatenated user text; 0 when the count is <= 1.
double response_length(std::string_view text);

// One multi-token pattern; a trailing '*' on the last token makes it a
// prefix match.
struct LexiconPattern {
  std::vector<std::string> tokens;
  bool prefix_last = false;
};

std::vector<LexiconPattern> parse_lexicon(std::istream& in);
std::vector<LexiconPattern> load_lexicon_file(const std::filesystem::path& path);

struct PolitenessLexicons {
  std::vector<LexiconPattern> hedges, gratitude, apology, appreciation, greeting;

  // Built-in copies of the shipped lexicon files.
  static const PolitenessLexicons& defaults();
  // Reads hedges.txt, gratitude.txt, apology.txt, appreciation.txt,
  // greeting.txt from a directory.
  static PolitenessLexicons load_dir(const std::filesystem::path& dir);
};

// The nine binary discourse-strategy indicators, in fixed order.
struct PolitenessProfile {
  bool counterfactual = false;  // could/would within 3 tokens before "you"
  bool indicative = false;      // can/will modal requesting or proposing
  bool deferential = false;     // "i was wondering" back-shift
  bool gratitude = false;
  bool apology = false;
  bool appreciation = false;  // closing phrases, last two user turns
  bool request = false;       // "please"
  bool greeting = false;      // first user turn only
  bool hedge = false;

  std::array<bool, 9> flags() const;
  int count() const;
  static const std::array<std::string_view, 9>& names();
};

PolitenessProfile politeness_flags(const Dialog& dialog,
                                   const PolitenessLexicons& lex = PolitenessLexicons::defaults());

// Counts of "dep:<relation>|<head-token>|<dependent-token>" plus backoff
// "dep:<relation>" keys from precomputed arcs; arcs with out-of-range
// indices are skipped with a warning.
std::map<std::string, double> dependency_features(const Dialog& dialog);

struct FeatureConfig {
  int word_n_lo = 1, word_n_hi = 2;
  int char_n_lo = 2, char_n_hi = 5;
  bool use_word_ngrams = true;
  bool use_char_ngrams = true;
  bool use_response_length = true;
  bool use_politeness = true;   // off for the plain content-feature system
  bool use_dependencies = true;
  bool log_scale_counts = true;  // n-gram counts stored as 1+ln(count)
  std::size_t min_df = 2;
};

// Raw per-dialog feature map (pre-vocabulary): n-gram and dependency counts,
// politeness flags as 0/1, "len" as the log length. N-grams are counted per
// user turn so they never cross a turn boundary.
std::map<std::string, double> extract_features(
    const Dialog& dialog, const FeatureConfig& cfg,
    const PolitenessLexicons& lex = PolitenessLexicons::defaults());

struct FeatureSpace {
  FeatureConfig config;
  std::map<std::string, std::uint32_t> vocab;     // key -> dense column index
  std::map<std::string, std::uint32_t> doc_freq;  // key -> training doc frequency

  std::size_t dim() const { return vocab.size(); }
  std::uint64_t fingerprint() const;

  void save_json(const std::filesystem::path& path) const;
  static FeatureSpace load_json(const std::filesystem::path& path);
};

// Union of training feature keys with doc frequency >= min_df, plus the
// always-present "len" and, when politeness is enabled, the nine "pol:"
// keys. Column indices follow sorted key order.
FeatureSpace fit_feature_space(std::span<const ScoredDialog> train, const FeatureConfig& cfg,
                               const PolitenessLexicons& lex = PolitenessLexicons::defaults());

struct FeatureVector {
  std::vector<std::pair<std::uint32_t, double>> entries;  // strictly increasing indices
  std::uint64_t space_fingerprint = 0;
};

FeatureVector vectorize(const Dialog& dialog, const FeatureSpace& space,
                        const PolitenessLexicons& lex = PolitenessLexicons::defaults());

}  // namespace dialogscore
