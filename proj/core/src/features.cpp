#include "dialogscore/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

namespace dialogscore {

using nlohmann::json;

namespace {

bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

std::string lowercased(std::string_view in) {
  std::string out(in);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  const std::string lower = lowercased(text);
  std::vector<std::string> tokens;
  std::istringstream in(lower);
  std::string chunk;
  while (in >> chunk) {
    std::size_t begin = 0, end = chunk.size();
    while (begin < end && is_punct(chunk[begin])) {
      tokens.push_back(std::string(1, chunk[begin]));
      ++begin;
    }
    std::vector<std::string> trailing;
    while (end > begin && is_punct(chunk[end - 1])) {
      trailing.push_back(std::string(1, chunk[end - 1]));
      --end;
    }
    if (end > begin) tokens.push_back(chunk.substr(begin, end - begin));
    tokens.insert(tokens.end(), trailing.rbegin(), trailing.rend());
  }
  return tokens;
}

std::map<std::string, double> word_ngrams(std::span<const std::string> tokens, int n_lo,
                                          int n_hi) {
  std::map<std::string, double> counts;
  for (int n = n_lo; n <= n_hi; ++n) {
    if (tokens.size() < static_cast<std::size_t>(n)) continue;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
      std::string key = "w" + std::to_string(n) + ":";
      for (int j = 0; j < n; ++j) {
        if (j) key += '_';
        key += tokens[i + static_cast<std::size_t>(j)];
      }
      counts[key] += 1.0;
    }
  }
  return counts;
}

std::map<std::string, double> char_ngrams(std::string_view text, int n_lo, int n_hi) {
  const std::string lower = lowercased(text);
  std::map<std::string, double> counts;
  for (int n = n_lo; n <= n_hi; ++n) {
    if (lower.size() < static_cast<std::size_t>(n)) continue;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= lower.size(); ++i)
      counts["c" + std::to_string(n) + ":" + lower.substr(i, static_cast<std::size_t>(n))] += 1.0;
  }
  return counts;
}

double response_length(std::string_view text) {
  if (text.size() <= 1) return 0.0;
  return std::log(static_cast<double>(text.size()));
}

std::vector<LexiconPattern> parse_lexicon(std::istream& in) {
  std::vector<LexiconPattern> patterns;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    LexiconPattern p;
    std::istringstream ls(lowercased(line));
    std::string tok;
    while (ls >> tok) p.tokens.push_back(tok);
    if (p.tokens.empty()) continue;
    if (p.tokens.back().size() > 1 && p.tokens.back().back() == '*') {
      p.tokens.back().pop_back();
      p.prefix_last = true;
    }
    patterns.push_back(std::move(p));
  }
  return patterns;
}

std::vector<LexiconPattern> load_lexicon_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon file: " + path.string());
  return parse_lexicon(in);
}

namespace {

std::vector<LexiconPattern> parse_lexicon_string(const char* text) {
  std::istringstream in(text);
  return parse_lexicon(in);
}

// Stand-in hedge vocabulary; the upstream hedge list is replaceable via the
// shipped lexicon files.
constexpr const char* kHedges = R"(suggest
suggests
suggested
maybe
perhaps
possibly
probably
somewhat
roughly
approximately
apparently
presumably
seemingly
arguably
likely
unlikely
seem
seems
seemed
suppose
guess
think
thought
believe
assume
almost
fairly
rather
quite
virtually
hopefully
)";

constexpr const char* kGratitude = R"(thank
thanks
thankful
appreciate
grateful
)";

constexpr const char* kApology = R"(sorry
apolog*
forgive
excuse me
)";

constexpr const char* kAppreciation = R"(sounds good
sounds great
works great
perfect
wonderful
)";

constexpr const char* kGreeting = R"(hi
hello
hey
good morning
good afternoon
good evening
)";

bool pattern_at(const LexiconPattern& p, std::span<const std::string> tokens, std::size_t i) {
  if (i + p.tokens.size() > tokens.size()) return false;
  for (std::size_t j = 0; j < p.tokens.size(); ++j) {
    const std::string& want = p.tokens[j];
    const std::string& have = tokens[i + j];
    const bool prefix = p.prefix_last && j + 1 == p.tokens.size();
    if (prefix ? have.compare(0, want.size(), want) != 0 : have != want) return false;
  }
  return true;
}

bool any_pattern(std::span<const LexiconPattern> patterns, std::span<const std::string> tokens) {
  for (const LexiconPattern& p : patterns)
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (pattern_at(p, tokens, i)) return true;
  return false;
}

bool modal_before_you(std::span<const std::string> tokens,
                      std::initializer_list<std::string_view> modals, int window,
                      bool exclude_first_person_subject) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    bool is_modal = false;
    for (std::string_view m : modals) is_modal = is_modal || tokens[i] == m;
    if (!is_modal) continue;
    if (exclude_first_person_subject && i > 0 && (tokens[i - 1] == "i" || tokens[i - 1] == "we"))
      continue;
    for (std::size_t j = i + 1; j < tokens.size() && j <= i + static_cast<std::size_t>(window);
         ++j)
      if (tokens[j] == "you") return true;
  }
  return false;
}

}  // namespace

const PolitenessLexicons& PolitenessLexicons::defaults() {
  static const PolitenessLexicons lex = [] {
    PolitenessLexicons l;
    l.hedges = parse_lexicon_string(kHedges);
    l.gratitude = parse_lexicon_string(kGratitude);
    l.apology = parse_lexicon_string(kApology);
    l.appreciation = parse_lexicon_string(kAppreciation);
    l.greeting = parse_lexicon_string(kGreeting);
    return l;
  }();
  return lex;
}

PolitenessLexicons PolitenessLexicons::load_dir(const std::filesystem::path& dir) {
  PolitenessLexicons l;
  l.hedges = load_lexicon_file(dir / "hedges.txt");
  l.gratitude = load_lexicon_file(dir / "gratitude.txt");
  l.apology = load_lexicon_file(dir / "apology.txt");
  l.appreciation = load_lexicon_file(dir / "appreciation.txt");
  l.greeting = load_lexicon_file(dir / "greeting.txt");
  return l;
}

std::array<bool, 9> PolitenessProfile::flags() const {
  return {counterfactual, indicative, deferential, gratitude, apology,
          appreciation,   request,    greeting,    hedge};
}

int PolitenessProfile::count() const {
  int n = 0;
  for (bool f : flags()) n += f ? 1 : 0;
  return n;
}

const std::array<std::string_view, 9>& PolitenessProfile::names() {
  static const std::array<std::string_view, 9> kNames = {
      "counterfactual", "indicative",   "deferential", "gratitude", "apology",
      "appreciation",   "request",      "greeting",    "hedge"};
  return kNames;
}

PolitenessProfile politeness_flags(const Dialog& dialog, const PolitenessLexicons& lex) {
  std::vector<std::vector<std::string>> user_turns;
  for (const Turn& t : dialog.turns)
    if (t.speaker == Speaker::kUser) user_turns.push_back(tokenize(t.text));

  PolitenessProfile prof;
  for (std::size_t ti = 0; ti < user_turns.size(); ++ti) {
    const auto& toks = user_turns[ti];

    prof.counterfactual =
        prof.counterfactual || modal_before_you(toks, {"could", "would"}, 3, false);
    // "can/will you ..." with a non-first-person subject, or the inclusive
    // "we can/will ..." proposal form.
    bool indicative = modal_before_you(toks, {"can", "will"}, 3, true);
    for (std::size_t i = 1; !indicative && i < toks.size(); ++i)
      indicative = (toks[i] == "can" || toks[i] == "will") && toks[i - 1] == "we";
    prof.indicative = prof.indicative || indicative;

    bool deferential = false;
    for (std::size_t i = 0; !deferential && i < toks.size(); ++i) {
      if (toks[i] != "wondering") continue;
      for (std::size_t j = (i >= 3 ? i - 3 : 0); j < i; ++j)
        deferential = deferential || toks[j] == "i" || toks[j] == "we";
    }
    prof.deferential = prof.deferential || deferential;

    prof.gratitude = prof.gratitude || any_pattern(lex.gratitude, toks);
    prof.apology = prof.apology || any_pattern(lex.apology, toks);
    if (ti + 2 >= user_turns.size())
      prof.appreciation = prof.appreciation || any_pattern(lex.appreciation, toks);
    for (const auto& t : toks) prof.request = prof.request || t == "please";
    if (ti == 0) prof.greeting = prof.greeting || any_pattern(lex.greeting, toks);
    prof.hedge = prof.hedge || any_pattern(lex.hedges, toks);
  }
  return prof;
}

std::map<std::string, double> dependency_features(const Dialog& dialog) {
  std::map<std::string, double> counts;
  for (const Turn& t : dialog.turns) {
    if (t.speaker != Speaker::kUser || !t.deps) continue;
    const auto tokens = tokenize(t.text);
    for (const DependencyArc& arc : *t.deps) {
      if (arc.head < 0 || arc.dependent < 0 ||
          static_cast<std::size_t>(arc.head) >= tokens.size() ||
          static_cast<std::size_t>(arc.dependent) >= tokens.size()) {
        std::cerr << "warning: dialog '" << dialog.id << "': dependency arc (" << arc.head << ","
                  << arc.dependent << ") outside token range, skipped\n";
        continue;
      }
      counts["dep:" + arc.relation + "|" + tokens[static_cast<std::size_t>(arc.head)] + "|" +
             tokens[static_cast<std::size_t>(arc.dependent)]] += 1.0;
      counts["dep:" + arc.relation] += 1.0;
    }
  }
  return counts;
}

std::map<std::string, double> extract_features(const Dialog& dialog, const FeatureConfig& cfg,
                                               const PolitenessLexicons& lex) {
  std::map<std::string, double> feats;
  std::string joined;
  for (const Turn& t : dialog.turns) {
    if (t.speaker != Speaker::kUser) continue;
    if (!joined.empty()) joined += ' ';
    joined += t.text;
    // Per-turn counting keeps n-grams from crossing turn boundaries.
    if (cfg.use_word_ngrams) {
      const auto tokens = tokenize(t.text);
      for (auto& [k, v] : word_ngrams(tokens, cfg.word_n_lo, cfg.word_n_hi)) feats[k] += v;
    }
    if (cfg.use_char_ngrams)
      for (auto& [k, v] : char_ngrams(t.text, cfg.char_n_lo, cfg.char_n_hi)) feats[k] += v;
  }
  if (cfg.use_dependencies)
    for (auto& [k, v] : dependency_features(dialog)) feats[k] += v;
  if (cfg.use_response_length) {
    const double len = response_length(joined);
    if (len != 0.0) feats["len"] = len;
  }
  if (cfg.use_politeness) {
    const PolitenessProfile prof = politeness_flags(dialog, lex);
    const auto flags = prof.flags();
    for (std::size_t i = 0; i < flags.size(); ++i)
      if (flags[i]) feats["pol:" + std::string(PolitenessProfile::names()[i])] = 1.0;
  }
  return feats;
}

std::uint64_t FeatureSpace::fingerprint() const {
  // FNV-1a over the vocabulary plus the scaling switch.
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& [k, idx] : vocab) {
    feed(k);
    feed("=");
    feed(std::to_string(idx));
    feed(";");
  }
  feed(config.log_scale_counts ? "log" : "raw");
  return h;
}

void FeatureSpace::save_json(const std::filesystem::path& path) const {
  json j;
  j["config"] = {{"word_n_lo", config.word_n_lo},
                 {"word_n_hi", config.word_n_hi},
                 {"char_n_lo", config.char_n_lo},
                 {"char_n_hi", config.char_n_hi},
                 {"use_word_ngrams", config.use_word_ngrams},
                 {"use_char_ngrams", config.use_char_ngrams},
                 {"use_response_length", config.use_response_length},
                 {"use_politeness", config.use_politeness},
                 {"use_dependencies", config.use_dependencies},
                 {"log_scale_counts", config.log_scale_counts},
                 {"min_df", config.min_df}};
  j["vocab"] = vocab;
  j["doc_freq"] = doc_freq;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write feature space: " + path.string());
  out << j.dump(2) << "\n";
}

FeatureSpace FeatureSpace::load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature space: " + path.string());
  json j = json::parse(in);
  FeatureSpace s;
  const json& c = j.at("config");
  s.config.word_n_lo = c.at("word_n_lo").get<int>();
  s.config.word_n_hi = c.at("word_n_hi").get<int>();
  s.config.char_n_lo = c.at("char_n_lo").get<int>();
  s.config.char_n_hi = c.at("char_n_hi").get<int>();
  s.config.use_word_ngrams = c.at("use_word_ngrams").get<bool>();
  s.config.use_char_ngrams = c.at("use_char_ngrams").get<bool>();
  s.config.use_response_length = c.at("use_response_length").get<bool>();
  s.config.use_politeness = c.at("use_politeness").get<bool>();
  s.config.use_dependencies = c.at("use_dependencies").get<bool>();
  s.config.log_scale_counts = c.at("log_scale_counts").get<bool>();
  s.config.min_df = c.at("min_df").get<std::size_t>();
  s.vocab = j.at("vocab").get<std::map<std::string, std::uint32_t>>();
  s.doc_freq = j.at("doc_freq").get<std::map<std::string, std::uint32_t>>();
  return s;
}

FeatureSpace fit_feature_space(std::span<const ScoredDialog> train, const FeatureConfig& cfg,
                               const PolitenessLexicons& lex) {
  if (train.empty()) throw std::invalid_argument("fit_feature_space on empty training set");
  FeatureSpace space;
  space.config = cfg;
  for (const ScoredDialog& sd : train)
    for (const auto& [k, v] : extract_features(*sd.dialog, cfg, lex))
      if (v != 0.0) space.doc_freq[k] += 1;

  std::uint32_t idx = 0;
  std::map<std::string, std::uint32_t> vocab;
  for (const auto& [k, df] : space.doc_freq)
    if (df >= cfg.min_df) vocab.emplace(k, 0);
  if (cfg.use_response_length) vocab.emplace("len", 0);
  if (cfg.use_politeness)
    for (const auto& name : PolitenessProfile::names())
      vocab.emplace("pol:" + std::string(name), 0);
  for (auto& [k, v] : vocab) v = idx++;
  space.vocab = std::move(vocab);
  return space;
}

FeatureVector vectorize(const Dialog& dialog, const FeatureSpace& space,
                        const PolitenessLexicons& lex) {
  FeatureVector vec;
  vec.space_fingerprint = space.fingerprint();
  const auto feats = extract_features(dialog, space.config, lex);
  // Map iteration follows sorted key order, which is also index order.
  for (const auto& [k, raw] : feats) {
    const auto it = space.vocab.find(k);
    if (it == space.vocab.end()) continue;
    double v = raw;
    const bool ngram = k.size() > 1 && (k[0] == 'w' || k[0] == 'c') && std::isdigit(
                           static_cast<unsigned char>(k[1]));
    if (ngram && space.config.log_scale_counts) v = 1.0 + std::log(raw);
    if (v != 0.0) vec.entries.emplace_back(it->second, v);
  }
  std::sort(vec.entries.begin(), vec.entries.end());
  return vec;
}

}  // namespace dialogscore
