#include "dialogscore/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "dialogscore/prng.hpp"

namespace dialogscore {

using nlohmann::json;

std::string_view to_string(Construct c) {
  switch (c) {
    case Construct::kTopic: return "topic";
    case Construct::kElaboration: return "elaboration";
    case Construct::kStructure: return "structure";
    case Construct::kTask: return "task";
    case Construct::kEngagement: return "engagement";
    case Construct::kTurnTaking: return "turn_taking";
    case Construct::kRepair: return "repair";
    case Construct::kAppropriateness: return "appropriateness";
    case Construct::kOverall: return "overall";
  }
  return "?";
}

std::optional<Construct> construct_from_string(std::string_view s) {
  for (Construct c : kAllConstructs)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

std::size_t Dialog::user_turn_count() const {
  std::size_t n = 0;
  for (const Turn& t : turns)
    if (t.speaker == Speaker::kUser) ++n;
  return n;
}

namespace {

Dialog parse_dialog(const json& j, std::size_t line_no) {
  const auto fail = [line_no](const std::string& msg) {
    throw CorpusError("line " + std::to_string(line_no) + ": " + msg);
  };

  if (!j.is_object()) fail("expected a JSON object");
  Dialog d;
  if (!j.contains("id") || !j["id"].is_string()) fail("missing string field 'id'");
  d.id = j["id"].get<std::string>();

  if (!j.contains("turns") || !j["turns"].is_array()) fail("missing array field 'turns'");
  for (const json& jt : j["turns"]) {
    Turn t;
    const std::string sp = jt.value("speaker", "");
    if (sp == "system")
      t.speaker = Speaker::kSystem;
    else if (sp == "user")
      t.speaker = Speaker::kUser;
    else
      fail("turn speaker must be \"system\" or \"user\", got \"" + sp + "\"");
    if (!jt.contains("text") || !jt["text"].is_string()) fail("turn missing string field 'text'");
    t.text = jt["text"].get<std::string>();
    if (jt.contains("deps")) {
      if (!jt["deps"].is_array()) fail("turn field 'deps' must be an array");
      std::vector<DependencyArc> arcs;
      for (const json& ja : jt["deps"]) {
        if (!ja.is_array() || ja.size() != 3 || !ja[0].is_number_integer() ||
            !ja[1].is_number_integer() || !ja[2].is_string())
          fail("dependency arc must be [head, dependent, \"relation\"]");
        arcs.push_back({ja[0].get<int>(), ja[1].get<int>(), ja[2].get<std::string>()});
      }
      t.deps = std::move(arcs);
    }
    d.turns.push_back(std::move(t));
  }
  if (d.user_turn_count() == 0) fail("dialog '" + d.id + "' has no user turn");

  if (!j.contains("ratings") || !j["ratings"].is_object())
    fail("missing object field 'ratings'");
  for (const auto& [key, scores] : j["ratings"].items()) {
    const auto construct = construct_from_string(key);
    if (!construct) fail("unknown construct '" + key + "'");
    if (!scores.is_array() || scores.empty()) fail("ratings for '" + key + "' must be a non-empty array");
    std::vector<int> values;
    for (const json& s : scores) {
      if (!s.is_number_integer()) fail("ratings for '" + key + "' must be integers");
      const int v = s.get<int>();
      if (v < 0 || v > 4)
        fail("score " + std::to_string(v) + " for construct '" + key + "' outside 0..4");
      values.push_back(v);
    }
    d.ratings.emplace(*construct, std::move(values));
  }

  // Alternation starting with the system side is the expected shape but not
  // a hard requirement.
  bool alternating = !d.turns.empty() && d.turns.front().speaker == Speaker::kSystem;
  for (std::size_t i = 1; alternating && i < d.turns.size(); ++i)
    alternating = d.turns[i].speaker != d.turns[i - 1].speaker;
  if (!alternating)
    std::cerr << "warning: line " << line_no << ": dialog '" << d.id
              << "' turns do not alternate starting with system\n";
  return d;
}

}  // namespace

std::vector<Dialog> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file: " + path.string());
  std::vector<Dialog> dialogs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw CorpusError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    dialogs.push_back(parse_dialog(j, line_no));
  }
  return dialogs;
}

namespace {

json dialog_to_json(const Dialog& d) {
  json jturns = json::array();
  for (const Turn& t : d.turns) {
    json jt = {{"speaker", t.speaker == Speaker::kUser ? "user" : "system"}, {"text", t.text}};
    if (t.deps) {
      json arcs = json::array();
      for (const DependencyArc& a : *t.deps) arcs.push_back({a.head, a.dependent, a.relation});
      jt["deps"] = arcs;
    }
    jturns.push_back(std::move(jt));
  }
  json jratings = json::object();
  for (const auto& [c, scores] : d.ratings) jratings[std::string(to_string(c))] = scores;
  return {{"id", d.id}, {"turns", jturns}, {"ratings", jratings}};
}

}  // namespace

void save_corpus(std::span<const Dialog> dialogs, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write corpus file: " + path.string());
  for (const Dialog& d : dialogs) out << dialog_to_json(d).dump() << "\n";
}

int median_label(std::span<const int> scores) {
  if (scores.empty()) throw std::invalid_argument("median_label of empty score list");
  std::vector<int> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted[(sorted.size() - 1) / 2];
}

std::vector<ScoredDialog> filter_scorable(std::span<const Dialog> dialogs, Construct construct) {
  std::vector<ScoredDialog> out;
  for (const Dialog& d : dialogs) {
    const auto it = d.ratings.find(construct);
    if (it == d.ratings.end())
      throw CorpusError("dialog '" + d.id + "' has no ratings for construct '" +
                        std::string(to_string(construct)) + "'");
    const int label = median_label(it->second);
    if (label >= 1) out.push_back({&d, label});
  }
  return out;
}

FoldAssignment kfold(std::span<const ScoredDialog> dialogs, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold requires k >= 2");
  if (dialogs.size() < static_cast<std::size_t>(k))
    throw std::invalid_argument("kfold: k=" + std::to_string(k) + " exceeds " +
                                std::to_string(dialogs.size()) + " dialogs");
  std::vector<std::string> ids;
  ids.reserve(dialogs.size());
  for (const ScoredDialog& sd : dialogs) ids.push_back(sd.dialog->id);
  std::sort(ids.begin(), ids.end());
  Prng rng(seed);
  rng.shuffle(ids);

  FoldAssignment fa;
  fa.seed = seed;
  fa.k = k;
  for (std::size_t i = 0; i < ids.size(); ++i)
    fa.membership.emplace(ids[i], static_cast<int>(i % static_cast<std::size_t>(k)));
  return fa;
}

void save_folds_csv(const FoldAssignment& folds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write folds file: " + path.string());
  out << "dialog_id,fold\n";
  for (const auto& [id, fold] : folds.membership) out << id << "," << fold << "\n";
}

FoldAssignment load_folds_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open folds file: " + path.string());
  FoldAssignment fa;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw CorpusError("malformed folds row: " + line);
    const int fold = std::stoi(line.substr(comma + 1));
    fa.membership.emplace(line.substr(0, comma), fold);
    fa.k = std::max(fa.k, fold + 1);
  }
  return fa;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_dev_split(
    std::size_t n, std::uint64_t seed) {
  if (n < 5) throw std::invalid_argument("train_dev_split requires at least 5 items");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Prng rng(seed);
  rng.shuffle(order);
  // ceil(0.8*n) train
  const std::size_t train_n = (4 * n + 4) / 5;
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<long>(train_n));
  std::vector<std::size_t> dev(order.begin() + static_cast<long>(train_n), order.end());
  return {std::move(train), std::move(dev)};
}

}  // namespace dialogscore
