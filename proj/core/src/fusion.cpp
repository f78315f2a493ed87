#include "dialogscore/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "dialogscore/metrics.hpp"

namespace dialogscore {

using nlohmann::json;

int posterior_argmax_label(const Posterior& p) {
  int best = 0;
  for (int i = 1; i < 4; ++i)
    if (p[static_cast<std::size_t>(i)] > p[static_cast<std::size_t>(best)]) best = i;
  return best + 1;
}

void PredictionSet::validate() const {
  for (const auto& [id, p] : posteriors) {
    double total = 0.0;
    for (double v : p) {
      if (!(v >= 0.0))
        throw std::invalid_argument("system '" + system_id + "', dialog '" + id +
                                    "': negative or non-finite posterior entry");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-6)
      throw std::invalid_argument("system '" + system_id + "', dialog '" + id +
                                  "': posterior sums to " + std::to_string(total));
  }
}

std::map<std::string, int> PredictionSet::argmax_labels() const {
  std::map<std::string, int> out;
  for (const auto& [id, p] : posteriors) out.emplace(id, posterior_argmax_label(p));
  return out;
}

PredictionSet load_predictions_jsonl(const std::filesystem::path& path, std::string system_id) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions file: " + path.string());
  PredictionSet set;
  set.system_id = std::move(system_id);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": invalid JSON: " + e.what());
    }
    if (!j.contains("dialog_id") || !j["dialog_id"].is_string() || !j.contains("posterior") ||
        !j["posterior"].is_array() || j["posterior"].size() != 4)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected {\"dialog_id\", \"posterior\"[4]}");
    Posterior p{};
    for (std::size_t i = 0; i < 4; ++i) p[i] = j["posterior"][i].get<double>();
    const std::string id = j["dialog_id"].get<std::string>();
    if (!set.posteriors.emplace(id, p).second)
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": duplicate dialog id '" + id + "'");
  }
  set.validate();
  return set;
}

void save_predictions_jsonl(const PredictionSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictions file: " + path.string());
  for (const auto& [id, p] : set.posteriors) {
    json j = {{"dialog_id", id}, {"posterior", {p[0], p[1], p[2], p[3]}}};
    out << j.dump() << "\n";
  }
}

PredictionSet fuse(std::span<const PredictionSet> sets, std::string fused_id) {
  if (sets.empty()) throw std::invalid_argument("fuse of zero prediction sets");
  const auto& first = sets.front();
  for (const PredictionSet& s : sets) {
    if (s.posteriors.size() != first.posteriors.size())
      throw std::invalid_argument("fuse: system '" + s.system_id + "' covers " +
                                  std::to_string(s.posteriors.size()) + " dialogs, '" +
                                  first.system_id + "' covers " +
                                  std::to_string(first.posteriors.size()));
    for (const auto& [id, p] : first.posteriors)
      if (!s.posteriors.count(id))
        throw std::invalid_argument("fuse: system '" + s.system_id + "' is missing dialog '" +
                                    id + "'");
  }

  PredictionSet fused;
  fused.system_id = std::move(fused_id);
  const double inv = 1.0 / static_cast<double>(sets.size());
  for (const auto& [id, p0] : first.posteriors) {
    Posterior acc{};
    for (const PredictionSet& s : sets) {
      const Posterior& p = s.posteriors.at(id);
      for (std::size_t i = 0; i < 4; ++i) acc[i] += p[i];
    }
    for (double& v : acc) v *= inv;
    fused.posteriors.emplace(id, acc);
  }
  return fused;
}

namespace {

double fused_qwk_against(const PredictionSet& fused, const std::map<std::string, int>& gold) {
  std::vector<int> pred, truth;
  pred.reserve(gold.size());
  truth.reserve(gold.size());
  for (const auto& [id, label] : gold) {
    const auto it = fused.posteriors.find(id);
    if (it == fused.posteriors.end())
      throw std::invalid_argument("gold dialog '" + id + "' missing from predictions");
    pred.push_back(posterior_argmax_label(it->second));
    truth.push_back(label);
  }
  return qwk(pred, truth);
}

}  // namespace

SubsetSearchResult best_subset(std::span<const PredictionSet> systems,
                               const std::map<std::string, int>& gold) {
  if (systems.empty()) throw std::invalid_argument("best_subset of zero systems");
  if (systems.size() > 20) throw std::invalid_argument("best_subset: too many systems");

  SubsetSearchResult best;
  bool have_best = false;
  const std::size_t M = systems.size();
  for (std::size_t mask = 1; mask < (1u << M); ++mask) {
    std::vector<PredictionSet> members;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < M; ++i)
      if (mask & (1u << i)) {
        members.push_back(systems[i]);
        ids.push_back(systems[i].system_id);
      }
    std::sort(ids.begin(), ids.end());
    PredictionSet fused_set = fuse(members);
    const double score = fused_qwk_against(fused_set, gold);

    const bool better =
        !have_best || score > best.fused_qwk ||
        (score == best.fused_qwk &&
         (ids.size() < best.system_ids.size() ||
          (ids.size() == best.system_ids.size() && ids < best.system_ids)));
    if (better) {
      best.system_ids = std::move(ids);
      best.fused_qwk = score;
      best.fused = std::move(fused_set);
      have_best = true;
    }
  }
  return best;
}

}  // namespace dialogscore
