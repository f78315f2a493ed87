#include "dialogscore/vocab.hpp"

namespace dialogscore {

Vocab Vocab::build(std::span<const std::vector<std::string>> token_lists) {
  Vocab v;
  for (const auto& list : token_lists)
    for (const std::string& tok : list) v.token_to_id_.emplace(tok, 0);
  int next = 2;  // after UNK and <ts>
  for (auto& [tok, id] : v.token_to_id_) id = next++;
  return v;
}

nlohmann::json Vocab::to_json() const { return nlohmann::json(token_to_id_); }

Vocab Vocab::from_json(const nlohmann::json& j) {
  Vocab v;
  v.token_to_id_ = j.get<std::map<std::string, int>>();
  return v;
}

}  // namespace dialogscore
