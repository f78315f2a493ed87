#pragma once

#include <json.hpp>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dialogscore {

// Token ids for the neural scorers. Id 0 is the shared UNK row; id 1 is the
// turn-separator token used when user turns are concatenated.
class Vocab {
 public:
  static constexpr int kUnkId = 0;
  static constexpr int kTurnSepId = 1;
  static constexpr const char* kTurnSepToken = "<ts>";

  Vocab() = default;

  static Vocab build(std::span<const std::vector<std::string>> token_lists);

  int id(const std::string& token) const {
    const auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
  }
  std::size_t size() const { return token_to_id_.size() + 2; }  // + UNK + <ts>
  const std::map<std::string, int>& tokens() const { return token_to_id_; }

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

 private:
  std::map<std::string, int> token_to_id_;
};

}  // namespace dialogscore
