#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dialogscore/bilstm.hpp"  // EpochStats / TrainHistory
#include "dialogscore/corpus.hpp"
#include "dialogscore/embeddings.hpp"
#include "dialogscore/fusion.hpp"
#include "dialogscore/nn/adam.hpp"
#include "dialogscore/nn/tensor.hpp"
#include "dialogscore/vocab.hpp"

namespace dialogscore {

// One training unit of the turn-level scorer: the current response plus the
// response and prompt histories available at that point in the dialog.
struct TurnSample {
  std::string dialog_id;
  std::vector<std::string> response;
  std::vector<std::vector<std::string>> response_history;  // oldest first
  std::vector<std::vector<std::string>> prompt_history;    // incl. current prompt
  int label = 0;                                           // 1..4, the dialog label
};

// One sample per user turn; histories truncated to the most recent
// `memory_size` entries.
std::vector<TurnSample> build_turn_samples(const Dialog& dialog, int label,
                                           std::size_t memory_size = 10);

// Bag-of-words memory encoding: sum of embedding rows ([] -> zero vector).
// positional=true applies the position-weighting scheme instead.
nn::Tensor encode_bow(nn::Tape& tape, nn::Tensor table, std::span<const int> ids,
                      bool positional = false);

struct HopResult {
  nn::Tensor output;               // weighted sum of value slots; zeros if bank empty
  std::vector<double> attention;   // p over slots; empty for an empty bank
};

// One memory hop: p = softmax(query . key_i), output = sum_i p_i value_i.
HopResult memory_hop(nn::Tape& tape, nn::Tensor query, std::span<const nn::Tensor> keys,
                     std::span<const nn::Tensor> values);

struct MemN2NConfig {
  std::size_t embed_dim = 50;      // shared by all embedding tables
  std::size_t hops = 2;            // 1..3
  std::size_t memory_size = 10;    // newest entries kept
  std::size_t readout_hidden = 50; // readout LSTM width
  double dropout = 0.2;            // after each memory component
  bool tie_embeddings = false;     // share A/C across hops (layer-wise)
  bool positional_encoding = false;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 40;
  std::size_t patience = 5;
  nn::AdamConfig adam{};
  std::uint64_t seed = 1;
};

// Modified end-to-end memory network: two memory banks (response history,
// prompt history) attended over `hops` rounds, hop outputs summed into the
// query state, and an LSTM readout over the hop-state sequence in place of
// the final matrix multiplication.
class MemN2NScorer {
 public:
  MemN2NScorer(MemN2NConfig cfg, Vocab vocab);

  const MemN2NConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  std::vector<nn::Parameter*> parameters();

  // Pretrained vectors are copied into the prompt-history tables, which is
  // where pretrained initialization pays off.
  void init_pretrained(const EmbeddingTable& table);

  nn::Tensor loss(nn::Tape& tape, const TurnSample& sample, bool training, Prng& dropout_rng);
  Posterior predict_turn(const TurnSample& sample);
  // Lower median of the per-turn argmax labels.
  int score_dialog(const Dialog& dialog);

  // Adam over turn samples; early stopping on dev turn-level QWK.
  TrainHistory train(std::span<const TurnSample> train_set, std::span<const TurnSample> dev_set);

  void save_snapshot(const std::filesystem::path& base) const;
  static MemN2NScorer load_snapshot(const std::filesystem::path& base);

 private:
  nn::Tensor logits(nn::Tape& tape, const TurnSample& sample, bool training, Prng& dropout_rng);
  std::vector<int> ids_of(std::span<const std::string> tokens) const;
  nn::Parameter& bank_key_table(std::size_t hop, bool prompt);
  nn::Parameter& bank_value_table(std::size_t hop, bool prompt);

  MemN2NConfig cfg_;
  Vocab vocab_;

  nn::Parameter query_embedding_;            // B
  std::vector<nn::Parameter> response_keys_;   // A_k, response bank
  std::vector<nn::Parameter> response_values_; // C_k
  std::vector<nn::Parameter> prompt_keys_;     // A_k, prompt bank
  std::vector<nn::Parameter> prompt_values_;   // C_k
  struct ReadoutGates {
    nn::Parameter w_input, w_forget, w_output, w_cell;
    nn::Parameter b_input, b_forget, b_output, b_cell;
  } readout_;
  nn::Parameter dense_w_, dense_b_;
};

}  // namespace dialogscore
