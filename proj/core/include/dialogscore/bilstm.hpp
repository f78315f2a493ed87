#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dialogscore/corpus.hpp"
#include "dialogscore/embeddings.hpp"
#include "dialogscore/fusion.hpp"
#include "dialogscore/nn/adam.hpp"
#include "dialogscore/nn/tensor.hpp"
#include "dialogscore/prng.hpp"
#include "dialogscore/vocab.hpp"

namespace dialogscore {

struct BilstmConfig {
  std::size_t embed_dim = 100;
  std::size_t hidden = 64;  // H; per-token annotations are 2H wide
  std::size_t depth = 2;    // stacked BiLSTM layers
  double recurrent_dropout = 0.3;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 10;
  std::size_t patience = 5;
  bool attention = true;  // false gives the vanilla stacked BiLSTM scorer
  nn::AdamConfig adam{};
  std::uint64_t seed = 1;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_metric = 0.0;
  bool improved = false;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  double best_dev_metric = 0.0;
};

// Stacked bidirectional LSTM dialog scorer with word-level context
// attention. Input is the concatenation of user-turn tokens in dialog order,
// turns separated by a <ts> token; system prompts are not fed to the model.
class BilstmScorer {
 public:
  BilstmScorer(BilstmConfig cfg, Vocab vocab);

  const BilstmConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  std::vector<nn::Parameter*> parameters();

  // Copies pretrained vectors into embedding rows for known tokens. The
  // table dimension must equal embed_dim.
  void init_pretrained(const EmbeddingTable& table);

  static std::vector<std::string> dialog_tokens(const Dialog& dialog);
  std::vector<int> token_ids(std::span<const std::string> tokens) const;

  // Training loss for one dialog on the given tape.
  nn::Tensor loss(nn::Tape& tape, std::span<const int> ids, int label, bool training,
                  Prng& dropout_rng);

  Posterior predict(const Dialog& dialog);
  // (token, attention weight) in dialog order; requires config().attention.
  std::vector<std::pair<std::string, double>> attention_heatmap(const Dialog& dialog);
  // Top-layer per-token annotations, eval mode (testing/introspection).
  std::vector<std::vector<double>> encode_states(std::span<const int> ids);

  // Adam, mini-batches of batch_size, early stopping on dev QWK with the
  // configured patience; the best-dev snapshot is restored on return.
  TrainHistory train(std::span<const ScoredDialog> train_set,
                     std::span<const ScoredDialog> dev_set);

  void save_snapshot(const std::filesystem::path& base) const;
  static BilstmScorer load_snapshot(const std::filesystem::path& base);

 private:
  struct Encoded {
    nn::Tensor dialog_vector;    // 2H
    std::vector<double> alphas;  // empty when attention is off
  };
  Encoded encode(nn::Tape& tape, std::span<const int> ids, bool training, Prng& dropout_rng,
                 std::vector<std::vector<double>>* states_out = nullptr);
  nn::Tensor logits(nn::Tape& tape, std::span<const int> ids, bool training, Prng& dropout_rng);

  BilstmConfig cfg_;
  Vocab vocab_;

  nn::Parameter embeddings_;  // [V, D]
  struct GateSet {
    nn::Parameter w_input, w_forget, w_output, w_cell;  // [H, in+H]
    nn::Parameter b_input, b_forget, b_output, b_cell;  // [H]
  };
  std::vector<GateSet> cells_;  // depth * 2 (forward then backward per layer)
  nn::Parameter attn_w_;        // [2H, 2H]
  nn::Parameter attn_b_;        // [2H]
  nn::Parameter attn_context_;  // [2H], the jointly learned context vector
  nn::Parameter dense_w_;       // [4, 2H]
  nn::Parameter dense_b_;       // [4]
};

}  // namespace dialogscore
