#include "dialogscore/bilstm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dialogscore/early_stopping.hpp"
#include "dialogscore/features.hpp"
#include "dialogscore/metrics.hpp"
#include "dialogscore/snapshot.hpp"

namespace dialogscore {

namespace {

std::string cell_prefix(std::size_t layer, bool backward) {
  return "cell" + std::to_string(layer) + (backward ? "b" : "f") + ".";
}

}  // namespace

BilstmScorer::BilstmScorer(BilstmConfig cfg, Vocab vocab)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  const std::size_t D = cfg_.embed_dim, H = cfg_.hidden;
  if (D == 0 || H == 0 || cfg_.depth == 0)
    throw std::invalid_argument("bilstm: embed_dim, hidden and depth must be positive");

  Prng rng(derive_seed(cfg_.seed, 0xB115731));
  embeddings_ = nn::Parameter("embeddings", {vocab_.size(), D});
  normal_init(embeddings_, 0.1, rng);

  for (std::size_t layer = 0; layer < cfg_.depth; ++layer) {
    const std::size_t in = layer == 0 ? D : 2 * H;
    for (bool backward : {false, true}) {
      GateSet g;
      const std::string p = cell_prefix(layer, backward);
      g.w_input = nn::Parameter(p + "wi", {H, in + H});
      g.w_forget = nn::Parameter(p + "wf", {H, in + H});
      g.w_output = nn::Parameter(p + "wo", {H, in + H});
      g.w_cell = nn::Parameter(p + "wc", {H, in + H});
      g.b_input = nn::Parameter(p + "bi", {H});
      g.b_forget = nn::Parameter(p + "bf", {H});
      g.b_output = nn::Parameter(p + "bo", {H});
      g.b_cell = nn::Parameter(p + "bc", {H});
      for (nn::Parameter* w : {&g.w_input, &g.w_forget, &g.w_output, &g.w_cell})
        xavier_uniform_init(*w, rng);
      cells_.push_back(std::move(g));
    }
  }

  attn_w_ = nn::Parameter("attn.w", {2 * H, 2 * H});
  attn_b_ = nn::Parameter("attn.b", {2 * H});
  attn_context_ = nn::Parameter("attn.u", {2 * H});
  xavier_uniform_init(attn_w_, rng);
  normal_init(attn_context_, 0.1, rng);
  dense_w_ = nn::Parameter("dense.w", {4, 2 * H});
  dense_b_ = nn::Parameter("dense.b", {4});
  xavier_uniform_init(dense_w_, rng);
}

std::vector<nn::Parameter*> BilstmScorer::parameters() {
  std::vector<nn::Parameter*> out{&embeddings_};
  for (GateSet& g : cells_)
    for (nn::Parameter* p : {&g.w_input, &g.w_forget, &g.w_output, &g.w_cell, &g.b_input,
                             &g.b_forget, &g.b_output, &g.b_cell})
      out.push_back(p);
  if (cfg_.attention) {
    out.push_back(&attn_w_);
    out.push_back(&attn_b_);
    out.push_back(&attn_context_);
  }
  out.push_back(&dense_w_);
  out.push_back(&dense_b_);
  return out;
}

void BilstmScorer::init_pretrained(const EmbeddingTable& table) {
  if (table.dim != cfg_.embed_dim)
    throw std::invalid_argument("pretrained embeddings have dimension " +
                                std::to_string(table.dim) + ", model expects " +
                                std::to_string(cfg_.embed_dim));
  const std::size_t D = cfg_.embed_dim;
  for (const auto& [token, id] : vocab_.tokens()) {
    const auto it = table.rows.find(token);
    if (it == table.rows.end()) continue;
    std::copy(it->second.begin(), it->second.end(),
              embeddings_.value.begin() + static_cast<long>(static_cast<std::size_t>(id) * D));
  }
}

std::vector<std::string> BilstmScorer::dialog_tokens(const Dialog& dialog) {
  std::vector<std::string> out;
  bool first = true;
  for (const Turn& t : dialog.turns) {
    if (t.speaker != Speaker::kUser) continue;
    const auto toks = tokenize(t.text);
    if (toks.empty()) continue;
    if (!first) out.push_back(Vocab::kTurnSepToken);
    out.insert(out.end(), toks.begin(), toks.end());
    first = false;
  }
  return out;
}

std::vector<int> BilstmScorer::token_ids(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens)
    ids.push_back(t == Vocab::kTurnSepToken ? Vocab::kTurnSepId : vocab_.id(t));
  return ids;
}

namespace {

// One LSTM direction over the sequence. Recurrent dropout applies one mask,
// drawn here per sequence, to the hidden state fed back into the gates.
std::vector<nn::Tensor> run_direction(nn::Tape& tape, const std::vector<nn::Tensor>& xs,
                                      nn::Tensor wi, nn::Tensor wf, nn::Tensor wo, nn::Tensor wc,
                                      nn::Tensor bi, nn::Tensor bf, nn::Tensor bo, nn::Tensor bc,
                                      std::size_t hidden, bool backward, double dropout_rate,
                                      bool training, Prng& rng) {
  nn::Tensor mask;
  if (training && dropout_rate > 0.0) {
    std::vector<double> m(hidden);
    const double keep = 1.0 / (1.0 - dropout_rate);
    for (double& v : m) v = rng.uniform() < dropout_rate ? 0.0 : keep;
    mask = tape.constant({hidden}, std::move(m));
  }

  nn::Tensor h = tape.zeros({hidden});
  nn::Tensor c = tape.zeros({hidden});
  std::vector<nn::Tensor> states(xs.size());
  for (std::size_t step = 0; step < xs.size(); ++step) {
    const std::size_t pos = backward ? xs.size() - 1 - step : step;
    nn::Tensor h_in = mask.valid() ? tape.mul(h, mask) : h;
    const std::array<nn::Tensor, 2> joined = {xs[pos], h_in};
    nn::Tensor za = tape.concat(joined);
    nn::Tensor i = tape.sigmoid(tape.add(tape.matmul(wi, za), bi));
    nn::Tensor f = tape.sigmoid(tape.add(tape.matmul(wf, za), bf));
    nn::Tensor o = tape.sigmoid(tape.add(tape.matmul(wo, za), bo));
    nn::Tensor g = tape.tanh(tape.add(tape.matmul(wc, za), bc));
    c = tape.add(tape.mul(f, c), tape.mul(i, g));
    h = tape.mul(o, tape.tanh(c));
    states[pos] = h;
  }
  return states;
}

}  // namespace

BilstmScorer::Encoded BilstmScorer::encode(nn::Tape& tape, std::span<const int> ids,
                                           bool training, Prng& dropout_rng,
                                           std::vector<std::vector<double>>* states_out) {
  if (ids.empty()) throw std::invalid_argument("bilstm: dialog with zero user tokens");
  const std::size_t H = cfg_.hidden;
  const std::size_t n = ids.size();

  nn::Tensor emb = tape.leaf(embeddings_);
  std::vector<nn::Tensor> inputs(n);
  for (std::size_t t = 0; t < n; ++t) {
    const int id = ids[t];
    inputs[t] =
        tape.reshape(tape.embedding_lookup(emb, std::span<const int>(&id, 1)), {cfg_.embed_dim});
  }

  std::vector<nn::Tensor> fwd, bwd;
  for (std::size_t layer = 0; layer < cfg_.depth; ++layer) {
    std::array<std::vector<nn::Tensor>, 2> dir_states;
    for (bool backward : {false, true}) {
      GateSet& gs = cells_[layer * 2 + (backward ? 1 : 0)];
      dir_states[backward ? 1 : 0] = run_direction(
          tape, inputs, tape.leaf(gs.w_input), tape.leaf(gs.w_forget), tape.leaf(gs.w_output),
          tape.leaf(gs.w_cell), tape.leaf(gs.b_input), tape.leaf(gs.b_forget),
          tape.leaf(gs.b_output), tape.leaf(gs.b_cell), H, backward, cfg_.recurrent_dropout,
          training, dropout_rng);
    }
    fwd = std::move(dir_states[0]);
    bwd = std::move(dir_states[1]);
    std::vector<nn::Tensor> merged(n);
    for (std::size_t t = 0; t < n; ++t) {
      const std::array<nn::Tensor, 2> fb = {fwd[t], bwd[t]};
      merged[t] = tape.concat(fb);
    }
    inputs = std::move(merged);
  }

  if (states_out) {
    states_out->clear();
    for (const nn::Tensor& s : inputs) states_out->push_back(s.value());
  }

  Encoded enc;
  if (cfg_.attention) {
    nn::Tensor w = tape.leaf(attn_w_);
    nn::Tensor b = tape.leaf(attn_b_);
    nn::Tensor u_ctx = tape.leaf(attn_context_);
    std::vector<nn::Tensor> transformed(n);
    for (std::size_t t = 0; t < n; ++t)
      transformed[t] = tape.tanh(tape.add(tape.matmul(w, inputs[t]), b));
    nn::Tensor u_mat = tape.reshape(tape.concat(transformed), {n, 2 * H});
    nn::Tensor scores = tape.matmul(u_mat, u_ctx);
    nn::Tensor alpha = tape.softmax(scores);
    nn::Tensor h_mat = tape.reshape(tape.concat(inputs), {n, 2 * H});
    enc.dialog_vector = tape.matmul(alpha, h_mat);
    enc.alphas = alpha.value();
  } else {
    // Final forward state and final backward state (position 0).
    const std::array<nn::Tensor, 2> ends = {fwd.back(), bwd.front()};
    enc.dialog_vector = tape.concat(ends);
  }
  return enc;
}

nn::Tensor BilstmScorer::logits(nn::Tape& tape, std::span<const int> ids, bool training,
                                Prng& dropout_rng) {
  Encoded enc = encode(tape, ids, training, dropout_rng);
  return tape.add(tape.matmul(tape.leaf(dense_w_), enc.dialog_vector), tape.leaf(dense_b_));
}

nn::Tensor BilstmScorer::loss(nn::Tape& tape, std::span<const int> ids, int label, bool training,
                              Prng& dropout_rng) {
  if (label < 1 || label > 4) throw std::invalid_argument("bilstm: label outside 1..4");
  return tape.cross_entropy(logits(tape, ids, training, dropout_rng), label - 1);
}

Posterior BilstmScorer::predict(const Dialog& dialog) {
  const auto tokens = dialog_tokens(dialog);
  const auto ids = token_ids(tokens);
  nn::Tape tape;
  Prng rng(0);
  nn::Tensor p = tape.softmax(logits(tape, ids, false, rng));
  Posterior out{};
  std::copy_n(p.value().begin(), 4, out.begin());
  return out;
}

std::vector<std::pair<std::string, double>> BilstmScorer::attention_heatmap(
    const Dialog& dialog) {
  if (!cfg_.attention)
    throw std::logic_error("attention_heatmap: model was built without attention");
  const auto tokens = dialog_tokens(dialog);
  const auto ids = token_ids(tokens);
  nn::Tape tape;
  Prng rng(0);
  Encoded enc = encode(tape, ids, false, rng);
  std::vector<std::pair<std::string, double>> out;
  out.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) out.emplace_back(tokens[i], enc.alphas[i]);
  return out;
}

std::vector<std::vector<double>> BilstmScorer::encode_states(std::span<const int> ids) {
  nn::Tape tape;
  Prng rng(0);
  std::vector<std::vector<double>> states;
  encode(tape, ids, false, rng, &states);
  return states;
}

TrainHistory BilstmScorer::train(std::span<const ScoredDialog> train_set,
                                 std::span<const ScoredDialog> dev_set) {
  if (train_set.empty() || dev_set.empty())
    throw std::invalid_argument("bilstm train: empty train or dev set");

  struct Sample {
    std::vector<int> ids;
    int label;
  };
  std::vector<Sample> samples;
  for (const ScoredDialog& sd : train_set) {
    Sample s{token_ids(dialog_tokens(*sd.dialog)), sd.label};
    if (!s.ids.empty()) samples.push_back(std::move(s));
  }
  if (samples.empty()) throw std::invalid_argument("bilstm train: no dialog has user tokens");

  const auto params = parameters();
  nn::Adam adam(params, cfg_.adam);
  Prng shuffle_rng(derive_seed(cfg_.seed, 0x5487FF1E));
  Prng dropout_rng(derive_seed(cfg_.seed, 0xD20977));

  // Bucket similar lengths into one batch, then shuffle batch order.
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return samples[a].ids.size() < samples[b].ids.size();
  });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += cfg_.batch_size) {
    const std::size_t end = std::min(order.size(), i + cfg_.batch_size);
    batches.emplace_back(order.begin() + static_cast<long>(i),
                         order.begin() + static_cast<long>(end));
  }

  TrainHistory history;
  EarlyStopper stopper(cfg_.patience);
  std::vector<std::vector<double>> best_values;

  for (std::size_t epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
    shuffle_rng.shuffle(batches);
    double loss_total = 0.0;
    std::size_t loss_count = 0;
    for (const auto& batch : batches) {
      for (nn::Parameter* p : params) p->zero_grad();
      for (std::size_t si : batch) {
        nn::Tape tape;
        nn::Tensor l = loss(tape, samples[si].ids, samples[si].label, true, dropout_rng);
        loss_total += l.item();
        ++loss_count;
        tape.backward(l);
      }
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (nn::Parameter* p : params)
        for (double& g : p->grad) g *= inv;
      adam.step(params);
    }

    double dev_metric;
    try {
      std::vector<int> pred, gold;
      for (const ScoredDialog& sd : dev_set) {
        pred.push_back(posterior_argmax_label(predict(*sd.dialog)));
        gold.push_back(sd.label);
      }
      dev_metric = qwk(pred, gold);
    } catch (const std::exception&) {
      dev_metric = -2.0;  // degenerate dev distribution
    }

    const bool improved = stopper.update(dev_metric, epoch);
    if (improved) {
      best_values.clear();
      for (nn::Parameter* p : params) best_values.push_back(p->value);
    }
    history.epochs.push_back(
        {epoch, loss_total / static_cast<double>(loss_count), dev_metric, improved});
    if (stopper.should_stop()) break;
  }

  if (!best_values.empty())
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  history.best_epoch = stopper.best_epoch();
  history.best_dev_metric = stopper.best();
  return history;
}

void BilstmScorer::save_snapshot(const std::filesystem::path& base) const {
  SnapshotWriter writer;
  writer.meta()["model"] = "bilstm";
  writer.meta()["config"] = {{"embed_dim", cfg_.embed_dim},
                             {"hidden", cfg_.hidden},
                             {"depth", cfg_.depth},
                             {"recurrent_dropout", cfg_.recurrent_dropout},
                             {"batch_size", cfg_.batch_size},
                             {"max_epochs", cfg_.max_epochs},
                             {"patience", cfg_.patience},
                             {"attention", cfg_.attention},
                             {"seed", cfg_.seed}};
  writer.meta()["vocab"] = vocab_.to_json();
  auto* self = const_cast<BilstmScorer*>(this);
  for (nn::Parameter* p : self->parameters()) writer.add(*p);
  writer.write(base);
}

BilstmScorer BilstmScorer::load_snapshot(const std::filesystem::path& base) {
  SnapshotReader reader(base);
  if (reader.meta().value("model", "") != "bilstm")
    throw std::runtime_error("snapshot is not a bilstm model");
  const auto& jc = reader.meta().at("config");
  BilstmConfig cfg;
  cfg.embed_dim = jc.at("embed_dim").get<std::size_t>();
  cfg.hidden = jc.at("hidden").get<std::size_t>();
  cfg.depth = jc.at("depth").get<std::size_t>();
  cfg.recurrent_dropout = jc.at("recurrent_dropout").get<double>();
  cfg.batch_size = jc.at("batch_size").get<std::size_t>();
  cfg.max_epochs = jc.at("max_epochs").get<std::size_t>();
  cfg.patience = jc.at("patience").get<std::size_t>();
  cfg.attention = jc.at("attention").get<bool>();
  cfg.seed = jc.at("seed").get<std::uint64_t>();
  BilstmScorer model(cfg, Vocab::from_json(reader.meta().at("vocab")));
  for (nn::Parameter* p : model.parameters()) reader.load_into(*p);
  return model;
}

}  // namespace dialogscore
