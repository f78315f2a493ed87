#include "dialogscore/memn2n.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "dialogscore/early_stopping.hpp"
#include "dialogscore/features.hpp"
#include "dialogscore/metrics.hpp"
#include "dialogscore/snapshot.hpp"

namespace dialogscore {

std::vector<TurnSample> build_turn_samples(const Dialog& dialog, int label,
                                           std::size_t memory_size) {
  std::vector<TurnSample> samples;
  std::vector<std::vector<std::string>> responses_so_far;
  std::vector<std::vector<std::string>> prompts_so_far;
  const auto tail = [memory_size](const std::vector<std::vector<std::string>>& v) {
    if (v.size() <= memory_size) return v;
    return std::vector<std::vector<std::string>>(v.end() - static_cast<long>(memory_size),
                                                 v.end());
  };
  for (const Turn& t : dialog.turns) {
    const auto tokens = tokenize(t.text);
    if (t.speaker == Speaker::kSystem) {
      prompts_so_far.push_back(tokens);
      continue;
    }
    TurnSample s;
    s.dialog_id = dialog.id;
    s.response = tokens;
    s.response_history = tail(responses_so_far);
    s.prompt_history = tail(prompts_so_far);
    s.label = label;
    samples.push_back(std::move(s));
    responses_so_far.push_back(tokens);
  }
  return samples;
}

nn::Tensor encode_bow(nn::Tape& tape, nn::Tensor table, std::span<const int> ids,
                      bool positional) {
  const std::size_t D = table.shape().at(1);
  if (ids.empty()) return tape.zeros({D});
  nn::Tensor rows = tape.embedding_lookup(table, ids);
  const std::size_t n = ids.size();
  if (positional) {
    // Position weighting: l_jk = (1 - j/J) - (k/D)(1 - 2j/J), 1-based j,k.
    std::vector<double> l(n * D);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < D; ++k) {
        const double jj = static_cast<double>(j + 1), kk = static_cast<double>(k + 1);
        const double J = static_cast<double>(n), Dd = static_cast<double>(D);
        l[j * D + k] = (1.0 - jj / J) - (kk / Dd) * (1.0 - 2.0 * jj / J);
      }
    rows = tape.mul(rows, tape.constant({n, D}, std::move(l)));
  }
  nn::Tensor ones = tape.constant({n}, std::vector<double>(n, 1.0));
  return tape.matmul(ones, rows);  // column sums -> [D]
}

HopResult memory_hop(nn::Tape& tape, nn::Tensor query, std::span<const nn::Tensor> keys,
                     std::span<const nn::Tensor> values) {
  const std::size_t D = query.shape().at(0);
  HopResult result;
  if (keys.empty()) {
    result.output = tape.zeros({D});
    return result;
  }
  if (keys.size() != values.size())
    throw std::invalid_argument("memory_hop: key/value slot count mismatch");
  const std::size_t S = keys.size();
  nn::Tensor key_mat = tape.reshape(tape.concat(keys), {S, D});
  nn::Tensor scores = tape.matmul(key_mat, query);  // [S]
  nn::Tensor p = tape.softmax(scores);
  nn::Tensor value_mat = tape.reshape(tape.concat(values), {S, D});
  result.output = tape.matmul(p, value_mat);  // [D]
  result.attention = p.value();
  return result;
}

MemN2NScorer::MemN2NScorer(MemN2NConfig cfg, Vocab vocab)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  if (cfg_.hops < 1 || cfg_.hops > 3)
    throw std::invalid_argument("memn2n: hops must be 1, 2 or 3");
  if (cfg_.embed_dim == 0 || cfg_.readout_hidden == 0)
    throw std::invalid_argument("memn2n: embed_dim and readout_hidden must be positive");

  const std::size_t V = vocab_.size(), D = cfg_.embed_dim, R = cfg_.readout_hidden;
  Prng rng(derive_seed(cfg_.seed, 0x3E3A2A));

  query_embedding_ = nn::Parameter("query_embedding", {V, D});
  normal_init(query_embedding_, 0.1, rng);
  const std::size_t tables = cfg_.tie_embeddings ? 1 : cfg_.hops;
  for (std::size_t k = 0; k < tables; ++k) {
    const std::string suffix = std::to_string(k);
    response_keys_.emplace_back("response_key" + suffix, nn::Shape{V, D});
    response_values_.emplace_back("response_value" + suffix, nn::Shape{V, D});
    prompt_keys_.emplace_back("prompt_key" + suffix, nn::Shape{V, D});
    prompt_values_.emplace_back("prompt_value" + suffix, nn::Shape{V, D});
    normal_init(response_keys_.back(), 0.1, rng);
    normal_init(response_values_.back(), 0.1, rng);
    normal_init(prompt_keys_.back(), 0.1, rng);
    normal_init(prompt_values_.back(), 0.1, rng);
  }

  readout_.w_input = nn::Parameter("readout.wi", {R, D + R});
  readout_.w_forget = nn::Parameter("readout.wf", {R, D + R});
  readout_.w_output = nn::Parameter("readout.wo", {R, D + R});
  readout_.w_cell = nn::Parameter("readout.wc", {R, D + R});
  readout_.b_input = nn::Parameter("readout.bi", {R});
  readout_.b_forget = nn::Parameter("readout.bf", {R});
  readout_.b_output = nn::Parameter("readout.bo", {R});
  readout_.b_cell = nn::Parameter("readout.bc", {R});
  for (nn::Parameter* w :
       {&readout_.w_input, &readout_.w_forget, &readout_.w_output, &readout_.w_cell})
    xavier_uniform_init(*w, rng);
  dense_w_ = nn::Parameter("dense.w", {4, R});
  dense_b_ = nn::Parameter("dense.b", {4});
  xavier_uniform_init(dense_w_, rng);
}

nn::Parameter& MemN2NScorer::bank_key_table(std::size_t hop, bool prompt) {
  const std::size_t k = cfg_.tie_embeddings ? 0 : hop;
  return prompt ? prompt_keys_[k] : response_keys_[k];
}

nn::Parameter& MemN2NScorer::bank_value_table(std::size_t hop, bool prompt) {
  const std::size_t k = cfg_.tie_embeddings ? 0 : hop;
  return prompt ? prompt_values_[k] : response_values_[k];
}

std::vector<nn::Parameter*> MemN2NScorer::parameters() {
  std::vector<nn::Parameter*> out{&query_embedding_};
  for (auto* bank : {&response_keys_, &response_values_, &prompt_keys_, &prompt_values_})
    for (nn::Parameter& p : *bank) out.push_back(&p);
  for (nn::Parameter* p : {&readout_.w_input, &readout_.w_forget, &readout_.w_output,
                           &readout_.w_cell, &readout_.b_input, &readout_.b_forget,
                           &readout_.b_output, &readout_.b_cell, &dense_w_, &dense_b_})
    out.push_back(p);
  return out;
}

void MemN2NScorer::init_pretrained(const EmbeddingTable& table) {
  if (table.dim != cfg_.embed_dim)
    throw std::invalid_argument("pretrained embeddings have dimension " +
                                std::to_string(table.dim) + ", model expects " +
                                std::to_string(cfg_.embed_dim));
  const std::size_t D = cfg_.embed_dim;
  for (auto* bank : {&prompt_keys_, &prompt_values_})
    for (nn::Parameter& p : *bank)
      for (const auto& [token, id] : vocab_.tokens()) {
        const auto it = table.rows.find(token);
        if (it == table.rows.end()) continue;
        std::copy(it->second.begin(), it->second.end(),
                  p.value.begin() + static_cast<long>(static_cast<std::size_t>(id) * D));
      }
}

std::vector<int> MemN2NScorer::ids_of(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(vocab_.id(t));
  return ids;
}

nn::Tensor MemN2NScorer::logits(nn::Tape& tape, const TurnSample& sample, bool training,
                                Prng& dropout_rng) {
  const std::size_t D = cfg_.embed_dim, R = cfg_.readout_hidden;

  nn::Tensor u = encode_bow(tape, tape.leaf(query_embedding_), ids_of(sample.response),
                            cfg_.positional_encoding);
  std::vector<nn::Tensor> states{u};

  for (std::size_t k = 0; k < cfg_.hops; ++k) {
    nn::Tensor hop_sum;
    for (bool prompt : {false, true}) {
      const auto& history = prompt ? sample.prompt_history : sample.response_history;
      nn::Tensor key_table = tape.leaf(bank_key_table(k, prompt));
      nn::Tensor value_table = tape.leaf(bank_value_table(k, prompt));
      std::vector<nn::Tensor> keys, values;
      for (const auto& slot : history) {
        const auto ids = ids_of(slot);
        keys.push_back(encode_bow(tape, key_table, ids, cfg_.positional_encoding));
        values.push_back(encode_bow(tape, value_table, ids, cfg_.positional_encoding));
      }
      HopResult hop = memory_hop(tape, u, keys, values);
      nn::Tensor o = tape.dropout(hop.output, cfg_.dropout, dropout_rng, training);
      hop_sum = hop_sum.valid() ? tape.add(hop_sum, o) : o;
    }
    u = tape.add(u, hop_sum);
    states.push_back(u);
  }

  // LSTM readout over the hop-state trajectory [u_0 .. u_K].
  nn::Tensor wi = tape.leaf(readout_.w_input), wf = tape.leaf(readout_.w_forget);
  nn::Tensor wo = tape.leaf(readout_.w_output), wc = tape.leaf(readout_.w_cell);
  nn::Tensor bi = tape.leaf(readout_.b_input), bf = tape.leaf(readout_.b_forget);
  nn::Tensor bo = tape.leaf(readout_.b_output), bc = tape.leaf(readout_.b_cell);
  nn::Tensor h = tape.zeros({R});
  nn::Tensor c = tape.zeros({R});
  for (const nn::Tensor& x : states) {
    const std::array<nn::Tensor, 2> joined = {x, h};
    nn::Tensor za = tape.concat(joined);
    nn::Tensor i = tape.sigmoid(tape.add(tape.matmul(wi, za), bi));
    nn::Tensor f = tape.sigmoid(tape.add(tape.matmul(wf, za), bf));
    nn::Tensor o = tape.sigmoid(tape.add(tape.matmul(wo, za), bo));
    nn::Tensor g = tape.tanh(tape.add(tape.matmul(wc, za), bc));
    c = tape.add(tape.mul(f, c), tape.mul(i, g));
    h = tape.mul(o, tape.tanh(c));
  }
  (void)D;
  return tape.add(tape.matmul(tape.leaf(dense_w_), h), tape.leaf(dense_b_));
}

nn::Tensor MemN2NScorer::loss(nn::Tape& tape, const TurnSample& sample, bool training,
                              Prng& dropout_rng) {
  if (sample.label < 1 || sample.label > 4)
    throw std::invalid_argument("memn2n: label outside 1..4");
  return tape.cross_entropy(logits(tape, sample, training, dropout_rng), sample.label - 1);
}

Posterior MemN2NScorer::predict_turn(const TurnSample& sample) {
  nn::Tape tape;
  Prng rng(0);
  nn::Tensor p = tape.softmax(logits(tape, sample, false, rng));
  Posterior out{};
  std::copy_n(p.value().begin(), 4, out.begin());
  return out;
}

int MemN2NScorer::score_dialog(const Dialog& dialog) {
  const auto samples = build_turn_samples(dialog, 1, cfg_.memory_size);
  if (samples.empty())
    throw std::invalid_argument("memn2n: dialog '" + dialog.id + "' has no user turns");
  std::vector<int> turn_labels;
  turn_labels.reserve(samples.size());
  for (const TurnSample& s : samples)
    turn_labels.push_back(posterior_argmax_label(predict_turn(s)));
  return median_label(turn_labels);
}

TrainHistory MemN2NScorer::train(std::span<const TurnSample> train_set,
                                 std::span<const TurnSample> dev_set) {
  if (train_set.empty() || dev_set.empty())
    throw std::invalid_argument("memn2n train: empty train or dev set");

  const auto params = parameters();
  nn::Adam adam(params, cfg_.adam);
  Prng shuffle_rng(derive_seed(cfg_.seed, 0x9E5501));
  Prng dropout_rng(derive_seed(cfg_.seed, 0xD20978));

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainHistory history;
  EarlyStopper stopper(cfg_.patience);
  std::vector<std::vector<double>> best_values;

  for (std::size_t epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
      for (nn::Parameter* p : params) p->zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        nn::Tape tape;
        nn::Tensor l = loss(tape, train_set[order[i]], true, dropout_rng);
        loss_total += l.item();
        tape.backward(l);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (nn::Parameter* p : params)
        for (double& g : p->grad) g *= inv;
      adam.step(params);
    }

    double dev_metric;
    try {
      std::vector<int> pred, gold;
      for (const TurnSample& s : dev_set) {
        pred.push_back(posterior_argmax_label(predict_turn(s)));
        gold.push_back(s.label);
      }
      dev_metric = qwk(pred, gold);
    } catch (const std::exception&) {
      dev_metric = -2.0;
    }

    const bool improved = stopper.update(dev_metric, epoch);
    if (improved) {
      best_values.clear();
      for (nn::Parameter* p : params) best_values.push_back(p->value);
    }
    history.epochs.push_back(
        {epoch, loss_total / static_cast<double>(train_set.size()), dev_metric, improved});
    if (stopper.should_stop()) break;
  }

  if (!best_values.empty())
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  history.best_epoch = stopper.best_epoch();
  history.best_dev_metric = stopper.best();
  return history;
}

void MemN2NScorer::save_snapshot(const std::filesystem::path& base) const {
  SnapshotWriter writer;
  writer.meta()["model"] = "memn2n";
  writer.meta()["config"] = {{"embed_dim", cfg_.embed_dim},
                             {"hops", cfg_.hops},
                             {"memory_size", cfg_.memory_size},
                             {"readout_hidden", cfg_.readout_hidden},
                             {"dropout", cfg_.dropout},
                             {"tie_embeddings", cfg_.tie_embeddings},
                             {"positional_encoding", cfg_.positional_encoding},
                             {"batch_size", cfg_.batch_size},
                             {"max_epochs", cfg_.max_epochs},
                             {"patience", cfg_.patience},
                             {"seed", cfg_.seed}};
  writer.meta()["vocab"] = vocab_.to_json();
  auto* self = const_cast<MemN2NScorer*>(this);
  for (nn::Parameter* p : self->parameters()) writer.add(*p);
  writer.write(base);
}

MemN2NScorer MemN2NScorer::load_snapshot(const std::filesystem::path& base) {
  SnapshotReader reader(base);
  if (reader.meta().value("model", "") != "memn2n")
    throw std::runtime_error("snapshot is not a memn2n model");
  const auto& jc = reader.meta().at("config");
  MemN2NConfig cfg;
  cfg.embed_dim = jc.at("embed_dim").get<std::size_t>();
  cfg.hops = jc.at("hops").get<std::size_t>();
  cfg.memory_size = jc.at("memory_size").get<std::size_t>();
  cfg.readout_hidden = jc.at("readout_hidden").get<std::size_t>();
  cfg.dropout = jc.at("dropout").get<double>();
  cfg.tie_embeddings = jc.at("tie_embeddings").get<bool>();
  cfg.positional_encoding = jc.at("positional_encoding").get<bool>();
  cfg.batch_size = jc.at("batch_size").get<std::size_t>();
  cfg.max_epochs = jc.at("max_epochs").get<std::size_t>();
  cfg.patience = jc.at("patience").get<std::size_t>();
  cfg.seed = jc.at("seed").get<std::uint64_t>();
  MemN2NScorer model(cfg, Vocab::from_json(reader.meta().at("vocab")));
  for (nn::Parameter* p : model.parameters()) reader.load_into(*p);
  return model;
}

}  // namespace dialogscore
