#include "dialogscore/experiment.hpp"

#include <yaml-cpp/yaml.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <thread>

#include "dialogscore/metrics.hpp"
#include "dialogscore/prng.hpp"
#include "dialogscore/report.hpp"

namespace dialogscore {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<Construct> parse_construct_list(const YAML::Node& node) {
  std::vector<Construct> out;
  for (const auto& item : node) {
    const std::string name = item.as<std::string>();
    if (name == "all") {
      out.assign(kAllConstructs.begin(), kAllConstructs.end());
      return out;
    }
    const auto c = construct_from_string(name);
    if (!c) throw std::runtime_error("config: unknown construct '" + name + "'");
    out.push_back(*c);
  }
  return out;
}

template <class T>
void read_into(const YAML::Node& node, const char* key, T& value) {
  if (node && node[key]) value = node[key].as<T>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_yaml_file(const std::filesystem::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw std::runtime_error("config " + path.string() + ": " + e.what());
  }
  ExperimentConfig cfg;
  cfg.source_file = path;

  const YAML::Node corpus = root["corpus"];
  if (corpus) {
    if (corpus["path"]) cfg.corpus_path = corpus["path"].as<std::string>();
    if (corpus["synth"]) {
      cfg.use_synth = true;
      const YAML::Node s = corpus["synth"];
      read_into(s, "seed", cfg.synth_seed);
      read_into(s, "n", cfg.synth_n);
      read_into(s, "min_turns", cfg.synth_spec.min_turns);
      read_into(s, "max_turns", cfg.synth_spec.max_turns);
      read_into(s, "rater_noise", cfg.synth_spec.rater_noise);
    }
  }

  const YAML::Node run = root["run"];
  if (run) {
    if (run["constructs"]) cfg.constructs = parse_construct_list(run["constructs"]);
    if (run["systems"]) cfg.systems = run["systems"].as<std::vector<std::string>>();
    read_into(run, "folds", cfg.folds);
    read_into(run, "seed", cfg.seed);
    if (run["out_dir"]) cfg.out_dir = run["out_dir"].as<std::string>();
    read_into(run, "lexicon_dir", cfg.lexicon_dir);
    read_into(run, "embeddings", cfg.embeddings_path);
  }

  const YAML::Node feats = root["features"];
  read_into(feats, "min_df", cfg.features.min_df);
  read_into(feats, "log_counts", cfg.features.log_scale_counts);
  read_into(feats, "dependencies", cfg.features.use_dependencies);

  const YAML::Node linear = root["linear"];
  if (linear && linear["l2_grid"]) cfg.grid.l2_values = linear["l2_grid"].as<std::vector<double>>();
  read_into(linear, "max_iters", cfg.linear.max_iters);
  read_into(linear, "grad_tol", cfg.linear.grad_tol);

  const YAML::Node bl = root["bilstm"];
  read_into(bl, "embed_dim", cfg.bilstm.embed_dim);
  read_into(bl, "hidden", cfg.bilstm.hidden);
  read_into(bl, "depth", cfg.bilstm.depth);
  read_into(bl, "recurrent_dropout", cfg.bilstm.recurrent_dropout);
  read_into(bl, "batch_size", cfg.bilstm.batch_size);
  read_into(bl, "epochs", cfg.bilstm.max_epochs);
  read_into(bl, "patience", cfg.bilstm.patience);
  if (bl && bl["lr"]) cfg.bilstm.adam.lr = bl["lr"].as<double>();

  const YAML::Node mn = root["memn2n"];
  read_into(mn, "embed_dim", cfg.memn2n.embed_dim);
  read_into(mn, "hops", cfg.memn2n.hops);
  read_into(mn, "memory_size", cfg.memn2n.memory_size);
  read_into(mn, "readout_hidden", cfg.memn2n.readout_hidden);
  read_into(mn, "dropout", cfg.memn2n.dropout);
  read_into(mn, "tie_embeddings", cfg.memn2n.tie_embeddings);
  read_into(mn, "positional_encoding", cfg.memn2n.positional_encoding);
  read_into(mn, "batch_size", cfg.memn2n.batch_size);
  read_into(mn, "epochs", cfg.memn2n.max_epochs);
  read_into(mn, "patience", cfg.memn2n.patience);
  if (mn && mn["lr"]) cfg.memn2n.adam.lr = mn["lr"].as<double>();

  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  if (constructs.empty()) throw std::runtime_error("config: at least one construct required");
  if (systems.empty()) throw std::runtime_error("config: at least one system required");
  for (const std::string& s : systems) {
    bool known = false;
    for (const char* k : kInternalSystems) known = known || s == k;
    if (!known)
      throw std::runtime_error("config: unknown system '" + s +
                               "' (external systems join at the fuse step)");
  }
  if (folds < 2) throw std::runtime_error("config: folds must be >= 2");
  if (!use_synth && corpus_path.empty())
    throw std::runtime_error("config: either corpus.path or corpus.synth is required");
  if (!use_synth && !fs::exists(corpus_path))
    throw std::runtime_error("config: corpus file does not exist: " + corpus_path);
  if (!lexicon_dir.empty() && !fs::exists(lexicon_dir))
    throw std::runtime_error("config: lexicon_dir does not exist: " + lexicon_dir);
  if (!embeddings_path.empty() && !fs::exists(embeddings_path))
    throw std::runtime_error("config: embeddings file does not exist: " + embeddings_path);
}

namespace {

std::size_t worker_count() {
  if (const char* env = std::getenv("DIALOGSCORE_THREADS")) {
    const long v = std::atol(env);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

Posterior uniform_posterior() { return {0.25, 0.25, 0.25, 0.25}; }

struct Cell {
  std::size_t construct_index;
  std::size_t system_index;
  int fold;
};

struct CellOutput {
  std::map<std::string, Posterior> predictions;
  std::string error;
};

std::uint64_t cell_seed(const ExperimentConfig& cfg, Construct c, const std::string& system,
                        int fold) {
  return derive_seed(cfg.seed, fnv1a(std::string(to_string(c)) + "|" + system + "|" +
                                     std::to_string(fold)));
}

// The internal train/dev split is shared by every system on a fold so that
// system comparisons are paired.
std::uint64_t split_seed(const ExperimentConfig& cfg, Construct c, int fold) {
  return derive_seed(cfg.seed,
                     fnv1a(std::string(to_string(c)) + "|split|" + std::to_string(fold)));
}

// ---- per-system cell runners ----------------------------------------------

CellOutput run_linear_cell(const ExperimentConfig& cfg, const std::vector<ScoredDialog>& train,
                           const std::vector<ScoredDialog>& test, bool politeness,
                           const PolitenessLexicons& lex, std::uint64_t seed,
                           std::uint64_t split, const fs::path* model_base) {
  FeatureConfig fc = cfg.features;
  fc.use_politeness = politeness;

  const auto [tr_idx, dev_idx] = train_dev_split(train.size(), split);
  std::vector<ScoredDialog> tr, dev;
  for (std::size_t i : tr_idx) tr.push_back(train[i]);
  for (std::size_t i : dev_idx) dev.push_back(train[i]);

  const FeatureSpace sel_space = fit_feature_space(tr, fc, lex);
  std::vector<FeatureVector> tr_x, dev_x;
  std::vector<int> tr_y, dev_y;
  for (const ScoredDialog& sd : tr) {
    tr_x.push_back(vectorize(*sd.dialog, sel_space, lex));
    tr_y.push_back(sd.label);
  }
  for (const ScoredDialog& sd : dev) {
    dev_x.push_back(vectorize(*sd.dialog, sel_space, lex));
    dev_y.push_back(sd.label);
  }
  const GridSearchResult gs = grid_search(tr_x, tr_y, dev_x, dev_y, cfg.grid, cfg.linear);

  // Refit on the whole training fold at the selected regularization.
  const FeatureSpace space = fit_feature_space(train, fc, lex);
  std::vector<FeatureVector> x;
  std::vector<int> y;
  for (const ScoredDialog& sd : train) {
    x.push_back(vectorize(*sd.dialog, space, lex));
    y.push_back(sd.label);
  }
  const LinearModel model = train_linear(x, y, gs.best_l2, cfg.linear).model;

  if (model_base) {
    fs::create_directories(model_base->parent_path());
    model.save_json(model_base->string() + ".model.json");
    space.save_json(model_base->string() + ".space.json");
  }

  CellOutput out;
  for (const ScoredDialog& sd : test)
    out.predictions.emplace(sd.dialog->id, predict_proba(model, vectorize(*sd.dialog, space, lex)));
  return out;
}

CellOutput run_bilstm_cell(const ExperimentConfig& cfg, const std::vector<ScoredDialog>& train,
                           const std::vector<ScoredDialog>& test, bool attention,
                           const EmbeddingTable* pretrained, std::uint64_t seed,
                           std::uint64_t split, const fs::path* model_base) {
  const auto [tr_idx, dev_idx] = train_dev_split(train.size(), split);
  std::vector<ScoredDialog> tr, dev;
  for (std::size_t i : tr_idx) tr.push_back(train[i]);
  for (std::size_t i : dev_idx) dev.push_back(train[i]);

  std::vector<std::vector<std::string>> token_lists;
  for (const ScoredDialog& sd : tr) token_lists.push_back(BilstmScorer::dialog_tokens(*sd.dialog));
  BilstmConfig bc = cfg.bilstm;
  bc.attention = attention;
  bc.seed = derive_seed(seed, 2);
  BilstmScorer model(bc, Vocab::build(token_lists));
  if (pretrained) model.init_pretrained(*pretrained);
  model.train(tr, dev);

  if (model_base) {
    fs::create_directories(model_base->parent_path());
    model.save_snapshot(*model_base);
  }

  CellOutput out;
  for (const ScoredDialog& sd : test) {
    Posterior p;
    try {
      p = model.predict(*sd.dialog);
    } catch (const std::exception&) {
      p = uniform_posterior();  // dialog with no user tokens
    }
    out.predictions.emplace(sd.dialog->id, p);
  }
  return out;
}

CellOutput run_memn2n_cell(const ExperimentConfig& cfg, const std::vector<ScoredDialog>& train,
                           const std::vector<ScoredDialog>& test,
                           const EmbeddingTable* pretrained, std::uint64_t seed,
                           std::uint64_t split, const fs::path* model_base) {
  const auto [tr_idx, dev_idx] = train_dev_split(train.size(), split);
  std::vector<TurnSample> tr_samples, dev_samples;
  std::vector<std::vector<std::string>> token_lists;
  for (std::size_t i : tr_idx) {
    for (TurnSample& s :
         build_turn_samples(*train[i].dialog, train[i].label, cfg.memn2n.memory_size)) {
      token_lists.push_back(s.response);
      for (const auto& h : s.prompt_history) token_lists.push_back(h);
      tr_samples.push_back(std::move(s));
    }
  }
  for (std::size_t i : dev_idx)
    for (TurnSample& s :
         build_turn_samples(*train[i].dialog, train[i].label, cfg.memn2n.memory_size))
      dev_samples.push_back(std::move(s));

  MemN2NConfig mc = cfg.memn2n;
  mc.seed = derive_seed(seed, 2);
  MemN2NScorer model(mc, Vocab::build(token_lists));
  if (pretrained) model.init_pretrained(*pretrained);
  model.train(tr_samples, dev_samples);

  if (model_base) {
    fs::create_directories(model_base->parent_path());
    model.save_snapshot(*model_base);
  }

  // The dialog-level score is the median of the turn scores, so the
  // persisted posterior is the indicator of that label.
  CellOutput out;
  for (const ScoredDialog& sd : test) {
    Posterior p{};
    try {
      p[static_cast<std::size_t>(model.score_dialog(*sd.dialog) - 1)] = 1.0;
    } catch (const std::exception&) {
      p = uniform_posterior();
    }
    out.predictions.emplace(sd.dialog->id, p);
  }
  return out;
}

CellOutput run_cell(const ExperimentConfig& cfg, const std::vector<ScoredDialog>& scored,
                    const FoldAssignment& folds, Construct construct, const std::string& system,
                    int fold, const PolitenessLexicons& lex, const EmbeddingTable* pretrained,
                    const fs::path& construct_dir) {
  CellOutput out;
  try {
    std::vector<ScoredDialog> train, test;
    for (const ScoredDialog& sd : scored)
      (folds.membership.at(sd.dialog->id) == fold ? test : train).push_back(sd);
    if (train.empty() || test.empty())
      throw std::runtime_error("fold " + std::to_string(fold) + " has an empty split");

    const std::uint64_t seed = cell_seed(cfg, construct, system, fold);
    const std::uint64_t split = split_seed(cfg, construct, fold);
    const fs::path model_base = construct_dir / "models" / system;
    const fs::path* base = fold == 0 ? &model_base : nullptr;
    if (system == "svm")
      out = run_linear_cell(cfg, train, test, false, lex, seed, split, base);
    else if (system == "svm_pp")
      out = run_linear_cell(cfg, train, test, true, lex, seed, split, base);
    else if (system == "lstm")
      out = run_bilstm_cell(cfg, train, test, false, pretrained, seed, split, base);
    else if (system == "lstm_att")
      out = run_bilstm_cell(cfg, train, test, true, pretrained, seed, split, base);
    else if (system == "memn2n")
      out = run_memn2n_cell(cfg, train, test, pretrained, seed, split, base);
    else
      throw std::runtime_error("unknown system '" + system + "'");
  } catch (const std::exception& e) {
    out.predictions.clear();
    out.error = e.what();
  }
  return out;
}

}  // namespace

void run_cv(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);

  std::vector<Dialog> corpus = cfg.use_synth
                                   ? synthesize_corpus(cfg.synth_seed, cfg.synth_n, cfg.synth_spec)
                                   : load_corpus(cfg.corpus_path);
  save_corpus(corpus, cfg.out_dir / "corpus.jsonl");
  if (!cfg.source_file.empty() && fs::exists(cfg.source_file))
    fs::copy_file(cfg.source_file, cfg.out_dir / "config.yaml",
                  fs::copy_options::overwrite_existing);

  const PolitenessLexicons lex = cfg.lexicon_dir.empty()
                                     ? PolitenessLexicons::defaults()
                                     : PolitenessLexicons::load_dir(cfg.lexicon_dir);
  std::optional<EmbeddingTable> pretrained;
  if (!cfg.embeddings_path.empty()) pretrained = load_embeddings_text(cfg.embeddings_path);

  // Per-construct scorable sets and fold assignments.
  std::vector<std::vector<ScoredDialog>> scored(cfg.constructs.size());
  std::vector<FoldAssignment> folds(cfg.constructs.size());
  for (std::size_t ci = 0; ci < cfg.constructs.size(); ++ci) {
    const Construct c = cfg.constructs[ci];
    scored[ci] = filter_scorable(corpus, c);
    if (scored[ci].size() < static_cast<std::size_t>(cfg.folds))
      throw std::runtime_error("construct '" + std::string(to_string(c)) + "' has only " +
                               std::to_string(scored[ci].size()) + " scorable dialogs for " +
                               std::to_string(cfg.folds) + "-fold CV");
    folds[ci] = kfold(scored[ci], cfg.folds,
                      derive_seed(cfg.seed, fnv1a(std::string("folds|") +
                                                  std::string(to_string(c)))));

    const fs::path cdir = cfg.out_dir / "constructs" / std::string(to_string(c));
    fs::create_directories(cdir / "predictions");
    save_folds_csv(folds[ci], cdir / "folds.csv");
    std::ofstream gold(cdir / "gold.csv");
    gold << "dialog_id,label\n";
    std::map<std::string, int> by_id;
    for (const ScoredDialog& sd : scored[ci]) by_id.emplace(sd.dialog->id, sd.label);
    for (const auto& [id, label] : by_id) gold << id << "," << label << "\n";
  }

  // All (construct, system, fold) cells are independent jobs.
  std::vector<Cell> cells;
  for (std::size_t ci = 0; ci < cfg.constructs.size(); ++ci)
    for (std::size_t si = 0; si < cfg.systems.size(); ++si)
      for (int f = 0; f < cfg.folds; ++f) cells.push_back({ci, si, f});
  std::vector<CellOutput> outputs(cells.size());

  std::atomic<std::size_t> next{0};
  const std::size_t workers = std::min(worker_count(), cells.size());
  const auto work = [&]() {
    for (;;) {
      const std::size_t job = next.fetch_add(1);
      if (job >= cells.size()) return;
      const Cell& cell = cells[job];
      const Construct c = cfg.constructs[cell.construct_index];
      const fs::path cdir = cfg.out_dir / "constructs" / std::string(to_string(c));
      outputs[job] = run_cell(cfg, scored[cell.construct_index], folds[cell.construct_index], c,
                              cfg.systems[cell.system_index], cell.fold, lex,
                              pretrained ? &*pretrained : nullptr, cdir);
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w + 1 < workers; ++w) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();

  // Merge fold outputs into pooled out-of-fold prediction sets.
  for (std::size_t ci = 0; ci < cfg.constructs.size(); ++ci) {
    const Construct c = cfg.constructs[ci];
    const fs::path cdir = cfg.out_dir / "constructs" / std::string(to_string(c));
    json failures = json::array();
    for (std::size_t si = 0; si < cfg.systems.size(); ++si) {
      PredictionSet set;
      set.system_id = cfg.systems[si];
      for (std::size_t job = 0; job < cells.size(); ++job) {
        if (cells[job].construct_index != ci || cells[job].system_index != si) continue;
        if (!outputs[job].error.empty()) {
          failures.push_back({{"system", cfg.systems[si]},
                              {"fold", cells[job].fold},
                              {"error", outputs[job].error}});
          continue;
        }
        for (const auto& [id, p] : outputs[job].predictions) set.posteriors.emplace(id, p);
      }
      save_predictions_jsonl(set, cdir / "predictions" / (cfg.systems[si] + ".jsonl"));
    }
    if (!failures.empty()) {
      std::ofstream f(cdir / "failures.json");
      f << failures.dump(2) << "\n";
    }
  }

  write_reports(cfg.out_dir);
}

void run_fusion(const std::filesystem::path& results_dir,
                const std::vector<std::pair<std::string, std::string>>& externals) {
  const fs::path croot = results_dir / "constructs";
  if (!fs::exists(croot))
    throw std::runtime_error("no cv-run results under " + results_dir.string());

  for (Construct c : kAllConstructs) {
    const fs::path cdir = croot / std::string(to_string(c));
    if (!fs::exists(cdir)) continue;

    std::map<std::string, int> gold;
    {
      std::ifstream in(cdir / "gold.csv");
      if (!in) throw std::runtime_error("missing gold.csv under " + cdir.string());
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        gold.emplace(line.substr(0, comma), std::stoi(line.substr(comma + 1)));
      }
    }

    // External systems are ingested: validated and persisted next to the
    // internal prediction sets so reports stay recomputable from files. The
    // path may be a directory holding per-construct <construct>.jsonl files.
    for (const auto& [id, path] : externals) {
      for (const char* internal : kInternalSystems)
        if (id == internal)
          throw std::runtime_error("external system id '" + id +
                                   "' collides with a built-in system");
      fs::path file = path;
      if (fs::is_directory(file)) {
        file /= std::string(to_string(c)) + ".jsonl";
        if (!fs::exists(file))
          throw std::runtime_error("external system '" + id + "' has no predictions for '" +
                                   std::string(to_string(c)) + "' (" + file.string() + ")");
      }
      const PredictionSet ext = load_predictions_jsonl(file, id);
      for (const auto& [gid, label] : gold) {
        (void)label;
        if (!ext.posteriors.count(gid))
          throw std::runtime_error("external system '" + id + "' is missing dialog '" + gid +
                                   "'");
      }
      save_predictions_jsonl(ext, cdir / "predictions" / (id + ".jsonl"));
    }

    std::vector<PredictionSet> sets;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(cdir / "predictions"))
      if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) sets.push_back(load_predictions_jsonl(f, f.stem().string()));
    if (sets.empty()) throw std::runtime_error("no prediction sets under " + cdir.string());

    const SubsetSearchResult best = best_subset(sets, gold);
    std::vector<int> pred, truth;
    for (const auto& [id, label] : gold) {
      pred.push_back(posterior_argmax_label(best.fused.posteriors.at(id)));
      truth.push_back(label);
    }

    json out;
    out["systems"] = best.system_ids;
    out["fused_qwk"] = best.fused_qwk;
    out["fused_acc"] = accuracy(pred, truth);
    std::ofstream f(cdir / "fusion.json");
    f << out.dump(2) << "\n";
  }

  write_reports(results_dir);
}

}  // namespace dialogscore
