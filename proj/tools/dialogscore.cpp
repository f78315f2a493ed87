// dialogscore: train, evaluate and fuse the dialog scoring systems.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "dialogscore/bilstm.hpp"
#include "dialogscore/corpus.hpp"
#include "dialogscore/experiment.hpp"
#include "dialogscore/report.hpp"
#include "dialogscore/synth.hpp"

namespace fs = std::filesystem;
using namespace dialogscore;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int run_synth(std::uint64_t seed, std::size_t n, const std::string& out) {
  if (n < 1) throw UsageError("--n must be at least 1");
  save_corpus(synthesize_corpus(seed, n), out);
  std::cout << "wrote " << n << " dialogs to " << out << "\n";
  return 0;
}

int run_cv_cmd(const std::string& config_path) {
  const ExperimentConfig cfg = ExperimentConfig::from_yaml_file(config_path);
  run_cv(cfg);
  std::cout << "results written to " << cfg.out_dir.string() << "\n";
  return 0;
}

int run_fuse_cmd(const std::string& dir, const std::vector<std::string>& external_args) {
  std::vector<std::pair<std::string, std::string>> externals;
  for (const std::string& arg : external_args) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size())
      throw UsageError("--external expects id=path, got '" + arg + "'");
    externals.emplace_back(arg.substr(0, eq), arg.substr(eq + 1));
  }
  run_fusion(dir, externals);
  std::cout << "fusion results written under " << dir << "\n";
  return 0;
}

int run_report_cmd(const std::string& dir, const std::string& format) {
  std::cout << render_report(dir, format);
  return 0;
}

int run_heatmap_cmd(const std::string& corpus_path, const std::string& dialog_id,
                    const std::string& model_base, const std::string& out_dir) {
  BilstmScorer model = [&] {
    try {
      return BilstmScorer::load_snapshot(model_base);
    } catch (const std::exception& e) {
      throw UsageError("--model must point at a bilstm attention snapshot: " +
                       std::string(e.what()));
    }
  }();
  if (!model.config().attention)
    throw UsageError("model '" + model_base + "' has no attention weights to plot");

  const auto corpus = load_corpus(corpus_path);
  const Dialog* dialog = nullptr;
  for (const Dialog& d : corpus)
    if (d.id == dialog_id) dialog = &d;
  if (!dialog) throw UsageError("dialog '" + dialog_id + "' not found in " + corpus_path);

  const auto weights = model.attention_heatmap(*dialog);
  fs::create_directories(out_dir);
  const fs::path base = fs::path(out_dir) / dialog_id;
  write_heatmap_svg(weights, base.string() + ".svg");
  write_heatmap_csv(weights, base.string() + ".csv");
  std::cout << "wrote " << base.string() << ".svg and .csv\n";
  return 0;
}

int run_irr_cmd(const std::string& corpus_path, const std::string& construct_name) {
  const auto construct = construct_from_string(construct_name);
  if (!construct) throw UsageError("unknown construct '" + construct_name + "'");
  const auto corpus = load_corpus(corpus_path);
  const RatingMatrix rm = rating_matrix_for(corpus, *construct);
  if (rm.raters() < 2) throw UsageError("corpus has fewer than 2 raters for IRR");
  std::printf("construct: %s\n", construct_name.c_str());
  std::printf("conger_kappa: %.6f\n", conger_kappa(rm));
  std::printf("krippendorff_alpha: %.6f\n", krippendorff_alpha(rm));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dialog scoring experiments: synthesis, cross-validation, fusion, reports"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic corpus");
  std::uint64_t synth_seed = 7;
  std::size_t synth_n = 500;
  std::string synth_out;
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--n", synth_n, "number of dialogs")->required();
  synth->add_option("--out", synth_out, "output JSONL path")->required();

  auto* cv = app.add_subcommand("cv-run", "cross-validated training of the configured systems");
  std::string cv_config;
  cv->add_option("--config", cv_config, "experiment config (YAML)")
      ->required()
      ->check(CLI::ExistingFile);

  auto* fusecmd = app.add_subcommand("fuse", "best-subset score fusion over persisted results");
  std::string fuse_dir;
  std::vector<std::string> fuse_external;
  fusecmd->add_option("--predictions-dir", fuse_dir, "results directory from cv-run")
      ->required()
      ->check(CLI::ExistingDirectory);
  fusecmd->add_option("--external", fuse_external,
                      "external prediction set as id=path (repeatable)");

  auto* report = app.add_subcommand("report", "print the construct x system report");
  std::string report_dir, report_format = "md";
  report->add_option("--results-dir", report_dir, "results directory from cv-run")
      ->required()
      ->check(CLI::ExistingDirectory);
  report->add_option("--format", report_format, "md or csv")
      ->check(CLI::IsMember({"md", "csv"}));

  auto* heatmap = app.add_subcommand("heatmap", "attention heatmap SVG for one dialog");
  std::string hm_corpus, hm_dialog, hm_model, hm_out;
  heatmap->add_option("--corpus", hm_corpus, "corpus JSONL")->required()->check(CLI::ExistingFile);
  heatmap->add_option("--dialog-id", hm_dialog, "dialog to plot")->required();
  heatmap->add_option("--model", hm_model, "snapshot base path (without .json/.bin)")->required();
  heatmap->add_option("--out", hm_out, "output directory")->required();

  auto* irr = app.add_subcommand("irr", "inter-rater agreement for one construct");
  std::string irr_corpus, irr_construct;
  irr->add_option("--ratings", irr_corpus, "corpus JSONL with ratings")
      ->required()
      ->check(CLI::ExistingFile);
  irr->add_option("--construct", irr_construct, "construct name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return run_synth(synth_seed, synth_n, synth_out);
    if (cv->parsed()) return run_cv_cmd(cv_config);
    if (fusecmd->parsed()) return run_fuse_cmd(fuse_dir, fuse_external);
    if (report->parsed()) return run_report_cmd(report_dir, report_format);
    if (heatmap->parsed()) return run_heatmap_cmd(hm_corpus, hm_dialog, hm_model, hm_out);
    if (irr->parsed()) return run_irr_cmd(irr_corpus, irr_construct);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
