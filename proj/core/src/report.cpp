#include "dialogscore/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "dialogscore/experiment.hpp"
#include "dialogscore/fusion.hpp"

namespace dialogscore {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v, const char* pattern = "%.4f") {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::map<std::string, int> load_gold_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::map<std::string, int> gold;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    gold.emplace(line.substr(0, comma), std::stoi(line.substr(comma + 1)));
  }
  return gold;
}

int system_rank(const std::string& id) {
  for (std::size_t i = 0; i < kInternalSystems.size(); ++i)
    if (id == kInternalSystems[i]) return static_cast<int>(i);
  return static_cast<int>(kInternalSystems.size());  // externals after internals
}

struct SystemMetrics {
  double acc_mean = std::nan("");
  double qwk_mean = std::nan("");
  double acc_pooled = std::nan("");
  double qwk_pooled = std::nan("");
};

struct FusionEntry {
  std::vector<std::string> systems;
  double acc = std::nan("");
  double qwk = std::nan("");
};

struct ConstructReport {
  Construct construct;
  std::map<std::string, SystemMetrics> by_system;
  std::optional<FusionEntry> fusion;
  double conger = std::nan("");
  double kripp = std::nan("");
};

SystemMetrics compute_metrics(const PredictionSet& set, const std::map<std::string, int>& gold,
                              const FoldAssignment& folds) {
  SystemMetrics m;
  std::vector<int> pred_all, gold_all;
  std::map<int, std::pair<std::vector<int>, std::vector<int>>> per_fold;
  for (const auto& [id, posterior] : set.posteriors) {
    const auto git = gold.find(id);
    if (git == gold.end()) continue;
    const int label = posterior_argmax_label(posterior);
    pred_all.push_back(label);
    gold_all.push_back(git->second);
    const auto fit = folds.membership.find(id);
    if (fit != folds.membership.end()) {
      per_fold[fit->second].first.push_back(label);
      per_fold[fit->second].second.push_back(git->second);
    }
  }
  if (pred_all.empty()) return m;
  m.acc_pooled = accuracy(pred_all, gold_all);
  try {
    m.qwk_pooled = qwk(pred_all, gold_all);
  } catch (const std::exception&) {
  }
  double acc_sum = 0.0, qwk_sum = 0.0;
  std::size_t acc_n = 0, qwk_n = 0;
  for (const auto& [fold, pg] : per_fold) {
    acc_sum += accuracy(pg.first, pg.second);
    ++acc_n;
    try {
      qwk_sum += qwk(pg.first, pg.second);
      ++qwk_n;
    } catch (const std::exception&) {
    }
  }
  if (acc_n) m.acc_mean = acc_sum / static_cast<double>(acc_n);
  if (qwk_n) m.qwk_mean = qwk_sum / static_cast<double>(qwk_n);
  return m;
}

struct ReportData {
  std::vector<std::string> systems;           // display order
  std::map<std::string, int> system_numbers;  // id -> 1-based Table-4 style number
  std::vector<ConstructReport> rows;
};

ReportData collect(const fs::path& results_dir) {
  ReportData data;
  const fs::path croot = results_dir / "constructs";
  if (!fs::exists(croot)) throw std::runtime_error("no results under " + results_dir.string());

  std::vector<Dialog> corpus;
  if (fs::exists(results_dir / "corpus.jsonl"))
    corpus = load_corpus(results_dir / "corpus.jsonl");

  // Column order: the five internal systems in fixed numbering, then any
  // ingested external systems alphabetically.
  std::vector<std::string> systems;
  for (Construct c : kAllConstructs) {
    const fs::path pdir = croot / std::string(to_string(c)) / "predictions";
    if (!fs::exists(pdir)) continue;
    for (const auto& entry : fs::directory_iterator(pdir))
      if (entry.path().extension() == ".jsonl") {
        const std::string id = entry.path().stem().string();
        if (std::find(systems.begin(), systems.end(), id) == systems.end()) systems.push_back(id);
      }
  }
  std::sort(systems.begin(), systems.end(), [](const std::string& a, const std::string& b) {
    return std::pair(system_rank(a), a) < std::pair(system_rank(b), b);
  });
  data.systems = systems;
  for (std::size_t i = 0; i < systems.size(); ++i)
    data.system_numbers.emplace(systems[i], static_cast<int>(i + 1));

  for (Construct c : kAllConstructs) {
    const fs::path cdir = croot / std::string(to_string(c));
    if (!fs::exists(cdir)) continue;
    ConstructReport row;
    row.construct = c;
    const auto gold = load_gold_csv(cdir / "gold.csv");
    const FoldAssignment folds = load_folds_csv(cdir / "folds.csv");
    for (const std::string& sys : systems) {
      const fs::path pfile = cdir / "predictions" / (sys + ".jsonl");
      if (!fs::exists(pfile)) continue;
      row.by_system.emplace(sys, compute_metrics(load_predictions_jsonl(pfile, sys), gold, folds));
    }
    if (fs::exists(cdir / "fusion.json")) {
      std::ifstream fj(cdir / "fusion.json");
      const json j = json::parse(fj);
      FusionEntry fe;
      fe.systems = j.at("systems").get<std::vector<std::string>>();
      // Re-fuse the persisted member sets rather than trusting cached values.
      std::vector<PredictionSet> members;
      for (const std::string& id : fe.systems)
        members.push_back(load_predictions_jsonl(cdir / "predictions" / (id + ".jsonl"), id));
      const PredictionSet fused = fuse(members);
      std::vector<int> pred, truth;
      for (const auto& [id, label] : gold) {
        pred.push_back(posterior_argmax_label(fused.posteriors.at(id)));
        truth.push_back(label);
      }
      fe.acc = accuracy(pred, truth);
      try {
        fe.qwk = qwk(pred, truth);
      } catch (const std::exception&) {
      }
      row.fusion = std::move(fe);
    }
    if (!corpus.empty()) {
      try {
        const RatingMatrix rm = rating_matrix_for(corpus, c);
        row.kripp = krippendorff_alpha(rm);
        row.conger = conger_kappa(rm);
      } catch (const std::exception&) {
        // ragged or single-rater matrices leave the IRR cells empty
      }
    }
    data.rows.push_back(std::move(row));
  }
  return data;
}

std::string fused_system_numbers(const ReportData& data, const FusionEntry& fe, const char* sep) {
  std::string out;
  std::vector<int> numbers;
  for (const std::string& id : fe.systems) numbers.push_back(data.system_numbers.at(id));
  std::sort(numbers.begin(), numbers.end());
  for (std::size_t i = 0; i < numbers.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(numbers[i]);
  }
  return out;
}

std::string render_md(const ReportData& data) {
  std::ostringstream os;
  os << "# Dialog scoring report\n\n";
  os << "Systems: ";
  for (std::size_t i = 0; i < data.systems.size(); ++i)
    os << (i ? ", " : "") << (i + 1) << ". " << data.systems[i];
  os << "\n\nQWK cells show mean-of-folds with the pooled out-of-fold value in parentheses.\n\n";

  os << "| Construct |";
  for (const std::string& sys : data.systems)
    os << " " << data.system_numbers.at(sys) << " ACC | " << data.system_numbers.at(sys)
       << " QWK |";
  os << " Best system | Fused ACC | Fused QWK | Conger k | Kripp. a |\n";
  os << "|---|";
  for (std::size_t i = 0; i < data.systems.size(); ++i) os << "---|---|";
  os << "---|---|---|---|---|\n";

  for (const ConstructReport& row : data.rows) {
    os << "| " << to_string(row.construct) << " |";
    for (const std::string& sys : data.systems) {
      const auto it = row.by_system.find(sys);
      if (it == row.by_system.end()) {
        os << " n/a | n/a |";
        continue;
      }
      os << " " << fmt(it->second.acc_mean) << " | " << fmt(it->second.qwk_mean) << " ("
         << fmt(it->second.qwk_pooled) << ") |";
    }
    if (row.fusion) {
      os << " " << fused_system_numbers(data, *row.fusion, ", ") << " | " << fmt(row.fusion->acc)
         << " | " << fmt(row.fusion->qwk) << " |";
    } else {
      os << " n/a | n/a | n/a |";
    }
    os << " " << fmt(row.conger) << " | " << fmt(row.kripp) << " |\n";
  }
  return os.str();
}

std::string render_csv(const ReportData& data) {
  std::ostringstream os;
  os << "construct";
  for (const std::string& sys : data.systems)
    os << "," << sys << "_acc," << sys << "_qwk," << sys << "_acc_pooled," << sys
       << "_qwk_pooled";
  os << ",best_systems,fused_acc,fused_qwk,conger_kappa,krippendorff_alpha\n";

  const auto cell = [](double v) { return std::isnan(v) ? std::string() : fmt(v); };
  for (const ConstructReport& row : data.rows) {
    os << to_string(row.construct);
    for (const std::string& sys : data.systems) {
      const auto it = row.by_system.find(sys);
      if (it == row.by_system.end()) {
        os << ",,,,";
        continue;
      }
      os << "," << cell(it->second.acc_mean) << "," << cell(it->second.qwk_mean) << ","
         << cell(it->second.acc_pooled) << "," << cell(it->second.qwk_pooled);
    }
    if (row.fusion)
      os << "," << fused_system_numbers(data, *row.fusion, "+") << "," << cell(row.fusion->acc)
         << "," << cell(row.fusion->qwk);
    else
      os << ",,,";
    os << "," << cell(row.conger) << "," << cell(row.kripp) << "\n";
  }
  return os.str();
}

}  // namespace

std::string render_report(const std::filesystem::path& results_dir, const std::string& format) {
  const ReportData data = collect(results_dir);
  if (format == "md") return render_md(data);
  if (format == "csv") return render_csv(data);
  throw std::invalid_argument("report format must be 'md' or 'csv', got '" + format + "'");
}

void write_reports(const std::filesystem::path& results_dir) {
  for (const char* format : {"md", "csv"}) {
    std::ofstream out(results_dir / (std::string("report.") + format));
    out << render_report(results_dir, format);
  }
}

RatingMatrix rating_matrix_for(std::span<const Dialog> dialogs, Construct construct) {
  std::vector<const std::vector<int>*> rows;
  std::size_t raters = 0;
  for (const Dialog& d : dialogs) {
    const auto it = d.ratings.find(construct);
    if (it == d.ratings.end()) continue;
    rows.push_back(&it->second);
    raters = std::max(raters, it->second.size());
  }
  if (rows.empty())
    throw std::invalid_argument("no dialog carries ratings for construct '" +
                                std::string(to_string(construct)) + "'");
  RatingMatrix rm(rows.size(), raters);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t r = 0; r < rows[i]->size(); ++r) rm.at(i, r) = (*rows[i])[r];
  return rm;
}

void write_heatmap_svg(const std::vector<std::pair<std::string, double>>& weights,
                       const std::filesystem::path& svg_path) {
  constexpr int kCharW = 9, kPadX = 10, kPadY = 8, kRowH = 30, kWrap = 780;
  double max_alpha = 0.0;
  for (const auto& [tok, a] : weights) max_alpha = std::max(max_alpha, a);
  if (max_alpha <= 0.0) max_alpha = 1.0;

  // First pass: layout.
  struct Box {
    int x, y, w;
  };
  std::vector<Box> boxes(weights.size());
  int x = kPadX, y = kPadY;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const int w = static_cast<int>(weights[i].first.size()) * kCharW + 12;
    if (x + w > kWrap && x > kPadX) {
      x = kPadX;
      y += kRowH;
    }
    boxes[i] = {x, y, w};
    x += w + 6;
  }
  const int height = y + kRowH + kPadY;

  std::ofstream out(svg_path);
  if (!out) throw std::runtime_error("cannot write heatmap: " + svg_path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"" << height
      << "\" font-family=\"monospace\" font-size=\"14\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"" << height << "\" fill=\"white\"/>\n";
  char buf[64];
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto& [token, alpha] = weights[i];
    const int shade = static_cast<int>(std::lround(190.0 * alpha / max_alpha));
    std::string escaped;
    for (char ch : token) {
      switch (ch) {
        case '&': escaped += "&amp;"; break;
        case '<': escaped += "&lt;"; break;
        case '>': escaped += "&gt;"; break;
        default: escaped += ch;
      }
    }
    std::snprintf(buf, sizeof buf, "%.6f", alpha);
    out << "<g><rect x=\"" << boxes[i].x << "\" y=\"" << boxes[i].y << "\" width=\"" << boxes[i].w
        << "\" height=\"22\" rx=\"3\" fill=\"rgb(255," << 255 - shade << "," << 255 - shade
        << ")\"/><text x=\"" << boxes[i].x + 6 << "\" y=\"" << boxes[i].y + 16 << "\">" << escaped
        << "</text><title>alpha=" << buf << "</title></g>\n";
  }
  out << "</svg>\n";
}

void write_heatmap_csv(const std::vector<std::pair<std::string, double>>& weights,
                       const std::filesystem::path& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("cannot write heatmap csv: " + csv_path.string());
  out << "token,alpha\n";
  char buf[64];
  for (const auto& [token, alpha] : weights) {
    std::string quoted = token;
    if (quoted.find(',') != std::string::npos || quoted.find('"') != std::string::npos) {
      std::string q = "\"";
      for (char c : quoted) {
        if (c == '"') q += '"';
        q += c;
      }
      q += '"';
      quoted = std::move(q);
    }
    std::snprintf(buf, sizeof buf, "%.9f", alpha);
    out << quoted << "," << buf << "\n";
  }
}

}  // namespace dialogscore
