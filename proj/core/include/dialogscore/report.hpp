#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dialogscore/corpus.hpp"
#include "dialogscore/metrics.hpp"

namespace dialogscore {

// Renders the construct x system matrix from the artifacts persisted by
// run_cv/run_fusion. Every cell is recomputed from gold.csv, folds.csv and
// the prediction files; nothing is cached. format is "md" or "csv".
std::string render_report(const std::filesystem::path& results_dir, const std::string& format);

void write_reports(const std::filesystem::path& results_dir);

// items x raters matrix over the dialogs that carry ratings for the
// construct (rater count = the largest ratings list; shorter lists leave
// missing cells).
RatingMatrix rating_matrix_for(std::span<const Dialog> dialogs, Construct construct);

// Attention heatmap rendering: tokens colored white -> saturated by weight,
// weights as tooltips; a token,alpha CSV is written alongside.
void write_heatmap_svg(const std::vector<std::pair<std::string, double>>& weights,
                       const std::filesystem::path& svg_path);
void write_heatmap_csv(const std::vector<std::pair<std::string, double>>& weights,
                       const std::filesystem::path& csv_path);

}  // namespace dialogscore
