#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xmodal/metrics.hpp"

namespace xmodal {

struct FoldReport {
  std::string subject;
  double macro_f1 = 0;
  double accuracy = 0;
  Confusion confusion;
  std::size_t n_windows = 0;
  std::size_t params = 0;
  std::optional<double> alpha;
  std::string val_subject;
  int best_epoch = -1;
  double train_seconds = 0;
};

struct RunReport {
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> class_map;
  std::vector<FoldReport> folds;
  double mean_macro_f1 = 0, std_macro_f1 = 0;
  double mean_accuracy = 0, std_accuracy = 0;

  /// Recomputes the mean/std fields from the folds.
  void aggregate();
  /// Elementwise sum of the fold confusions.
  Confusion joint_confusion() const;
  std::vector<std::string> subjects() const;
};

nlohmann::json to_json(const FoldReport& f);
nlohmann::json to_json(const RunReport& r);
RunReport run_report_from_json(const nlohmann::json& j);

/// Schema problems of a RunReport document; empty when it is valid.
std::vector<std::string> validate_run_report(const nlohmann::json& j);

RunReport read_run_report(const std::string& path);
void write_run_report(const RunReport& r, const std::string& path);

struct ImprovementRow {
  std::string name;
  double mean_macro_f1 = 0, std_macro_f1 = 0;
  std::optional<double> alpha;
  double improvement = 0;  // percentage points over the baseline
};

/// One row per run; throws SubjectMismatch unless every run covers the
/// baseline's subjects.
std::vector<ImprovementRow> improvement_table(const std::vector<std::pair<std::string, RunReport>>& runs,
                                              const RunReport& baseline);

std::string improvement_csv(const std::vector<ImprovementRow>& rows);
std::string improvement_text(const std::vector<ImprovementRow>& rows, const std::string& baseline_name);

}  // namespace xmodal
