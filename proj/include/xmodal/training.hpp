#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "xmodal/checkpoint.hpp"
#include "xmodal/dataset.hpp"
#include "xmodal/models.hpp"
#include "xmodal/report.hpp"

namespace xmodal {

struct TrainConfig {
  int batch_size = 1024;
  double learning_rate = 5e-4;
  double alpha = 1.0;
  int epochs_contrastive = 80;
  int epochs_classif = 20;
  int epochs_baseline = 100;
  int early_stop_patience = 30;
  double tau = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Overlays the keys present in `j` onto `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

enum class Procedure { backbone, contrastive, shared };
Procedure parse_procedure(std::string_view name);
std::string to_string(Procedure p);

struct EpochRecord {
  std::string phase;  // "baseline", "contrastive", "classif" or "shared"
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_macro_f1 = 0;
};

nlohmann::json to_json(const EpochRecord& r);

/// Rows (into the view passed to training) that fed each stage.
struct FoldAudit {
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> norm_rows;
  std::vector<std::size_t> val_rows;
};

struct TrainResult {
  BackboneModel<float> model;          // inference path: classifier(encoder(x))
  std::vector<Parameter<float>> extra;  // auxiliary tensors of bundle procedures
  CheckpointMeta meta;
  std::vector<EpochRecord> curve;
  int best_epoch = -1;
  double seconds = 0;
  FoldSpec fold;
  TrainConfig config;
  FoldAudit audit;

  /// checkpoint.bin, checkpoint.json and train_log.jsonl
  void save(const std::filesystem::path& dir);
};

/// Weighted-CE training of one view with early stopping on val macro F1.
TrainResult train_backbone(const WindowedDataset& view, const FoldSpec& fold, const TrainConfig& cfg);

/// Two-phase training: weighted contrastive alignment, then the joint
/// classification loss. The source and target views must be index-aligned.
TrainResult train_contrastive(const WindowedDataset& source, const WindowedDataset& target, const FoldSpec& fold,
                              const TrainConfig& cfg);

/// Two encoders and a shared classifier under the classification loss alone.
TrainResult train_shared(const WindowedDataset& source, const WindowedDataset& target, const FoldSpec& fold,
                         const TrainConfig& cfg);

/// {0.0, 0.1, ..., 1.0}
std::vector<double> default_alpha_grid();

/// Parses "start:stop:step" (inclusive); throws Error on malformed or empty grids.
std::vector<double> parse_grid(std::string_view text);

struct SweepResult {
  std::vector<double> grid;
  std::vector<RunReport> runs;  // one per grid point
  std::size_t best = 0;

  double best_alpha() const { return grid.at(best); }
};

/// Index of the largest mean macro F1; ties go to the smaller alpha.
std::size_t argmax_alpha(const std::vector<double>& mean_f1);

/// Contrastive leave-one-subject-out run per grid point. Folds and grid
/// points are dispatched on up to `workers` threads.
SweepResult sweep_alpha(const WindowedDataset& source, const WindowedDataset& target,
                        const std::vector<FoldSpec>& folds, const TrainConfig& cfg, const std::vector<double>& grid,
                        int workers = 1);

nlohmann::json to_json(const SweepResult& s);
SweepResult sweep_result_from_json(const nlohmann::json& j);

}  // namespace xmodal
