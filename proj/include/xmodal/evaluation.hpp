#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "xmodal/checkpoint.hpp"
#include "xmodal/dataset.hpp"
#include "xmodal/metrics.hpp"
#include "xmodal/report.hpp"
#include "xmodal/training.hpp"

namespace xmodal {

/// Logits of classifier(encoder(x)) over every window of `ds`, in chunks.
Matrix<float> predict_dataset(Encoder<float>& encoder, Classifier<float>& classifier, const WindowedDataset& ds);
std::vector<int> argmax_rows(const Matrix<float>& logits);

/// Throws LeakageError when the test subject took part in training or
/// validation of the checkpoint.
void audit_fold(const CheckpointMeta& meta, const FoldSpec& fold);

/// Scores the test-subject windows of `view` with the checkpoint's own
/// normalization statistics.
FoldReport evaluate_model(BackboneModel<float>& model, const CheckpointMeta& meta, const WindowedDataset& view,
                          const FoldSpec& fold);
FoldReport evaluate_checkpoint(const std::filesystem::path& dir, const WindowedDataset& view, const FoldSpec& fold);

struct RunSpec {
  Procedure procedure = Procedure::backbone;
  ModalityView target = ModalityView::imu;
  std::optional<ModalityView> source;
  TrainConfig train;
  int workers = 1;
  std::filesystem::path out_dir;  // empty: keep nothing on disk

  void validate() const;
};

nlohmann::json to_json(const RunSpec& s);

/// Trains one fold with the named procedure and scores its test subject.
/// Writes the fold's checkpoint and training log when `fold_dir` is set.
FoldReport train_and_evaluate(Procedure procedure, const WindowedDataset* source, const WindowedDataset& target,
                              const FoldSpec& fold, const TrainConfig& cfg,
                              const std::filesystem::path& fold_dir = {});

/// Leave-one-subject-out over every subject of the 4-channel dataset `ds`.
RunReport loso_run(const WindowedDataset& ds, const RunSpec& spec);

/// "bioz", "imu", "fusion" or the joined channel names.
std::string view_name(const std::vector<std::string>& channel_names);

}  // namespace xmodal
