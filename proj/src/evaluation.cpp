#include "xmodal/evaluation.hpp"

#include <algorithm>
#include <fstream>

#include "xmodal/parallel.hpp"

namespace xmodal {

using json = nlohmann::json;

Matrix<float> predict_dataset(Encoder<float>& encoder, Classifier<float>& classifier, const WindowedDataset& ds) {
  constexpr std::size_t kChunk = 512;
  Matrix<float> out(static_cast<Eigen::Index>(ds.size()), classifier.classes());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < ds.size(); i += kChunk) {
    rows.clear();
    for (std::size_t r = i; r < std::min(ds.size(), i + kChunk); ++r) rows.push_back(r);
    Graph<float> g(false);
    const auto res = classifier.forward(g, encoder.forward(g, ds.batch(rows)));
    out.middleRows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(rows.size())) = res.logits.value();
  }
  return out;
}

std::vector<int> argmax_rows(const Matrix<float>& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index k = 0;
    logits.row(i).maxCoeff(&k);
    out[i] = static_cast<int>(k);
  }
  return out;
}

void audit_fold(const CheckpointMeta& meta, const FoldSpec& fold) {
  if (meta.val_subject == fold.test_subject)
    throw LeakageError("test subject " + fold.test_subject + " was the checkpoint's validation subject");
  for (const auto& s : meta.train_subjects)
    if (s == fold.test_subject)
      throw LeakageError("test subject " + fold.test_subject + " was among the checkpoint's training subjects");
}

FoldReport evaluate_model(BackboneModel<float>& model, const CheckpointMeta& meta, const WindowedDataset& view,
                          const FoldSpec& fold) {
  if (meta.channel_names != view.channel_names)
    throw ConfigMismatch("checkpoint expects channels [" + view_name(meta.channel_names) + "], view has [" +
                         view_name(view.channel_names) + "]");
  if (meta.class_map != view.class_map) throw ConfigMismatch("checkpoint class map differs from the dataset's");
  audit_fold(meta, fold);
  const std::vector<std::string> test{fold.test_subject};
  const auto rows = rows_for_subjects(view, test);
  if (rows.empty()) throw EmptyFold("test subject " + fold.test_subject + " has no windows");
  const WindowedDataset x = normalize_apply(subset(view, rows), meta.norm);
  const auto pred = argmax_rows(predict_dataset(model.encoder, model.classifier, x));

  FoldReport r;
  r.subject = fold.test_subject;
  r.confusion = confusion_matrix(x.labels, pred, view.n_classes());
  r.macro_f1 = macro_f1(r.confusion);
  r.accuracy = accuracy(r.confusion);
  r.n_windows = rows.size();
  r.params = param_count(model);
  r.alpha = meta.alpha;
  r.val_subject = meta.val_subject;
  return r;
}

FoldReport evaluate_checkpoint(const std::filesystem::path& dir, const WindowedDataset& view, const FoldSpec& fold) {
  CheckpointMeta meta;
  auto model = load_checkpoint(dir, &meta);
  return evaluate_model(model, meta, view, fold);
}

void RunSpec::validate() const {
  train.validate();
  if (procedure == Procedure::backbone && source)
    throw Error("the backbone procedure trains a single view and takes no source modality");
  if (procedure != Procedure::backbone && !source)
    throw Error(to_string(procedure) + " training needs a source modality");
  if (source && *source == target) throw Error("source and target modality must differ");
  if (workers < 1) throw Error("workers must be >= 1");
}

json to_json(const RunSpec& s) {
  json j = {{"procedure", to_string(s.procedure)},
            {"target", to_string(s.target)},
            {"source", s.source ? json(to_string(*s.source)) : json(nullptr)},
            {"alpha", s.procedure == Procedure::contrastive ? json(s.train.alpha) : json(nullptr)},
            {"train", to_json(s.train)},
            {"std", "population"}};
  return j;
}

FoldReport train_and_evaluate(Procedure procedure, const WindowedDataset* source, const WindowedDataset& target,
                              const FoldSpec& fold, const TrainConfig& cfg, const std::filesystem::path& fold_dir) {
  TrainResult res = [&] {
    switch (procedure) {
      case Procedure::backbone: return train_backbone(target, fold, cfg);
      case Procedure::contrastive: return train_contrastive(*source, target, fold, cfg);
      case Procedure::shared: return train_shared(*source, target, fold, cfg);
    }
    throw Error("unknown procedure");
  }();
  if (!fold_dir.empty()) res.save(fold_dir);
  FoldReport r = evaluate_model(res.model, res.meta, target, fold);
  r.best_epoch = res.best_epoch;
  r.train_seconds = res.seconds;
  return r;
}

RunReport loso_run(const WindowedDataset& ds, const RunSpec& spec) {
  spec.validate();
  const WindowedDataset target = select_view(ds, spec.target);
  std::optional<WindowedDataset> source;
  if (spec.source) source = select_view(ds, *spec.source);
  const auto folds = loso_folds(ds.subject_set(), spec.train.seed);

  RunReport report;
  report.config = to_json(spec);
  report.class_map = ds.class_map;
  report.folds.resize(folds.size());
  parallel_for(folds.size(), spec.workers, [&](std::size_t i) {
    const auto dir = spec.out_dir.empty() ? std::filesystem::path{} : spec.out_dir / ("fold_" + folds[i].test_subject);
    report.folds[i] = train_and_evaluate(spec.procedure, source ? &*source : nullptr, target, folds[i], spec.train, dir);
  });
  report.aggregate();
  if (!spec.out_dir.empty()) write_run_report(report, (spec.out_dir / "report.json").string());
  return report;
}

std::string view_name(const std::vector<std::string>& channel_names) {
  for (auto v : {ModalityView::bioz, ModalityView::imu, ModalityView::fusion})
    if (view_channels(v) == channel_names) return to_string(v);
  std::string out;
  for (const auto& c : channel_names) out += (out.empty() ? "" : ",") + c;
  return out;
}

}  // namespace xmodal
