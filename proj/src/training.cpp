#include "xmodal/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "xmodal/evaluation.hpp"
#include "xmodal/losses.hpp"
#include "xmodal/metrics.hpp"
#include "xmodal/optim.hpp"
#include "xmodal/parallel.hpp"

namespace xmodal {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size < 1 || !(learning_rate > 0) || epochs_contrastive < 0 || epochs_classif < 0 ||
      epochs_baseline < 1 || early_stop_patience < 1 || !(tau > 0))
    throw Error("training config: batch size, learning rate, epochs, patience and tau must be positive");
  if (!(alpha >= 0 && alpha <= 1)) throw AlphaRange("alpha must lie in [0, 1]");
}

json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"alpha", c.alpha},
          {"epochs_contrastive", c.epochs_contrastive},
          {"epochs_classif", c.epochs_classif},
          {"epochs_baseline", c.epochs_baseline},
          {"early_stop_patience", c.early_stop_patience},
          {"tau", c.tau},
          {"optimizer", "adam"},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
  if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
  if (j.contains("epochs_contrastive")) c.epochs_contrastive = j["epochs_contrastive"].get<int>();
  if (j.contains("epochs_classif")) c.epochs_classif = j["epochs_classif"].get<int>();
  if (j.contains("epochs_baseline")) c.epochs_baseline = j["epochs_baseline"].get<int>();
  if (j.contains("early_stop_patience")) c.early_stop_patience = j["early_stop_patience"].get<int>();
  if (j.contains("tau")) c.tau = j["tau"].get<double>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  return c;
}

Procedure parse_procedure(std::string_view name) {
  if (name == "backbone") return Procedure::backbone;
  if (name == "contrastive") return Procedure::contrastive;
  if (name == "shared") return Procedure::shared;
  throw Error("unknown procedure '" + std::string(name) + "'");
}

std::string to_string(Procedure p) {
  switch (p) {
    case Procedure::backbone: return "backbone";
    case Procedure::contrastive: return "contrastive";
    case Procedure::shared: return "shared";
  }
  return {};
}

json to_json(const EpochRecord& r) {
  return {{"phase", r.phase},
          {"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"val_loss", r.val_loss},
          {"val_macro_f1", r.val_macro_f1}};
}

void TrainResult::save(const std::filesystem::path& dir) {
  std::vector<const Parameter<float>*> aux;
  for (const auto& p : extra) aux.push_back(&p);
  save_checkpoint(dir, model, meta, aux);
  std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
  for (const auto& r : curve) log << to_json(r).dump() << "\n";
}

namespace {

using Clock = std::chrono::steady_clock;

struct Prepared {
  WindowedDataset train, val;
  NormStats stats;
  FoldAudit audit;
};

void check_fold(const FoldSpec& fold) {
  for (const auto& s : fold.train_subjects)
    if (s == fold.test_subject || s == fold.val_subject)
      throw LeakageError("fold lists subject " + s + " in training and in test/validation");
  if (fold.val_subject == fold.test_subject) throw LeakageError("validation subject equals test subject");
}

Prepared prepare(const WindowedDataset& view, const FoldSpec& fold) {
  check_fold(fold);
  Prepared p;
  p.audit.train_rows = rows_for_subjects(view, fold.train_subjects);
  const std::vector<std::string> val{fold.val_subject};
  p.audit.val_rows = rows_for_subjects(view, val);
  if (p.audit.train_rows.empty()) throw EmptyFold("fold for " + fold.test_subject + " has no training windows");
  if (p.audit.val_rows.empty()) throw EmptyFold("validation subject " + fold.val_subject + " has no windows");
  p.audit.norm_rows = p.audit.train_rows;
  const WindowedDataset raw_train = subset(view, p.audit.train_rows);
  p.stats = normalize_fit(raw_train);
  p.train = normalize_apply(raw_train, p.stats);
  p.val = normalize_apply(subset(view, p.audit.val_rows), p.stats);
  return p;
}

EncoderConfig encoder_for(const WindowedDataset& view) {
  EncoderConfig c;
  c.in_channels = view.channels();
  c.window = view.window;
  c.validate();
  return c;
}

/// Shuffled row batches covering every row once; the last one may be short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t b = std::min(n, static_cast<std::size_t>(batch_size));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += b) out.emplace_back(perm.begin() + i, perm.begin() + std::min(n, i + b));
  return out;
}

std::vector<int> labels_of(const WindowedDataset& ds, const std::vector<std::size_t>& rows) {
  std::vector<int> y;
  y.reserve(rows.size());
  for (auto r : rows) y.push_back(ds.labels[r]);
  return y;
}

struct ValScore {
  double loss = 0;
  double macro_f1 = 0;
};

ValScore score(Encoder<float>& enc, Classifier<float>& clf, const WindowedDataset& val,
               const std::vector<double>& weights) {
  const Matrix<float> logits = predict_dataset(enc, clf, val);
  ValScore s;
  s.loss = weighted_cross_entropy<float>(logits, val.labels, weights);
  s.macro_f1 = macro_f1(confusion_matrix(val.labels, argmax_rows(logits), val.n_classes()));
  return s;
}

std::vector<Matrix<float>> snapshot(const std::vector<Parameter<float>*>& params) {
  std::vector<Matrix<float>> out;
  for (const auto* p : params) out.push_back(p->value);
  return out;
}

void restore(const std::vector<Parameter<float>*>& params, const std::vector<Matrix<float>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

template <typename... Lists>
std::vector<Parameter<float>*> join(Lists&&... lists) {
  std::vector<Parameter<float>*> out;
  (out.insert(out.end(), lists.begin(), lists.end()), ...);
  return out;
}

/// Tracks the best validation epoch and decides when to stop.
class EarlyStopper {
 public:
  EarlyStopper(std::vector<Parameter<float>*> params, int patience) : params_(std::move(params)), patience_(patience) {}

  /// Returns true when training should stop.
  bool update(int epoch, double metric) {
    if (metric > best_) {
      best_ = metric;
      best_epoch_ = epoch;
      since_ = 0;
      best_values_ = snapshot(params_);
      return false;
    }
    return ++since_ >= patience_;
  }

  void restore_best() {
    if (!best_values_.empty()) restore(params_, best_values_);
  }
  int best_epoch() const { return best_epoch_; }

 private:
  std::vector<Parameter<float>*> params_;
  int patience_;
  double best_ = -1.0;
  int best_epoch_ = -1;
  int since_ = 0;
  std::vector<Matrix<float>> best_values_;
};

void check_aligned(const WindowedDataset& source, const WindowedDataset& target) {
  if (source.size() != target.size())
    throw AlignmentError("source has " + std::to_string(source.size()) + " windows, target has " +
                         std::to_string(target.size()));
  if (source.labels != target.labels || source.subjects != target.subjects)
    throw AlignmentError("source and target windows disagree on labels or subjects");
  if (source.window != target.window) throw AlignmentError("source and target window lengths differ");
}

CheckpointMeta base_meta(const std::string& procedure, const EncoderConfig& ec, const WindowedDataset& view,
                         const Prepared& prep, const FoldSpec& fold, const TrainConfig& cfg) {
  CheckpointMeta m;
  m.procedure = procedure;
  m.config = ec;
  m.n_classes = view.n_classes();
  m.class_map = view.class_map;
  m.channel_names = view.channel_names;
  m.norm = prep.stats;
  m.seed = cfg.seed;
  m.test_subject = fold.test_subject;
  m.val_subject = fold.val_subject;
  m.train_subjects = fold.train_subjects;
  return m;
}

std::vector<Parameter<float>> copy_params(const std::vector<Parameter<float>*>& params) {
  std::vector<Parameter<float>> out;
  for (const auto* p : params) out.push_back(*p);
  return out;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

TrainResult train_backbone(const WindowedDataset& view, const FoldSpec& fold, const TrainConfig& cfg) {
  cfg.validate();
  const auto t0 = Clock::now();
  Prepared prep = prepare(view, fold);
  const int K = view.n_classes();
  const auto weights = class_weights(prep.train.labels, K);
  const EncoderConfig ec = encoder_for(view);

  TrainResult res;
  res.model = BackboneModel<float>(ec, K, cfg.seed);
  auto params = res.model.parameters();
  Adam<float> opt(params, {cfg.learning_rate});
  EarlyStopper stopper(params, cfg.early_stop_patience);
  std::mt19937_64 rng(detail::mix_seed(cfg.seed, 17));

  for (int epoch = 0; epoch < cfg.epochs_baseline; ++epoch) {
    double total = 0;
    for (const auto& rows : epoch_batches(prep.train.size(), cfg.batch_size, rng)) {
      const auto y = labels_of(prep.train, rows);
      Graph<float> g;
      const auto out = res.model.classifier.forward(g, res.model.encoder.forward(g, prep.train.batch(rows)));
      Var<float> loss = weighted_cross_entropy(out.logits, y, weights);
      opt.zero_grad();
      g.backward(loss);
      opt.step();
      total += static_cast<double>(loss.value()(0, 0)) * static_cast<double>(rows.size());
    }
    const auto val = score(res.model.encoder, res.model.classifier, prep.val, weights);
    res.curve.push_back({"baseline", epoch, total / static_cast<double>(prep.train.size()), val.loss, val.macro_f1});
    if (stopper.update(epoch, val.macro_f1)) break;
  }
  stopper.restore_best();

  res.best_epoch = stopper.best_epoch();
  res.meta = base_meta("backbone", ec, view, prep, fold, cfg);
  res.meta.params = param_count(res.model);
  res.fold = fold;
  res.config = cfg;
  res.audit = std::move(prep.audit);
  res.seconds = seconds_since(t0);
  return res;
}

TrainResult train_contrastive(const WindowedDataset& source, const WindowedDataset& target, const FoldSpec& fold,
                              const TrainConfig& cfg) {
  cfg.validate();
  check_aligned(source, target);
  const auto t0 = Clock::now();
  Prepared src = prepare(source, fold);
  Prepared tgt = prepare(target, fold);
  const int K = target.n_classes();
  const auto weights = class_weights(tgt.train.labels, K);
  const EncoderConfig ec_s = encoder_for(source), ec_t = encoder_for(target);
  const float alpha = static_cast<float>(cfg.alpha), tau = static_cast<float>(cfg.tau);

  ContrastiveBundle<float> b(ec_s, ec_t, K, cfg.seed);
  std::mt19937_64 rng(detail::mix_seed(cfg.seed, 17));
  TrainResult res;

  // phase 1: align the target latent with the translated source latent
  {
    Adam<float> opt(join(b.source_encoder.parameters(), b.target_encoder.parameters(),
                         b.source_to_target.parameters(), b.target_to_source.parameters()),
                    {cfg.learning_rate});
    auto contrastive = [&](Graph<float>& g, const WindowedDataset& s, const WindowedDataset& t,
                           std::span<const std::size_t> rows) {
      Var<float> rs = b.source_encoder.forward(g, s.batch(rows));
      Var<float> rt = b.target_encoder.forward(g, t.batch(rows));
      Var<float> ts2t = alpha > 0 ? b.source_to_target.forward(g, rs) : Var<float>{};
      Var<float> tt2s = alpha < 1 ? b.target_to_source.forward(g, rt) : Var<float>{};
      return weighted_contrastive(rt, ts2t, rs, tt2s, alpha, tau, static_cast<Eigen::Index>(rows.size()));
    };
    for (int epoch = 0; epoch < cfg.epochs_contrastive; ++epoch) {
      double total = 0;
      for (const auto& rows : epoch_batches(tgt.train.size(), cfg.batch_size, rng)) {
        Graph<float> g;
        Var<float> loss = contrastive(g, src.train, tgt.train, rows);
        opt.zero_grad();
        g.backward(loss);
        opt.step();
        total += static_cast<double>(loss.value()(0, 0)) * static_cast<double>(rows.size());
      }
      double val_loss = 0;
      {
        std::vector<std::size_t> all(tgt.val.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        const std::size_t m = std::min(all.size(), static_cast<std::size_t>(cfg.batch_size));
        for (std::size_t i = 0; i < all.size(); i += m) {
          const std::span<const std::size_t> rows(all.data() + i, std::min(m, all.size() - i));
          Graph<float> g(false);
          val_loss += static_cast<double>(contrastive(g, src.val, tgt.val, rows).value()(0, 0)) *
                      static_cast<double>(rows.size());
        }
        val_loss /= static_cast<double>(all.size());
      }
      const double f1 = score(b.target_encoder, b.classifier, tgt.val, weights).macro_f1;
      res.curve.push_back({"contrastive", epoch, total / static_cast<double>(tgt.train.size()), val_loss, f1});
    }
  }

  // phase 2: joint classification of both branches; Trl_t2s stays untouched
  {
    Adam<float> opt(join(b.source_encoder.parameters(), b.target_encoder.parameters(),
                         b.source_to_target.parameters(), b.classifier.parameters()),
                    {cfg.learning_rate});
    for (int epoch = 0; epoch < cfg.epochs_classif; ++epoch) {
      double total = 0;
      for (const auto& rows : epoch_batches(tgt.train.size(), cfg.batch_size, rng)) {
        const auto y = labels_of(tgt.train, rows);
        Graph<float> g;
        Var<float> ts2t = b.source_to_target.forward(g, b.source_encoder.forward(g, src.train.batch(rows)));
        Var<float> p_s = b.classifier.forward(g, ts2t).logits;
        Var<float> p_t = b.classifier.forward(g, b.target_encoder.forward(g, tgt.train.batch(rows))).logits;
        Var<float> loss = classification_loss(p_s, p_t, y, weights);
        opt.zero_grad();
        g.backward(loss);
        opt.step();
        total += static_cast<double>(loss.value()(0, 0)) * static_cast<double>(rows.size());
      }
      const auto val = score(b.target_encoder, b.classifier, tgt.val, weights);
      res.curve.push_back(
          {"classif", cfg.epochs_contrastive + epoch, total / static_cast<double>(tgt.train.size()), val.loss,
           val.macro_f1});
    }
  }

  res.model.config = ec_t;
  res.model.n_classes = K;
  res.model.encoder = b.target_encoder;
  res.model.classifier = b.classifier;
  res.extra = copy_params(join(b.source_encoder.parameters(), b.source_to_target.parameters(),
                               b.target_to_source.parameters()));
  res.best_epoch = cfg.epochs_contrastive + cfg.epochs_classif - 1;
  res.meta = base_meta("contrastive", ec_t, target, tgt, fold, cfg);
  res.meta.alpha = cfg.alpha;
  res.meta.params = param_count(res.model);
  res.meta.source_config = ec_s;
  res.meta.source_channel_names = source.channel_names;
  res.meta.source_norm = src.stats;
  res.fold = fold;
  res.config = cfg;
  res.audit = std::move(tgt.audit);
  res.seconds = seconds_since(t0);
  return res;
}

TrainResult train_shared(const WindowedDataset& source, const WindowedDataset& target, const FoldSpec& fold,
                         const TrainConfig& cfg) {
  cfg.validate();
  check_aligned(source, target);
  const auto t0 = Clock::now();
  Prepared src = prepare(source, fold);
  Prepared tgt = prepare(target, fold);
  const int K = target.n_classes();
  const auto weights = class_weights(tgt.train.labels, K);
  const EncoderConfig ec_s = encoder_for(source), ec_t = encoder_for(target);

  SharedRepBundle<float> b(ec_s, ec_t, K, cfg.seed);
  auto params = b.parameters();
  Adam<float> opt(params, {cfg.learning_rate});
  EarlyStopper stopper(params, cfg.early_stop_patience);
  std::mt19937_64 rng(detail::mix_seed(cfg.seed, 17));
  TrainResult res;

  for (int epoch = 0; epoch < cfg.epochs_baseline; ++epoch) {
    double total = 0;
    for (const auto& rows : epoch_batches(tgt.train.size(), cfg.batch_size, rng)) {
      const auto y = labels_of(tgt.train, rows);
      Graph<float> g;
      Var<float> p_s = b.classifier.forward(g, b.source_encoder.forward(g, src.train.batch(rows))).logits;
      Var<float> p_t = b.classifier.forward(g, b.target_encoder.forward(g, tgt.train.batch(rows))).logits;
      Var<float> loss = classification_loss(p_s, p_t, y, weights);
      opt.zero_grad();
      g.backward(loss);
      opt.step();
      total += static_cast<double>(loss.value()(0, 0)) * static_cast<double>(rows.size());
    }
    const auto val = score(b.target_encoder, b.classifier, tgt.val, weights);
    res.curve.push_back({"shared", epoch, total / static_cast<double>(tgt.train.size()), val.loss, val.macro_f1});
    if (stopper.update(epoch, val.macro_f1)) break;
  }
  stopper.restore_best();

  res.model.config = ec_t;
  res.model.n_classes = K;
  res.model.encoder = b.target_encoder;
  res.model.classifier = b.classifier;
  res.extra = copy_params(b.source_encoder.parameters());
  res.best_epoch = stopper.best_epoch();
  res.meta = base_meta("shared", ec_t, target, tgt, fold, cfg);
  res.meta.params = param_count(res.model);
  res.meta.source_config = ec_s;
  res.meta.source_channel_names = source.channel_names;
  res.meta.source_norm = src.stats;
  res.fold = fold;
  res.config = cfg;
  res.audit = std::move(tgt.audit);
  res.seconds = seconds_since(t0);
  return res;
}

// ---------------------------------------------------------------------------

std::vector<double> default_alpha_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
  return g;
}

std::vector<double> parse_grid(std::string_view text) {
  std::vector<double> parts;
  std::size_t begin = 0;
  while (true) {
    const auto colon = text.find(':', begin);
    const std::string piece(text.substr(begin, colon == std::string_view::npos ? text.npos : colon - begin));
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(piece, &used);
    } catch (const std::exception&) {
      throw Error("malformed grid '" + std::string(text) + "' (expected start:stop:step)");
    }
    if (used != piece.size() || !std::isfinite(v))
      throw Error("malformed grid '" + std::string(text) + "' (expected start:stop:step)");
    parts.push_back(v);
    if (colon == std::string_view::npos) break;
    begin = colon + 1;
  }
  if (parts.size() != 3) throw Error("malformed grid '" + std::string(text) + "' (expected start:stop:step)");
  const double start = parts[0], stop = parts[1], step = parts[2];
  if (!(step > 0)) throw Error("grid step must be positive");
  if (stop < start) throw Error("grid '" + std::string(text) + "' is empty");
  std::vector<double> grid;
  const auto n = static_cast<long>(std::floor((stop - start) / step + 1e-9));
  for (long i = 0; i <= n; ++i) {
    // round to 12 decimals so 0.1 steps give 0.3 rather than 0.30000000000000004
    const double v = std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12;
    if (v < 0 || v > 1) throw AlphaRange("grid value " + std::to_string(v) + " outside [0, 1]");
    grid.push_back(v);
  }
  return grid;
}

std::size_t argmax_alpha(const std::vector<double>& mean_f1) {
  if (mean_f1.empty()) throw Error("argmax over an empty sweep");
  std::size_t best = 0;
  for (std::size_t i = 1; i < mean_f1.size(); ++i)
    if (mean_f1[i] > mean_f1[best]) best = i;
  return best;
}

SweepResult sweep_alpha(const WindowedDataset& source, const WindowedDataset& target,
                        const std::vector<FoldSpec>& folds, const TrainConfig& cfg, const std::vector<double>& grid,
                        int workers) {
  if (grid.empty()) throw Error("alpha grid is empty");
  if (folds.empty()) throw EmptyFold("no folds to sweep");
  check_aligned(source, target);
  SweepResult out;
  out.grid = grid;
  out.runs.resize(grid.size());
  for (std::size_t a = 0; a < grid.size(); ++a) {
    TrainConfig c = cfg;
    c.alpha = grid[a];
    c.validate();
    auto& run = out.runs[a];
    run.class_map = target.class_map;
    run.folds.resize(folds.size());
    run.config = {{"procedure", "contrastive"},
                  {"target", view_name(target.channel_names)},
                  {"source", view_name(source.channel_names)},
                  {"alpha", grid[a]},
                  {"train", to_json(c)},
                  {"std", "population"}};
  }
  parallel_for(grid.size() * folds.size(), workers, [&](std::size_t task) {
    const std::size_t a = task / folds.size(), f = task % folds.size();
    TrainConfig c = cfg;
    c.alpha = grid[a];
    out.runs[a].folds[f] = train_and_evaluate(Procedure::contrastive, &source, target, folds[f], c);
  });
  std::vector<double> means;
  for (auto& run : out.runs) {
    run.aggregate();
    means.push_back(run.mean_macro_f1);
  }
  out.best = argmax_alpha(means);
  return out;
}

json to_json(const SweepResult& s) {
  json runs = json::array();
  for (const auto& r : s.runs) runs.push_back(to_json(r));
  json curve = json::array();
  for (std::size_t i = 0; i < s.grid.size(); ++i)
    curve.push_back({{"alpha", s.grid[i]},
                     {"mean_macro_f1", s.runs[i].mean_macro_f1},
                     {"std_macro_f1", s.runs[i].std_macro_f1}});
  return {{"grid", s.grid}, {"best_alpha", s.best_alpha()}, {"curve", curve}, {"runs", runs}};
}

SweepResult sweep_result_from_json(const json& j) {
  SweepResult s;
  s.grid = j.at("grid").get<std::vector<double>>();
  for (const auto& r : j.at("runs")) s.runs.push_back(run_report_from_json(r));
  if (s.runs.size() != s.grid.size()) throw FormatError("sweep: grid and runs differ in length");
  std::vector<double> means;
  for (const auto& r : s.runs) means.push_back(r.mean_macro_f1);
  s.best = argmax_alpha(means);
  return s;
}

}  // namespace xmodal
