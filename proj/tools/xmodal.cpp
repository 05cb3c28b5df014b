// xmodal: synth | ingest | train | sweep | report | plot
//
// Exit codes: 0 success, 1 unexpected failure, 2 bad arguments,
// 3 malformed input data, 4 missing run artifacts.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "xmodal/embed.hpp"
#include "xmodal/evaluation.hpp"
#include "xmodal/plot.hpp"
#include "xmodal/synth.hpp"

#ifndef XMODAL_VERSION
#define XMODAL_VERSION "0.1.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace xmodal;

namespace {

struct Exit {
  int code;
  std::string message;
};

std::string fmt_alpha(double a) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", a);
  return buf;
}

[[noreturn]] void usage_error(const std::string& msg) { throw Exit{2, msg}; }
[[noreturn]] void missing(const std::string& msg) { throw Exit{4, msg}; }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) missing("missing " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw Exit{3, path.string() + ": " + e.what()};
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Flags shared by every training command. Values land in `cfg` only when the
// flag was given, so a config file can sit between flags and defaults.
struct TrainFlags {
  TrainConfig cfg;
  std::string config_path;
  int workers = 1;
  std::map<std::string, CLI::Option*> opts;

  void add(CLI::App* app) {
    app->add_option("--config", config_path, "JSON file with training settings")->check(CLI::ExistingFile);
    opts["batch_size"] = app->add_option("--batch-size", cfg.batch_size, "minibatch size m")->capture_default_str();
    opts["learning_rate"] = app->add_option("--lr", cfg.learning_rate, "Adam learning rate")->capture_default_str();
    opts["epochs_contrastive"] =
        app->add_option("--epochs-contrastive", cfg.epochs_contrastive, "contrastive phase epochs")->capture_default_str();
    opts["epochs_classif"] =
        app->add_option("--epochs-classif", cfg.epochs_classif, "classification phase epochs")->capture_default_str();
    opts["epochs_baseline"] =
        app->add_option("--epochs-baseline", cfg.epochs_baseline, "max epochs with early stopping")->capture_default_str();
    opts["early_stop_patience"] =
        app->add_option("--patience", cfg.early_stop_patience, "early stopping patience")->capture_default_str();
    opts["tau"] = app->add_option("--tau", cfg.tau, "InfoNCE temperature")->capture_default_str();
    opts["seed"] = app->add_option("--seed", cfg.seed, "random seed")->capture_default_str();
    opts["workers"] = app->add_option("--workers", workers, "parallel folds / grid points")->capture_default_str();
  }

  // flags > config file > defaults
  void resolve(std::optional<double> alpha_flag = std::nullopt) {
    const TrainConfig flags = cfg;
    const int flag_workers = workers;
    cfg = TrainConfig{};
    workers = 1;
    if (!config_path.empty()) {
      const json j = read_json(config_path);
      if (!j.is_object()) usage_error(config_path + ": config must be a JSON object");
      try {
        cfg = train_config_from_json(j, cfg);
        if (j.contains("workers")) workers = j["workers"].get<int>();
      } catch (const json::exception& e) {
        usage_error(config_path + ": " + e.what());
      }
    }
    auto given = [&](const char* k) { return opts.at(k)->count() > 0; };
    if (given("batch_size")) cfg.batch_size = flags.batch_size;
    if (given("learning_rate")) cfg.learning_rate = flags.learning_rate;
    if (given("epochs_contrastive")) cfg.epochs_contrastive = flags.epochs_contrastive;
    if (given("epochs_classif")) cfg.epochs_classif = flags.epochs_classif;
    if (given("epochs_baseline")) cfg.epochs_baseline = flags.epochs_baseline;
    if (given("early_stop_patience")) cfg.early_stop_patience = flags.early_stop_patience;
    if (given("tau")) cfg.tau = flags.tau;
    if (given("seed")) cfg.seed = flags.seed;
    if (given("workers")) workers = flag_workers;
    if (alpha_flag) cfg.alpha = *alpha_flag;
    try {
      cfg.validate();
    } catch (const Error& e) {
      usage_error(e.what());
    }
    if (workers < 1) usage_error("--workers must be >= 1");
  }
};

fs::path run_dir(const std::string& out, const std::string& command) {
  if (!out.empty()) return out;
  const char* root = std::getenv("XMODAL_RUNS_DIR");
  const std::string stamp = [] {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
    return std::string(buf);
  }();
  fs::path dir = fs::path(root && *root ? root : "runs") / (command + "-" + stamp);
  for (int i = 2; fs::exists(dir); ++i) dir = dir.parent_path() / (command + "-" + stamp + "-" + std::to_string(i));
  return dir;
}

WindowedDataset open_dataset(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json")) missing("no dataset at " + dir.string() + " (manifest.json not found)");
  return load_dataset(dir);
}

json dataset_hashes(const fs::path& dir) {
  return {{"path", fs::absolute(dir).lexically_normal().string()},
          {"manifest_sha256", sha256_file(dir / "manifest.json")},
          {"windows_sha256", sha256_file(dir / "windows.f32")}};
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config, const json& hashes) {
  fs::create_directories(dir);
  write_json(config, dir / "config.json");
  write_json({{"run_id", dir.filename().string()},
              {"command", command},
              {"config", config},
              {"datasets", hashes},
              {"version", XMODAL_VERSION},
              {"created_utc", utc_now()}},
             dir / "manifest.json");
}

std::string joined_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
  return s;
}

RunReport open_report(const fs::path& run) {
  const fs::path p = fs::is_directory(run) ? run / "report.json" : run;
  if (!fs::exists(p)) missing("missing run artifact " + p.string());
  return read_run_report(p.string());
}

std::string run_name(const fs::path& run) {
  const fs::path p = run.filename().empty() ? run.parent_path() : run;
  return p.filename() == "report.json" ? p.parent_path().filename().string() : p.filename().string();
}

// ---- synth ----

struct SynthArgs {
  SynthOptions o;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  if (a.o.n_subjects < 3)
    usage_error("--subjects " + std::to_string(a.o.n_subjects) +
                ": leave-one-subject-out needs at least 3 subjects (test, validation, training)");
  try {
    a.o.validate();
  } catch (const Error& e) {
    usage_error(e.what());
  }
  const fs::path root = a.out;
  fs::create_directories(root);
  std::set<std::string> subjects;
  for (const auto& s : synth_sessions(a.o)) {
    const fs::path dir = root / s.meta.subject_id / ("session_" + std::to_string(s.meta.session_day));
    fs::create_directories(dir);
    write_raw_csv(s.raw, dir / "raw.csv");
    write_labels_csv(s.labels, dir / "labels.csv");
    write_meta_json(s.meta, dir / "meta.json");
    subjects.insert(s.meta.subject_id);
  }
  write_json({{"class_map", synth_class_names(a.o.n_classes)}}, root / "classes.json");
  std::cout << "wrote " << subjects.size() << " subjects x " << a.o.sessions << " session(s) to " << root.string()
            << "\n";
  return 0;
}

// ---- ingest ----

struct IngestArgs {
  std::string raw, out;
  int window = kDefaultWindow, step = kDefaultStep;
};

int cmd_ingest(const IngestArgs& a) {
  if (a.window < 1 || a.step < 1) usage_error("--window and --step must be >= 1");
  if (!fs::is_directory(a.raw)) throw Exit{3, "raw directory " + a.raw + " does not exist"};
  std::vector<fs::path> sessions;
  for (const auto& e : fs::recursive_directory_iterator(a.raw))
    if (e.is_regular_file() && e.path().filename() == "raw.csv") sessions.push_back(e.path().parent_path());
  std::sort(sessions.begin(), sessions.end());
  if (sessions.empty()) throw Exit{3, "no raw.csv found under " + a.raw};

  std::vector<std::string> class_map;
  if (fs::exists(fs::path(a.raw) / "classes.json")) {
    class_map = read_json(fs::path(a.raw) / "classes.json").at("class_map").get<std::vector<std::string>>();
  } else {
    std::set<std::string> names;
    for (const auto& s : sessions)
      for (auto& n : read_label_names(s / "labels.csv"))
        if (n != kNullClass) names.insert(n);
    class_map.push_back(kNullClass);
    class_map.insert(class_map.end(), names.begin(), names.end());
  }

  std::vector<WindowedDataset> parts;
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sessions) {
    if (!fs::exists(s / "meta.json")) throw FormatError((s / "meta.json").string() + ": missing session metadata");
    const auto rec = synchronize(read_raw_csv(s / "raw.csv"), read_labels_csv(s / "labels.csv", class_map),
                                 read_meta_json(s / "meta.json"));
    parts.push_back(slide_windows(rec, a.window, a.step));
    counts[rec.meta.subject_id] += parts.back().size();
  }
  const WindowedDataset ds = concat(parts);
  save_dataset(ds, a.out);
  for (const auto& [subject, n] : counts) std::cout << subject << "\t" << n << " windows\n";
  std::cout << "total\t" << ds.size() << " windows (window " << a.window << ", step " << a.step << ") -> " << a.out
            << "\n";
  return 0;
}

// ---- train ----

struct TrainArgs {
  TrainFlags flags;
  std::string procedure = "backbone", target = "imu", source = "none", data, out;
  double alpha = 1.0;
  CLI::Option* alpha_opt = nullptr;
};

int cmd_train(TrainArgs& a, const std::string& command) {
  RunSpec spec;
  try {
    spec.procedure = parse_procedure(a.procedure);
    spec.target = parse_view(a.target);
    if (a.source != "none") spec.source = parse_view(a.source);
  } catch (const Error& e) {
    usage_error(e.what());
  }
  if (spec.procedure != Procedure::contrastive && a.alpha_opt->count() > 0)
    usage_error("--alpha only applies to --procedure contrastive");
  a.flags.resolve(a.alpha_opt->count() > 0 ? std::optional<double>(a.alpha) : std::nullopt);
  spec.train = a.flags.cfg;
  spec.workers = a.flags.workers;
  try {
    spec.validate();
  } catch (const Error& e) {
    usage_error(e.what());
  }
  const WindowedDataset ds = open_dataset(a.data);
  if (ds.subject_set().size() < 3) usage_error("leave-one-subject-out needs at least 3 subjects in " + a.data);
  spec.out_dir = run_dir(a.out, "train");
  write_manifest(spec.out_dir, command, to_json(spec), json::array({dataset_hashes(a.data)}));

  const RunReport r = loso_run(ds, spec);
  for (const auto& f : r.folds)
    std::cout << f.subject << "\tmacro F1 " << f.macro_f1 << "\taccuracy " << f.accuracy << "\n";
  std::cout << "mean macro F1 " << r.mean_macro_f1 << " +- " << r.std_macro_f1 << ", accuracy " << r.mean_accuracy
            << " +- " << r.std_accuracy << "\nrun: " << spec.out_dir.string() << "\n";
  return 0;
}

// ---- sweep ----

struct SweepArgs {
  TrainFlags flags;
  std::string target = "imu", source = "bioz", grid = "0:1:0.1", data, out;
};

int cmd_sweep(SweepArgs& a, const std::string& command) {
  std::vector<double> grid;
  ModalityView target{}, source{};
  try {
    grid = parse_grid(a.grid);
    target = parse_view(a.target);
    source = parse_view(a.source);
  } catch (const Error& e) {
    usage_error(e.what());
  }
  if (target == source) usage_error("source and target modality must differ");
  a.flags.resolve();
  const WindowedDataset ds = open_dataset(a.data);
  if (ds.subject_set().size() < 3) usage_error("leave-one-subject-out needs at least 3 subjects in " + a.data);
  const fs::path dir = run_dir(a.out, "sweep");
  json config = {{"procedure", "contrastive"},
                 {"target", a.target},
                 {"source", a.source},
                 {"grid", grid},
                 {"train", to_json(a.flags.cfg)},
                 {"std", "population"}};
  write_manifest(dir, command, config, json::array({dataset_hashes(a.data)}));

  const auto folds = loso_folds(ds.subject_set(), a.flags.cfg.seed);
  const SweepResult s =
      sweep_alpha(select_view(ds, source), select_view(ds, target), folds, a.flags.cfg, grid, a.flags.workers);
  write_json(to_json(s), dir / "sweep.json");
  std::vector<double> f1;
  for (std::size_t i = 0; i < s.grid.size(); ++i) {
    RunReport r = s.runs[i];
    r.config = config;
    r.config.erase("grid");
    r.config["alpha"] = s.grid[i];
    const fs::path sub = dir / ("alpha_" + fmt_alpha(s.grid[i]));
    fs::create_directories(sub);
    write_run_report(r, (sub / "report.json").string());
    f1.push_back(r.mean_macro_f1);
    std::cout << "alpha " << fmt_alpha(s.grid[i]) << "\tmacro F1 " << r.mean_macro_f1 << " +- " << r.std_macro_f1
              << "\n";
  }
  alpha_figure(s.grid, f1, a.target + " <- " + a.source).save(dir / "alpha");
  std::cout << "best alpha " << s.best_alpha() << "\nrun: " << dir.string() << "\n";
  return 0;
}

// ---- report ----

struct ReportArgs {
  std::vector<std::string> runs;
  std::string baseline, out;
};

int cmd_report(const ReportArgs& a) {
  const RunReport base = open_report(a.baseline);
  std::vector<std::pair<std::string, RunReport>> runs;
  for (const auto& r : a.runs) runs.emplace_back(run_name(r), open_report(r));
  const auto rows = improvement_table(runs, base);
  fs::create_directories(a.out);
  const std::string text = improvement_text(rows, run_name(a.baseline));
  std::ofstream(fs::path(a.out) / "improvement.csv") << improvement_csv(rows);
  std::ofstream(fs::path(a.out) / "improvement.txt") << text;
  std::vector<std::pair<std::string, std::vector<double>>> groups{{run_name(a.baseline), {}}};
  for (const auto& f : base.folds) groups.back().second.push_back(f.macro_f1);
  for (const auto& [name, r] : runs) {
    groups.emplace_back(name, std::vector<double>{});
    for (const auto& f : r.folds) groups.back().second.push_back(f.macro_f1);
  }
  boxplot_figure(groups, "per-subject macro F1").save(fs::path(a.out) / "boxplot");
  std::cout << text;
  return 0;
}

// ---- plot ----

struct PlotArgs {
  std::string kind, out, view = "imu";
  std::vector<std::string> inputs;
  std::uint64_t seed = 0;
  std::size_t limit = 2000;
};

int cmd_plot(const PlotArgs& a) {
  PlotKind kind{};
  try {
    kind = parse_plot_kind(a.kind);
  } catch (const UnknownKind& e) {
    usage_error(e.what());
  }
  if (a.inputs.empty()) usage_error("--input is required");
  if (kind != PlotKind::boxplot && a.inputs.size() != 1) usage_error("--kind " + a.kind + " takes one --input");
  const fs::path in = a.inputs.front();
  const fs::path stem = a.out.empty() ? (fs::is_directory(in) ? in / a.kind : fs::path(a.kind)) : fs::path(a.out);
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  std::vector<fs::path> files;
  switch (kind) {
    case PlotKind::confusion: {
      const RunReport r = open_report(in);
      files = confusion_figure(r.joint_confusion(), r.class_map, "joint confusion: " + run_name(in)).save(stem);
      break;
    }
    case PlotKind::boxplot: {
      std::vector<std::pair<std::string, std::vector<double>>> groups;
      for (const auto& p : a.inputs) {
        groups.emplace_back(run_name(p), std::vector<double>{});
        for (const auto& f : open_report(p).folds) groups.back().second.push_back(f.macro_f1);
      }
      files = boxplot_figure(groups, "per-subject macro F1").save(stem);
      break;
    }
    case PlotKind::alpha: {
      const SweepResult s = sweep_result_from_json(read_json(fs::is_directory(in) ? in / "sweep.json" : in));
      std::vector<double> f1;
      for (const auto& r : s.runs) f1.push_back(r.mean_macro_f1);
      files = alpha_figure(s.grid, f1, "effect of alpha").save(stem);
      break;
    }
    case PlotKind::tsne: {
      ModalityView view{};
      try {
        view = parse_view(a.view);
      } catch (const Error& e) {
        usage_error(e.what());
      }
      WindowedDataset ds = select_view(open_dataset(in), view);
      if (ds.size() > a.limit) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < a.limit; ++i) rows.push_back(i * ds.size() / a.limit);
        ds = subset(ds, rows);
      }
      const Eigen::MatrixXd xy = embed_tsne(normalize_apply(ds, normalize_fit(ds)), a.seed);
      files = tsne_figure(xy, ds.labels, ds.class_map, "t-SNE of " + a.view + " windows").save(stem);
      break;
    }
  }
  for (const auto& f : files) std::cout << f.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-modality training and evaluation for wearable activity recognition"};
  app.set_version_flag("--version", XMODAL_VERSION);
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic two-modality corpus");
  s->add_option("--subjects", synth.o.n_subjects, "number of subjects")->capture_default_str();
  s->add_option("--classes", synth.o.n_classes, "number of classes including Null")->capture_default_str();
  s->add_option("--seed", synth.o.seed, "random seed")->capture_default_str();
  s->add_option("--difficulty", synth.o.difficulty, "noise and subject-variation scale")->capture_default_str();
  s->add_option("--sessions", synth.o.sessions, "sessions per subject")->capture_default_str();
  s->add_option("--bouts", synth.o.bouts_per_class, "bouts per activity class and session")->capture_default_str();
  s->add_option("--imu-cue", synth.o.imu_cue, "IMU amplitude difference between IMU-paired classes")
      ->capture_default_str();
  s->add_option("--out", synth.out, "output directory")->required();

  IngestArgs ingest;
  auto* g = app.add_subcommand("ingest", "synchronize, window and store raw recordings");
  g->add_option("--raw", ingest.raw, "directory of <subject>/<session>/raw.csv, labels.csv, meta.json")->required();
  g->add_option("--out", ingest.out, "dataset directory")->required();
  g->add_option("--window", ingest.window, "window length in samples")->capture_default_str();
  g->add_option("--step", ingest.step, "slide step in samples")->capture_default_str();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "leave-one-subject-out training and evaluation");
  t->add_option("--procedure", train.procedure, "backbone | contrastive | shared")->capture_default_str();
  t->add_option("--target", train.target, "imu | bioz | fusion")->capture_default_str();
  t->add_option("--source", train.source, "bioz | imu | fusion | none")->capture_default_str();
  train.alpha_opt = t->add_option("--alpha", train.alpha, "contrastive weight alpha")->capture_default_str();
  t->add_option("--data", train.data, "dataset directory")->required();
  t->add_option("--out", train.out, "run directory (default: $XMODAL_RUNS_DIR/<run id>)");
  train.flags.add(t);

  SweepArgs sweep;
  auto* w = app.add_subcommand("sweep", "contrastive runs over a grid of alpha values");
  w->add_option("--target", sweep.target, "target modality")->capture_default_str();
  w->add_option("--source", sweep.source, "source modality")->capture_default_str();
  w->add_option("--grid", sweep.grid, "start:stop:step, inclusive")->capture_default_str();
  w->add_option("--data", sweep.data, "dataset directory")->required();
  w->add_option("--out", sweep.out, "run directory (default: $XMODAL_RUNS_DIR/<run id>)");
  sweep.flags.add(w);

  ReportArgs report;
  auto* r = app.add_subcommand("report", "improvement table of runs against a baseline run");
  r->add_option("--runs", report.runs, "run directories")->required();
  r->add_option("--baseline", report.baseline, "baseline run directory")->required();
  r->add_option("--out", report.out, "output directory")->required();

  PlotArgs plot;
  auto* p = app.add_subcommand("plot", "render a figure as SVG and PNG");
  p->add_option("--kind", plot.kind, "confusion | boxplot | alpha | tsne")->required();
  p->add_option("--input", plot.inputs, "run dir (confusion, boxplot), sweep dir (alpha) or dataset dir (tsne)");
  p->add_option("--out", plot.out, "output path without extension");
  p->add_option("--view", plot.view, "modality for tsne")->capture_default_str();
  p->add_option("--seed", plot.seed, "t-SNE seed")->capture_default_str();
  p->add_option("--limit", plot.limit, "max windows embedded for tsne")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string command = joined_args(argc, argv);
  try {
    if (*s) return cmd_synth(synth);
    if (*g) return cmd_ingest(ingest);
    if (*t) return cmd_train(train, command);
    if (*w) return cmd_sweep(sweep, command);
    if (*r) return cmd_report(report);
    if (*p) return cmd_plot(plot);
  } catch (const Exit& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const EmptyStream& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const EmptySpan& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const MissingClass& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const SubjectMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
