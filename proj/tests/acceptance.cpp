// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "oracles.hpp"
#include "xmodal/checkpoint.hpp"
#include "xmodal/evaluation.hpp"
#include "xmodal/losses.hpp"
#include "xmodal/metrics.hpp"
#include "xmodal/models.hpp"
#include "xmodal/report.hpp"
#include "xmodal/synth.hpp"
#include "xmodal/training.hpp"

using namespace xmodal;
namespace fs = std::filesystem;
using Mat = Matrix<double>;
using Row = RowVector<double>;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::string failures;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    failures += (failures.empty() ? "" : "; ") + what;
    pass = false;
  }
  std::string text() const {
    return failures.empty() ? detail.str() : "failed: " + failures + " | " + detail.str();
  }
};

Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Row row(std::initializer_list<double> v) {
  Row r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r(i++) = x;
  return r;
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int workers() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

// ---------------------------------------------------------------------------

void loss_exactness(Outcome& o) {
  const double tol = 1e-5;
  o.require(near(cosine_sim(row({1, 2, 3}), row({4, 5, 6})), 0.974632, 1e-6), "cosine");
  Mat pool(2, 2);
  pool << 1, 0, 0, 1;
  Mat self(1, 2);
  self << 1, 0;
  o.require(near(info_nce(row({1, 0}), row({1, 0}), self, 0.1), 0.0, tol), "info_nce single positive");
  o.require(near(info_nce(row({1, 0}), row({1, 0}), pool, 0.1), 4.54e-5, 1e-7), "info_nce aligned");
  o.require(near(info_nce(row({1, 0}), row({0, 1}), pool, 0.1), 10.0000454, tol), "info_nce orthogonal");
  for (int k : {2, 5, 7}) {
    const Mat uniform = Mat::Zero(3, k);
    const std::vector<int> y{0, k - 1, 1};
    std::vector<double> w(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) w[c] = 1.0 + c;
    o.require(near(weighted_cross_entropy(uniform, y, w), std::log(double(k)), tol), "uniform CE");
  }
  std::mt19937_64 rng(1);
  const Mat ps = random_mat(rng, 6, 4), pt = random_mat(rng, 6, 4);
  const std::vector<int> y{0, 1, 2, 3, 1, 0};
  const std::vector<double> w{1, 2, 3, 0.5};
  o.require(near(classification_loss(ps, pt, y, w), classification_loss(pt, ps, y, w), tol), "L_c symmetry");
  const Mat rt = random_mat(rng, 8, 6), ts = random_mat(rng, 8, 6), rs = random_mat(rng, 8, 6),
            tt = random_mat(rng, 8, 6);
  o.require(near(weighted_contrastive(rt, ts, rs, tt, 1.0, 0.1), contrastive_batch(rt, ts, 0.1), tol),
            "L_WN alpha=1");
  o.require(near(weighted_contrastive(rt, ts, rs, tt, 0.0, 0.1), contrastive_batch(rs, tt, 0.1), tol),
            "L_WN alpha=0");
  o.detail << "7 scalar examples";
}

void oracle_equivalence(Outcome& o) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> nd(1, 64), dd(1, 16);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const Mat r = random_mat(rng, nd(rng), dd(rng));
    const Mat t = random_mat(rng, r.rows(), r.cols());
    worst = std::max(worst, std::abs(contrastive_batch(r, t, 0.1) - oracle::contrastive(r, t, 0.1)));
  }
  o.require(worst <= 1e-6, "contrastive_batch deviates by " + std::to_string(worst));
  int exact = 0;
  for (int i = 0; i < 100; ++i) {
    const int k = 2 + i % 7;
    std::uniform_int_distribution<int> lab(0, k - 1), len(1, 500);
    const int n = len(rng);
    std::vector<int> t(n), p(n);
    for (int j = 0; j < n; ++j) t[j] = lab(rng), p[j] = lab(rng);
    const auto c = confusion_matrix(t, p, k);
    exact += macro_f1(c) == oracle::macro_f1(t, p, k) && accuracy(c) == oracle::accuracy(t, p);
  }
  o.require(exact == 100, std::to_string(100 - exact) + " metric mismatches");
  o.detail << "max |contrastive - naive| = " << worst << ", metrics exact on " << exact << "/100";
}

void alpha_linearity(Outcome& o) {
  std::mt19937_64 rng(3);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    const Mat rt = random_mat(rng, 16, 8), ts = random_mat(rng, 16, 8), rs = random_mat(rng, 16, 8),
              tt = random_mat(rng, 16, 8);
    const double l0 = weighted_contrastive(rt, ts, rs, tt, 0.0, 0.1);
    const double l1 = weighted_contrastive(rt, ts, rs, tt, 1.0, 0.1);
    for (double a = 0; a <= 1.0; a += 0.1)
      worst = std::max(worst, std::abs(weighted_contrastive(rt, ts, rs, tt, a, 0.1) - ((1 - a) * l0 + a * l1)));
  }
  o.require(worst <= 1e-6, "L_WN not affine, deviation " + std::to_string(worst));

  EncoderConfig cfg;
  double grad_norm = 0;
  for (int i = 0; i < 20; ++i) {
    ContrastiveBundle<double> b(cfg, cfg, 5, 100 + static_cast<std::uint64_t>(i));
    for (auto* p : b.parameters()) p->zero_grad();
    WindowBatch<double> xs{random_mat(rng, 4, 100), 50, 2}, xt{random_mat(rng, 4, 100), 50, 2};
    Graph<double> g;
    auto rs = b.source_encoder.forward(g, xs), rt = b.target_encoder.forward(g, xt);
    // the t2s branch is built and differentiable; only its weight is zero
    auto tt2s = b.target_to_source.forward(g, rt);
    g.backward(weighted_contrastive(rt, b.source_to_target.forward(g, rs), rs, tt2s, 1.0, 0.1, 4));
    for (auto* p : b.target_to_source.parameters()) grad_norm += p->grad.squaredNorm();
  }
  o.require(grad_norm == 0.0, "Trl_t2s gradient norm " + std::to_string(std::sqrt(grad_norm)));
  o.detail << "max affine deviation " << worst << ", Trl_t2s grad norm " << std::sqrt(grad_norm) << " over 20 bundles";
}

void gradient_checks(Outcome& o) {
  std::mt19937_64 rng(4);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const int n = 2 + i % 7, d = 2 + i % 5;
    const Mat pool = random_mat(rng, n, d);
    const Row x = pool.row(0);
    const Row t = random_mat(rng, 1, d);
    const auto g = info_nce_gradient(x, t, pool, 0.1);
    // relative error over the whole gradient (anchor, positive, pool): a
    // pool row with softmax weight ~1e-8 has a gradient below the
    // finite-difference noise floor on its own
    const Mat num_x = oracle::numeric_gradient(x, [&](const Mat& v) { return info_nce(Row(v), t, pool, 0.1); });
    const Mat num_t = oracle::numeric_gradient(t, [&](const Mat& v) { return info_nce(x, Row(v), pool, 0.1); });
    const Mat num_p = oracle::numeric_gradient(pool, [&](const Mat& p) { return info_nce(x, t, p, 0.1); });
    Mat analytic(n + 2, d), numeric(n + 2, d);
    analytic << g.anchor, g.positive, g.pool;
    numeric << num_x, num_t, num_p;
    worst = std::max(worst, oracle::relative_error(analytic, numeric));

    const int k = 2 + i % 6;
    const Mat l0 = random_mat(rng, 5, k);
    std::vector<int> y(5);
    std::vector<double> w(static_cast<std::size_t>(k));
    for (int j = 0; j < 5; ++j) y[j] = static_cast<int>(rng() % static_cast<std::uint64_t>(k));
    for (auto& v : w) v = 0.5 + static_cast<double>(rng() % 4);
    Graph<double> h;
    auto l = h.variable(l0);
    h.backward(weighted_cross_entropy(l, y, w));
    worst = std::max(worst, oracle::relative_error(h.grad(l), oracle::numeric_gradient(l0, [&](const Mat& m) {
                                                     return oracle::weighted_ce(m, y, w);
                                                   })));
  }
  o.require(worst < 1e-3, "relative error " + std::to_string(worst));
  o.detail << "max relative error " << worst << " over 50 instances";
}

void shape_contract(Outcome& o) {
  std::mt19937_64 rng(5);
  for (int c : {2, 4}) {
    EncoderConfig cfg;
    cfg.in_channels = c;
    Encoder<float> enc(cfg, 1);
    for (int b : {1, 8, 1024}) {
      WindowBatch<float> x{random_mat(rng, b, 50 * c).cast<float>(), 50, c};
      const auto z = encode(enc, x);
      o.require(z.rows() == b * 10 && z.cols() == 40, "encoder output shape for C=" + std::to_string(c));
    }
  }
  EncoderConfig c2, c4;
  c4.in_channels = 4;
  BackboneModel<float> m2(c2, 7, 1), m4(c4, 7, 1);
  const auto p2 = param_count(m2), p4 = param_count(m4);
  o.require(p4 > p2, "param_count(C=4) <= param_count(C=2)");
  o.require(p2 >= 10000 && p2 < 100000 && p4 >= 10000 && p4 < 100000, "param counts outside [1e4, 1e5)");
  o.detail << "(B,50,C) -> (B,10,40); params C=2 " << p2 << ", C=4 " << p4;
}

void pipeline_integrity(Outcome& o) {
  for (int T = 50; T <= 500; ++T) {
    Recording rec;
    rec.meta.subject_id = "S1";
    rec.channels = decltype(rec.channels)::Zero(T, 4);
    for (int t = 0; t < T; ++t) rec.channels(t, 0) = t;
    rec.labels.assign(static_cast<std::size_t>(T), 0);
    rec.class_map = {"Null", "A"};
    const auto ds = slide_windows(rec);
    std::vector<float> starts;
    for (int s = 0; s + 50 <= T; s += 10) starts.push_back(static_cast<float>(s));
    bool ok = ds.size() == starts.size();
    for (std::size_t w = 0; ok && w < starts.size(); ++w) ok = ds.at(w, 0, 0) == starts[w];
    if (!ok) o.require(false, "window starts differ at T=" + std::to_string(T));
  }

  SynthOptions so;
  so.n_subjects = 4;
  so.n_classes = 3;
  so.bouts_per_class = 2;
  so.bout_seconds = 4;
  const auto ds = synth_dataset(so);
  const auto subjects = ds.subject_set();
  const auto folds = loso_folds(subjects, 9);
  std::multiset<std::string> tested;
  for (const auto& f : folds) {
    tested.insert(f.test_subject);
    std::set<std::string> all(f.train_subjects.begin(), f.train_subjects.end());
    o.require(!all.count(f.test_subject) && !all.count(f.val_subject) && f.val_subject != f.test_subject,
              "fold overlap");
    all.insert(f.test_subject);
    all.insert(f.val_subject);
    o.require(all.size() == subjects.size(), "fold does not cover all subjects");
  }
  for (const auto& s : subjects) o.require(tested.count(s) == 1, "subject " + s + " not tested exactly once");

  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.epochs_baseline = 1;
  cfg.epochs_contrastive = 1;
  cfg.epochs_classif = 1;
  const auto tgt = select_view(ds, ModalityView::imu), src = select_view(ds, ModalityView::bioz);
  std::size_t audited = 0;
  for (const auto& f : folds) {
    for (int proc = 0; proc < 2; ++proc) {
      const auto res = proc == 0 ? train_backbone(tgt, f, cfg) : train_contrastive(src, tgt, f, cfg);
      for (const auto* rows : {&res.audit.train_rows, &res.audit.norm_rows, &res.audit.val_rows})
        for (auto r : *rows) {
          ++audited;
          if (tgt.subjects[r] == f.test_subject) o.require(false, "test window in training of fold " + f.test_subject);
        }
      const auto st = normalize_fit(subset(tgt, rows_for_subjects(tgt, f.train_subjects)));
      o.require(st.mean == res.meta.norm.mean && st.stddev == res.meta.norm.stddev,
                "normalization stats not from training subjects");
      bool rejected = false;
      try {
        auto m = res.model;
        evaluate_model(m, res.meta, tgt, FoldSpec{f.train_subjects.front(), f.test_subject, {}});
      } catch (const LeakageError&) {
        rejected = true;
      }
      o.require(rejected, "fold audit accepted a training subject as test");
    }
  }
  o.detail << "T in [50,500] enumerated, " << folds.size() << " folds partition subjects, " << audited
           << " audited rows clean";
}

// ---------------------------------------------------------------------------
// Synthetic end-to-end orderings

struct SeedResult {
  std::uint64_t seed = 0;
  double target = 0, fusion = 0, shared = 0, contrastive = 0, best_alpha = 0;
  std::vector<double> sweep;  // mean macro F1 per grid point
};

SynthOptions corpus_options(std::uint64_t seed) {
  SynthOptions o;
  o.n_subjects = 6;
  o.n_classes = 5;
  o.seed = seed;
  o.difficulty = 1.0;
  o.bouts_per_class = 2;
  o.imu_cue = 0.15;
  return o;
}

TrainConfig reduced_config(std::uint64_t seed) {
  TrainConfig c;
  c.batch_size = 64;
  c.learning_rate = 2e-3;
  c.epochs_baseline = 30;
  c.early_stop_patience = 10;
  c.epochs_contrastive = 10;
  c.epochs_classif = 10;
  c.seed = seed;
  return c;
}

SeedResult run_seed(std::uint64_t seed) {
  const auto ds = synth_dataset(corpus_options(seed));
  SeedResult r;
  r.seed = seed;
  RunSpec spec;
  spec.train = reduced_config(seed);
  spec.workers = workers();
  spec.target = ModalityView::imu;
  r.target = loso_run(ds, spec).mean_macro_f1;
  spec.target = ModalityView::fusion;
  r.fusion = loso_run(ds, spec).mean_macro_f1;
  spec.target = ModalityView::imu;
  spec.source = ModalityView::bioz;
  spec.procedure = Procedure::shared;
  r.shared = loso_run(ds, spec).mean_macro_f1;

  const auto src = select_view(ds, ModalityView::bioz), tgt = select_view(ds, ModalityView::imu);
  const auto sw = sweep_alpha(src, tgt, loso_folds(ds.subject_set(), seed), spec.train, default_alpha_grid(), workers());
  for (const auto& run : sw.runs) r.sweep.push_back(run.mean_macro_f1);
  r.contrastive = sw.runs[sw.best].mean_macro_f1;
  r.best_alpha = sw.best_alpha();
  return r;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<SeedResult> g_seeds;

void synthetic_orderings(Outcome& o) {
  const auto t0 = Clock::now();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    g_seeds.push_back(run_seed(seed));
    const auto& r = g_seeds.back();
    std::printf("    seed %llu: imu %.4f  fusion %.4f  shared %.4f  contrastive %.4f (alpha %.1f)\n",
                static_cast<unsigned long long>(seed), r.target, r.fusion, r.shared, r.contrastive, r.best_alpha);
    std::printf("      sweep:");
    for (double v : r.sweep) std::printf(" %.4f", v);
    std::printf("\n");
    std::fflush(stdout);
  }
  const double secs = seconds_since(t0);
  std::vector<double> tgt, fus, sr, con;
  for (const auto& r : g_seeds) {
    tgt.push_back(r.target);
    fus.push_back(r.fusion);
    sr.push_back(r.shared);
    con.push_back(r.contrastive);
  }
  const double mt = 100 * median(tgt), mf = 100 * median(fus), ms = 100 * median(sr), mc = 100 * median(con);
  o.require(mt >= 60 && mt <= 85, "target-only median outside [60, 85]");
  o.require(mf >= mt + 5, "(a) fusion below target + 5");
  o.require(mc >= mt + 2, "(b) contrastive below target + 2");
  o.require(ms >= mt - 1 && ms <= mc, "(c) shared outside [target - 1, contrastive]");
  o.require(secs < 1800, "runtime above 30 min");
  char buf[256];
  std::snprintf(buf, sizeof buf, "medians: imu %.2f, fusion %.2f (%+.2f), contrastive %.2f (%+.2f), shared %.2f (%+.2f); %.0f s",
                mt, mf, mf - mt, mc, mc - mt, ms, ms - mt, secs);
  o.detail << buf;
}

void determinism(Outcome& o) {
  if (g_seeds.empty()) {
    o.require(false, "criterion 7 produced no results");
    return;
  }
  const auto again = run_seed(g_seeds.front().seed);
  const auto& first = g_seeds.front();
  double worst = std::max({std::abs(again.target - first.target), std::abs(again.fusion - first.fusion),
                           std::abs(again.shared - first.shared), std::abs(again.contrastive - first.contrastive)});
  for (std::size_t i = 0; i < first.sweep.size(); ++i) worst = std::max(worst, std::abs(again.sweep[i] - first.sweep[i]));
  o.require(worst <= 1e-6, "metrics differ by " + std::to_string(worst));
  o.detail << "seed " << first.seed << " rerun, max metric difference " << worst;
}

void round_trips(Outcome& o) {
  const auto dir = fs::temp_directory_path() / ("xmodal_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  SynthOptions so;
  so.n_subjects = 3;
  so.n_classes = 3;
  so.bouts_per_class = 2;
  so.bout_seconds = 4;
  const auto ds = synth_dataset(so);
  save_dataset(ds, dir / "data");
  const auto back = load_dataset(dir / "data");
  o.require(back.windows.size() == ds.windows.size() &&
                std::memcmp(back.windows.data(), ds.windows.data(), sizeof(float) * static_cast<std::size_t>(ds.windows.size())) == 0 &&
                back.labels == ds.labels && back.subjects == ds.subjects,
            "dataset round trip not bit-exact");

  RunSpec spec;
  spec.train.batch_size = 64;
  spec.train.epochs_baseline = 1;
  spec.target = ModalityView::imu;
  spec.out_dir = dir / "run";
  const auto report = loso_run(ds, spec);
  const auto fold = loso_folds(ds.subject_set(), spec.train.seed).front();
  const auto fold_dir = spec.out_dir / ("fold_" + fold.test_subject);
  CheckpointMeta meta;
  auto loaded = load_checkpoint(fold_dir, &meta);
  auto reloaded = load_checkpoint(fold_dir);
  const auto view = normalize_apply(select_view(ds, ModalityView::imu), meta.norm);
  const auto a = predict_dataset(loaded.encoder, loaded.classifier, view);
  const auto b = predict_dataset(reloaded.encoder, reloaded.classifier, view);
  o.require(std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0,
            "checkpoint reloads disagree");
  const auto again = evaluate_checkpoint(fold_dir, select_view(ds, ModalityView::imu), fold);
  const auto& orig = report.folds.front();
  o.require(again.confusion == orig.confusion && again.macro_f1 == orig.macro_f1,
            "reloaded checkpoint scores differently from the trained model");

  // the trained model itself against its saved copy
  auto trained = train_backbone(select_view(ds, ModalityView::imu), fold, spec.train);
  trained.save(dir / "ckpt");
  auto copy = load_checkpoint(dir / "ckpt");
  const auto ta = predict_dataset(trained.model.encoder, trained.model.classifier, view);
  const auto tb = predict_dataset(copy.encoder, copy.classifier, view);
  o.require(std::memcmp(ta.data(), tb.data(), sizeof(float) * static_cast<std::size_t>(ta.size())) == 0,
            "checkpoint outputs not bitwise identical");

  std::ifstream in(spec.out_dir / "report.json");
  nlohmann::json j;
  in >> j;
  const auto errs = validate_run_report(j);
  o.require(errs.empty(), "report schema: " + (errs.empty() ? std::string() : errs.front()));
  o.detail << "dataset, checkpoint and RunReport round trips";
  fs::remove_all(dir);
}

}  // namespace

int main(int argc, char** argv) {
  // optional arguments select criteria by number; all run by default
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  struct Criterion {
    int id;
    const char* name;
    std::function<void(Outcome&)> run;
    double limit_s;  // 0: no runtime bound here
  };
  const std::vector<Criterion> criteria = {
      {1, "loss exactness", loss_exactness, 1},
      {2, "oracle equivalence", oracle_equivalence, 10},
      {3, "alpha linearity and endpoint gradients", alpha_linearity, 30},
      {4, "gradient checks", gradient_checks, 60},
      {5, "shape and architecture contract", shape_contract, 10},
      {6, "pipeline integrity", pipeline_integrity, 10},
      {7, "synthetic end-to-end orderings", synthetic_orderings, 0},
      {8, "determinism", determinism, 0},
      {9, "round trips", round_trips, 0},
  };
  int failed = 0;
  int ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    ++ran;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = seconds_since(t0);
    if (c.limit_s > 0) o.require(secs < c.limit_s, "runtime above " + std::to_string(static_cast<int>(c.limit_s)) + " s");
    std::printf("criterion %d [%s] %s: %s (%.2f s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name, o.text().c_str(),
                secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
