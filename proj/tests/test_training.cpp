#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <numeric>
#include <random>
#include <set>

#include "xmodal/evaluation.hpp"
#include "xmodal/synth.hpp"
#include "xmodal/training.hpp"

using namespace xmodal;

namespace {

const WindowedDataset& tiny() {
  static const WindowedDataset ds = [] {
    SynthOptions o;
    o.n_subjects = 3;
    o.n_classes = 3;
    o.bouts_per_class = 2;
    o.bout_seconds = 4;
    o.seed = 4;
    return synth_dataset(o);
  }();
  return ds;
}

TrainConfig quick(int epochs = 2) {
  TrainConfig c;
  c.batch_size = 32;
  c.learning_rate = 2e-3;
  c.epochs_baseline = epochs;
  c.epochs_contrastive = epochs;
  c.epochs_classif = epochs;
  c.early_stop_patience = 2;
  c.seed = 3;
  return c;
}

FoldSpec first_fold() { return loso_folds(tiny().subject_set(), 1).front(); }

bool bitwise_equal(const Matrix<float>& a, const Matrix<float>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

std::set<std::string> subjects_of(const WindowedDataset& view, const std::vector<std::size_t>& rows) {
  std::set<std::string> out;
  for (auto r : rows) out.insert(view.subjects[r]);
  return out;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("one epoch smoke run") {
    const auto view = select_view(tiny(), ModalityView::imu);
    const auto res = train_backbone(view, first_fold(), quick(1));
    CHECK(res.curve.size() == 1);
    CHECK(res.best_epoch == 0);
    CHECK(res.meta.channel_names == view.channel_names);
    CHECK(res.meta.params == param_count(const_cast<BackboneModel<float>&>(res.model)));
  }

  TEST_CASE("training lowers the loss on separable data") {
    const auto view = select_view(tiny(), ModalityView::fusion);
    auto cfg = quick(15);
    cfg.early_stop_patience = 15;
    const auto res = train_backbone(view, first_fold(), cfg);
    REQUIRE(res.curve.size() == 15);
    double best = res.curve.front().train_loss;
    for (const auto& r : res.curve) best = std::min(best, r.train_loss);
    CHECK(best < res.curve.front().train_loss);
  }

  TEST_CASE("early stopping keeps the best validation epoch") {
    const auto view = select_view(tiny(), ModalityView::imu);
    for (std::uint64_t seed : {1, 2, 3}) {
      auto cfg = quick(25);
      cfg.seed = seed;
      cfg.early_stop_patience = 3;
      auto res = train_backbone(view, first_fold(), cfg);
      REQUIRE(res.best_epoch >= 0);
      const double best = res.curve[res.best_epoch].val_macro_f1;
      for (std::size_t e = 0; e < res.curve.size(); ++e) {
        if (static_cast<int>(e) > res.best_epoch) CHECK(res.curve[e].val_macro_f1 <= best);
        if (static_cast<int>(e) < res.best_epoch) CHECK(res.curve[e].val_macro_f1 < best);
      }
      if (res.curve.size() < 25) CHECK(static_cast<int>(res.curve.size()) - 1 - res.best_epoch == 3);
      // the returned weights are the best epoch's, so scoring val reproduces its F1
      const auto val = normalize_apply(
          subset(view, rows_for_subjects(view, std::vector<std::string>{res.fold.val_subject})), res.meta.norm);
      const auto pred = argmax_rows(predict_dataset(res.model.encoder, res.model.classifier, val));
      CHECK(macro_f1(confusion_matrix(val.labels, pred, view.n_classes())) == doctest::Approx(best).epsilon(1e-12));
    }
  }

  TEST_CASE("same seed reproduces the run") {
    const auto view = select_view(tiny(), ModalityView::imu);
    auto a = train_backbone(view, first_fold(), quick(3));
    auto b = train_backbone(view, first_fold(), quick(3));
    REQUIRE(a.curve.size() == b.curve.size());
    for (std::size_t e = 0; e < a.curve.size(); ++e) {
      CHECK(a.curve[e].train_loss == b.curve[e].train_loss);
      CHECK(a.curve[e].val_macro_f1 == b.curve[e].val_macro_f1);
    }
    const auto pa = a.model.parameters(), pb = b.model.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(bitwise_equal(pa[i]->value, pb[i]->value));
  }

  TEST_CASE("fold audit: no test window feeds training or normalization") {
    const auto& ds = tiny();
    const auto view = select_view(ds, ModalityView::imu);
    for (const auto& fold : loso_folds(ds.subject_set(), 5)) {
      const auto res = train_backbone(view, fold, quick(1));
      const auto train = subjects_of(view, res.audit.train_rows);
      const auto norm = subjects_of(view, res.audit.norm_rows);
      const auto val = subjects_of(view, res.audit.val_rows);
      CHECK_FALSE(train.count(fold.test_subject));
      CHECK_FALSE(norm.count(fold.test_subject));
      CHECK_FALSE(val.count(fold.test_subject));
      CHECK(val == std::set<std::string>{fold.val_subject});
      CHECK(train == std::set<std::string>(fold.train_subjects.begin(), fold.train_subjects.end()));
      // normalization stats equal a fit on the training subjects alone
      const auto st = normalize_fit(subset(view, rows_for_subjects(view, fold.train_subjects)));
      CHECK(st.mean == res.meta.norm.mean);
      CHECK(st.stddev == res.meta.norm.stddev);
    }
    FoldSpec bad{"S01", "S02", {"S01", "S03"}};
    CHECK_THROWS_AS(train_backbone(view, bad, quick(1)), LeakageError);
  }

  TEST_CASE("contrastive training") {
    const auto src = select_view(tiny(), ModalityView::bioz);
    const auto tgt = select_view(tiny(), ModalityView::imu);
    auto cfg = quick(2);
    cfg.alpha = 1.0;
    auto res = train_contrastive(src, tgt, first_fold(), cfg);
    CHECK(res.curve.size() == 4);
    CHECK(res.curve[0].phase == "contrastive");
    CHECK(res.curve[3].phase == "classif");
    CHECK(res.meta.alpha == 1.0);
    CHECK(res.meta.channel_names == tgt.channel_names);

    // alpha = 1 leaves the target-to-source translator at its initial values
    ContrastiveBundle<float> fresh(res.meta.source_config.value(), res.meta.config, tgt.n_classes(), cfg.seed);
    const auto init = fresh.target_to_source.parameters();
    std::size_t matched = 0;
    for (const auto* p : init)
      for (const auto& e : res.extra)
        if (e.name == p->name) {
          CHECK(bitwise_equal(e.value, p->value));
          ++matched;
        }
    CHECK(matched == init.size());
    CHECK(matched > 0);

    cfg.alpha = 0.5;
    auto mixed = train_contrastive(src, tgt, first_fold(), cfg);
    bool moved = false;
    for (const auto* p : init)
      for (const auto& e : mixed.extra)
        if (e.name == p->name) moved |= !bitwise_equal(e.value, p->value);
    CHECK(moved);

    const auto short_src = subset(src, std::vector<std::size_t>{0, 1, 2});
    CHECK_THROWS_AS(train_contrastive(short_src, tgt, first_fold(), cfg), AlignmentError);
  }

  TEST_CASE("shared representation training") {
    const auto src = select_view(tiny(), ModalityView::bioz);
    const auto tgt = select_view(tiny(), ModalityView::imu);
    const auto res = train_shared(src, tgt, first_fold(), quick(1));
    CHECK(res.curve.size() == 1);
    CHECK(res.curve[0].phase == "shared");
    CHECK(res.meta.procedure == "shared");
  }

  TEST_CASE("alpha grids") {
    const auto g = default_alpha_grid();
    REQUIRE(g.size() == 11);
    CHECK(g.front() == 0.0);
    CHECK(g.back() == 1.0);
    CHECK(g[3] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(parse_grid("0:1:0.1") == g);
    CHECK(parse_grid("0.5:0.5:0.1") == std::vector<double>{0.5});
    CHECK(parse_grid("0.2:0.4:0.1").size() == 3);
    CHECK_THROWS(parse_grid("0:1"));
    CHECK_THROWS(parse_grid("a:b:c"));
    CHECK_THROWS(parse_grid("1:0:0.1"));
    CHECK_THROWS(parse_grid("0:1:0"));
    CHECK_THROWS(parse_grid("0:2:0.5"));
  }

  TEST_CASE("argmax alpha against a sorting oracle") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> level(0, 5);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> f1(11);
      for (double& v : f1) v = 0.6 + 0.05 * level(rng);
      std::vector<std::size_t> idx(11);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return f1[a] > f1[b]; });
      CHECK(argmax_alpha(f1) == idx.front());
    }
  }

  TEST_CASE("single-point sweep") {
    const auto src = select_view(tiny(), ModalityView::bioz);
    const auto tgt = select_view(tiny(), ModalityView::imu);
    const auto folds = loso_folds(tiny().subject_set(), 1);
    const auto sw = sweep_alpha(src, tgt, folds, quick(1), {0.5});
    REQUIRE(sw.runs.size() == 1);
    CHECK(sw.runs[0].folds.size() == folds.size());
    CHECK(sw.best_alpha() == 0.5);
    const auto back = sweep_result_from_json(to_json(sw));
    CHECK(back.grid == sw.grid);
    CHECK(back.runs[0].mean_macro_f1 == sw.runs[0].mean_macro_f1);
  }

  TEST_CASE("config validation and json overlay") {
    TrainConfig c;
    CHECK(c.batch_size == 1024);
    CHECK(c.learning_rate == 5e-4);
    CHECK(c.epochs_contrastive == 80);
    CHECK(c.epochs_classif == 20);
    CHECK(c.epochs_baseline == 100);
    CHECK(c.early_stop_patience == 30);
    CHECK(c.alpha == 1.0);
    c.alpha = 1.5;
    CHECK_THROWS_AS(c.validate(), AlphaRange);
    const auto o = train_config_from_json({{"batch_size", 64}, {"tau", 0.2}});
    CHECK(o.batch_size == 64);
    CHECK(o.tau == 0.2);
    CHECK(o.learning_rate == 5e-4);
    CHECK(parse_procedure("shared") == Procedure::shared);
    CHECK_THROWS(parse_procedure("magic"));
  }
}

TEST_SUITE("loso") {
  TEST_CASE("loso run covers every subject once and is deterministic") {
    RunSpec spec;
    spec.procedure = Procedure::backbone;
    spec.target = ModalityView::imu;
    spec.train = quick(2);
    const auto a = loso_run(tiny(), spec);
    REQUIRE(a.folds.size() == 3);
    std::set<std::string> seen;
    for (const auto& f : a.folds) {
      seen.insert(f.subject);
      CHECK(f.confusion.sum() == static_cast<long>(f.n_windows));
      CHECK(f.macro_f1 >= 0.0);
      CHECK(f.macro_f1 <= 1.0);
    }
    CHECK(seen.size() == 3);
    const auto b = loso_run(tiny(), spec);
    for (std::size_t i = 0; i < a.folds.size(); ++i) {
      CHECK(a.folds[i].macro_f1 == b.folds[i].macro_f1);
      CHECK(a.folds[i].confusion == b.folds[i].confusion);
    }
    CHECK(a.mean_macro_f1 == b.mean_macro_f1);
    CHECK(validate_run_report(to_json(a)).empty());
  }

  TEST_CASE("run spec validation") {
    RunSpec spec;
    spec.procedure = Procedure::backbone;
    spec.source = ModalityView::bioz;
    CHECK_THROWS(spec.validate());
    spec.procedure = Procedure::contrastive;
    spec.source.reset();
    CHECK_THROWS(spec.validate());
  }
}
