#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <unistd.h>

#include "xmodal/dataset.hpp"
#include "xmodal/errors.hpp"

using namespace xmodal;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("xmodal_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Every stream sampled at the same timestamps.
RawRecordingLog regular_log(int rows, std::int64_t period_ms, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  RawRecordingLog log;
  for (int i = 0; i < rows; ++i) {
    RawRow r;
    r.timestamp_ms = i * period_ms;
    for (auto& c : r.cells) c = u(rng);
    log.rows.push_back(r);
  }
  return log;
}

LabelIntervalSet no_labels() {
  LabelIntervalSet l;
  l.class_map = {"Null", "Box"};
  return l;
}

RecordingMeta meta(const std::string& id = "S01") {
  RecordingMeta m;
  m.subject_id = id;
  return m;
}

Recording flat_recording(int T, const std::vector<int>& labels, int n_classes) {
  Recording r;
  r.meta = meta();
  r.channels = decltype(r.channels)::Zero(T, 4);
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < 4; ++c) r.channels(t, c) = t * 4 + c;
  r.labels = labels;
  r.class_map.assign(static_cast<std::size_t>(n_classes), "c");
  r.class_map[0] = "Null";
  for (int c = 1; c < n_classes; ++c) r.class_map[c] = "c" + std::to_string(c);
  return r;
}

WindowedDataset random_dataset(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<float> g(3.0f, 2.0f);
  WindowedDataset ds;
  ds.channel_names.assign(kChannelNames.begin(), kChannelNames.end());
  ds.class_map = {"Null", "A", "B"};
  ds.windows.resize(static_cast<Eigen::Index>(n), 50 * 4);
  for (Eigen::Index i = 0; i < ds.windows.size(); ++i) ds.windows.data()[i] = g(rng);
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels.push_back(static_cast<int>(i % 3));
    ds.subjects.push_back("S0" + std::to_string(i % 4));
  }
  return ds;
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("imu_norm") {
    CHECK(imu_norm(3, 4, 0) == 5.0);
    CHECK(imu_norm(0, 0, 0) == 0.0);
    CHECK(imu_norm(1, 1, 1) == doctest::Approx(1.7320508).epsilon(1e-6));
  }

  TEST_CASE("identity resampling at 20 Hz") {
    std::mt19937_64 rng(1);
    const auto log = regular_log(80, 50, rng);
    const auto rec = synchronize(log, no_labels(), meta());
    REQUIRE(rec.length() == 80);
    for (int t = 0; t < 80; ++t) {
      const auto& x = log.rows[t].cells;
      CHECK(rec.channels(t, 0) == *x[0]);
      CHECK(rec.channels(t, 1) == *x[1]);
      CHECK(rec.channels(t, 2) == doctest::Approx(std::sqrt(*x[2] * *x[2] + *x[3] * *x[3] + *x[4] * *x[4])));
      CHECK(rec.channels(t, 3) == doctest::Approx(std::sqrt(*x[5] * *x[5] + *x[6] * *x[6] + *x[7] * *x[7])));
    }
  }

  TEST_CASE("10 Hz bioz against 20 Hz imu matches brute-force interpolation") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    // bioz rows every 100 ms, imu rows every 50 ms on interleaved rows
    RawRecordingLog log;
    std::vector<std::pair<std::int64_t, double>> mag;
    for (std::int64_t t = 0; t <= 10000; t += 50) {
      RawRow r;
      r.timestamp_ms = t;
      if (t % 100 == 0) {
        r.cells[0] = u(rng);
        r.cells[1] = u(rng);
        mag.emplace_back(t, *r.cells[0]);
      }
      if (t < 9960)
        for (int c = 2; c < 8; ++c) r.cells[c] = u(rng);
      log.rows.push_back(r);
    }
    const auto rec = synchronize(log, no_labels(), meta());
    // imu span is [0, 9950]
    REQUIRE(rec.length() == 200);
    CHECK(rec.start_ms == 0);
    for (int k = 0; k < 200; ++k) {
      const std::int64_t t = k * 50;
      // brute force: scan for the bracketing pair
      double expect = 0;
      for (std::size_t j = 0; j + 1 < mag.size(); ++j) {
        if (mag[j].first <= t && t <= mag[j + 1].first) {
          const double f = double(t - mag[j].first) / double(mag[j + 1].first - mag[j].first);
          expect = mag[j].second * (1 - f) + mag[j + 1].second * f;
          CHECK(rec.channels(k, 0) >= std::min(mag[j].second, mag[j + 1].second) - 1e-12);
          CHECK(rec.channels(k, 0) <= std::max(mag[j].second, mag[j + 1].second) + 1e-12);
          break;
        }
      }
      CHECK(rec.channels(k, 0) == doctest::Approx(expect).epsilon(1e-12));
    }
  }

  TEST_CASE("labels follow interval membership") {
    std::mt19937_64 rng(3);
    const auto log = regular_log(100, 50, rng);
    auto labels = no_labels();
    labels.intervals.push_back({1000, 3000, "Box"});
    const auto rec = synchronize(log, labels, meta());
    for (int k = 0; k < rec.length(); ++k) {
      const std::int64_t t = rec.start_ms + k * kSamplePeriodMs;
      CHECK(rec.labels[k] == (t >= 1000 && t < 3000 ? 1 : 0));
      CHECK(rec.channels(k, 2) >= 0.0);
      CHECK(rec.channels(k, 3) >= 0.0);
    }
  }

  TEST_CASE("synchronize errors") {
    std::mt19937_64 rng(4);
    auto log = regular_log(80, 50, rng);
    SUBCASE("single bioz row") {
      for (std::size_t i = 1; i < log.rows.size(); ++i) log.rows[i].cells[0].reset();
      CHECK_THROWS_AS(synchronize(log, no_labels(), meta()), EmptyStream);
    }
    SUBCASE("missing gyro component everywhere") {
      for (auto& r : log.rows) r.cells[6].reset();
      CHECK_THROWS_AS(synchronize(log, no_labels(), meta()), EmptyStream);
    }
    SUBCASE("span shorter than a window") {
      log.rows.resize(49);
      CHECK_THROWS_AS(synchronize(log, no_labels(), meta()), EmptySpan);
    }
    SUBCASE("non-monotone timestamps") {
      std::swap(log.rows[10].timestamp_ms, log.rows[11].timestamp_ms);
      CHECK_THROWS_AS(synchronize(log, no_labels(), meta()), FormatError);
    }
    SUBCASE("overlapping intervals") {
      auto labels = no_labels();
      labels.intervals = {{0, 1000, "Box"}, {500, 1500, "Box"}};
      CHECK_THROWS_AS(synchronize(log, labels, meta()), FormatError);
    }
    SUBCASE("unknown label") {
      auto labels = no_labels();
      labels.intervals = {{0, 1000, "Jump"}};
      CHECK_THROWS_AS(synchronize(log, labels, meta()), FormatError);
    }
  }

  TEST_CASE("rows with gaps feed only their present streams") {
    std::mt19937_64 rng(5);
    auto log = regular_log(120, 50, rng);
    for (std::size_t i = 0; i < log.rows.size(); i += 3) log.rows[i].cells[2].reset();
    const auto rec = synchronize(log, no_labels(), meta());
    // acc starts on row 1, so the common span does too
    REQUIRE(rec.length() == 119);
    CHECK(rec.start_ms == 50);
    for (int k = 0; k < 119; ++k) CHECK(rec.channels(k, 0) == *log.rows[k + 1].cells[0]);
  }

  TEST_CASE("window count matches brute-force enumeration") {
    for (int T = 1; T <= 500; ++T) {
      const auto rec = flat_recording(T, std::vector<int>(T, 0), 2);
      const auto ds = slide_windows(rec);
      std::vector<int> starts;
      for (int s = 0; s + 50 <= T; s += 10) starts.push_back(s);
      REQUIRE(ds.size() == starts.size());
      if (T >= 50) CHECK(ds.size() == static_cast<std::size_t>((T - 50) / 10 + 1));
      for (std::size_t w = 0; w < starts.size(); ++w) CHECK(ds.at(w, 0, 0) == float(starts[w] * 4));
    }
    CHECK(slide_windows(flat_recording(50, std::vector<int>(50, 0), 2)).size() == 1);
    CHECK(slide_windows(flat_recording(145, std::vector<int>(145, 0), 2)).size() == 10);
    CHECK(slide_windows(flat_recording(49, std::vector<int>(49, 0), 2)).size() == 0);
  }

  TEST_CASE("window label is the majority with ties to the lowest index") {
    std::vector<int> y(50, 0);
    std::fill(y.begin(), y.begin() + 30, 2);
    CHECK(slide_windows(flat_recording(50, y, 3)).labels[0] == 2);
    std::fill(y.begin(), y.end(), 1);
    std::fill(y.begin(), y.begin() + 25, 2);
    CHECK(slide_windows(flat_recording(50, y, 3)).labels[0] == 1);
    std::fill(y.begin(), y.begin() + 25, 0);
    CHECK(slide_windows(flat_recording(50, y, 3)).labels[0] == 0);
    const auto ds = slide_windows(flat_recording(50, y, 3));
    CHECK(ds.subjects[0] == "S01");
    CHECK(ds.channel_names == std::vector<std::string>(kChannelNames.begin(), kChannelNames.end()));
  }

  TEST_CASE("loso folds partition the subjects") {
    for (int n : {3, 4, 6, 10}) {
      std::vector<std::string> subjects;
      for (int i = 0; i < n; ++i) subjects.push_back("S" + std::to_string(10 + i));
      const auto folds = loso_folds(subjects, 7);
      REQUIRE(folds.size() == static_cast<std::size_t>(n));
      std::multiset<std::string> tests;
      for (const auto& f : folds) {
        tests.insert(f.test_subject);
        CHECK(f.val_subject != f.test_subject);
        CHECK(f.train_subjects.size() == static_cast<std::size_t>(n - 2));
        std::set<std::string> all(f.train_subjects.begin(), f.train_subjects.end());
        CHECK_FALSE(all.count(f.test_subject));
        CHECK_FALSE(all.count(f.val_subject));
        all.insert(f.test_subject);
        all.insert(f.val_subject);
        CHECK(all == std::set<std::string>(subjects.begin(), subjects.end()));
      }
      for (const auto& s : subjects) CHECK(tests.count(s) == 1);
    }
    CHECK_THROWS_AS(loso_folds({"a", "b"}, 1), TooFewSubjects);
    CHECK_THROWS_AS(loso_folds({"a", "a", "b"}, 1), TooFewSubjects);
  }

  TEST_CASE("loso validation draw is seeded") {
    std::vector<std::string> subjects;
    for (int i = 0; i < 10; ++i) subjects.push_back("S" + std::to_string(i));
    const auto a = loso_folds(subjects, 42);
    const auto b = loso_folds(subjects, 42);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].val_subject == b[i].val_subject);
    bool differs = false;
    for (std::uint64_t s = 1; s < 20 && !differs; ++s) {
      const auto c = loso_folds(subjects, s);
      for (std::size_t i = 0; i < a.size(); ++i) differs |= c[i].val_subject != a[i].val_subject;
    }
    CHECK(differs);
  }

  TEST_CASE("class weights") {
    auto from_counts = [](std::vector<int> counts) {
      std::vector<int> y;
      for (std::size_t c = 0; c < counts.size(); ++c) y.insert(y.end(), counts[c], static_cast<int>(c));
      return class_weights(y, static_cast<int>(counts.size()));
    };
    CHECK(from_counts({100, 50, 25}) == std::vector<double>{1.0, 2.0, 4.0});
    CHECK(from_counts({7, 7, 7, 7}) == std::vector<double>{1.0, 1.0, 1.0, 1.0});
    CHECK(from_counts({10, 40}) == std::vector<double>{4.0, 1.0});
    CHECK_THROWS_AS(from_counts({3, 0, 2}), MissingClass);

    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      std::uniform_int_distribution<int> cnt(1, 200);
      std::vector<int> counts(5);
      for (int& c : counts) c = cnt(rng);
      const auto w = from_counts(counts);
      const auto big = std::max_element(counts.begin(), counts.end()) - counts.begin();
      CHECK(w[big] == 1.0);
      const auto wmax = std::max_element(w.begin(), w.end()) - w.begin();
      CHECK(counts[wmax] == *std::min_element(counts.begin(), counts.end()));
    }
  }

  TEST_CASE("views") {
    std::mt19937_64 rng(10);
    const auto ds = random_dataset(12, rng);
    const auto fusion = select_view(ds, ModalityView::fusion);
    CHECK(fusion.windows == ds.windows);
    const auto imu = select_view(ds, ModalityView::imu);
    CHECK(imu.channel_names == std::vector<std::string>{"acc_norm", "gyro_norm"});
    const auto bioz = select_view(ds, ModalityView::bioz);
    CHECK(bioz.channel_names == std::vector<std::string>{"bioz_mag", "bioz_phase"});
    for (std::size_t n = 0; n < ds.size(); ++n)
      for (int t = 0; t < 50; ++t) {
        CHECK(bioz.at(n, t, 0) == fusion.at(n, t, 0));
        CHECK(bioz.at(n, t, 1) == fusion.at(n, t, 1));
        CHECK(imu.at(n, t, 1) == fusion.at(n, t, 3));
      }
    CHECK(imu.labels == ds.labels);
    CHECK(imu.subjects == ds.subjects);
    CHECK_THROWS_AS(select_view(imu, ModalityView::bioz), MissingChannel);
    CHECK_THROWS_AS(select_view(imu, ModalityView::fusion), MissingChannel);
    CHECK(parse_view("imu") == ModalityView::imu);
    CHECK(to_string(ModalityView::fusion) == "fusion");
  }

  TEST_CASE("subset and subject rows") {
    std::mt19937_64 rng(11);
    const auto ds = random_dataset(20, rng);
    const std::vector<std::string> pick = {"S01", "S03"};
    const auto rows = rows_for_subjects(ds, pick);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const bool in = std::find(rows.begin(), rows.end(), i) != rows.end();
      CHECK(in == (ds.subjects[i] == "S01" || ds.subjects[i] == "S03"));
    }
    const auto sub = subset(ds, rows);
    REQUIRE(sub.size() == rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      CHECK(sub.windows.row(k) == ds.windows.row(rows[k]));
      CHECK(sub.labels[k] == ds.labels[rows[k]]);
    }
    CHECK(ds.subject_set() == std::vector<std::string>{"S00", "S01", "S02", "S03"});
  }

  TEST_CASE("normalization against a two-pass oracle") {
    std::mt19937_64 rng(12);
    auto ds = random_dataset(30, rng);
    // channel 3 constant
    for (std::size_t n = 0; n < ds.size(); ++n)
      for (int t = 0; t < 50; ++t) ds.windows(n, t * 4 + 3) = 2.5f;
    const auto st = normalize_fit(ds);
    const auto out = normalize_apply(ds, st);
    for (int c = 0; c < 4; ++c) {
      std::vector<double> v;
      for (std::size_t n = 0; n < ds.size(); ++n)
        for (int t = 0; t < 50; ++t) v.push_back(ds.at(n, t, c));
      double mu = 0;
      for (double x : v) mu += x;
      mu /= v.size();
      double var = 0;
      for (double x : v) var += (x - mu) * (x - mu);
      const double sd = std::max(std::sqrt(var / v.size()), 1e-8);
      CHECK(st.mean[c] == doctest::Approx(mu).epsilon(1e-12));
      CHECK(st.stddev[c] == doctest::Approx(sd).epsilon(1e-12));
      double m2 = 0, s2 = 0;
      for (std::size_t n = 0; n < ds.size(); ++n)
        for (int t = 0; t < 50; ++t) {
          const double z = out.at(n, t, c);
          CHECK(z == doctest::Approx((ds.at(n, t, c) - mu) / sd).epsilon(1e-6));
          m2 += z;
          s2 += z * z;
        }
      m2 /= v.size();
      s2 = std::sqrt(s2 / v.size() - m2 * m2);
      CHECK(std::abs(m2) < 1e-5);
      if (c == 3) {
        CHECK(s2 == 0.0);
      } else {
        CHECK(s2 == doctest::Approx(1.0).epsilon(1e-5));
      }
    }
    NormStats bad{{0.0}, {1.0}};
    CHECK_THROWS_AS(normalize_apply(ds, bad), ShapeMismatch);
  }

  TEST_CASE("save and load round trip") {
    std::mt19937_64 rng(13);
    const auto dir = scratch("roundtrip");
    const auto ds = random_dataset(17, rng);
    save_dataset(ds, dir / "a");
    const auto back = load_dataset(dir / "a");
    REQUIRE(back.windows.rows() == ds.windows.rows());
    CHECK(std::equal(ds.windows.data(), ds.windows.data() + ds.windows.size(), back.windows.data(),
                     [](float x, float y) { return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y); }));
    CHECK(back.labels == ds.labels);
    CHECK(back.subjects == ds.subjects);
    CHECK(back.channel_names == ds.channel_names);
    CHECK(back.class_map == ds.class_map);

    WindowedDataset empty;
    empty.channel_names = {"acc_norm", "gyro_norm"};
    empty.class_map = {"Null", "A"};
    empty.windows.resize(0, 100);
    save_dataset(empty, dir / "empty");
    const auto e2 = load_dataset(dir / "empty");
    CHECK(e2.size() == 0);
    CHECK(e2.channels() == 2);

    SUBCASE("blob truncated") {
      fs::resize_file(dir / "a" / "windows.f32", fs::file_size(dir / "a" / "windows.f32") - 800);
      CHECK_THROWS_AS(load_dataset(dir / "a"), FormatError);
    }
    SUBCASE("blob altered") {
      std::fstream f(dir / "a" / "windows.f32", std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(5);
      f.put('\x7f');
      f.close();
      CHECK_THROWS_AS(load_dataset(dir / "a"), FormatError);
    }
    SUBCASE("missing manifest") { CHECK_THROWS_AS(load_dataset(dir / "nope"), FormatError); }
    fs::remove_all(dir);
  }

  TEST_CASE("sha256") {
    const std::string abc = "abc";
    CHECK(sha256_hex({reinterpret_cast<const unsigned char*>(abc.data()), abc.size()}) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("csv and sidecar round trips") {
    std::mt19937_64 rng(14);
    const auto dir = scratch("csv");
    auto log = regular_log(30, 50, rng);
    log.rows[4].cells[1].reset();
    log.rows[7].cells[6].reset();
    write_raw_csv(log, dir / "raw.csv");
    const auto back = read_raw_csv(dir / "raw.csv");
    REQUIRE(back.rows.size() == log.rows.size());
    for (std::size_t i = 0; i < log.rows.size(); ++i) {
      CHECK(back.rows[i].timestamp_ms == log.rows[i].timestamp_ms);
      for (int c = 0; c < 8; ++c) {
        REQUIRE(back.rows[i].cells[c].has_value() == log.rows[i].cells[c].has_value());
        if (log.rows[i].cells[c]) CHECK(*back.rows[i].cells[c] == *log.rows[i].cells[c]);
      }
    }

    LabelIntervalSet labels;
    labels.class_map = {"Null", "Box", "Wave"};
    labels.intervals = {{100, 900, "Wave"}, {1000, 3000, "Box"}};
    write_labels_csv(labels, dir / "labels.csv");
    const auto lb = read_labels_csv(dir / "labels.csv", labels.class_map);
    REQUIRE(lb.intervals.size() == 2);
    CHECK(lb.intervals[1].label == "Box");
    CHECK(lb.intervals[0].end_ms == 900);
    CHECK(read_label_names(dir / "labels.csv") == std::vector<std::string>{"Wave", "Box"});

    RecordingMeta m{"S07", 2, BodyRegion::lower};
    write_meta_json(m, dir / "meta.json");
    const auto m2 = read_meta_json(dir / "meta.json");
    CHECK(m2.subject_id == "S07");
    CHECK(m2.session_day == 2);
    CHECK(m2.body_region == BodyRegion::lower);

    std::ofstream(dir / "bad_header.csv") << "time,bioz_mag\n1,2\n";
    CHECK_THROWS_AS(read_raw_csv(dir / "bad_header.csv"), FormatError);
    std::ofstream(dir / "bad_cell.csv") << "timestamp_ms,bioz_mag,bioz_phase,ax,ay,az,gx,gy,gz\n0,1,2,x,4,5,6,7,8\n";
    CHECK_THROWS_AS(read_raw_csv(dir / "bad_cell.csv"), FormatError);
    std::ofstream(dir / "bad_labels.csv") << "start_ms,end_ms,label\n500,100,Box\n";
    CHECK_THROWS_AS(read_labels_csv(dir / "bad_labels.csv", labels.class_map), FormatError);
    std::ofstream(dir / "bad_meta.json") << R"({"subject_id":"S1","session_day":1,"body_region":"left"})";
    CHECK_THROWS_AS(read_meta_json(dir / "bad_meta.json"), FormatError);
    CHECK_THROWS_AS(read_raw_csv(dir / "absent.csv"), FormatError);
    fs::remove_all(dir);
  }

  TEST_CASE("concat") {
    std::mt19937_64 rng(15);
    const std::vector<WindowedDataset> parts = {random_dataset(3, rng), random_dataset(5, rng)};
    const auto all = concat(parts);
    CHECK(all.size() == 8);
    CHECK(all.windows.row(3) == parts[1].windows.row(0));
    auto other = random_dataset(2, rng);
    other.class_map = {"Null", "Z"};
    const std::vector<WindowedDataset> bad = {parts[0], other};
    CHECK_THROWS_AS(concat(bad), FormatError);
  }
}
