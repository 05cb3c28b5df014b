#include "xmodal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace xmodal {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct SubjectProfile {
  double bioz_base = 0, bioz_scale = 1, phase_base = 0, tempo = 1;
};

Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

ClassProfile draw_imu_and_bioz(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ClassProfile p;
  p.freq_hz = 0.6 + 1.0 * u(rng);
  p.acc_amp = 0.15 + 0.45 * u(rng);
  p.acc_h2 = 0.6 * u(rng);
  p.acc_shift = kTwoPi * u(rng);
  p.gyro_amp = 30.0 + 90.0 * u(rng);
  p.gyro_shift = kTwoPi * u(rng);
  p.bioz_dc = -6.0 + 12.0 * u(rng);
  p.bioz_amp = 1.0 + 4.0 * u(rng);
  p.bioz_h2 = 0.5 * u(rng);
  p.bioz_shift = kTwoPi * u(rng);
  p.phase_amp = 0.3 + 1.2 * u(rng);
  return p;
}

}  // namespace

void SynthOptions::validate() const {
  if (n_subjects < 3)
    throw TooFewSubjects("synthetic corpus needs at least 3 subjects for leave-one-subject-out, got " +
                         std::to_string(n_subjects));
  if (n_classes < 3) throw Error("synthetic corpus needs at least 3 classes including Null");
  if (!(difficulty >= 0)) throw Error("difficulty must be >= 0");
  if (sessions < 1 || bouts_per_class < 1) throw Error("sessions and bouts_per_class must be >= 1");
  if (!(bout_seconds >= 2.5) || !(null_seconds > 0)) throw Error("bout_seconds must be >= 2.5, null_seconds > 0");
}

std::vector<std::string> synth_class_names(int n_classes) {
  std::vector<std::string> names{kNullClass};
  for (int c = 1; c < n_classes; ++c) names.push_back("activity_" + std::to_string(c));
  return names;
}

PairKind synth_pair_kind(int c, int n_classes) {
  const int pair = (c - 1) / 2;
  const bool has_partner = (c % 2 == 1) ? c + 1 < n_classes : true;
  if (!has_partner) return PairKind::distinct;
  return pair % 2 == 0 ? PairKind::imu_identical : PairKind::bioz_identical;
}

std::vector<ClassProfile> synth_profiles(int n_classes, std::uint64_t seed, double imu_cue) {
  std::mt19937_64 rng(detail::mix_seed(seed, 101));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ClassProfile> out(static_cast<std::size_t>(n_classes));
  for (int c = 1; c < n_classes; ++c) {
    ClassProfile p = draw_imu_and_bioz(rng);
    if (c % 2 == 0) {
      const ClassProfile& a = out[c - 1];
      if (synth_pair_kind(c, n_classes) == PairKind::imu_identical) {
        // same movement, different impedance signature
        p.freq_hz = a.freq_hz;
        p.acc_amp = a.acc_amp, p.acc_h2 = a.acc_h2, p.acc_shift = a.acc_shift;
        p.gyro_amp = a.gyro_amp, p.gyro_shift = a.gyro_shift;
        p.acc_amp *= 1.0 + imu_cue;
        p.gyro_amp *= 1.0 + imu_cue;
        const double step = 6.0 + 4.0 * u(rng);
        p.bioz_dc = a.bioz_dc > 0 ? a.bioz_dc - step : a.bioz_dc + step;
        p.phase_amp = a.phase_amp > 0.9 ? a.phase_amp - 0.8 : a.phase_amp + 0.8;
      } else {
        p.freq_hz = a.freq_hz;
        p.bioz_dc = a.bioz_dc, p.bioz_amp = a.bioz_amp, p.bioz_h2 = a.bioz_h2, p.bioz_shift = a.bioz_shift;
        p.phase_amp = a.phase_amp;
        p.gyro_amp = a.gyro_amp > 75.0 ? a.gyro_amp - 45.0 : a.gyro_amp + 45.0;
        p.acc_amp = a.acc_amp > 0.375 ? a.acc_amp - 0.2 : a.acc_amp + 0.2;
      }
    }
    out[c] = p;
  }
  return out;
}

std::vector<SynthSession> synth_sessions(const SynthOptions& opt) {
  opt.validate();
  const auto names = synth_class_names(opt.n_classes);
  const auto profiles = synth_profiles(opt.n_classes, opt.seed, opt.imu_cue);
  const double d = opt.difficulty;
  std::vector<SynthSession> out;

  for (int s = 0; s < opt.n_subjects; ++s) {
    std::mt19937_64 srng(detail::mix_seed(opt.seed, 1000 + static_cast<std::uint64_t>(s)));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    SubjectProfile subj;
    subj.bioz_base = 100.0 + 0.5 * n(srng);
    subj.bioz_scale = 0.9 + 0.2 * u(srng);
    subj.phase_base = -10.0 + 0.15 * n(srng);
    subj.tempo = 1.0 + 0.1 * d * (2.0 * u(srng) - 1.0);
    // IMU-only habit of this subject for each class, absent from bioz
    std::mt19937_64 style_rng(detail::mix_seed(opt.seed, 5000 + static_cast<std::uint64_t>(s)));
    std::vector<double> style_freq(static_cast<std::size_t>(opt.n_classes));
    for (auto& f : style_freq) f = 0.3 + 2.7 * u(style_rng);

    for (int day = 1; day <= opt.sessions; ++day) {
      std::mt19937_64 rng(detail::mix_seed(opt.seed, 100000 + 100 * static_cast<std::uint64_t>(s) + day));
      SynthSession sess;
      char id[16];
      std::snprintf(id, sizeof id, "S%02d", s + 1);
      sess.meta.subject_id = id;
      sess.meta.session_day = day;
      sess.meta.body_region = BodyRegion::upper;
      sess.labels.class_map = names;

      std::vector<int> order;
      for (int c = 1; c < opt.n_classes; ++c)
        for (int b = 0; b < opt.bouts_per_class; ++b) order.push_back(c);
      std::shuffle(order.begin(), order.end(), rng);

      // timeline of (class, start sample, length) segments, Null between bouts
      struct Segment {
        int cls;
        std::int64_t start, length;
      };
      std::vector<Segment> segments;
      std::int64_t cursor = 0;
      auto add = [&](int cls, double seconds) {
        const auto len = static_cast<std::int64_t>(std::llround(seconds * kRateHz));
        segments.push_back({cls, cursor, len});
        cursor += len;
      };
      add(0, opt.null_seconds * (0.8 + 0.4 * u(rng)));
      for (int c : order) {
        add(c, opt.bout_seconds * (0.8 + 0.4 * u(rng)));
        add(0, opt.null_seconds * (0.8 + 0.4 * u(rng)));
      }

      for (const auto& seg : segments) {
        const double phase0 = kTwoPi * u(rng);
        const double imu_gain = std::max(0.2, 1.0 + 0.15 * d * n(rng));
        const double bioz_gain = std::max(0.2, 1.0 + 0.15 * d * n(rng));
        const Eigen::Vector3d acc_dir = random_unit(rng);
        const Eigen::Vector3d gyro_dir = random_unit(rng);
        const ClassProfile& p = profiles[static_cast<std::size_t>(seg.cls)];
        for (std::int64_t k = 0; k < seg.length; ++k) {
          const double tau = static_cast<double>(k) / kRateHz;
          double acc, gyro, mag, ph;
          if (seg.cls == 0) {
            const double sway = std::sin(kTwoPi * 0.3 * tau + phase0);
            acc = 1.0 + 0.03 * sway;
            gyro = 3.0 + 2.0 * sway;
            mag = subj.bioz_base + subj.bioz_scale * 0.5 * sway;
            ph = subj.phase_base;
          } else {
            const double phi = kTwoPi * p.freq_hz * subj.tempo * tau + phase0;
            acc = 1.0 + imu_gain * p.acc_amp * (std::sin(phi) + p.acc_h2 * std::sin(2 * phi + p.acc_shift));
            gyro = 5.0 + imu_gain * p.gyro_amp * std::abs(std::sin(phi + p.gyro_shift));
            const double habit = std::sin(kTwoPi * style_freq[static_cast<std::size_t>(seg.cls)] * tau + phase0);
            acc += opt.imu_style * 0.15 * habit;
            gyro += opt.imu_style * 30.0 * habit;
            mag = subj.bioz_base +
                  subj.bioz_scale *
                      (p.bioz_dc + bioz_gain * p.bioz_amp * (std::sin(phi + p.bioz_shift) + p.bioz_h2 * std::sin(2 * phi)));
            ph = subj.phase_base + subj.bioz_scale * bioz_gain * p.phase_amp * std::cos(phi + p.bioz_shift);
          }
          acc = std::abs(acc + 0.08 * d * n(rng));
          gyro = std::abs(gyro + 15.0 * d * n(rng));
          mag += 1.2 * d * subj.bioz_scale * n(rng);
          ph += 0.25 * d * n(rng);

          RawRow row;
          row.timestamp_ms = (seg.start + k) * kSamplePeriodMs;
          row.cells[0] = mag;
          row.cells[1] = ph;
          for (int a = 0; a < 3; ++a) {
            row.cells[2 + a] = acc * acc_dir[a];
            row.cells[5 + a] = gyro * gyro_dir[a];
          }
          sess.raw.rows.push_back(row);
        }
        if (seg.cls != 0)
          sess.labels.intervals.push_back({seg.start * kSamplePeriodMs, (seg.start + seg.length) * kSamplePeriodMs,
                                           names[static_cast<std::size_t>(seg.cls)]});
      }
      out.push_back(std::move(sess));
    }
  }
  return out;
}

std::vector<Recording> synth_corpus(const SynthOptions& options) {
  std::vector<Recording> out;
  for (const auto& s : synth_sessions(options)) out.push_back(synchronize(s.raw, s.labels, s.meta));
  return out;
}

WindowedDataset synth_dataset(const SynthOptions& options, int window, int step) {
  std::vector<WindowedDataset> parts;
  for (const auto& rec : synth_corpus(options)) parts.push_back(slide_windows(rec, window, step));
  return concat(parts);
}

}  // namespace xmodal
