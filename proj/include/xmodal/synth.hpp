#pragma once

// Synthetic two-modality activity corpora.
//
// Activity classes come in pairs: even pairs are identical in the IMU
// channels and differ only in bio-impedance, odd pairs the other way round.
// Both modalities are driven by the same movement phase, so a bout's bioz and
// IMU traces stay correlated in time.

#include <cstdint>
#include <string>
#include <vector>

#include "xmodal/dataset.hpp"

namespace xmodal {

struct SynthOptions {
  int n_subjects = 6;
  int n_classes = 5;  // including Null
  std::uint64_t seed = 1;
  double difficulty = 0.5;
  int sessions = 1;
  int bouts_per_class = 3;
  double bout_seconds = 6.0;
  double null_seconds = 2.5;
  double imu_cue = 0.0;    // relative IMU amplitude gap inside IMU-identical pairs
  double imu_style = 0.0;  // subject-and-class-specific IMU oscillation

  void validate() const;
};

/// How two activity classes relate in the generator.
enum class PairKind { imu_identical, bioz_identical, distinct };

/// Per-class waveform parameters, shared by every subject.
struct ClassProfile {
  double freq_hz = 0;
  double acc_amp = 0, acc_h2 = 0, acc_shift = 0;
  double gyro_amp = 0, gyro_shift = 0;
  double bioz_dc = 0, bioz_amp = 0, bioz_h2 = 0, bioz_shift = 0;
  double phase_amp = 0;
};

struct SynthSession {
  RecordingMeta meta;
  RawRecordingLog raw;
  LabelIntervalSet labels;
};

std::vector<std::string> synth_class_names(int n_classes);

/// Relation of activity class c (1-based) to its pair partner.
PairKind synth_pair_kind(int c, int n_classes);

std::vector<ClassProfile> synth_profiles(int n_classes, std::uint64_t seed, double imu_cue = 0.0);

std::vector<SynthSession> synth_sessions(const SynthOptions& options);

/// synth_sessions followed by synchronize.
std::vector<Recording> synth_corpus(const SynthOptions& options);

/// Windowed 4-channel dataset of a whole synthetic corpus.
WindowedDataset synth_dataset(const SynthOptions& options, int window = kDefaultWindow, int step = kDefaultStep);

}  // namespace xmodal
