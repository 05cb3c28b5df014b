#pragma once

// Raw sensor logs, synchronised recordings, windowed datasets and the
// subject-wise fold machinery.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xmodal/autograd.hpp"
#include "xmodal/models.hpp"

namespace xmodal {

inline constexpr int kRateHz = 20;
inline constexpr std::int64_t kSamplePeriodMs = 1000 / kRateHz;
inline constexpr int kDefaultWindow = 50;
inline constexpr int kDefaultStep = 10;
inline const std::string kNullClass = "Null";

/// Derived channels of a synchronised recording, in storage order.
inline const std::array<std::string, 4> kChannelNames = {"bioz_mag", "bioz_phase", "acc_norm", "gyro_norm"};

/// Raw columns after the timestamp, in CSV order.
inline const std::array<std::string, 8> kRawColumns = {"bioz_mag", "bioz_phase", "ax", "ay", "az",
                                                       "gx", "gy", "gz"};

struct RawRow {
  std::int64_t timestamp_ms = 0;
  std::array<std::optional<double>, 8> cells;  // kRawColumns order
};

struct RawRecordingLog {
  std::vector<RawRow> rows;
};

struct LabelInterval {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::string label;
};

struct LabelIntervalSet {
  std::vector<LabelInterval> intervals;
  std::vector<std::string> class_map;  // index 0 is always "Null"

  /// Checks ordering, overlap and class membership; throws FormatError.
  void validate() const;
  int class_index(std::string_view name) const;
};

enum class BodyRegion { upper, lower };

struct RecordingMeta {
  std::string subject_id;
  int session_day = 1;
  BodyRegion body_region = BodyRegion::upper;
};

/// One subject-session resampled to the uniform 20 Hz grid.
struct Recording {
  RecordingMeta meta;
  int rate_hz = kRateHz;
  std::int64_t start_ms = 0;
  Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor> channels;  // kChannelNames order
  std::vector<int> labels;
  std::vector<std::string> class_map;

  Eigen::Index length() const { return channels.rows(); }
};

/// N windows of `window` steps by C channels; row i holds window i laid out
/// (step, channel) row-major.
struct WindowedDataset {
  Matrix<float> windows;
  int window = kDefaultWindow;
  std::vector<int> labels;
  std::vector<std::string> subjects;
  std::vector<std::string> channel_names;
  std::vector<std::string> class_map;

  std::size_t size() const { return labels.size(); }
  int channels() const { return static_cast<int>(channel_names.size()); }
  int n_classes() const { return static_cast<int>(class_map.size()); }
  float at(std::size_t n, int step, int channel) const {
    return windows(static_cast<Eigen::Index>(n), step * channels() + channel);
  }

  WindowBatch<float> batch(std::span<const std::size_t> rows) const;
  WindowBatch<float> all() const;
  /// Sorted unique subject ids.
  std::vector<std::string> subject_set() const;
};

enum class ModalityView { bioz, imu, fusion };

std::vector<std::string> view_channels(ModalityView view);
ModalityView parse_view(std::string_view name);
std::string to_string(ModalityView view);

struct FoldSpec {
  std::string test_subject;
  std::string val_subject;
  std::vector<std::string> train_subjects;
};

/// Per-channel z-score statistics.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

inline constexpr double kStdFloor = 1e-8;

// ---------------------------------------------------------------------------

double imu_norm(double x, double y, double z);

/// Linear interpolation of every derived channel onto a 50 ms grid spanning
/// the overlap of all streams, with per-sample labels from the intervals.
Recording synchronize(const RawRecordingLog& raw, const LabelIntervalSet& labels, const RecordingMeta& meta,
                      int min_samples = kDefaultWindow);

WindowedDataset slide_windows(const Recording& rec, int window = kDefaultWindow, int step = kDefaultStep);

/// Concatenates datasets with identical channel and class maps.
WindowedDataset concat(std::span<const WindowedDataset> parts);

std::vector<FoldSpec> loso_folds(std::vector<std::string> subjects, std::uint64_t seed);

/// w_i = max(M)/m_i over class counts M.
std::vector<double> class_weights(std::span<const int> labels, int n_classes);

WindowedDataset select_view(const WindowedDataset& ds, ModalityView view);
WindowedDataset select_channels(const WindowedDataset& ds, std::span<const std::string> names);
WindowedDataset subset(const WindowedDataset& ds, std::span<const std::size_t> rows);
std::vector<std::size_t> rows_for_subjects(const WindowedDataset& ds, std::span<const std::string> subjects);

NormStats normalize_fit(const WindowedDataset& ds);
WindowedDataset normalize_apply(const WindowedDataset& ds, const NormStats& stats);

/// Directory with manifest.json and the windows.f32 blob.
void save_dataset(const WindowedDataset& ds, const std::filesystem::path& dir);
WindowedDataset load_dataset(const std::filesystem::path& dir);

// CSV / JSON sidecars of one raw recording.
RawRecordingLog read_raw_csv(const std::filesystem::path& path);
void write_raw_csv(const RawRecordingLog& log, const std::filesystem::path& path);
/// Intervals only; the caller supplies the class map.
LabelIntervalSet read_labels_csv(const std::filesystem::path& path, std::vector<std::string> class_map);
std::vector<std::string> read_label_names(const std::filesystem::path& path);
void write_labels_csv(const LabelIntervalSet& labels, const std::filesystem::path& path);
RecordingMeta read_meta_json(const std::filesystem::path& path);
void write_meta_json(const RecordingMeta& meta, const std::filesystem::path& path);

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace xmodal
