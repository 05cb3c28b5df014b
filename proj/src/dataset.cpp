#include "xmodal/dataset.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace xmodal {

using json = nlohmann::json;

namespace {

struct Stream {
  std::string name;
  std::vector<std::int64_t> t;
  std::vector<double> v;
};

/// Linear interpolation of a strictly increasing stream at grid times
/// start + k*period, k = 0..count-1.
std::vector<double> interpolate(const Stream& s, std::int64_t start, Eigen::Index count) {
  std::vector<double> out(static_cast<std::size_t>(count));
  std::size_t j = 0;
  for (Eigen::Index k = 0; k < count; ++k) {
    const std::int64_t tk = start + k * kSamplePeriodMs;
    while (j + 1 < s.t.size() && s.t[j + 1] <= tk) ++j;
    if (s.t[j] == tk || j + 1 == s.t.size()) {
      out[k] = s.v[j];
      continue;
    }
    const double frac = static_cast<double>(tk - s.t[j]) / static_cast<double>(s.t[j + 1] - s.t[j]);
    out[k] = s.v[j] + (s.v[j + 1] - s.v[j]) * frac;
  }
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void format_error(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw FormatError(path.string() + ":" + std::to_string(line) + ": " + what);
}

double parse_double(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    format_error(path, line, "not a number: '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) format_error(path, line, "not a finite number: '" + s + "'");
  return v;
}

std::int64_t parse_int(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    format_error(path, line, "not an integer: '" + s + "'");
  }
  if (used != s.size()) format_error(path, line, "not an integer: '" + s + "'");
  return v;
}

void write_f32_le(std::ostream& out, const float* data, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(float)));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      auto bits = std::bit_cast<std::uint32_t>(data[i]);
      bits = __builtin_bswap32(bits);
      out.write(reinterpret_cast<const char*>(&bits), 4);
    }
  }
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

// ---------------------------------------------------------------------------

void LabelIntervalSet::validate() const {
  if (class_map.empty() || class_map.front() != kNullClass)
    throw FormatError("class map must start with \"" + kNullClass + "\"");
  std::vector<LabelInterval> sorted = intervals;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.start_ms < b.start_ms; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& iv = sorted[i];
    if (iv.start_ms >= iv.end_ms)
      throw FormatError("label interval [" + std::to_string(iv.start_ms) + ", " + std::to_string(iv.end_ms) +
                        ") is empty");
    if (i > 0 && sorted[i - 1].end_ms > iv.start_ms)
      throw FormatError("label intervals overlap at " + std::to_string(iv.start_ms) + " ms");
    class_index(iv.label);
  }
}

int LabelIntervalSet::class_index(std::string_view name) const {
  for (std::size_t i = 0; i < class_map.size(); ++i)
    if (class_map[i] == name) return static_cast<int>(i);
  throw FormatError("label '" + std::string(name) + "' is not in the class map");
}

WindowBatch<float> WindowedDataset::batch(std::span<const std::size_t> rows) const {
  WindowBatch<float> b;
  b.length = window;
  b.channels = channels();
  b.values.resize(static_cast<Eigen::Index>(rows.size()), windows.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    b.values.row(static_cast<Eigen::Index>(i)) = windows.row(static_cast<Eigen::Index>(rows[i]));
  return b;
}

WindowBatch<float> WindowedDataset::all() const { return {windows, window, channels()}; }

std::vector<std::string> WindowedDataset::subject_set() const {
  std::set<std::string> s(subjects.begin(), subjects.end());
  return {s.begin(), s.end()};
}

std::vector<std::string> view_channels(ModalityView view) {
  switch (view) {
    case ModalityView::bioz: return {kChannelNames[0], kChannelNames[1]};
    case ModalityView::imu: return {kChannelNames[2], kChannelNames[3]};
    case ModalityView::fusion: return {kChannelNames.begin(), kChannelNames.end()};
  }
  return {};
}

ModalityView parse_view(std::string_view name) {
  if (name == "bioz") return ModalityView::bioz;
  if (name == "imu") return ModalityView::imu;
  if (name == "fusion") return ModalityView::fusion;
  throw Error("unknown modality view '" + std::string(name) + "' (expected bioz, imu or fusion)");
}

std::string to_string(ModalityView view) {
  switch (view) {
    case ModalityView::bioz: return "bioz";
    case ModalityView::imu: return "imu";
    case ModalityView::fusion: return "fusion";
  }
  return {};
}

double imu_norm(double x, double y, double z) { return std::sqrt(x * x + y * y + z * z); }

Recording synchronize(const RawRecordingLog& raw, const LabelIntervalSet& labels, const RecordingMeta& meta,
                      int min_samples) {
  labels.validate();
  std::array<Stream, 4> streams;
  for (std::size_t c = 0; c < 4; ++c) streams[c].name = kChannelNames[c];
  for (const auto& row : raw.rows) {
    const auto& x = row.cells;
    if (x[0]) streams[0].t.push_back(row.timestamp_ms), streams[0].v.push_back(*x[0]);
    if (x[1]) streams[1].t.push_back(row.timestamp_ms), streams[1].v.push_back(*x[1]);
    if (x[2] && x[3] && x[4])
      streams[2].t.push_back(row.timestamp_ms), streams[2].v.push_back(imu_norm(*x[2], *x[3], *x[4]));
    if (x[5] && x[6] && x[7])
      streams[3].t.push_back(row.timestamp_ms), streams[3].v.push_back(imu_norm(*x[5], *x[6], *x[7]));
  }
  std::int64_t start = std::numeric_limits<std::int64_t>::min();
  std::int64_t end = std::numeric_limits<std::int64_t>::max();
  for (const auto& s : streams) {
    if (s.t.size() < 2) throw EmptyStream("stream " + s.name + " has fewer than 2 samples");
    for (std::size_t i = 1; i < s.t.size(); ++i)
      if (s.t[i] <= s.t[i - 1])
        throw FormatError("stream " + s.name + ": timestamps not strictly increasing at " +
                          std::to_string(s.t[i]) + " ms");
    start = std::max(start, s.t.front());
    end = std::min(end, s.t.back());
  }
  if (end < start) throw EmptySpan("streams do not overlap in time");
  const Eigen::Index count = (end - start) / kSamplePeriodMs + 1;
  if (count < min_samples)
    throw EmptySpan("common span holds " + std::to_string(count) + " samples, fewer than " +
                    std::to_string(min_samples));

  Recording rec;
  rec.meta = meta;
  rec.start_ms = start;
  rec.class_map = labels.class_map;
  rec.channels.resize(count, 4);
  for (std::size_t c = 0; c < 4; ++c) {
    const auto v = interpolate(streams[c], start, count);
    for (Eigen::Index k = 0; k < count; ++k) rec.channels(k, static_cast<Eigen::Index>(c)) = v[k];
  }
  rec.labels.assign(static_cast<std::size_t>(count), 0);
  for (const auto& iv : labels.intervals) {
    const int cls = labels.class_index(iv.label);
    for (Eigen::Index k = 0; k < count; ++k) {
      const std::int64_t t = start + k * kSamplePeriodMs;
      if (t >= iv.start_ms && t < iv.end_ms) rec.labels[k] = cls;
    }
  }
  return rec;
}

WindowedDataset slide_windows(const Recording& rec, int window, int step) {
  if (window < 1 || step < 1) throw Error("slide_windows: window and step must be positive");
  WindowedDataset ds;
  ds.window = window;
  ds.channel_names.assign(kChannelNames.begin(), kChannelNames.end());
  ds.class_map = rec.class_map;
  const Eigen::Index T = rec.length();
  const Eigen::Index n = T >= window ? (T - window) / step + 1 : 0;
  ds.windows.resize(n, static_cast<Eigen::Index>(window) * 4);
  std::vector<int> votes(rec.class_map.size());
  for (Eigen::Index w = 0; w < n; ++w) {
    const Eigen::Index s = w * step;
    for (Eigen::Index t = 0; t < window; ++t)
      for (Eigen::Index c = 0; c < 4; ++c) ds.windows(w, t * 4 + c) = static_cast<float>(rec.channels(s + t, c));
    std::fill(votes.begin(), votes.end(), 0);
    for (Eigen::Index t = 0; t < window; ++t) ++votes[static_cast<std::size_t>(rec.labels[s + t])];
    // max_element returns the first maximum, i.e. the lowest class index on ties
    ds.labels.push_back(static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin()));
    ds.subjects.push_back(rec.meta.subject_id);
  }
  return ds;
}

WindowedDataset concat(std::span<const WindowedDataset> parts) {
  if (parts.empty()) return {};
  WindowedDataset out;
  out.window = parts.front().window;
  out.channel_names = parts.front().channel_names;
  out.class_map = parts.front().class_map;
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.window != out.window || p.channel_names != out.channel_names || p.class_map != out.class_map)
      throw FormatError("concat: datasets have different window, channel or class maps");
    total += static_cast<Eigen::Index>(p.size());
  }
  out.windows.resize(total, static_cast<Eigen::Index>(out.window) * out.channels());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    if (p.size() == 0) continue;
    out.windows.middleRows(at, static_cast<Eigen::Index>(p.size())) = p.windows;
    at += static_cast<Eigen::Index>(p.size());
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    out.subjects.insert(out.subjects.end(), p.subjects.begin(), p.subjects.end());
  }
  return out;
}

std::vector<FoldSpec> loso_folds(std::vector<std::string> subjects, std::uint64_t seed) {
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  if (subjects.size() < 3)
    throw TooFewSubjects("leave-one-subject-out needs at least 3 subjects, got " + std::to_string(subjects.size()));
  std::mt19937_64 rng(seed);
  std::vector<FoldSpec> folds;
  for (const auto& test : subjects) {
    std::vector<std::string> rest;
    for (const auto& s : subjects)
      if (s != test) rest.push_back(s);
    std::uniform_int_distribution<std::size_t> pick(0, rest.size() - 1);
    const std::size_t v = pick(rng);
    FoldSpec f;
    f.test_subject = test;
    f.val_subject = rest[v];
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(v));
    f.train_subjects = std::move(rest);
    folds.push_back(std::move(f));
  }
  return folds;
}

std::vector<double> class_weights(std::span<const int> labels, int n_classes) {
  std::vector<double> counts(static_cast<std::size_t>(n_classes), 0.0);
  for (int y : labels) {
    if (y < 0 || y >= n_classes) throw LabelRange("label " + std::to_string(y) + " outside the class map");
    counts[static_cast<std::size_t>(y)] += 1;
  }
  for (int c = 0; c < n_classes; ++c)
    if (counts[c] == 0) throw MissingClass("class " + std::to_string(c) + " has no training instances");
  const double mx = *std::max_element(counts.begin(), counts.end());
  std::vector<double> w(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) w[c] = mx / counts[c];
  return w;
}

WindowedDataset select_channels(const WindowedDataset& ds, std::span<const std::string> names) {
  std::vector<int> idx;
  for (const auto& n : names) {
    auto it = std::find(ds.channel_names.begin(), ds.channel_names.end(), n);
    if (it == ds.channel_names.end()) throw MissingChannel("dataset has no channel '" + n + "'");
    idx.push_back(static_cast<int>(it - ds.channel_names.begin()));
  }
  WindowedDataset out;
  out.window = ds.window;
  out.labels = ds.labels;
  out.subjects = ds.subjects;
  out.class_map = ds.class_map;
  out.channel_names.assign(names.begin(), names.end());
  const int C = ds.channels(), K = static_cast<int>(idx.size());
  out.windows.resize(ds.windows.rows(), static_cast<Eigen::Index>(ds.window) * K);
  for (Eigen::Index n = 0; n < ds.windows.rows(); ++n)
    for (int t = 0; t < ds.window; ++t)
      for (int k = 0; k < K; ++k) out.windows(n, t * K + k) = ds.windows(n, t * C + idx[k]);
  return out;
}

WindowedDataset select_view(const WindowedDataset& ds, ModalityView view) {
  const auto names = view_channels(view);
  return select_channels(ds, names);
}

WindowedDataset subset(const WindowedDataset& ds, std::span<const std::size_t> rows) {
  WindowedDataset out;
  out.window = ds.window;
  out.channel_names = ds.channel_names;
  out.class_map = ds.class_map;
  out.windows.resize(static_cast<Eigen::Index>(rows.size()), ds.windows.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.windows.row(static_cast<Eigen::Index>(i)) = ds.windows.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(ds.labels[rows[i]]);
    out.subjects.push_back(ds.subjects[rows[i]]);
  }
  return out;
}

std::vector<std::size_t> rows_for_subjects(const WindowedDataset& ds, std::span<const std::string> subjects) {
  std::set<std::string> wanted(subjects.begin(), subjects.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (wanted.count(ds.subjects[i])) out.push_back(i);
  return out;
}

NormStats normalize_fit(const WindowedDataset& ds) {
  const int C = ds.channels();
  NormStats st;
  st.mean.assign(static_cast<std::size_t>(C), 0.0);
  st.stddev.assign(static_cast<std::size_t>(C), 1.0);
  const double n = static_cast<double>(ds.size()) * ds.window;
  if (n == 0) return st;
  for (int c = 0; c < C; ++c) {
    double sum = 0;
    for (Eigen::Index i = 0; i < ds.windows.rows(); ++i)
      for (int t = 0; t < ds.window; ++t) sum += ds.windows(i, t * C + c);
    const double mean = sum / n;
    double ss = 0;
    for (Eigen::Index i = 0; i < ds.windows.rows(); ++i)
      for (int t = 0; t < ds.window; ++t) {
        const double d = ds.windows(i, t * C + c) - mean;
        ss += d * d;
      }
    st.mean[c] = mean;
    st.stddev[c] = std::max(std::sqrt(ss / n), kStdFloor);
  }
  return st;
}

WindowedDataset normalize_apply(const WindowedDataset& ds, const NormStats& stats) {
  const int C = ds.channels();
  if (static_cast<int>(stats.mean.size()) != C || static_cast<int>(stats.stddev.size()) != C)
    throw ShapeMismatch("normalization stats have " + std::to_string(stats.mean.size()) + " channels, dataset has " +
                        std::to_string(C));
  WindowedDataset out = ds;
  for (Eigen::Index i = 0; i < out.windows.rows(); ++i)
    for (int t = 0; t < ds.window; ++t)
      for (int c = 0; c < C; ++c) {
        float& v = out.windows(i, t * C + c);
        v = static_cast<float>((static_cast<double>(v) - stats.mean[c]) / stats.stddev[c]);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

std::string sha256_hex(std::span<const unsigned char> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 computation failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

std::string sha256_file(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return sha256_hex(bytes);
}

void save_dataset(const WindowedDataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto blob = dir / "windows.f32";
  {
    std::ofstream out(blob, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + blob.string());
    write_f32_le(out, ds.windows.data(), static_cast<std::size_t>(ds.windows.size()));
  }
  json m;
  m["format"] = "xmodal-windows";
  m["version"] = 1;
  m["N"] = ds.size();
  m["window"] = ds.window;
  m["channels"] = ds.channels();
  m["channel_names"] = ds.channel_names;
  m["class_map"] = ds.class_map;
  m["subjects"] = ds.subjects;
  m["labels"] = ds.labels;
  m["dtype"] = "float32";
  m["byte_order"] = "little";
  m["layout"] = "N x window x C, row-major";
  m["sha256"] = sha256_file(blob);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << m.dump(2) << "\n";
}

WindowedDataset load_dataset(const std::filesystem::path& dir) {
  json m;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw FormatError("missing " + (dir / "manifest.json").string());
    try {
      in >> m;
    } catch (const json::exception& e) {
      throw FormatError("manifest.json: " + std::string(e.what()));
    }
  }
  WindowedDataset ds;
  std::size_t n = 0;
  std::string digest;
  try {
    n = m.at("N").get<std::size_t>();
    ds.window = m.at("window").get<int>();
    ds.channel_names = m.at("channel_names").get<std::vector<std::string>>();
    ds.class_map = m.at("class_map").get<std::vector<std::string>>();
    ds.subjects = m.at("subjects").get<std::vector<std::string>>();
    ds.labels = m.at("labels").get<std::vector<int>>();
    digest = m.at("sha256").get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  if (ds.window < 1) throw FormatError("manifest window must be positive");
  if (ds.labels.size() != n || ds.subjects.size() != n)
    throw FormatError("manifest N disagrees with its labels/subjects arrays");
  for (int y : ds.labels)
    if (y < 0 || y >= ds.n_classes()) throw FormatError("manifest label outside the class map");
  const auto bytes = read_bytes(dir / "windows.f32");
  const std::size_t per_window = static_cast<std::size_t>(ds.window) * ds.channel_names.size();
  if (bytes.size() != n * per_window * sizeof(float))
    throw FormatError("manifest N=" + std::to_string(n) + " disagrees with blob size " + std::to_string(bytes.size()));
  if (sha256_hex(bytes) != digest) throw FormatError("windows.f32 sha256 does not match the manifest");
  ds.windows.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(per_window));
  for (std::size_t i = 0; i < n * per_window; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes.data() + 4 * i, 4);
    if constexpr (std::endian::native != std::endian::little) bits = __builtin_bswap32(bits);
    ds.windows.data()[i] = std::bit_cast<float>(bits);
  }
  return ds;
}

RawRecordingLog read_raw_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) format_error(path, 1, "empty file");
  ++lineno;
  const auto header = split_csv(line);
  std::vector<std::string> expected{"timestamp_ms"};
  expected.insert(expected.end(), kRawColumns.begin(), kRawColumns.end());
  if (header != expected) format_error(path, lineno, "unexpected header");
  RawRecordingLog log;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != expected.size())
      format_error(path, lineno, "expected " + std::to_string(expected.size()) + " cells, got " +
                                     std::to_string(cells.size()));
    RawRow row;
    row.timestamp_ms = parse_int(cells[0], path, lineno);
    for (std::size_t c = 0; c < 8; ++c)
      if (!cells[c + 1].empty()) row.cells[c] = parse_double(cells[c + 1], path, lineno);
    log.rows.push_back(row);
  }
  return log;
}

namespace {

/// Shortest representation that reads back to the same double.
std::string format_number(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_raw_csv(const RawRecordingLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "timestamp_ms";
  for (const auto& c : kRawColumns) out << ',' << c;
  out << '\n';
  for (const auto& row : log.rows) {
    out << row.timestamp_ms;
    for (const auto& cell : row.cells) {
      out << ',';
      if (cell) out << format_number(*cell);
    }
    out << '\n';
  }
}

std::vector<std::string> read_label_names(const std::filesystem::path& path) {
  auto set = read_labels_csv(path, {});
  std::vector<std::string> names;
  for (const auto& iv : set.intervals) names.push_back(iv.label);
  return names;
}

LabelIntervalSet read_labels_csv(const std::filesystem::path& path, std::vector<std::string> class_map) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) format_error(path, 1, "empty file");
  if (split_csv(line) != std::vector<std::string>{"start_ms", "end_ms", "label"})
    format_error(path, 1, "unexpected header");
  LabelIntervalSet set;
  set.class_map = std::move(class_map);
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto first = line.find(',');
    const auto second = first == std::string::npos ? first : line.find(',', first + 1);
    if (second == std::string::npos) format_error(path, lineno, "expected start_ms,end_ms,label");
    LabelInterval iv;
    iv.start_ms = parse_int(trim(line.substr(0, first)), path, lineno);
    iv.end_ms = parse_int(trim(line.substr(first + 1, second - first - 1)), path, lineno);
    iv.label = trim(line.substr(second + 1));
    if (iv.label.empty()) format_error(path, lineno, "empty label");
    if (iv.start_ms >= iv.end_ms) format_error(path, lineno, "start_ms must be < end_ms");
    set.intervals.push_back(std::move(iv));
  }
  return set;
}

void write_labels_csv(const LabelIntervalSet& labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "start_ms,end_ms,label\n";
  for (const auto& iv : labels.intervals) out << iv.start_ms << ',' << iv.end_ms << ',' << iv.label << '\n';
}

RecordingMeta read_meta_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    json j;
    in >> j;
    RecordingMeta m;
    m.subject_id = j.at("subject_id").get<std::string>();
    m.session_day = j.value("session_day", 1);
    const auto region = j.value("body_region", std::string("upper"));
    if (region == "upper")
      m.body_region = BodyRegion::upper;
    else if (region == "lower")
      m.body_region = BodyRegion::lower;
    else
      throw FormatError(path.string() + ": body_region must be upper or lower");
    if (m.session_day < 1) throw FormatError(path.string() + ": session_day must be >= 1");
    return m;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_meta_json(const RecordingMeta& meta, const std::filesystem::path& path) {
  json j;
  j["subject_id"] = meta.subject_id;
  j["session_day"] = meta.session_day;
  j["body_region"] = meta.body_region == BodyRegion::upper ? "upper" : "lower";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace xmodal
