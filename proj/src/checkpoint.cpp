#include "xmodal/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

namespace xmodal {

using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'X', 'M', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw FormatError(path.string() + ": truncated checkpoint");
  return v;
}

}  // namespace

json to_json(const EncoderConfig& c) {
  return {{"in_channels", c.in_channels},       {"window", c.window},
          {"latent_time", c.latent_time},       {"latent_dim", c.latent_dim},
          {"conv_kernel", c.conv_kernel},       {"conv_filters", c.conv_filters},
          {"conv_strides", c.conv_strides},     {"lstm_layers", c.lstm_layers},
          {"attention_heads", c.attention_heads}};
}

EncoderConfig encoder_config_from_json(const json& j) {
  EncoderConfig c;
  c.in_channels = j.at("in_channels").get<int>();
  c.window = j.at("window").get<int>();
  c.latent_time = j.at("latent_time").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.conv_kernel = j.at("conv_kernel").get<int>();
  c.conv_filters = j.at("conv_filters").get<int>();
  c.conv_strides = j.at("conv_strides").get<std::array<int, 4>>();
  c.lstm_layers = j.at("lstm_layers").get<int>();
  c.attention_heads = j.at("attention_heads").get<int>();
  return c;
}

json to_json(const NormStats& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

NormStats norm_stats_from_json(const json& j) {
  NormStats s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("std").get<std::vector<double>>();
  return s;
}

json to_json(const CheckpointMeta& m) {
  json j;
  j["procedure"] = m.procedure;
  j["encoder"] = to_json(m.config);
  j["n_classes"] = m.n_classes;
  j["class_map"] = m.class_map;
  j["channel_names"] = m.channel_names;
  j["normalization"] = to_json(m.norm);
  j["alpha"] = m.alpha ? json(*m.alpha) : json(nullptr);
  j["seed"] = m.seed;
  j["test_subject"] = m.test_subject;
  j["val_subject"] = m.val_subject;
  j["train_subjects"] = m.train_subjects;
  j["params"] = m.params;
  if (m.source_config) {
    j["source"] = {{"encoder", to_json(*m.source_config)},
                   {"channel_names", m.source_channel_names},
                   {"normalization", to_json(m.source_norm)}};
  }
  return j;
}

CheckpointMeta checkpoint_meta_from_json(const json& j) {
  CheckpointMeta m;
  m.procedure = j.at("procedure").get<std::string>();
  m.config = encoder_config_from_json(j.at("encoder"));
  m.n_classes = j.at("n_classes").get<int>();
  m.class_map = j.at("class_map").get<std::vector<std::string>>();
  m.channel_names = j.at("channel_names").get<std::vector<std::string>>();
  m.norm = norm_stats_from_json(j.at("normalization"));
  if (!j.at("alpha").is_null()) m.alpha = j.at("alpha").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.test_subject = j.at("test_subject").get<std::string>();
  m.val_subject = j.at("val_subject").get<std::string>();
  m.train_subjects = j.at("train_subjects").get<std::vector<std::string>>();
  m.params = j.at("params").get<std::size_t>();
  if (j.contains("source")) {
    const auto& s = j.at("source");
    m.source_config = encoder_config_from_json(s.at("encoder"));
    m.source_channel_names = s.at("channel_names").get<std::vector<std::string>>();
    m.source_norm = norm_stats_from_json(s.at("normalization"));
  }
  return m;
}

void save_weights(const std::filesystem::path& path, const std::vector<const Parameter<float>*>& params) {
  std::set<std::string> names;
  for (const auto* p : params)
    if (!names.insert(p->name).second) throw Error("save_weights: duplicate tensor name " + p->name);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.cols()));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(float)));
  }
}

void load_weights(const std::filesystem::path& path, const std::vector<Parameter<float>*>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path.string() + ": not a checkpoint file");
  if (get<std::uint32_t>(in, path) != kVersion) throw FormatError(path.string() + ": unsupported checkpoint version");
  const auto count = get<std::uint32_t>(in, path);
  std::map<std::string, Matrix<float>> stored;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, path);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError(path.string() + ": truncated checkpoint");
    const auto rows = get<std::uint32_t>(in, path);
    const auto cols = get<std::uint32_t>(in, path);
    Matrix<float> m(rows, cols);
    if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float))))
      throw FormatError(path.string() + ": truncated checkpoint");
    stored.emplace(std::move(name), std::move(m));
  }
  for (auto* p : params) {
    auto it = stored.find(p->name);
    if (it == stored.end()) throw ConfigMismatch("checkpoint has no tensor " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw ConfigMismatch("checkpoint tensor " + p->name + " has shape " + std::to_string(it->second.rows()) + "x" +
                           std::to_string(it->second.cols()) + ", model expects " +
                           std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
    p->value = it->second;
    p->zero_grad();
  }
}

void save_checkpoint(const std::filesystem::path& dir, BackboneModel<float>& model, const CheckpointMeta& meta,
                     const std::vector<const Parameter<float>*>& extra) {
  std::filesystem::create_directories(dir);
  std::vector<const Parameter<float>*> all;
  for (auto* p : model.parameters()) all.push_back(p);
  all.insert(all.end(), extra.begin(), extra.end());
  save_weights(dir / "checkpoint.bin", all);
  std::ofstream out(dir / "checkpoint.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write " + (dir / "checkpoint.json").string());
  out << to_json(meta).dump(2) << "\n";
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir) {
  std::ifstream in(dir / "checkpoint.json");
  if (!in) throw FormatError("missing " + (dir / "checkpoint.json").string());
  try {
    json j;
    in >> j;
    return checkpoint_meta_from_json(j);
  } catch (const json::exception& e) {
    throw FormatError((dir / "checkpoint.json").string() + ": " + e.what());
  }
}

BackboneModel<float> load_checkpoint(const std::filesystem::path& dir, CheckpointMeta* meta_out,
                                     const std::optional<EncoderConfig>& expected) {
  CheckpointMeta meta = read_checkpoint_meta(dir);
  if (expected && !(*expected == meta.config))
    throw ConfigMismatch("checkpoint encoder has in_channels=" + std::to_string(meta.config.in_channels) +
                         ", expected " + std::to_string(expected->in_channels));
  if (meta.config.in_channels != static_cast<int>(meta.channel_names.size()))
    throw ConfigMismatch("checkpoint sidecar channel list disagrees with its encoder config");
  BackboneModel<float> model(meta.config, meta.n_classes, meta.seed);
  load_weights(dir / "checkpoint.bin", model.parameters());
  if (meta_out) *meta_out = std::move(meta);
  return model;
}

}  // namespace xmodal
