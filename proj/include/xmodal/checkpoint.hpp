#pragma once

// Checkpoint = checkpoint.bin (named float32 tensors) + checkpoint.json
// sidecar describing how to rebuild and feed the inference model.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xmodal/dataset.hpp"
#include "xmodal/models.hpp"

namespace xmodal {

struct CheckpointMeta {
  std::string procedure = "backbone";
  EncoderConfig config;
  int n_classes = 0;
  std::vector<std::string> class_map;
  std::vector<std::string> channel_names;
  NormStats norm;
  std::optional<double> alpha;
  std::uint64_t seed = 0;
  std::string test_subject, val_subject;
  std::vector<std::string> train_subjects;
  std::size_t params = 0;
  // source branch of two-encoder bundles
  std::optional<EncoderConfig> source_config;
  std::vector<std::string> source_channel_names;
  NormStats source_norm;
};

nlohmann::json to_json(const EncoderConfig& c);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const NormStats& s);
NormStats norm_stats_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CheckpointMeta& m);
CheckpointMeta checkpoint_meta_from_json(const nlohmann::json& j);

/// Writes every tensor; names must be unique.
void save_weights(const std::filesystem::path& path, const std::vector<const Parameter<float>*>& params);
/// Fills `params` by name; extra tensors in the file are ignored. Throws
/// ConfigMismatch on a missing name or a shape disagreement.
void load_weights(const std::filesystem::path& path, const std::vector<Parameter<float>*>& params);

/// Writes checkpoint.bin and checkpoint.json into `dir`. `extra` holds
/// auxiliary tensors (source encoder, translators) stored alongside.
void save_checkpoint(const std::filesystem::path& dir, BackboneModel<float>& model, const CheckpointMeta& meta,
                     const std::vector<const Parameter<float>*>& extra = {});

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& dir);

/// Rebuilds the inference model. When `expected` is given its encoder
/// config must equal the stored one.
BackboneModel<float> load_checkpoint(const std::filesystem::path& dir, CheckpointMeta* meta = nullptr,
                                     const std::optional<EncoderConfig>& expected = std::nullopt);

}  // namespace xmodal
