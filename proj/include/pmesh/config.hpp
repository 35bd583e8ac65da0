#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pmesh/fusion.hpp"
#include "pmesh/regressor.hpp"
#include "pmesh/synthgen.hpp"

namespace pmesh {

nlohmann::json gen_config_to_json(const GenConfig& cfg);

/// 16 hex digits of FNV-1a over the canonical (key-sorted, compact) dump.
std::string config_hash(const nlohmann::json& j);

struct PipelineConfig {
  // Body model: "mini" builds the procedural model from model_seed, "file" loads model_path.
  std::string model_source = "mini";
  std::uint64_t model_seed = 0;
  std::filesystem::path model_path;

  // Pose bank: built from (pose_bank_size, pose_bank_seed) unless pose_bank_path is set.
  std::size_t pose_bank_size = 2000;
  std::uint64_t pose_bank_seed = 11;
  std::filesystem::path pose_bank_path;

  GenConfig gen;
  InputSpec input;
  std::vector<int> hidden{512, 256};
  TrainConfig train;
  std::uint64_t init_seed = 3;
  /// Records held out from the end of the dataset for validation.
  std::size_t val_count = 2000;

  double pck_alpha = 0.3;

  FusionSimConfig fusion;
  FusionTrainConfig fusion_train;
  std::size_t fusion_frames = 2000;
  double fusion_holdout = 0.25;
  std::uint64_t fusion_seed = 5;

  std::filesystem::path calibration;
  std::string region = "abdomen";
  std::filesystem::path output_dir = "out";

  /// The merged document the fields were read from.
  nlohmann::json source;
  std::string hash() const { return config_hash(source); }
};

nlohmann::json default_config_json();

/// Sets a dotted key ("train.lr") from command-line text. The text is read as
/// JSON when it parses, else as a string. Unknown keys throw ConfigError.
void apply_override(nlohmann::json& doc, const std::string& key, const std::string& value);

/// Defaults, deep-merged with `doc`; unknown keys and bad values throw ConfigError.
PipelineConfig parse_config(const nlohmann::json& doc);

/// Defaults <- file (if non-empty) <- overrides, then validated. A missing or
/// unparsable file is a ConfigError naming the path.
PipelineConfig load_config(const std::filesystem::path& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides = {});

BodyModel build_model(const PipelineConfig& cfg);
PoseBank build_bank(const PipelineConfig& cfg);

}  // namespace pmesh
