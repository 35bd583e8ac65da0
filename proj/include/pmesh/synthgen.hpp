#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pmesh/body_model.hpp"
#include "pmesh/camera.hpp"
#include "pmesh/heatmap.hpp"

namespace pmesh {

struct PoseBank {
  std::vector<PoseParams> poses;
  std::string source;
  /// Optional sampling weights, one per pose.
  std::vector<double> weights;
};

void validate(const PoseBank& bank);

/// Supine base pose: root turned face-up with the head toward world -z,
/// arms along the sides.
PoseParams supine_base_pose();

/// Per-joint perturbation limits around the supine base (radians, per axis).
struct JointLimits {
  Eigen::Vector3d lo, hi;
};
const std::vector<JointLimits>& supine_limits();

PoseBank build_pose_bank(std::size_t count, std::uint64_t seed);

/// One pose per line, 72 whitespace-separated reals. Blank lines and lines
/// starting with '#' are skipped. Errors name the offending line.
PoseBank load_pose_bank(const std::filesystem::path& path);
void save_pose_bank(const PoseBank& bank, const std::filesystem::path& path);

enum class HeatmapDtype : std::uint16_t { kF32 = 0, kF16 = 1 };

struct GenConfig {
  std::size_t count = 20000;
  double beta_std = 1.0;
  double pose_noise_std = 0.05;
  CameraIntrinsics intrinsics{250.0, 250.0, 128.0, 128.0, 256, 256};
  CameraSamplingConfig camera{{{{-0.30, 0.15}, {-0.60, 0.60}, {2.4, 2.8}}}, true, 0};
  HeatmapParams heatmap{};
  std::uint64_t seed = 7;
  std::size_t records_per_shard = 1000;
  HeatmapDtype dtype = HeatmapDtype::kF16;
  int workers = 1;
  int max_attempts = 100;
};

void validate(const GenConfig& cfg);

struct TrainingPair {
  std::uint64_t id = 0;
  HeatmapStack heatmaps;
  PoseParams theta;
  ShapeParams beta;
  CameraExtrinsics extrinsics;
  KeypointSet keypoints_2d;
};

/// Per-record generator seed: a mix of the dataset seed and the record id.
std::uint64_t record_seed(std::uint64_t seed, std::uint64_t id);

/// Draws (theta, beta, camera), poses, projects and renders one record.
/// All stored quantities are rounded to f32 (heatmaps to the configured dtype)
/// before use, so a record re-derived from its stored fields reproduces itself.
/// Throws ConfigError when `max_attempts` draws all fail the visibility check.
TrainingPair sample_pair(const BodyModel& model, const PoseBank& bank, const GenConfig& cfg, std::mt19937_64& rng,
                         std::uint64_t id = 0);

/// Record `id` of the dataset defined by `cfg`: sample_pair under record_seed(cfg.seed, id).
TrainingPair make_record(const BodyModel& model, const PoseBank& bank, const GenConfig& cfg, std::uint64_t id);

/// Keypoints re-derived from the stored parameters of a record.
KeypointSet derive_keypoints(const BodyModel& model, const TrainingPair& pair, const CameraIntrinsics& intr);

/// Rounds heatmap cells to the storage dtype.
void quantize(HeatmapStack& h, HeatmapDtype dtype);

/// Heatmap and camera parameters as they are stored (f32-rounded).
GenConfig storage_rounded(const GenConfig& cfg);

struct ShardInfo {
  std::string file;
  std::size_t count = 0;
  std::uint64_t first_id = 0;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::size_t count = 0;
  std::string config_hash;
  int visibility_threshold = 0;
  std::vector<ShardInfo> shards;
  std::string config_json;
};

/// Writes cfg.count records as shards of cfg.records_per_shard plus
/// manifest.json into `out_dir`. Output bytes depend only on (cfg, model, bank),
/// never on cfg.workers.
Manifest generate_dataset(const BodyModel& model, const PoseBank& bank, const GenConfig& cfg,
                          const std::filesystem::path& out_dir);

/// Calls `fn` for records [first, first + count) in id order, generating with
/// `workers` threads in blocks.
void for_each_record(const BodyModel& model, const PoseBank& bank, const GenConfig& cfg, std::uint64_t first,
                     std::size_t count, int workers, const std::function<void(TrainingPair&&)>& fn);

void save_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace pmesh
