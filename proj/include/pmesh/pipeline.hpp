#pragma once

#include <exception>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pmesh/config.hpp"
#include "pmesh/isocenter.hpp"
#include "pmesh/regressor.hpp"
#include "pmesh/shard.hpp"

namespace pmesh {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,   // bad config, options or names
  kExitFormat = 3,   // malformed or mismatched data files
  kExitNumeric = 4,  // NaN abort, failed gradient check
  kExitIo = 5,
  // 1: any other unexpected failure
};

int exit_code(const std::exception& e);

/// Output root: cfg.output_dir, placed under $PMESH_OUTPUT_ROOT when that is set
/// and the configured path is relative.
std::filesystem::path output_root(const PipelineConfig& cfg);

/// Overhead camera 2.6 m above the table surface; scanner frame = world frame
/// shifted so the table surface is at height 0 and the isocenter 0.12 m above it.
ScannerCalibration default_calibration();

struct Dataset {
  ShardHeader header;
  Manifest manifest;
  std::vector<TrainingPair> records;
};

/// Streams records [first, first + count) of a generated dataset in id order,
/// each re-validated against the model. count = 0 reads to the end. Returns the
/// common shard header; throws FormatError when shards disagree or records are missing.
ShardHeader for_each_dataset_record(const std::filesystem::path& dir, const BodyModel& model, std::size_t first,
                                    std::size_t count, const std::function<void(TrainingPair&&)>& fn,
                                    Manifest* manifest = nullptr);

/// All of the above in memory; a 64x64 f64 record takes about 400 KB.
Dataset load_dataset(const std::filesystem::path& dir, const BodyModel& model, std::size_t first = 0,
                     std::size_t count = 0);

/// Held-out validation size used by train and eval for a dataset of n records.
std::size_t holdout_count(const PipelineConfig& cfg, std::size_t n);

std::filesystem::path cmd_gen_data(const PipelineConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

struct TrainOutputs {
  std::filesystem::path checkpoint, loss_csv;
  std::vector<EpochStats> curve;
  bool flat = false;
};
TrainOutputs cmd_train(const PipelineConfig& cfg, const std::filesystem::path& data_dir,
                       const std::filesystem::path& checkpoint, std::ostream& log);

/// With `oracle`, ground-truth parameters stand in for the network predictions.
EvalReport cmd_eval(const PipelineConfig& cfg, const std::filesystem::path& checkpoint,
                    const std::filesystem::path& data_dir, const std::filesystem::path& csv, bool oracle,
                    std::ostream& log);

struct FusionReport {
  std::size_t train_frames = 0, test_frames = 0;
  double accuracy = 0.0;
  double mpjpe_first_px = 0.0, mpjpe_second_px = 0.0, mpjpe_fused_px = 0.0;
};
FusionReport cmd_fuse_sim(const PipelineConfig& cfg, const std::filesystem::path& report, std::ostream& log);

struct IsoOutputs {
  IsoResult result;
  /// Ground-truth center height of the region (mm) and the residual misalignment.
  double gt_center_height_mm = 0.0;
  double error_mm = 0.0;
};
/// Heatmaps of record `index` in `shard` -> regressor (or stored parameters with
/// `oracle`) -> mesh placed by the record camera and rested on the table -> thickness.
IsoOutputs cmd_isocenter(const PipelineConfig& cfg, const std::filesystem::path& checkpoint,
                         const std::filesystem::path& shard, std::size_t index, bool oracle, std::ostream& log);

/// Mesh of (theta, beta) seen by `extr`, rested on the table of `calib`.
PosedBody place_on_table(const BodyModel& model, const PoseParams& theta, const ShapeParams& beta,
                         const CameraExtrinsics& extr, const ScannerCalibration& calib);

GradCheckReport cmd_grad_check(const PipelineConfig& cfg, const std::filesystem::path& checkpoint, int samples,
                               std::ostream& log);

/// Entry point of the command-line tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pmesh
