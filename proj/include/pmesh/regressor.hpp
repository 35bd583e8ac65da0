#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pmesh/body_model.hpp"
#include "pmesh/heatmap.hpp"
#include "pmesh/mlp.hpp"
#include "pmesh/synthgen.hpp"

namespace pmesh {

inline constexpr int kRegressorOutputs = kPoseDim + kNumBetas;

enum class InputKind { kHeatmap, kCoords };

/// What the network reads. Heatmap inputs are average-pooled to pooled x pooled
/// per joint; coordinate inputs are soft-argmax positions scaled to [-1, 1].
struct InputSpec {
  InputKind kind = InputKind::kHeatmap;
  int joints = 12;
  int pooled = 16;
  HeatmapParams heatmap{};
  int image_width = 256, image_height = 256;
  double temperature = 0.1;

  int size() const { return kind == InputKind::kHeatmap ? joints * pooled * pooled : 2 * joints; }
  friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

void validate(const InputSpec& spec);

struct RegressorNet {
  InputSpec input;
  Mlp<float> mlp;
  std::string config_hash;
};

/// Default: input -> 512 -> 256 -> 82, softplus between layers.
RegressorNet make_regressor(const InputSpec& input, const std::vector<int>& hidden, std::uint64_t seed,
                            bool zero_last = false);

Eigen::VectorXf regressor_input(const HeatmapStack& h, const InputSpec& spec);

/// Same as regressor_input(render(kps)) but evaluated through the separable
/// Gaussian, without materializing full-resolution grids.
Eigen::VectorXf regressor_input(const KeypointSet& kps, const InputSpec& spec);

struct Prediction {
  PoseParams theta;
  ShapeParams beta;
};

Prediction forward(const RegressorNet& net, const HeatmapStack& h);
PosedBody infer_mesh(const RegressorNet& net, const HeatmapStack& h, const BodyModel& model);

struct LossWeights {
  double param = 1.0;
  double joint = 0.0;
};

struct RegressionTarget {
  PoseParams theta;
  ShapeParams beta;
  Eigen::MatrixX3d joints;  // posed joints of (theta, beta)
};

RegressionTarget make_target(const BodyModel& model, const PoseParams& theta, const ShapeParams& beta);

/// w_param (|theta^ - theta|^2 + |beta^ - beta|^2) + w_joint * mean_k |P^_k - P_k|^2.
/// `grad` receives dL/d(prediction) for the 82 outputs.
double regression_loss(const Eigen::Ref<const Eigen::VectorXd>& pred, const RegressionTarget& truth,
                       const BodyModel& model, const LossWeights& w, Eigen::VectorXd* grad = nullptr);

enum class Optimizer { kSgd, kMomentum, kAdam };

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 20;
  std::uint64_t seed = 1;
  LossWeights loss{1.0, 20.0};
  Optimizer optimizer = Optimizer::kAdam;
  double momentum = 0.9;
  /// Std (px) of per-epoch keypoint jitter before re-rendering inputs; 0 uses stored heatmaps.
  double jitter_px = 1.0;
};

void validate(const TrainConfig& cfg);

struct RegressionSample {
  std::uint64_t id = 0;
  Eigen::VectorXf input;
  KeypointSet keypoints;
  RegressionTarget target;
};

RegressionSample make_sample(const TrainingPair& pair, const BodyModel& model, const InputSpec& spec);

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double val_mpjpe_mm = -1.0;
  double val_pa_mpjpe_mm = -1.0;
};

/// Mini-batch training. Deterministic for a fixed seed. Throws NumericError
/// naming epoch, batch and record on a non-finite loss.
std::vector<EpochStats> train(RegressorNet& net, std::span<const RegressionSample> data, const TrainConfig& cfg,
                              const BodyModel& model, std::span<const RegressionSample> val = {},
                              const std::function<void(const EpochStats&)>& on_epoch = {});

struct EvalReport {
  double mpjpe_3d_mm = 0.0;
  double pa_mpjpe_mm = 0.0;
  double pve_t_sc_mm = 0.0;
  double mpjpe_2d_px = 0.0;
  double pck = 0.0;
  std::size_t count = 0;
};

/// Predictions scored against targets. 3D metrics use all model joints with
/// both skeletons translated to a common pelvis; 2D metrics project the
/// pelvis-aligned predicted keypoints with the ground-truth camera.
struct EvalInput {
  Prediction prediction;
  PoseParams theta;
  ShapeParams beta;
  CameraExtrinsics extrinsics;
  KeypointSet keypoints;
};
EvalReport evaluate(std::span<const EvalInput> items, const BodyModel& model, const CameraIntrinsics& intr,
                    double pck_alpha = 0.3);

/// Pelvis-aligned 3D MPJPE and PA-MPJPE of predicted parameters, mm.
std::pair<double, double> joint_errors(const RegressorNet& net, std::span<const RegressionSample> data,
                                       const BodyModel& model);
std::pair<double, double> joint_errors(std::span<const Prediction> pred, std::span<const RegressionSample> data,
                                       const BodyModel& model);

/// Predictions of the network for a batch of samples.
std::vector<Prediction> predict(const RegressorNet& net, std::span<const RegressionSample> data);

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Parameters probed per weight matrix and per bias vector (all if fewer).
  int samples_per_tensor = 40;
  std::uint64_t seed = 0;
  /// Test hook applied to the analytic gradients before comparison.
  std::function<void(std::vector<DenseLayer<double>>&)> tamper;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<double> layer_max_rel_error;
  std::size_t checked = 0;
  bool passed = false;
};

/// Central differences of the full loss (network + body model) on f64.
/// Relative errors use the floor 1e-6 * max(1, |L|): central differences at
/// step h carry roundoff of about eps * |L| / h, so smaller gradients are noise.
GradCheckReport grad_check(const Mlp<double>& net, const Eigen::VectorXd& input, const RegressionTarget& truth,
                           const BodyModel& model, const LossWeights& w, const GradCheckOptions& opt = {});

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

void save_checkpoint(const RegressorNet& net, const std::filesystem::path& path);
RegressorNet load_checkpoint(const std::filesystem::path& path);

void write_loss_csv(const std::vector<EpochStats>& curve, const std::filesystem::path& path);

}  // namespace pmesh
