#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "pmesh/heatmap.hpp"

namespace pmesh {

enum class Modality { kFirst, kSecond };

struct BranchPrediction {
  HeatmapStack heatmaps;
  Eigen::VectorXd feature;
  Modality modality = Modality::kFirst;
};

/// 0 when the first branch's error is strictly larger, otherwise 1 (ties give 1).
int fusion_label(double err_first, double err_second);

/// score * h_first + (1 - score) * h_second, per cell.
HeatmapStack fuse(double score, const HeatmapStack& h_first, const HeatmapStack& h_second);

inline constexpr int kStatsPerJoint = 3;

/// Per joint: peak value, entropy of the normalized grid divided by log(H*W),
/// and peak sharpness max / sum. Joint-major, 3 values per joint.
Eigen::VectorXd heatmap_features(const HeatmapStack& h);

BranchPrediction make_branch(HeatmapStack h, Modality m);

/// Two-branch reliability classifier.
///  x_b = (f_b - mean) / scale, viewed as G rows of d = 3 joint statistics;
///  intra: alpha_b = softmax_g(x_b[g] . u_b), p_b = sum_g alpha_b[g] x_b[g];
///  inter: gate = sigmoid(p_1' M p_2 + c);
///  z = [x_1, x_2, p_1, p_2, gate * (p_1 - p_2)] -> tanh hidden -> sigmoid.
struct FusionClassifier {
  int groups = 0;
  Eigen::VectorXd feature_mean, feature_scale;
  Eigen::VectorXd attn_first, attn_second;
  Eigen::MatrixXd bilinear;
  double gate_bias = 0.0;
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::VectorXd w2;
  double b2 = 0.0;

  int feature_dim() const { return groups * kStatsPerJoint; }
  int input_dim() const { return 2 * feature_dim() + 3 * kStatsPerJoint; }
};

/// All-zero parameters with identity standardization.
FusionClassifier make_classifier(int groups, int hidden);

/// Sigmoid reliability score of the first branch, in (0, 1).
double classify(const FusionClassifier& clf, const Eigen::VectorXd& f_first, const Eigen::VectorXd& f_second);

struct FusionExample {
  Eigen::VectorXd first, second;
  int label = 0;
};

struct FusionTrainConfig {
  int epochs = 60;
  int batch_size = 32;
  int hidden = 16;
  double learning_rate = 3e-3;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;
};

/// Trainable parameters flattened: attention vectors, bilinear gate, gate bias,
/// hidden layer, output layer. Standardization is not trainable.
Eigen::VectorXd pack_parameters(const FusionClassifier& clf);
void unpack_parameters(FusionClassifier& clf, const Eigen::VectorXd& params);

/// Binary cross-entropy of one example; `grad` (optional) receives its gradient
/// in the `pack_parameters` layout.
double example_loss(const FusionClassifier& clf, const FusionExample& ex, Eigen::VectorXd* grad);

/// Mini-batch Adam on the mean cross-entropy. Throws ConfigError when only one
/// label is present. `loss_curve` receives the mean loss of every epoch.
FusionClassifier train_classifier(std::span<const FusionExample> data, const FusionTrainConfig& cfg,
                                  std::vector<double>* loss_curve = nullptr);

double accuracy(const FusionClassifier& clf, std::span<const FusionExample> data);

void save_classifier(const FusionClassifier& clf, const std::filesystem::path& path);
FusionClassifier load_classifier(const std::filesystem::path& path);

/// Simulated degradation of one branch's heatmaps.
struct BranchNoise {
  double jitter_px = 1.0;
  double amplitude_min = 0.8, amplitude_max = 1.0;
  double sigma_scale = 1.0;
  /// Spurious secondary peak relative to the main amplitude; 0 disables it.
  double distractor = 0.0;
};

struct FusionSimConfig {
  HeatmapParams heatmap{};
  BranchNoise clean{};
  BranchNoise corrupted{8.0, 0.3, 0.7, 1.5, 0.6};
};

struct SimFrame {
  HeatmapStack first, second;
  bool first_corrupted = false;
  int label = 1;
};

HeatmapStack simulate_branch(const KeypointSet& gt, const BranchNoise& noise, const HeatmapParams& params,
                             std::mt19937_64& rng);

/// Renders both branches for one frame and labels it by argmax-decoded MPJPE.
SimFrame simulate_frame(const KeypointSet& gt, bool corrupt_first, const FusionSimConfig& cfg, std::mt19937_64& rng);

}  // namespace pmesh
