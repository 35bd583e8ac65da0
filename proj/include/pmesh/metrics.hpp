#pragma once

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pmesh/body_model.hpp"
#include "pmesh/heatmap.hpp"

namespace pmesh {

struct MetricReport {
  std::string name;
  /// Per joint (or per vertex for PVE-T-SC) mean over samples.
  Eigen::VectorXd per_joint;
  /// Samples that contributed to each entry; entries with zero count are left out of `mean`.
  Eigen::VectorXi per_joint_count;
  double mean = 0.0;
  std::string units;
  std::size_t count = 0;  // frames
};

/// x -> scale * rotation * x + translation, applied to row points.
struct SimilarityTransform {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::MatrixX3d apply(const Eigen::MatrixX3d& points) const;
};

/// Mean 2D distance over jointly visible keypoints, in px. With `cm_per_px`
/// (one entry per frame) the distances are converted and reported in cm.
MetricReport mpjpe_2d(std::span<const KeypointSet> pred, std::span<const KeypointSet> gt,
                      std::span<const double> cm_per_px = {});
MetricReport mpjpe_2d(const KeypointSet& pred, const KeypointSet& gt);

/// Fraction of ground-truth-visible joints whose error is <= alpha * norm_length
/// (closed threshold). A visible ground-truth joint with no prediction counts as a miss.
MetricReport pck(std::span<const KeypointSet> pred, std::span<const KeypointSet> gt, double alpha,
                 std::span<const double> norm_length);

/// Keypoint indices whose midpoints define the torso diameter.
struct TorsoSpec {
  int right_hip = 2, left_hip = 3;
  int right_shoulder = 8, left_shoulder = 9;
};

/// Distance between mid-shoulder and mid-hip of a ground-truth set, px.
double torso_diameter(const KeypointSet& gt, const TorsoSpec& spec = {});

/// Similarity transform minimizing sum ||s R pred_i + t - gt_i||^2.
/// Throws DimensionError for N < 3 or a configuration of rank < 2.
SimilarityTransform procrustes_align(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt);

/// 3D joint errors in mm (inputs in meters).
MetricReport mpjpe_3d(std::span<const Eigen::MatrixX3d> pred, std::span<const Eigen::MatrixX3d> gt);
MetricReport pa_mpjpe(std::span<const Eigen::MatrixX3d> pred, std::span<const Eigen::MatrixX3d> gt);

/// s* = <P, G> / <P, P> on centered vertex sets.
double optimal_scale(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt);

/// Per-vertex error after centering and scale correction, mm.
MetricReport pve_t_sc(std::span<const Eigen::MatrixX3d> pred_vertices, std::span<const Eigen::MatrixX3d> gt_vertices);
MetricReport pve_t_sc(std::span<const ShapeParams> beta_pred, std::span<const ShapeParams> beta_gt,
                      const BodyModel& model);

void write_csv_header(std::ostream& out);
void write_csv(std::ostream& out, const std::string& dataset, const std::vector<MetricReport>& reports);

}  // namespace pmesh
