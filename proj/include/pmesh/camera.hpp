#pragma once

#include <array>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace pmesh {

struct CameraIntrinsics {
  double fx = 500.0, fy = 500.0;
  double cx = 320.0, cy = 240.0;
  int width = 640, height = 480;
};

/// World -> camera: x_cam = rotation * x_world + translation (meters).
struct CameraExtrinsics {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

struct AxisRange {
  double min = 0.0, max = 0.0;
};

struct CameraSamplingConfig {
  std::array<AxisRange, 3> translation{{{-0.20, 0.05}, {-0.15, 0.15}, {2.2, 2.6}}};
  /// When false, a uniform roll about the optical axis is added to the overhead rotation.
  bool fixed_rotation = true;
  std::uint64_t seed = 0;
};

void validate(const CameraIntrinsics& intr);
void validate(const CameraExtrinsics& extr);
void validate(const CameraSamplingConfig& cfg);

/// Canonical ceiling-mounted view of a patient lying along world z with the
/// table normal along world +y: the optical axis looks down world -y and image
/// columns run along the table.
Eigen::Matrix3d overhead_rotation();

struct Projection {
  Eigen::Matrix<double, Eigen::Dynamic, 2> pixels;
  Eigen::Array<bool, Eigen::Dynamic, 1> visible;
};

/// Pinhole projection. Points at depth <= 1e-6 m or outside the image are flagged
/// invisible; points behind the camera get pixel coordinates of zero.
Projection project(const Eigen::MatrixX3d& points, const CameraIntrinsics& intr, const CameraExtrinsics& extr);

CameraExtrinsics sample_camera(const CameraSamplingConfig& cfg, std::mt19937_64& rng);

}  // namespace pmesh
