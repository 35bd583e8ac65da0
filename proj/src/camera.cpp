#include "pmesh/camera.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "pmesh/error.hpp"

namespace pmesh {

void validate(const CameraIntrinsics& intr) {
  if (!(intr.fx > 0.0) || !(intr.fy > 0.0)) throw InvariantError("intrinsics.focal", "must be positive");
  if (intr.width <= 0 || intr.height <= 0) throw InvariantError("intrinsics.image_size", "must be positive");
  if (!(intr.cx >= 0.0 && intr.cx <= intr.width && intr.cy >= 0.0 && intr.cy <= intr.height))
    throw InvariantError("intrinsics.principal", "outside the image");
}

void validate(const CameraExtrinsics& extr) {
  const Eigen::Matrix3d& r = extr.rotation;
  if (!r.allFinite() || !extr.translation.allFinite()) throw InvariantError("extrinsics", "non-finite value");
  if (((r.transpose() * r) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      std::abs(r.determinant() - 1.0) > 1e-9)
    throw InvariantError("extrinsics.rotation", "not a proper rotation");
}

void validate(const CameraSamplingConfig& cfg) {
  static const char* names[] = {"camera.translation.x", "camera.translation.y", "camera.translation.z"};
  for (int a = 0; a < 3; ++a) {
    const auto& r = cfg.translation[static_cast<std::size_t>(a)];
    if (!std::isfinite(r.min) || !std::isfinite(r.max)) throw ConfigError(std::string(names[a]) + ": non-finite");
    if (r.min > r.max) throw ConfigError(std::string(names[a]) + ": min > max");
  }
}

Eigen::Matrix3d overhead_rotation() {
  Eigen::Matrix3d r;
  r << 0, 0, 1,
      -1, 0, 0,
       0, -1, 0;
  return r;
}

Projection project(const Eigen::MatrixX3d& points, const CameraIntrinsics& intr, const CameraExtrinsics& extr) {
  const Eigen::Index n = points.rows();
  Projection out;
  out.pixels.setZero(n, 2);
  out.visible.setConstant(n, false);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d c = extr.rotation * points.row(i).transpose() + extr.translation;
    if (!(c.z() > 1e-6)) continue;
    const double u = intr.fx * c.x() / c.z() + intr.cx;
    const double v = intr.fy * c.y() / c.z() + intr.cy;
    out.pixels(i, 0) = u;
    out.pixels(i, 1) = v;
    out.visible(i) = u >= 0.0 && u < intr.width && v >= 0.0 && v < intr.height;
  }
  return out;
}

CameraExtrinsics sample_camera(const CameraSamplingConfig& cfg, std::mt19937_64& rng) {
  validate(cfg);
  CameraExtrinsics e;
  e.rotation = overhead_rotation();
  for (int a = 0; a < 3; ++a) {
    const auto& r = cfg.translation[static_cast<std::size_t>(a)];
    e.translation(a) = r.min == r.max ? r.min : std::uniform_real_distribution<double>(r.min, r.max)(rng);
  }
  if (!cfg.fixed_rotation) {
    const double roll = std::uniform_real_distribution<double>(-std::numbers::pi, std::numbers::pi)(rng);
    e.rotation = Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitZ()).toRotationMatrix() * e.rotation;
  }
  return e;
}

}  // namespace pmesh
