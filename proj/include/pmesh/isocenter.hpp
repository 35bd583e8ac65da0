#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "pmesh/body_model.hpp"

namespace pmesh {

/// Camera-to-scanner calibration and table geometry, all in meters.
struct ScannerCalibration {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // camera -> scanner
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Vector3d table_normal = Eigen::Vector3d::UnitY();   // scanner frame, unit
  Eigen::Vector3d isocenter = Eigen::Vector3d::Zero();       // scanner frame
  double table_height = 0.0;                                 // along table_normal
  /// Table travel limits on the returned displacement (meters).
  std::optional<double> min_displacement;
  std::optional<double> max_displacement;

  /// Height of a scanner-frame point along the table normal.
  double height(const Eigen::Vector3d& scanner_point) const { return table_normal.dot(scanner_point); }
  double isocenter_height() const { return height(isocenter); }
};

void validate(const ScannerCalibration& calib);
ScannerCalibration load_calibration(const std::filesystem::path& path);
void save_calibration(const ScannerCalibration& calib, const std::filesystem::path& path);

struct BodyRegion {
  std::string name;
  std::vector<int> vertices;
};

struct IsoResult {
  std::string region;
  double thickness_mm = 0.0;
  double center_height_mm = 0.0;
  double isocenter_height_mm = 0.0;
  /// Signed table move along the normal that brings the region center to the isocenter.
  double displacement_mm = 0.0;
  bool clamped = false;
};

/// Axial-band regions on the template: abdomen (hips to lower ribs), thorax
/// (lower ribs to shoulders), head (above the neck). Limbs are excluded.
std::map<std::string, std::vector<int>> axial_band_regions(const BodyModelData& data);

/// Stored region of the model, else the axial-band rule. Throws ConfigError
/// listing the valid names on an unknown region.
BodyRegion region_mask(const BodyModel& model, std::string_view name);

/// Vertices mapped into the scanner frame.
Eigen::MatrixX3d to_scanner(const Eigen::MatrixX3d& camera_points, const ScannerCalibration& calib);

IsoResult thickness(const PosedBody& camera_body, const BodyRegion& region, const ScannerCalibration& calib);

/// Residual misalignment |true center after the table move - isocenter|, in mm.
double iso_error(const IsoResult& result, double gt_center_height_mm);

/// Rigidly moves a camera-frame body by `meters` along the scanner table normal.
PosedBody shift_along_table(const PosedBody& camera_body, const ScannerCalibration& calib, double meters);

/// Moves a camera-frame body along the table normal until its lowest vertex lies on the table surface.
PosedBody rest_on_table(const PosedBody& camera_body, const ScannerCalibration& calib);

/// Applies a rigid transform x -> R x + t to every point set of a body.
PosedBody transform_body(const PosedBody& body, const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation);

}  // namespace pmesh
