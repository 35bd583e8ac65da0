#include "pmesh/isocenter.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "pmesh/error.hpp"

namespace pmesh {

using nlohmann::json;

void validate(const ScannerCalibration& c) {
  if (!c.rotation.allFinite() || !c.translation.allFinite() || !c.isocenter.allFinite() ||
      !c.table_normal.allFinite() || !std::isfinite(c.table_height))
    throw InvariantError("calibration", "non-finite value");
  if (!(c.rotation.transpose() * c.rotation).isApprox(Eigen::Matrix3d::Identity(), 1e-9) ||
      std::abs(c.rotation.determinant() - 1.0) > 1e-9)
    throw InvariantError("rotation", "not a proper rotation");
  if (std::abs(c.table_normal.norm() - 1.0) > 1e-9) throw InvariantError("table_normal", "not unit length");
  if (c.min_displacement && c.max_displacement && *c.min_displacement > *c.max_displacement)
    throw InvariantError("displacement_limits", "min exceeds max");
}

namespace {

template <int N>
Eigen::Matrix<double, N, 1> read_vec(const json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(std::string("calibration: missing key '") + key + "'");
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != static_cast<std::size_t>(N))
    throw FormatError(std::string("calibration: '") + key + "' must have " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    if (!a[static_cast<std::size_t>(i)].is_number())
      throw FormatError(std::string("calibration: '") + key + "' has a non-numeric entry");
    v(i) = a[static_cast<std::size_t>(i)].get<double>();
  }
  return v;
}

}  // namespace

ScannerCalibration load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calibration file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("calibration " + path.string() + ": " + e.what());
  }
  ScannerCalibration c;
  const auto r = read_vec<9>(j, "rotation");
  c.rotation = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(r.data());
  c.translation = read_vec<3>(j, "translation");
  c.table_normal = read_vec<3>(j, "table_normal");
  c.isocenter = read_vec<3>(j, "isocenter");
  if (!j.contains("table_height") || !j["table_height"].is_number())
    throw FormatError("calibration: missing numeric 'table_height'");
  c.table_height = j["table_height"].get<double>();
  if (j.contains("min_displacement")) c.min_displacement = j["min_displacement"].get<double>();
  if (j.contains("max_displacement")) c.max_displacement = j["max_displacement"].get<double>();
  validate(c);
  return c;
}

void save_calibration(const ScannerCalibration& c, const std::filesystem::path& path) {
  const Eigen::Matrix<double, 3, 3, Eigen::RowMajor> r = c.rotation;
  json j;
  j["rotation"] = std::vector<double>(r.data(), r.data() + 9);
  j["translation"] = {c.translation.x(), c.translation.y(), c.translation.z()};
  j["table_normal"] = {c.table_normal.x(), c.table_normal.y(), c.table_normal.z()};
  j["isocenter"] = {c.isocenter.x(), c.isocenter.y(), c.isocenter.z()};
  j["table_height"] = c.table_height;
  if (c.min_displacement) j["min_displacement"] = *c.min_displacement;
  if (c.max_displacement) j["max_displacement"] = *c.max_displacement;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write calibration file " + path.string());
  out << j.dump(2) << '\n';
}

std::map<std::string, std::vector<int>> axial_band_regions(const BodyModelData& d) {
  const Eigen::MatrixX3d joints = d.joint_regressor * d.template_vertices;
  const double hip_y = 0.5 * (joints(kLeftHip, 1) + joints(kRightHip, 1));
  const double ribs_y = joints(kSpine2, 1);
  const double shoulder_y = 0.5 * (joints(kLeftShoulder, 1) + joints(kRightShoulder, 1));
  const double neck_y = joints(kNeck, 1);

  const int trunk[] = {kPelvis, kSpine1, kSpine2, kSpine3, kLeftCollar, kRightCollar};
  const int head[] = {kSpine3, kNeck, kHead};
  std::map<std::string, std::vector<int>> out;
  for (Eigen::Index v = 0; v < d.template_vertices.rows(); ++v) {
    double w_trunk = 0.0, w_head = 0.0;
    for (int j : trunk) w_trunk += d.skin_weights(v, j);
    for (int j : head) w_head += d.skin_weights(v, j);
    const double y = d.template_vertices(v, 1);
    const int idx = static_cast<int>(v);
    if (w_trunk >= 1.0 - 1e-9) {
      if (y >= hip_y && y < ribs_y) out["abdomen"].push_back(idx);
      else if (y >= ribs_y && y < shoulder_y) out["thorax"].push_back(idx);
    } else if (w_head >= 1.0 - 1e-9 && y >= neck_y) {
      out["head"].push_back(idx);
    }
  }
  return out;
}

BodyRegion region_mask(const BodyModel& model, std::string_view name) {
  auto regions = model.data().regions;
  if (regions.empty()) regions = axial_band_regions(model.data());
  const auto it = regions.find(std::string(name));
  if (it == regions.end()) {
    std::string valid;
    for (const auto& [k, _] : regions) valid += (valid.empty() ? "" : ", ") + k;
    throw ConfigError("unknown region '" + std::string(name) + "' (valid: " + valid + ")");
  }
  return {it->first, it->second};
}

Eigen::MatrixX3d to_scanner(const Eigen::MatrixX3d& pts, const ScannerCalibration& calib) {
  return (pts * calib.rotation.transpose()).rowwise() + calib.translation.transpose();
}

IsoResult thickness(const PosedBody& body, const BodyRegion& region, const ScannerCalibration& calib) {
  if (region.vertices.empty()) throw ConfigError("region '" + region.name + "' is empty");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int v : region.vertices) {
    if (v < 0 || v >= body.vertices.rows()) throw DimensionError("region vertex outside body");
    const Eigen::Vector3d p = calib.rotation * body.vertices.row(v).transpose() + calib.translation;
    const double h = calib.height(p);
    lo = std::min(lo, h);
    hi = std::max(hi, h);
  }
  IsoResult r;
  r.region = region.name;
  r.thickness_mm = (hi - lo) * 1e3;
  r.center_height_mm = 0.5 * (hi + lo) * 1e3;
  r.isocenter_height_mm = calib.isocenter_height() * 1e3;
  double disp = calib.isocenter_height() - 0.5 * (hi + lo);
  if (calib.min_displacement && disp < *calib.min_displacement) {
    disp = *calib.min_displacement;
    r.clamped = true;
  }
  if (calib.max_displacement && disp > *calib.max_displacement) {
    disp = *calib.max_displacement;
    r.clamped = true;
  }
  r.displacement_mm = disp * 1e3;
  return r;
}

double iso_error(const IsoResult& result, double gt_center_height_mm) {
  return std::abs(gt_center_height_mm + result.displacement_mm - result.isocenter_height_mm);
}

PosedBody transform_body(const PosedBody& body, const Eigen::Matrix3d& rotation, const Eigen::Vector3d& translation) {
  auto apply = [&](const Eigen::MatrixX3d& m) -> Eigen::MatrixX3d {
    return (m * rotation.transpose()).rowwise() + translation.transpose();
  };
  return {apply(body.vertices), apply(body.joints), apply(body.keypoints_3d)};
}

PosedBody shift_along_table(const PosedBody& body, const ScannerCalibration& calib, double meters) {
  const Eigen::Vector3d d = calib.rotation.transpose() * (meters * calib.table_normal);
  return transform_body(body, Eigen::Matrix3d::Identity(), d);
}

PosedBody rest_on_table(const PosedBody& body, const ScannerCalibration& calib) {
  const Eigen::MatrixX3d s = to_scanner(body.vertices, calib);
  const double lowest = (s * calib.table_normal).minCoeff();
  return shift_along_table(body, calib, calib.table_height - lowest);
}

}  // namespace pmesh
