#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pmesh/rotation.hpp"

namespace pmesh {

inline constexpr int kNumJoints = 24;
inline constexpr int kNumBetas = 10;
inline constexpr int kPoseDim = 3 * kNumJoints;
inline constexpr int kPoseBasisDim = 9 * (kNumJoints - 1);

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Named joints of the 24-joint skeleton.
enum Joint : int {
  kPelvis = 0, kLeftHip, kRightHip, kSpine1, kLeftKnee, kRightKnee, kSpine2,
  kLeftAnkle, kRightAnkle, kSpine3, kLeftFoot, kRightFoot, kNeck, kLeftCollar,
  kRightCollar, kHead, kLeftShoulder, kRightShoulder, kLeftElbow, kRightElbow,
  kLeftWrist, kRightWrist, kLeftHand, kRightHand
};

/// Parent table of the standard 24-joint skeleton; -1 marks the root.
const std::vector<int>& smpl_parents();

struct PoseParams {
  /// Joint-major axis-angle: theta.segment<3>(3k) rotates joint k. Radians.
  Eigen::Matrix<double, kPoseDim, 1> theta = Eigen::Matrix<double, kPoseDim, 1>::Zero();

  Eigen::Vector3d joint(int k) const { return theta.segment<3>(3 * k); }
  void set_joint(int k, const Eigen::Vector3d& aa) { theta.segment<3>(3 * k) = aa; }
};

struct ShapeParams {
  Eigen::Matrix<double, kNumBetas, 1> beta = Eigen::Matrix<double, kNumBetas, 1>::Zero();
};

/// Source of one evaluation keypoint: either a model joint or a mesh vertex.
struct KeypointSource {
  enum class Kind : std::uint8_t { kJoint, kVertex };
  Kind kind = Kind::kJoint;
  int index = 0;

  friend bool operator==(const KeypointSource&, const KeypointSource&) = default;
};

/// The 12 limb keypoints in evaluation order: R/L ankle, knee, hip, then wrists,
/// elbows and shoulders (R.Ak R.Kn R.H L.H L.Kn L.Ak R.Wr R.Eb R.Sh L.Sh L.Eb L.Wr).
std::vector<KeypointSource> default_keypoint_map();

/// Raw arrays of a body model. Matrix layouts:
///  - shape_dirs: 3V x B, row 3v+c holds the displacement of coordinate c of vertex v
///  - pose_dirs:  3V x 9(J-1), columns ordered joint-major over row-major (R_k - I)
struct BodyModelData {
  Eigen::MatrixX3d template_vertices;
  Eigen::MatrixX3i faces;
  Eigen::MatrixXd shape_dirs;
  Eigen::MatrixXd pose_dirs;
  Eigen::MatrixXd joint_regressor;  // J x V
  Eigen::MatrixXd skin_weights;     // V x J
  std::vector<int> kinematic_parents;
  std::vector<KeypointSource> keypoint_map;
  /// Optional precomputed vertex sets (abdomen, thorax, head, ...).
  std::map<std::string, std::vector<int>> regions;
};

/// Validated, immutable statistical body model.
class BodyModel {
 public:
  /// Throws InvariantError naming the offending field.
  explicit BodyModel(BodyModelData data);

  const BodyModelData& data() const noexcept { return data_; }

  int num_vertices() const noexcept { return static_cast<int>(data_.template_vertices.rows()); }
  int num_faces() const noexcept { return static_cast<int>(data_.faces.rows()); }
  int num_joints() const noexcept { return static_cast<int>(data_.kinematic_parents.size()); }
  int num_keypoints() const noexcept { return static_cast<int>(data_.keypoint_map.size()); }

  const Eigen::MatrixX3d& template_vertices() const noexcept { return data_.template_vertices; }
  const std::vector<int>& parents() const noexcept { return data_.kinematic_parents; }
  const Eigen::MatrixXd& skin_weights() const noexcept { return data_.skin_weights; }

  /// Rest joints at beta = 0 (J x 3) and their shape basis (3J x B).
  const Eigen::MatrixX3d& joint_template() const noexcept { return joint_template_; }
  const Eigen::MatrixXd& joint_shape_dirs() const noexcept { return joint_shape_dirs_; }
  bool has_pose_dirs() const noexcept { return has_pose_dirs_; }

 private:
  BodyModelData data_;
  Eigen::MatrixX3d joint_template_;
  Eigen::MatrixXd joint_shape_dirs_;
  bool has_pose_dirs_ = false;
};

/// Throws InvariantError if `data` breaks any model invariant.
void validate(const BodyModelData& data);

struct PosedBody {
  Eigen::MatrixX3d vertices;
  Eigen::MatrixX3d joints;
  Eigen::MatrixX3d keypoints_3d;
};

/// Per-joint kinematic state for one (theta, beta).
struct Kinematics {
  Eigen::MatrixX3d rest_joints;
  std::vector<Vec3<double>> axis_angles;
  std::vector<Mat3<double>> local_rotations;
  std::vector<Mat3<double>> global_rotations;
  /// Translation of the rest-relative transform: x' = R_global x + t.
  std::vector<Vec3<double>> translations;
  Eigen::MatrixX3d posed_joints;
};

Eigen::MatrixX3d rest_joints(const BodyModel& model, const ShapeParams& beta);
Kinematics forward_kinematics(const BodyModel& model, const PoseParams& theta, const ShapeParams& beta);

PosedBody pose(const BodyModel& model, const PoseParams& theta, const ShapeParams& beta);
Eigen::MatrixX3d t_pose_vertices(const BodyModel& model, const ShapeParams& beta);

/// Reverse-mode gradient of a scalar function of the posed joints.
/// `grad_joints` is dL/d(posed_joints), J x 3.
void posed_joints_backward(const BodyModel& model, const Kinematics& kin,
                           const Eigen::MatrixX3d& grad_joints,
                           Eigen::Ref<Eigen::VectorXd> grad_theta,
                           Eigen::Ref<Eigen::VectorXd> grad_beta);

/// Keypoint positions for a posed body.
Eigen::MatrixX3d select_keypoints(const BodyModel& model, const Eigen::MatrixX3d& vertices,
                                  const Eigen::MatrixX3d& joints);

/// Deterministic desk-scale humanoid with the 24-joint skeleton.
BodyModel make_mini_model(std::uint64_t seed);

BodyModel load_model(const std::filesystem::path& path);
void save_model(const BodyModel& model, const std::filesystem::path& path);

}  // namespace pmesh
