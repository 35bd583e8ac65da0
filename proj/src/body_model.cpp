#include "pmesh/body_model.hpp"

#include <cmath>
#include <string>

#include "pmesh/error.hpp"

namespace pmesh {

const std::vector<int>& smpl_parents() {
  static const std::vector<int> parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8,
                                           9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
  return parents;
}

std::vector<KeypointSource> default_keypoint_map() {
  using K = KeypointSource::Kind;
  const int order[] = {kRightAnkle, kRightKnee, kRightHip, kLeftHip, kLeftKnee, kLeftAnkle,
                       kRightWrist, kRightElbow, kRightShoulder, kLeftShoulder, kLeftElbow,
                       kLeftWrist};
  std::vector<KeypointSource> map;
  for (int j : order) map.push_back({K::kJoint, j});
  return map;
}

namespace {

void check_partition(const Eigen::MatrixXd& m, const char* field) {
  if (!m.allFinite()) throw InvariantError(field, "non-finite entry");
  if ((m.array() < 0.0).any()) throw InvariantError(field, "negative weight");
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double s = m.row(r).sum();
    if (std::abs(s - 1.0) > 1e-6)
      throw InvariantError(field, "row " + std::to_string(r) + " sums to " + std::to_string(s));
  }
}

}  // namespace

void validate(const BodyModelData& d) {
  const Eigen::Index v = d.template_vertices.rows();
  const auto j = static_cast<Eigen::Index>(d.kinematic_parents.size());
  if (v == 0) throw InvariantError("template_vertices", "empty mesh");
  if (!d.template_vertices.allFinite()) throw InvariantError("template_vertices", "non-finite entry");
  if (j != kNumJoints)
    throw InvariantError("kinematic_parents", "expected " + std::to_string(kNumJoints) + " joints");
  if (d.kinematic_parents[0] != -1) throw InvariantError("kinematic_parents", "root parent must be -1");
  for (Eigen::Index k = 1; k < j; ++k) {
    const int p = d.kinematic_parents[static_cast<std::size_t>(k)];
    if (p < 0 || p >= k)
      throw InvariantError("kinematic_parents", "joint " + std::to_string(k) + " has parent " +
                                                    std::to_string(p) + " (must precede child)");
  }
  if (d.faces.size() > 0 && ((d.faces.array() < 0).any() || (d.faces.array() >= v).any()))
    throw InvariantError("faces", "vertex index out of range");
  if (d.shape_dirs.rows() != 3 * v || d.shape_dirs.cols() != kNumBetas)
    throw InvariantError("shape_dirs", "expected 3V x 10");
  if (!d.shape_dirs.allFinite()) throw InvariantError("shape_dirs", "non-finite entry");
  if (d.pose_dirs.rows() != 3 * v || d.pose_dirs.cols() != 9 * (j - 1))
    throw InvariantError("pose_dirs", "expected 3V x 9(J-1)");
  if (!d.pose_dirs.allFinite()) throw InvariantError("pose_dirs", "non-finite entry");
  if (d.joint_regressor.rows() != j || d.joint_regressor.cols() != v)
    throw InvariantError("joint_regressor", "expected J x V");
  check_partition(d.joint_regressor, "joint_regressor");
  if (d.skin_weights.rows() != v || d.skin_weights.cols() != j)
    throw InvariantError("skin_weights", "expected V x J");
  check_partition(d.skin_weights, "skin_weights");
  if (d.keypoint_map.empty()) throw InvariantError("keypoint_map", "empty");
  for (const auto& kp : d.keypoint_map) {
    const Eigen::Index bound = kp.kind == KeypointSource::Kind::kJoint ? j : v;
    if (kp.index < 0 || kp.index >= bound)
      throw InvariantError("keypoint_map", "index " + std::to_string(kp.index) + " out of range");
  }
  for (const auto& [name, idx] : d.regions) {
    if (idx.empty()) throw InvariantError("regions", name + " is empty");
    for (int i : idx)
      if (i < 0 || i >= v) throw InvariantError("regions", name + " has out-of-range vertex");
  }
}

BodyModel::BodyModel(BodyModelData data) : data_(std::move(data)) {
  validate(data_);
  const int j = num_joints();
  joint_template_ = data_.joint_regressor * data_.template_vertices;
  joint_shape_dirs_.resize(3 * j, kNumBetas);
  for (int b = 0; b < kNumBetas; ++b) {
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>> dir(
        data_.shape_dirs.col(b).data(), num_vertices(), 3);
    const Eigen::MatrixX3d jd = data_.joint_regressor * dir;
    for (int k = 0; k < j; ++k) joint_shape_dirs_.block<3, 1>(3 * k, b) = jd.row(k).transpose();
  }
  has_pose_dirs_ = !data_.pose_dirs.isZero(0.0);
}

namespace {

Eigen::MatrixX3d shaped_vertices(const BodyModel& model, const ShapeParams& beta) {
  const Eigen::VectorXd offs = model.data().shape_dirs * beta.beta;
  return model.template_vertices() +
         Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>(
             offs.data(), model.num_vertices(), 3);
}

void check_dims(const BodyModel& model) {
  if (model.num_joints() != kNumJoints) throw DimensionError("model joint count does not match pose");
}

}  // namespace

Eigen::MatrixX3d rest_joints(const BodyModel& model, const ShapeParams& beta) {
  const Eigen::VectorXd offs = model.joint_shape_dirs() * beta.beta;
  return model.joint_template() +
         Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>(
             offs.data(), model.num_joints(), 3);
}

Kinematics forward_kinematics(const BodyModel& model, const PoseParams& theta,
                              const ShapeParams& beta) {
  check_dims(model);
  const int nj = model.num_joints();
  const auto& parents = model.parents();
  Kinematics kin;
  kin.rest_joints = rest_joints(model, beta);
  kin.axis_angles.resize(nj);
  kin.local_rotations.resize(nj);
  kin.global_rotations.resize(nj);
  kin.translations.resize(nj);
  kin.posed_joints.resize(nj, 3);
  // A_k = A_parent * [R_k | (I - R_k) J_k]; theta = 0 gives exact identities.
  for (int k = 0; k < nj; ++k) {
    const Mat3<double> r = rodrigues<double>(theta.joint(k));
    const Vec3<double> jk = kin.rest_joints.row(k).transpose();
    const Vec3<double> local_t = (Mat3<double>::Identity() - r) * jk;
    kin.axis_angles[k] = theta.joint(k);
    kin.local_rotations[k] = r;
    if (k == 0) {
      kin.global_rotations[k] = r;
      kin.translations[k] = local_t;
    } else {
      const int p = parents[k];
      kin.global_rotations[k] = kin.global_rotations[p] * r;
      kin.translations[k] = kin.global_rotations[p] * local_t + kin.translations[p];
    }
    kin.posed_joints.row(k) = (kin.global_rotations[k] * jk + kin.translations[k]).transpose();
  }
  return kin;
}

Eigen::MatrixX3d select_keypoints(const BodyModel& model, const Eigen::MatrixX3d& vertices,
                                  const Eigen::MatrixX3d& joints) {
  const auto& map = model.data().keypoint_map;
  Eigen::MatrixX3d out(static_cast<Eigen::Index>(map.size()), 3);
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto& src = map[i];
    out.row(static_cast<Eigen::Index>(i)) =
        src.kind == KeypointSource::Kind::kJoint ? joints.row(src.index) : vertices.row(src.index);
  }
  return out;
}

PosedBody pose(const BodyModel& model, const PoseParams& theta, const ShapeParams& beta) {
  const Kinematics kin = forward_kinematics(model, theta, beta);
  const int nv = model.num_vertices();
  const int nj = model.num_joints();

  Eigen::MatrixX3d rest = shaped_vertices(model, beta);
  if (model.has_pose_dirs()) {
    Eigen::VectorXd feat(9 * (nj - 1));
    for (int k = 1; k < nj; ++k) {
      const Eigen::Matrix<double, 3, 3, Eigen::RowMajor> d =
          kin.local_rotations[k] - Mat3<double>::Identity();
      feat.segment<9>(9 * (k - 1)) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(d.data());
    }
    const Eigen::VectorXd offs = model.data().pose_dirs * feat;
    rest += Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>>(offs.data(), nv, 3);
  }

  // Blend deviations from identity so that rest-pose transforms reproduce the input exactly.
  Eigen::Matrix<double, Eigen::Dynamic, 12> dev(nj, 12);
  for (int k = 0; k < nj; ++k) {
    const Mat3<double> m = kin.global_rotations[k] - Mat3<double>::Identity();
    dev.block<1, 3>(k, 0) = m.row(0);
    dev.block<1, 3>(k, 3) = m.row(1);
    dev.block<1, 3>(k, 6) = m.row(2);
    dev.block<1, 3>(k, 9) = kin.translations[k].transpose();
  }
  const Eigen::Matrix<double, Eigen::Dynamic, 12> blended = model.skin_weights() * dev;

  PosedBody out;
  out.vertices.resize(nv, 3);
  for (int v = 0; v < nv; ++v) {
    const Eigen::RowVector3d x = rest.row(v);
    const auto b = blended.row(v);
    out.vertices(v, 0) = x(0) + (b(0) * x(0) + b(1) * x(1) + b(2) * x(2) + b(9));
    out.vertices(v, 1) = x(1) + (b(3) * x(0) + b(4) * x(1) + b(5) * x(2) + b(10));
    out.vertices(v, 2) = x(2) + (b(6) * x(0) + b(7) * x(1) + b(8) * x(2) + b(11));
  }
  out.joints = kin.posed_joints;
  out.keypoints_3d = select_keypoints(model, out.vertices, out.joints);
  return out;
}

Eigen::MatrixX3d t_pose_vertices(const BodyModel& model, const ShapeParams& beta) {
  check_dims(model);
  return shaped_vertices(model, beta);
}

void posed_joints_backward(const BodyModel& model, const Kinematics& kin,
                           const Eigen::MatrixX3d& grad_joints,
                           Eigen::Ref<Eigen::VectorXd> grad_theta,
                           Eigen::Ref<Eigen::VectorXd> grad_beta) {
  const int nj = model.num_joints();
  if (grad_joints.rows() != nj || grad_theta.size() != kPoseDim || grad_beta.size() != kNumBetas)
    throw DimensionError("posed_joints_backward: gradient shapes do not match model");
  const auto& parents = model.parents();

  // Posed joints: P_0 = J_0, P_k = P_p + Q_p (J_k - J_p), Q_k = Q_p R_k.
  std::vector<Vec3<double>> g_pos(nj);
  std::vector<Mat3<double>> g_rot(nj, Mat3<double>::Zero());
  Eigen::MatrixX3d g_rest = Eigen::MatrixX3d::Zero(nj, 3);
  for (int k = 0; k < nj; ++k) g_pos[k] = grad_joints.row(k).transpose();

  for (int k = nj - 1; k >= 1; --k) {
    const int p = parents[k];
    const Vec3<double> d = (kin.rest_joints.row(k) - kin.rest_joints.row(p)).transpose();
    const Mat3<double>& qp = kin.global_rotations[p];
    g_pos[p] += g_pos[k];
    g_rot[p] += g_pos[k] * d.transpose();
    const Vec3<double> gd = qp.transpose() * g_pos[k];
    g_rest.row(k) += gd.transpose();
    g_rest.row(p) -= gd.transpose();
    g_rot[p] += g_rot[k] * kin.local_rotations[k].transpose();
    g_rot[k] = qp.transpose() * g_rot[k];  // now dL/dR_k
  }
  g_rest.row(0) += g_pos[0].transpose();
  // g_rot[0] is dL/dQ_0 = dL/dR_0.
  for (int k = 0; k < nj; ++k) {
    const auto jac = rodrigues_jacobian<double>(kin.axis_angles[k]);
    for (int i = 0; i < 3; ++i) grad_theta(3 * k + i) = (g_rot[k].array() * jac[i].array()).sum();
  }
  Eigen::VectorXd g_flat(3 * nj);
  for (int k = 0; k < nj; ++k) g_flat.segment<3>(3 * k) = g_rest.row(k).transpose();
  grad_beta = model.joint_shape_dirs().transpose() * g_flat;
}

}  // namespace pmesh
