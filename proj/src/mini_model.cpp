// Procedural stand-in for a licensed body model: elliptic cylinders placed on
// the 24-joint skeleton, ring-sampled so that every joint sits at a ring center.

#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "pmesh/body_model.hpp"
#include "pmesh/isocenter.hpp"

namespace pmesh {
namespace {

using Eigen::Vector3d;

// Rest joint layout (meters, y up, +x toward the body's left, +z forward).
std::array<Vector3d, kNumJoints> skeleton() {
  std::array<Vector3d, kNumJoints> j;
  j[kPelvis] = {0.0, 0.0, 0.0};
  j[kLeftHip] = {0.09, -0.09, 0.0};
  j[kRightHip] = {-0.09, -0.09, 0.0};
  j[kSpine1] = {0.0, 0.11, 0.0};
  j[kLeftKnee] = {0.10, -0.48, 0.0};
  j[kRightKnee] = {-0.10, -0.48, 0.0};
  j[kSpine2] = {0.0, 0.24, 0.0};
  j[kLeftAnkle] = {0.10, -0.88, 0.0};
  j[kRightAnkle] = {-0.10, -0.88, 0.0};
  j[kSpine3] = {0.0, 0.30, 0.0};
  j[kLeftFoot] = {0.10, -0.93, 0.12};
  j[kRightFoot] = {-0.10, -0.93, 0.12};
  j[kNeck] = {0.0, 0.51, 0.0};
  j[kLeftCollar] = {0.07, 0.42, 0.0};
  j[kRightCollar] = {-0.07, 0.42, 0.0};
  j[kHead] = {0.0, 0.60, 0.0};
  j[kLeftShoulder] = {0.17, 0.44, 0.0};
  j[kRightShoulder] = {-0.17, 0.44, 0.0};
  j[kLeftElbow] = {0.43, 0.44, 0.0};
  j[kRightElbow] = {-0.43, 0.44, 0.0};
  j[kLeftWrist] = {0.68, 0.44, 0.0};
  j[kRightWrist] = {-0.68, 0.44, 0.0};
  j[kLeftHand] = {0.77, 0.44, 0.0};
  j[kRightHand] = {-0.77, 0.44, 0.0};
  return j;
}

enum class PartKind { kTorso, kHead, kLeg, kFoot, kArm };

struct Ring {
  double t;       // position along the part axis in [0, 1]
  double scale;   // radius multiplier
  int joint = -1; // joint whose position is this ring's center, or -1
};

struct Part {
  PartKind kind;
  int side;  // +1 left, -1 right, 0 center
  Vector3d a, b;
  Vector3d e1, e2;  // ring axes, orthonormal to (b - a)
  double r1, r2;
  int points;
  std::vector<Ring> rings;
  std::vector<int> bones;  // indices into the bone table
};

struct Bone {
  int joint;  // driving joint
  Vector3d from, to;
};

double segment_distance(const Vector3d& p, const Bone& bone) {
  const Vector3d d = bone.to - bone.from;
  const double len2 = d.squaredNorm();
  double t = len2 > 0.0 ? (p - bone.from).dot(d) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (bone.from + t * d)).norm();
}

struct Builder {
  std::array<Vector3d, kNumJoints> joints = skeleton();
  std::vector<Bone> bones;
  std::vector<Part> parts;

  int bone(int joint, const Vector3d& to) {
    bones.push_back({joint, joints[joint], to});
    return static_cast<int>(bones.size()) - 1;
  }
  int bone(int joint, int child) { return bone(joint, joints[child]); }

  Builder() {
    const Vector3d ex = Vector3d::UnitX(), ey = Vector3d::UnitY(), ez = Vector3d::UnitZ();
    const int b_p_s1 = bone(kPelvis, kSpine1);
    const int b_s1_s2 = bone(kSpine1, kSpine2);
    const int b_s2_s3 = bone(kSpine2, kSpine3);
    const int b_s3_neck = bone(kSpine3, kNeck);
    const int b_neck_head = bone(kNeck, kHead);
    const int b_head_top = bone(kHead, Vector3d(0.0, 0.78, 0.0));
    const int b_s3_lc = bone(kSpine3, kLeftCollar);
    const int b_s3_rc = bone(kSpine3, kRightCollar);
    const int b_lc_ls = bone(kLeftCollar, kLeftShoulder);
    const int b_rc_rs = bone(kRightCollar, kRightShoulder);

    // Torso.
    {
      Part p{PartKind::kTorso, 0, {0, -0.14, 0}, {0, 0.47, 0}, ex, ez, 0.15, 0.10, 16, {}, {}};
      const double y0 = -0.14, len = 0.61;
      auto at = [&](double y) { return (y - y0) / len; };
      p.rings = {{at(-0.14), 0.85}, {at(-0.07), 0.97}, {at(0.0), 1.0, kPelvis},
                 {at(0.055), 0.97}, {at(0.11), 0.95, kSpine1}, {at(0.175), 0.97},
                 {at(0.24), 1.0, kSpine2}, {at(0.30), 1.03, kSpine3}, {at(0.36), 1.05},
                 {at(0.42), 1.0}, {at(0.47), 0.8}};
      p.bones = {b_p_s1, b_s1_s2, b_s2_s3, b_s3_neck, b_s3_lc, b_s3_rc, b_lc_ls, b_rc_rs};
      parts.push_back(p);
    }
    // Head and neck.
    {
      Part p{PartKind::kHead, 0, {0, 0.48, 0}, {0, 0.78, 0}, ex, ez, 0.085, 0.095, 12, {}, {}};
      auto at = [](double y) { return (y - 0.48) / 0.30; };
      p.rings = {{at(0.48), 0.62}, {at(0.51), 0.62, kNeck}, {at(0.555), 0.9},
                 {at(0.60), 1.0, kHead}, {at(0.65), 1.05}, {at(0.70), 1.0},
                 {at(0.74), 0.85}, {at(0.78), 0.45}};
      p.bones = {b_s3_neck, b_neck_head, b_head_top};
      parts.push_back(p);
    }
    for (int side : {+1, -1}) {
      const bool left = side > 0;
      const int hip = left ? kLeftHip : kRightHip;
      const int knee = left ? kLeftKnee : kRightKnee;
      const int ankle = left ? kLeftAnkle : kRightAnkle;
      const int foot = left ? kLeftFoot : kRightFoot;
      const int collar = left ? kLeftCollar : kRightCollar;
      const int shoulder = left ? kLeftShoulder : kRightShoulder;
      const int elbow = left ? kLeftElbow : kRightElbow;
      const int wrist = left ? kLeftWrist : kRightWrist;
      const int hand = left ? kLeftHand : kRightHand;
      const int b_p_hip = bone(kPelvis, hip);
      const int b_hip_knee = bone(hip, knee);
      const int b_knee_ankle = bone(knee, ankle);
      const int b_ankle_foot = bone(ankle, foot);
      const int b_foot_toe = bone(foot, Vector3d(side * 0.10, -0.93, 0.17));
      const int b_c_s = left ? b_lc_ls : b_rc_rs;
      const int b_s_e = bone(shoulder, elbow);
      const int b_e_w = bone(elbow, wrist);
      const int b_w_h = bone(wrist, hand);
      const int b_h_tip = bone(hand, Vector3d(side * 0.82, 0.44, 0.0));
      (void)collar;

      Part thigh{PartKind::kLeg, side, joints[hip], joints[knee], ex, ez, 0.075, 0.075, 10, {}, {}};
      thigh.rings = {{0.0, 1.0, hip}, {0.25, 0.95}, {0.5, 0.88}, {0.75, 0.8}, {1.0, 0.72, knee}};
      thigh.bones = {b_p_hip, b_hip_knee, b_knee_ankle};
      parts.push_back(thigh);

      Part shin{PartKind::kLeg, side, joints[knee], joints[ankle], ex, ez, 0.052, 0.052, 8, {}, {}};
      shin.rings = {{0.0, 1.0, knee}, {1.0 / 3.0, 0.98}, {2.0 / 3.0, 0.86}, {1.0, 0.72, ankle}};
      shin.bones = {b_hip_knee, b_knee_ankle, b_ankle_foot};
      parts.push_back(shin);

      Part ft{PartKind::kFoot, side, Vector3d(side * 0.10, -0.93, -0.02),
              Vector3d(side * 0.10, -0.93, 0.17), ex, ey, 0.038, 0.03, 8, {}, {}};
      ft.rings = {{0.0, 0.9}, {7.0 / 19.0, 1.0}, {14.0 / 19.0, 0.95, foot}, {1.0, 0.7}};
      ft.bones = {b_knee_ankle, b_ankle_foot, b_foot_toe};
      parts.push_back(ft);

      Part upper{PartKind::kArm, side, joints[shoulder], joints[elbow], ey, ez, 0.045, 0.045, 8, {}, {}};
      upper.rings = {{0.0, 1.0, shoulder}, {1.0 / 3.0, 0.95}, {2.0 / 3.0, 0.9}, {1.0, 0.84, elbow}};
      upper.bones = {b_c_s, b_s_e, b_e_w};
      parts.push_back(upper);

      Part fore{PartKind::kArm, side, joints[elbow], joints[wrist], ey, ez, 0.037, 0.037, 8, {}, {}};
      fore.rings = {{0.0, 1.0}, {0.5, 0.92}, {1.0, 0.76, wrist}};
      fore.bones = {b_s_e, b_e_w, b_w_h};
      parts.push_back(fore);

      Part hd{PartKind::kArm, side, joints[wrist], Vector3d(side * 0.82, 0.44, 0.0), ey, ez, 0.03,
              0.02, 6, {}, {}};
      hd.rings = {{0.0, 0.95}, {0.32142857142857145, 1.0}, {0.6428571428571429, 1.0, hand}, {1.0, 0.7}};
      hd.bones = {b_e_w, b_w_h, b_h_tip};
      parts.push_back(hd);
    }
  }
};

struct PartSpan {
  int first_ring_vertex;  // index of ring 0, point 0
  int points;
  int num_rings;
};

}  // namespace

BodyModel make_mini_model(std::uint64_t seed) {
  const Builder builder;
  std::vector<Vector3d> verts;
  std::vector<int> vert_part;
  std::vector<Eigen::Vector3i> faces;
  std::vector<PartSpan> spans;
  std::vector<std::pair<int, int>> joint_rings(kNumJoints, {-1, -1});  // (part, ring)

  for (std::size_t pi = 0; pi < builder.parts.size(); ++pi) {
    const Part& p = builder.parts[pi];
    const int base = static_cast<int>(verts.size());
    const Vector3d axis = p.b - p.a;
    for (std::size_t ri = 0; ri < p.rings.size(); ++ri) {
      const Ring& ring = p.rings[ri];
      const Vector3d c = p.a + ring.t * axis;
      for (int m = 0; m < p.points; ++m) {
        const double phi = 2.0 * std::numbers::pi * m / p.points;
        verts.push_back(c + ring.scale * (p.r1 * std::cos(phi) * p.e1 + p.r2 * std::sin(phi) * p.e2));
        vert_part.push_back(static_cast<int>(pi));
      }
      if (ring.joint >= 0) joint_rings[ring.joint] = {static_cast<int>(pi), static_cast<int>(ri)};
    }
    const int nr = static_cast<int>(p.rings.size());
    for (int r = 0; r + 1 < nr; ++r) {
      for (int m = 0; m < p.points; ++m) {
        const int m1 = (m + 1) % p.points;
        const int i00 = base + r * p.points + m, i01 = base + r * p.points + m1;
        const int i10 = base + (r + 1) * p.points + m, i11 = base + (r + 1) * p.points + m1;
        faces.emplace_back(i00, i01, i11);
        faces.emplace_back(i00, i11, i10);
      }
    }
    // End caps.
    const int cap0 = static_cast<int>(verts.size());
    verts.push_back(p.a + p.rings.front().t * axis);
    vert_part.push_back(static_cast<int>(pi));
    const int cap1 = static_cast<int>(verts.size());
    verts.push_back(p.a + p.rings.back().t * axis);
    vert_part.push_back(static_cast<int>(pi));
    const int last = base + (nr - 1) * p.points;
    for (int m = 0; m < p.points; ++m) {
      const int m1 = (m + 1) % p.points;
      faces.emplace_back(cap0, base + m1, base + m);
      faces.emplace_back(cap1, last + m, last + m1);
    }
    spans.push_back({base, p.points, nr});
  }

  const int nv = static_cast<int>(verts.size());
  BodyModelData d;
  d.template_vertices.resize(nv, 3);
  for (int v = 0; v < nv; ++v) d.template_vertices.row(v) = verts[v].transpose();
  d.faces.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (std::size_t f = 0; f < faces.size(); ++f) d.faces.row(static_cast<Eigen::Index>(f)) = faces[f].transpose();
  d.kinematic_parents = smpl_parents();
  d.keypoint_map = default_keypoint_map();

  // Joint regressor: uniform weights over the ring centered on each joint.
  d.joint_regressor = Eigen::MatrixXd::Zero(kNumJoints, nv);
  for (int j = 0; j < kNumJoints; ++j) {
    const auto [pi, ri] = joint_rings[j];
    if (pi < 0) continue;
    const PartSpan& s = spans[pi];
    for (int m = 0; m < s.points; ++m) d.joint_regressor(j, s.first_ring_vertex + ri * s.points + m) = 1.0 / s.points;
  }
  // Collars: blend the ring at collar height toward its lateral rim vertex.
  {
    const Part& torso = builder.parts[0];
    const PartSpan& s = spans[0];
    const int ring = 9;  // y = 0.42
    const double rim_x = torso.r1 * torso.rings[ring].scale;
    for (int side : {+1, -1}) {
      const int j = side > 0 ? kLeftCollar : kRightCollar;
      const double a = std::abs(builder.joints[j].x()) / rim_x;
      const int rim = s.first_ring_vertex + ring * s.points + (side > 0 ? 0 : s.points / 2);
      for (int m = 0; m < s.points; ++m)
        d.joint_regressor(j, s.first_ring_vertex + ring * s.points + m) = (1.0 - a) / s.points;
      d.joint_regressor(j, rim) += a;
    }
  }

  // Skinning: inverse distance to the two nearest candidate bones of the vertex's part.
  d.skin_weights = Eigen::MatrixXd::Zero(nv, kNumJoints);
  for (int v = 0; v < nv; ++v) {
    const Part& p = builder.parts[vert_part[v]];
    std::vector<std::pair<double, int>> dist;
    for (int b : p.bones) dist.emplace_back(segment_distance(verts[v], builder.bones[b]), builder.bones[b].joint);
    std::partial_sort(dist.begin(), dist.begin() + 2, dist.end());
    double total = 0.0;
    for (int k = 0; k < 2; ++k) {
      const double w = 1.0 / (dist[k].first + 1e-3);
      d.skin_weights(v, dist[k].second) += w;
      total += w;
    }
    d.skin_weights.row(v) /= total;
  }

  // Shape basis.
  d.shape_dirs = Eigen::MatrixXd::Zero(3 * nv, kNumBetas);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 2.0 * std::numbers::pi);
  std::array<std::array<double, 6>, 3> fields;
  for (auto& f : fields)
    for (auto& x : f) x = uni(rng);

  for (int v = 0; v < nv; ++v) {
    const Part& p = builder.parts[vert_part[v]];
    const Vector3d x = verts[v];
    const Vector3d axis = (p.b - p.a).normalized();
    const Vector3d on_axis = p.a + (x - p.a).dot(axis) * axis;
    auto set = [&](int b, const Vector3d& dv) { d.shape_dirs.block<3, 1>(3 * v, b) = dv; };

    set(0, 0.05 * x);                          // stature
    set(1, 0.05 * (x - on_axis));              // girth
    if (p.kind == PartKind::kLeg || p.kind == PartKind::kFoot)
      set(2, Vector3d(0.0, 0.05 * (x.y() + 0.09), 0.0));  // leg length
    if (p.kind == PartKind::kArm) {
      set(3, Vector3d(0.05 * (x.x() - p.side * 0.17), 0.0, 0.0));  // arm length
      set(4, Vector3d(p.side * 0.015, 0.0, 0.0));                  // shoulder width
    }
    if (p.kind == PartKind::kTorso && x.z() > 0.0) {
      const double bump = x.y() > -0.10 && x.y() < 0.30
                              ? 0.5 * (1.0 + std::cos(std::numbers::pi * (x.y() - 0.10) / 0.20))
                              : 0.0;
      set(5, Vector3d(0.0, 0.0, 0.02 * bump * x.z() / 0.10));  // belly depth
    }
    if (p.kind == PartKind::kTorso || p.kind == PartKind::kHead || p.kind == PartKind::kArm)
      set(6, Vector3d(0.0, 0.04 * std::clamp(x.y() / 0.47, 0.0, 1.0), 0.0));  // trunk length
    for (int k = 0; k < 3; ++k) {
      const auto& f = fields[k];
      set(7 + k, 0.004 * Vector3d(std::sin(6.0 * x.y() + f[0]) * std::cos(5.0 * x.x() + f[1]),
                                  std::sin(4.0 * x.x() + f[2]) * std::cos(6.0 * x.z() + f[3]),
                                  std::sin(5.0 * x.z() + f[4]) * std::cos(4.0 * x.y() + f[5])));
    }
  }
  d.pose_dirs = Eigen::MatrixXd::Zero(3 * nv, kPoseBasisDim);
  d.regions = axial_band_regions(d);
  return BodyModel(std::move(d));
}

}  // namespace pmesh
