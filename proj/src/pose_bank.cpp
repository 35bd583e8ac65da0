#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "pmesh/error.hpp"
#include "pmesh/rotation.hpp"
#include "pmesh/synthgen.hpp"

namespace pmesh {

void validate(const PoseBank& bank) {
  if (bank.poses.empty()) throw ConfigError("pose bank '" + bank.source + "' is empty");
  for (std::size_t i = 0; i < bank.poses.size(); ++i)
    if (!bank.poses[i].theta.allFinite()) throw InvariantError("pose_bank", "pose " + std::to_string(i) + " not finite");
  if (!bank.weights.empty()) {
    if (bank.weights.size() != bank.poses.size()) throw InvariantError("pose_bank.weights", "one weight per pose");
    double sum = 0.0;
    for (double w : bank.weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw InvariantError("pose_bank.weights", "negative or non-finite");
      sum += w;
    }
    if (!(sum > 0.0)) throw InvariantError("pose_bank.weights", "all zero");
  }
}

PoseParams supine_base_pose() {
  PoseParams p;
  p.set_joint(kPelvis, {-std::numbers::pi / 2, 0.0, 0.0});
  p.set_joint(kLeftShoulder, {0.0, 0.0, -1.3});
  p.set_joint(kRightShoulder, {0.0, 0.0, 1.3});
  return p;
}

const std::vector<JointLimits>& supine_limits() {
  // Offsets around supine_base_pose(). Axes in the rest frame: x toward the
  // body's left, y up the spine, z out of the chest. The root offset is
  // composed on the right of the base rotation, so z is the in-plane turn on
  // the table and x, y tilt the body off it.
  static const std::vector<JointLimits> limits = [] {
    std::vector<JointLimits> l(kNumJoints, {Eigen::Vector3d::Constant(-0.05), Eigen::Vector3d::Constant(0.05)});
    auto set = [&](int j, Eigen::Vector3d lo, Eigen::Vector3d hi) { l[static_cast<std::size_t>(j)] = {lo, hi}; };
    // One-sided ranges keep limbs above the table plane through the back. Root,
    // spine and head pitch stay small because the patient lies flat.
    set(kPelvis, {-0.02, -0.02, -0.15}, {0.02, 0.02, 0.15});
    set(kLeftHip, {-0.60, -0.20, -0.10}, {0.0, 0.20, 0.35});
    set(kRightHip, {-0.60, -0.20, -0.35}, {0.0, 0.20, 0.10});
    set(kSpine1, {-0.02, -0.10, -0.10}, {0.03, 0.10, 0.10});
    set(kLeftKnee, {0.0, -0.05, -0.05}, {1.0, 0.05, 0.05});
    set(kRightKnee, {0.0, -0.05, -0.05}, {1.0, 0.05, 0.05});
    set(kSpine2, {-0.02, -0.10, -0.10}, {0.03, 0.10, 0.10});
    set(kLeftAnkle, {-0.30, -0.15, -0.15}, {0.30, 0.15, 0.15});
    set(kRightAnkle, {-0.30, -0.15, -0.15}, {0.30, 0.15, 0.15});
    set(kSpine3, {-0.02, -0.10, -0.10}, {0.03, 0.10, 0.10});
    set(kNeck, {-0.03, -0.20, -0.15}, {0.05, 0.20, 0.15});
    set(kLeftCollar, {-0.10, -0.10, -0.10}, {0.10, 0.10, 0.10});
    set(kRightCollar, {-0.10, -0.10, -0.10}, {0.10, 0.10, 0.10});
    set(kHead, {-0.05, -0.40, -0.15}, {0.05, 0.40, 0.15});
    set(kLeftShoulder, {-0.40, -0.30, -0.35}, {0.0, 0.0, 0.35});
    set(kRightShoulder, {-0.40, 0.0, -0.35}, {0.0, 0.30, 0.35});
    set(kLeftElbow, {-0.10, -1.40, -0.10}, {0.10, 0.0, 0.10});
    set(kRightElbow, {-0.10, 0.0, -0.10}, {0.10, 1.40, 0.10});
    set(kLeftWrist, {-0.30, -0.30, -0.30}, {0.30, 0.30, 0.30});
    set(kRightWrist, {-0.30, -0.30, -0.30}, {0.30, 0.30, 0.30});
    set(kLeftHand, {-0.10, -0.10, -0.10}, {0.10, 0.10, 0.10});
    set(kRightHand, {-0.10, -0.10, -0.10}, {0.10, 0.10, 0.10});
    return l;
  }();
  return limits;
}

PoseBank build_pose_bank(std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ConfigError("procedural pose bank: count must be positive");
  PoseBank bank;
  bank.source = "procedural:supine:" + std::to_string(count) + ":" + std::to_string(seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto& lim = supine_limits();
  const PoseParams base = supine_base_pose();
  bank.poses.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    PoseParams p = base;
    for (int j = 0; j < kNumJoints; ++j)
      for (int a = 0; a < 3; ++a) {
        const auto& l = lim[static_cast<std::size_t>(j)];
        p.theta(3 * j + a) += l.lo(a) + (l.hi(a) - l.lo(a)) * u(rng);
      }
    // Adding to the base axis-angle would mix the turn with a roll.
    const Eigen::Vector3d root_offset = p.joint(kPelvis) - base.joint(kPelvis);
    p.set_joint(kPelvis, log_rotation<double>(rodrigues<double>(base.joint(kPelvis)) * rodrigues<double>(root_offset)));
    // A bent knee needs a raised thigh or the shin goes through the table:
    // flexion is capped at 1.5x the hip flexion.
    for (const auto [hip, knee] : {std::pair{kLeftHip, kLeftKnee}, std::pair{kRightHip, kRightKnee}}) {
      const double flex = base.theta(3 * hip) - p.theta(3 * hip);
      p.theta(3 * knee) *= std::min(1.0, 1.5 * flex / lim[static_cast<std::size_t>(knee)].hi(0));
    }
    bank.poses.push_back(p);
  }
  return bank;
}

PoseBank load_pose_bank(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open pose bank " + path.string());
  PoseBank bank;
  bank.source = "file:" + path.string();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    std::vector<double> vals;
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": not a number: '" + tok + "'");
      }
    }
    if (vals.size() != static_cast<std::size_t>(kPoseDim))
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(kPoseDim) +
                        " values, found " + std::to_string(vals.size()));
    PoseParams p;
    for (int i = 0; i < kPoseDim; ++i) p.theta(i) = vals[static_cast<std::size_t>(i)];
    if (!p.theta.allFinite()) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": non-finite value");
    bank.poses.push_back(p);
  }
  if (bank.poses.empty()) throw ConfigError("pose bank " + path.string() + " contains no poses");
  return bank;
}

void save_pose_bank(const PoseBank& bank, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write pose bank " + path.string());
  out << "# " << bank.source << '\n' << std::setprecision(17);
  for (const auto& p : bank.poses) {
    for (int i = 0; i < kPoseDim; ++i) out << (i ? " " : "") << p.theta(i);
    out << '\n';
  }
}

}  // namespace pmesh
