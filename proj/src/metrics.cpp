#include "pmesh/metrics.hpp"

#include <cmath>
#include <iomanip>

#include <Eigen/SVD>

#include "pmesh/error.hpp"

namespace pmesh {

Eigen::MatrixX3d SimilarityTransform::apply(const Eigen::MatrixX3d& points) const {
  return ((scale * points) * rotation.transpose()).rowwise() + translation.transpose();
}

namespace {

// Accumulates per-entry sums over frames and finalizes into a report.
struct Accumulator {
  Eigen::VectorXd sum;
  Eigen::VectorXi count;

  explicit Accumulator(Eigen::Index n) : sum(Eigen::VectorXd::Zero(n)), count(Eigen::VectorXi::Zero(n)) {}

  MetricReport finish(std::string name, std::string units, std::size_t frames) const {
    MetricReport r;
    r.name = std::move(name);
    r.units = std::move(units);
    r.count = frames;
    r.per_joint_count = count;
    r.per_joint = Eigen::VectorXd::Zero(sum.size());
    double total = 0.0;
    int used = 0;
    for (Eigen::Index j = 0; j < sum.size(); ++j) {
      if (count(j) == 0) continue;
      r.per_joint(j) = sum(j) / count(j);
      total += r.per_joint(j);
      ++used;
    }
    r.mean = used > 0 ? total / used : 0.0;
    return r;
  }
};

void check_frames(std::size_t a, std::size_t b) {
  if (a != b) throw DimensionError("prediction and ground-truth frame counts differ");
  if (a == 0) throw DimensionError("no frames to evaluate");
}

}  // namespace

MetricReport mpjpe_2d(std::span<const KeypointSet> pred, std::span<const KeypointSet> gt,
                      std::span<const double> cm_per_px) {
  check_frames(pred.size(), gt.size());
  if (!cm_per_px.empty() && cm_per_px.size() != gt.size())
    throw DimensionError("px-to-cm scale needs one entry per frame");
  const int nj = gt[0].size();
  Accumulator acc(nj);
  for (std::size_t f = 0; f < gt.size(); ++f) {
    if (pred[f].size() != nj || gt[f].size() != nj) throw DimensionError("keypoint counts differ");
    const double scale = cm_per_px.empty() ? 1.0 : cm_per_px[f];
    for (int j = 0; j < nj; ++j) {
      if (!pred[f].visible(j) || !gt[f].visible(j)) continue;
      acc.sum(j) += scale * (pred[f].coords.row(j) - gt[f].coords.row(j)).norm();
      ++acc.count(j);
    }
  }
  if (acc.count.sum() == 0) throw DimensionError("mpjpe_2d: no jointly visible keypoints");
  return acc.finish("mpjpe_2d", cm_per_px.empty() ? "px" : "cm", gt.size());
}

MetricReport mpjpe_2d(const KeypointSet& pred, const KeypointSet& gt) {
  return mpjpe_2d(std::span<const KeypointSet>(&pred, 1), std::span<const KeypointSet>(&gt, 1));
}

MetricReport pck(std::span<const KeypointSet> pred, std::span<const KeypointSet> gt, double alpha,
                 std::span<const double> norm_length) {
  check_frames(pred.size(), gt.size());
  if (!(alpha > 0.0)) throw ConfigError("pck: alpha must be positive");
  if (norm_length.size() != gt.size()) throw DimensionError("pck: need one normalization length per frame");
  const int nj = gt[0].size();
  Accumulator acc(nj);
  for (std::size_t f = 0; f < gt.size(); ++f) {
    if (!(norm_length[f] > 0.0)) throw ConfigError("pck: normalization length must be positive");
    if (pred[f].size() != nj || gt[f].size() != nj) throw DimensionError("keypoint counts differ");
    const double thr = alpha * norm_length[f];
    for (int j = 0; j < nj; ++j) {
      if (!gt[f].visible(j)) continue;
      ++acc.count(j);
      if (pred[f].visible(j) && (pred[f].coords.row(j) - gt[f].coords.row(j)).norm() <= thr) acc.sum(j) += 1.0;
    }
  }
  return acc.finish("pck", "fraction", gt.size());
}

double torso_diameter(const KeypointSet& gt, const TorsoSpec& s) {
  for (int j : {s.right_hip, s.left_hip, s.right_shoulder, s.left_shoulder})
    if (j < 0 || j >= gt.size()) throw DimensionError("torso keypoint index out of range");
  const Eigen::RowVector2d hip = 0.5 * (gt.coords.row(s.right_hip) + gt.coords.row(s.left_hip));
  const Eigen::RowVector2d sho = 0.5 * (gt.coords.row(s.right_shoulder) + gt.coords.row(s.left_shoulder));
  return (sho - hip).norm();
}

SimilarityTransform procrustes_align(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt) {
  if (pred.rows() != gt.rows()) throw DimensionError("procrustes: point counts differ");
  if (pred.rows() < 3) throw DimensionError("procrustes: need at least 3 points");
  const Eigen::RowVector3d mp = pred.colwise().mean(), mg = gt.colwise().mean();
  const Eigen::MatrixX3d p = pred.rowwise() - mp;
  const Eigen::MatrixX3d g = gt.rowwise() - mg;

  auto rank_ok = [](const Eigen::MatrixX3d& m) {
    const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::MatrixX3d>(m).singularValues();
    return sv(0) > 0.0 && sv(1) > 1e-9 * sv(0);
  };
  if (!rank_ok(g) || !rank_ok(p)) throw DimensionError("procrustes: degenerate (collinear) configuration");

  const Eigen::Matrix3d cov = g.transpose() * p;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d d = Eigen::Vector3d::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2) = -1.0;

  SimilarityTransform t;
  t.rotation = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  t.scale = svd.singularValues().dot(d) / p.squaredNorm();
  t.translation = mg.transpose() - t.scale * t.rotation * mp.transpose();
  return t;
}

namespace {

template <typename Align>
MetricReport joint_errors_mm(std::span<const Eigen::MatrixX3d> pred, std::span<const Eigen::MatrixX3d> gt,
                             const char* name, Align align) {
  check_frames(pred.size(), gt.size());
  const Eigen::Index nj = gt[0].rows();
  Accumulator acc(nj);
  for (std::size_t f = 0; f < gt.size(); ++f) {
    if (pred[f].rows() != nj || gt[f].rows() != nj) throw DimensionError(std::string(name) + ": joint counts differ");
    const Eigen::MatrixX3d p = align(pred[f], gt[f]);
    acc.sum += 1e3 * (p - gt[f]).rowwise().norm();
    acc.count.array() += 1;
  }
  return acc.finish(name, "mm", gt.size());
}

}  // namespace

MetricReport mpjpe_3d(std::span<const Eigen::MatrixX3d> pred, std::span<const Eigen::MatrixX3d> gt) {
  return joint_errors_mm(pred, gt, "mpjpe_3d", [](const Eigen::MatrixX3d& p, const Eigen::MatrixX3d&) { return p; });
}

MetricReport pa_mpjpe(std::span<const Eigen::MatrixX3d> pred, std::span<const Eigen::MatrixX3d> gt) {
  return joint_errors_mm(pred, gt, "pa_mpjpe", [](const Eigen::MatrixX3d& p, const Eigen::MatrixX3d& g) {
    return procrustes_align(p, g).apply(p);
  });
}

double optimal_scale(const Eigen::MatrixX3d& pred, const Eigen::MatrixX3d& gt) {
  if (pred.rows() != gt.rows()) throw DimensionError("optimal_scale: vertex counts differ");
  const Eigen::MatrixX3d p = pred.rowwise() - pred.colwise().mean();
  const Eigen::MatrixX3d g = gt.rowwise() - gt.colwise().mean();
  const double pp = p.squaredNorm();
  if (!(pp > 0.0)) throw DimensionError("optimal_scale: prediction collapsed to a point");
  return (p.array() * g.array()).sum() / pp;
}

MetricReport pve_t_sc(std::span<const Eigen::MatrixX3d> pred, std::span<const Eigen::MatrixX3d> gt) {
  check_frames(pred.size(), gt.size());
  const Eigen::Index nv = gt[0].rows();
  Accumulator acc(nv);
  for (std::size_t f = 0; f < gt.size(); ++f) {
    if (pred[f].rows() != nv || gt[f].rows() != nv) throw DimensionError("pve_t_sc: vertex counts differ");
    const double s = optimal_scale(pred[f], gt[f]);
    const Eigen::MatrixX3d p = s * (pred[f].rowwise() - pred[f].colwise().mean());
    const Eigen::MatrixX3d g = gt[f].rowwise() - gt[f].colwise().mean();
    acc.sum += 1e3 * (p - g).rowwise().norm();
    acc.count.array() += 1;
  }
  return acc.finish("pve_t_sc", "mm", gt.size());
}

MetricReport pve_t_sc(std::span<const ShapeParams> beta_pred, std::span<const ShapeParams> beta_gt,
                      const BodyModel& model) {
  check_frames(beta_pred.size(), beta_gt.size());
  std::vector<Eigen::MatrixX3d> p, g;
  for (std::size_t f = 0; f < beta_gt.size(); ++f) {
    p.push_back(t_pose_vertices(model, beta_pred[f]));
    g.push_back(t_pose_vertices(model, beta_gt[f]));
  }
  return pve_t_sc(std::span<const Eigen::MatrixX3d>(p), std::span<const Eigen::MatrixX3d>(g));
}

void write_csv_header(std::ostream& out) { out << "dataset,metric,units,mean,count\n"; }

void write_csv(std::ostream& out, const std::string& dataset, const std::vector<MetricReport>& reports) {
  const auto flags = out.flags();
  for (const auto& r : reports)
    out << dataset << ',' << r.name << ',' << r.units << ',' << std::setprecision(10) << r.mean << ',' << r.count
        << '\n';
  out.flags(flags);
}

}  // namespace pmesh
