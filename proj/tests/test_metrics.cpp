#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "pmesh/error.hpp"
#include "pmesh/metrics.hpp"

using namespace pmesh;

namespace {

KeypointSet random_set(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 256.0);
  KeypointSet k(n);
  for (int j = 0; j < n; ++j) {
    k.coords.row(j) << u(rng), u(rng);
    k.visible(j) = true;
    k.confidence(j) = 1.0;
  }
  return k;
}

Eigen::MatrixX3d random_cloud(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g(0.0, 0.3);
  Eigen::MatrixX3d m(n, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  return oracle::aa_to_matrix(Eigen::Vector3d(g(rng), g(rng), g(rng)));
}

}  // namespace

TEST_CASE("2d mpjpe basics") {
  std::mt19937_64 rng(1);
  const KeypointSet gt = random_set(rng, 12);
  CHECK(mpjpe_2d(gt, gt).mean == 0.0);
  KeypointSet pred = gt;
  pred.coords(4, 0) += 3.0;
  pred.coords(4, 1) += 4.0;
  const auto r = mpjpe_2d(pred, gt);
  CHECK(r.mean == doctest::Approx(5.0 / 12.0).epsilon(1e-14));
  CHECK(r.units == "px");
}

TEST_CASE("2d mpjpe matches direct recomputation") {
  std::mt19937_64 rng(2);
  std::bernoulli_distribution vis(0.8);
  std::vector<KeypointSet> pred, gt;
  for (int f = 0; f < 30; ++f) {
    pred.push_back(random_set(rng, 12));
    gt.push_back(random_set(rng, 12));
    for (int j = 0; j < 12; ++j) {
      pred.back().visible(j) = vis(rng);
      gt.back().visible(j) = vis(rng);
    }
  }
  const auto r = mpjpe_2d(pred, gt);
  double mean_of_means = 0.0;
  for (int j = 0; j < 12; ++j) {
    double s = 0.0;
    int n = 0;
    for (int f = 0; f < 30; ++f) {
      if (!pred[f].visible(j) || !gt[f].visible(j)) continue;
      s += std::hypot(pred[f].coords(j, 0) - gt[f].coords(j, 0), pred[f].coords(j, 1) - gt[f].coords(j, 1));
      ++n;
    }
    REQUIRE(n > 0);
    CHECK(std::abs(r.per_joint(j) - s / n) < 1e-12);
    mean_of_means += s / n / 12.0;
  }
  CHECK(std::abs(r.mean - mean_of_means) < 1e-9);

  std::vector<double> scale(30, 0.25);
  const auto cm = mpjpe_2d(pred, gt, scale);
  CHECK(cm.units == "cm");
  CHECK(std::abs(cm.mean - 0.25 * r.mean) < 1e-12);

  // Shuffling frames leaves aggregates unchanged.
  std::vector<int> order(30);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<KeypointSet> ps, gs;
  for (int i : order) {
    ps.push_back(pred[i]);
    gs.push_back(gt[i]);
  }
  CHECK(std::abs(mpjpe_2d(ps, gs).mean - r.mean) < 1e-12);
}

TEST_CASE("2d mpjpe needs jointly visible keypoints") {
  std::mt19937_64 rng(3);
  KeypointSet a = random_set(rng, 4), b = random_set(rng, 4);
  a.visible << true, true, false, false;
  b.visible << false, false, true, true;
  CHECK_THROWS_AS(mpjpe_2d(a, b), DimensionError);
}

TEST_CASE("pck uses a closed threshold") {
  std::mt19937_64 rng(4);
  const KeypointSet gt = random_set(rng, 12);
  const std::vector<KeypointSet> g{gt};
  const std::vector<double> norm{10.0};
  CHECK(pck(g, g, 0.3, norm).mean == 1.0);
  // Every joint off by exactly alpha * norm along x (3.0 and 0.5 are exact in binary).
  KeypointSet pred = gt;
  for (int j = 0; j < 12; ++j) pred.coords(j, 0) = gt.coords(j, 0);
  pred.coords.col(1).array() += 3.0;
  const std::vector<KeypointSet> p{pred};
  CHECK(pck(p, g, 0.3, std::vector<double>{10.0}).mean == 1.0);
  CHECK(pck(p, g, 0.25, std::vector<double>{10.0}).mean == 0.0);
  CHECK_THROWS_AS(pck(p, g, 0.0, norm), ConfigError);
  CHECK_THROWS_AS(pck(p, g, 0.3, std::vector<double>{-1.0}), ConfigError);
}

TEST_CASE("pck is monotone in alpha") {
  std::mt19937_64 rng(5);
  std::vector<KeypointSet> pred, gt;
  std::vector<double> norm;
  for (int f = 0; f < 40; ++f) {
    gt.push_back(random_set(rng, 12));
    pred.push_back(random_set(rng, 12));
    norm.push_back(torso_diameter(gt.back()));
  }
  double last = 1.0;
  for (double alpha = 2.0; alpha > 0.01; alpha *= 0.8) {
    const double v = pck(pred, gt, alpha, norm).mean;
    CHECK(v <= last);
    last = v;
  }
}

TEST_CASE("torso diameter joins mid-shoulder and mid-hip") {
  KeypointSet k(12);
  k.coords.row(2) << 0, 0;
  k.coords.row(3) << 2, 0;
  k.coords.row(8) << 0, 4;
  k.coords.row(9) << 2, 4;
  CHECK(torso_diameter(k) == 4.0);
}

TEST_CASE("procrustes recovers a known similarity transform") {
  std::mt19937_64 rng(6);
  const Eigen::MatrixX3d gt = random_cloud(rng, 12);
  const auto id = procrustes_align(gt, gt);
  CHECK(std::abs(id.scale - 1.0) < 1e-9);
  CHECK((id.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(id.translation.norm() < 1e-9);

  for (int i = 0; i < 20; ++i) {
    const Eigen::Matrix3d r = random_rotation(rng);
    const double s = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
    const Eigen::Vector3d t(0.3, -1.0, 2.0);
    const Eigen::MatrixX3d pred = ((s * gt) * r.transpose()).rowwise() + t.transpose();
    const auto a = procrustes_align(pred, gt);
    CHECK(std::abs(a.scale - 1.0 / s) < 1e-9);
    CHECK((a.rotation - r.transpose()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((a.apply(pred) - gt).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(std::abs(a.rotation.determinant() - 1.0) < 1e-9);
  }
}

TEST_CASE("procrustes objective matches a numeric minimizer") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 10; ++i) {
    const Eigen::MatrixX3d p = random_cloud(rng, 12), g = random_cloud(rng, 12);
    const double closed = (procrustes_align(p, g).apply(p) - g).squaredNorm();
    const double numeric = oracle::numeric_procrustes_objective(p, g);
    CHECK(closed <= numeric + 1e-6);
    CHECK(std::abs(closed - numeric) < 1e-6);
  }
}

TEST_CASE("procrustes never returns a reflection") {
  std::mt19937_64 rng(8);
  const Eigen::MatrixX3d g = random_cloud(rng, 12);
  Eigen::MatrixX3d mirrored = g;
  mirrored.col(0) *= -1.0;
  const auto a = procrustes_align(mirrored, g);
  CHECK(std::abs(a.rotation.determinant() - 1.0) < 1e-9);
  CHECK((a.rotation.transpose() * a.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("procrustes rejects degenerate input") {
  Eigen::MatrixX3d line(5, 3);
  for (int i = 0; i < 5; ++i) line.row(i) << i, 2.0 * i, -i;
  std::mt19937_64 rng(9);
  CHECK_THROWS_AS(procrustes_align(random_cloud(rng, 5), line), DimensionError);
  CHECK_THROWS_AS(procrustes_align(random_cloud(rng, 2), random_cloud(rng, 2)), DimensionError);
  // A planar configuration is still valid.
  Eigen::MatrixX3d plane = random_cloud(rng, 6);
  plane.col(2).setZero();
  CHECK_NOTHROW(procrustes_align(random_cloud(rng, 6), plane));
}

TEST_CASE("pa-mpjpe is similarity invariant and bounded by raw mpjpe") {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> noise(0.0, 0.02);
  std::vector<Eigen::MatrixX3d> pred, gt, moved;
  for (int f = 0; f < 20; ++f) {
    gt.push_back(random_cloud(rng, 24));
    Eigen::MatrixX3d p = gt.back();
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] += noise(rng);
    pred.push_back(p);
    const Eigen::Matrix3d r = random_rotation(rng);
    moved.push_back(((1.7 * p) * r.transpose()).rowwise() + Eigen::RowVector3d(1, 2, 3));
  }
  const auto pa = pa_mpjpe(pred, gt);
  CHECK(pa.mean <= mpjpe_3d(pred, gt).mean);
  CHECK(std::abs(pa_mpjpe(moved, gt).mean - pa.mean) < 1e-9);
  CHECK(pa.units == "mm");

  std::vector<Eigen::MatrixX3d> exact;
  for (const auto& g : gt) exact.push_back(((0.6 * g) * random_rotation(rng).transpose()).rowwise() + Eigen::RowVector3d(0, 5, 0));
  CHECK(pa_mpjpe(exact, gt).mean < 1e-9);
}

TEST_CASE("3d mpjpe converts meters to millimeters") {
  std::mt19937_64 rng(11);
  const Eigen::MatrixX3d g = random_cloud(rng, 24);
  const std::vector<Eigen::MatrixX3d> gt{g}, pred{g.rowwise() + Eigen::RowVector3d(0.006, 0.0, 0.008)};
  CHECK(mpjpe_3d(gt, gt).mean == 0.0);
  CHECK(mpjpe_3d(pred, gt).mean == doctest::Approx(10.0).epsilon(1e-12));
  const std::vector<Eigen::MatrixX3d> wrong{random_cloud(rng, 23)};
  CHECK_THROWS_AS(mpjpe_3d(wrong, gt), DimensionError);
}

TEST_CASE("pve-t-sc scale correction") {
  const BodyModel model = make_mini_model(0);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0.0, 1.0);
  ShapeParams a, b;
  for (int i = 0; i < kNumBetas; ++i) {
    a.beta(i) = n(rng);
    b.beta(i) = n(rng);
  }
  const std::vector<ShapeParams> same{a}, other{b};
  CHECK(pve_t_sc(same, same, model).mean == 0.0);

  const Eigen::MatrixX3d va = t_pose_vertices(model, a), vb = t_pose_vertices(model, b);
  const std::vector<Eigen::MatrixX3d> gt{va}, doubled{2.0 * va};
  CHECK(pve_t_sc(doubled, gt).mean < 1e-9);

  // s* against a scalar minimizer of the centered objective.
  const Eigen::MatrixX3d pc = vb.rowwise() - vb.colwise().mean();
  const Eigen::MatrixX3d gc = va.rowwise() - va.colwise().mean();
  const double s_num = oracle::bisect([&](double s) { return ((s * pc - gc).array() * pc.array()).sum(); }, 0.0, 10.0);
  CHECK(std::abs(optimal_scale(vb, va) - s_num) < 1e-9);

  const double base = pve_t_sc(std::vector<Eigen::MatrixX3d>{vb}, gt).mean;
  for (double c : {0.5, 0.8, 1.3, 2.0}) {
    const std::vector<Eigen::MatrixX3d> scaled{c * vb};
    CHECK(std::abs(pve_t_sc(scaled, gt).mean - base) < 1e-9);
  }
}

TEST_CASE("csv output") {
  std::ostringstream os;
  write_csv_header(os);
  MetricReport r;
  r.name = "mpjpe_3d";
  r.units = "mm";
  r.mean = 12.5;
  r.count = 3;
  write_csv(os, "val", {r});
  CHECK(os.str() == "dataset,metric,units,mean,count\nval,mpjpe_3d,mm,12.5,3\n");
}
