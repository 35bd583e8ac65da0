#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "pmesh/error.hpp"
#include "pmesh/isocenter.hpp"
#include "pmesh/synthgen.hpp"
#include "temp_dir.hpp"

using namespace pmesh;

namespace {

const BodyModel& mini() {
  static const BodyModel m = make_mini_model(0);
  return m;
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  return oracle::aa_to_matrix(Eigen::Vector3d(g(rng), g(rng), g(rng)));
}

ScannerCalibration random_calibration(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ScannerCalibration c;
  c.rotation = random_rotation(rng);
  c.translation = {u(rng), u(rng), u(rng)};
  c.table_normal = Eigen::Vector3d(u(rng), u(rng), u(rng)).normalized();
  c.isocenter = {u(rng), u(rng), u(rng)};
  c.table_height = u(rng);
  return c;
}

PosedBody supine_body(const ShapeParams& beta) {
  return pose(mini(), supine_base_pose(), beta);
}

// Extent along the normal by explicit per-vertex, per-component loops.
std::pair<double, double> naive_scan(const PosedBody& b, const std::vector<int>& region, const ScannerCalibration& c) {
  double lo = 1e300, hi = -1e300;
  for (int v : region) {
    double h = 0.0;
    for (int r = 0; r < 3; ++r) {
      double s = c.translation(r);
      for (int k = 0; k < 3; ++k) s += c.rotation(r, k) * b.vertices(v, k);
      h += c.table_normal(r) * s;
    }
    lo = std::min(lo, h);
    hi = std::max(hi, h);
  }
  return {lo, hi};
}

PosedBody box(double height) {
  PosedBody b;
  b.vertices.resize(8, 3);
  for (int i = 0; i < 8; ++i)
    b.vertices.row(i) << (i & 1 ? 0.3 : -0.3), (i & 2 ? height : 0.0), (i & 4 ? 0.5 : -0.5);
  return b;
}

}  // namespace

TEST_CASE("box of height 0.2 m is 200 mm thick") {
  const BodyRegion all{"box", {0, 1, 2, 3, 4, 5, 6, 7}};
  const IsoResult r = thickness(box(0.2), all, ScannerCalibration{});
  CHECK(r.thickness_mm == doctest::Approx(200.0).epsilon(1e-15));
  CHECK(r.center_height_mm == doctest::Approx(100.0).epsilon(1e-15));
  CHECK(r.displacement_mm == doctest::Approx(-100.0).epsilon(1e-15));
  CHECK(r.region == "box");
}

TEST_CASE("shift along the normal moves the center only") {
  const BodyRegion all{"box", {0, 1, 2, 3, 4, 5, 6, 7}};
  const ScannerCalibration id;
  const IsoResult a = thickness(box(0.2), all, id);
  const IsoResult b = thickness(shift_along_table(box(0.2), id, 0.05), all, id);
  CHECK(b.center_height_mm - a.center_height_mm == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(std::abs(b.thickness_mm - a.thickness_mm) < 1e-9);
}

TEST_CASE("supine MiniBody thickness matches a vertex scan") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 1.0);
  for (const char* name : {"abdomen", "thorax", "head"}) {
    const BodyRegion region = region_mask(mini(), name);
    for (int trial = 0; trial < 10; ++trial) {
      ShapeParams beta;
      for (int i = 0; i < kNumBetas; ++i) beta.beta(i) = g(rng);
      const ScannerCalibration c = random_calibration(rng);
      const PosedBody body = supine_body(beta);
      const IsoResult r = thickness(body, region, c);
      const auto [lo, hi] = naive_scan(body, region.vertices, c);
      CHECK(std::abs(r.thickness_mm - (hi - lo) * 1e3) < 1e-9);
      CHECK(std::abs(r.center_height_mm - 0.5 * (hi + lo) * 1e3) < 1e-9);
      CHECK(r.thickness_mm > 0.0);
    }
  }
}

TEST_CASE("applying the displacement puts the center on the isocenter") {
  std::mt19937_64 rng(5);
  const BodyRegion region = region_mask(mini(), "abdomen");
  for (int trial = 0; trial < 20; ++trial) {
    const ScannerCalibration c = random_calibration(rng);
    const PosedBody body = supine_body(ShapeParams{});
    const IsoResult r = thickness(body, region, c);
    const IsoResult moved = thickness(shift_along_table(body, c, r.displacement_mm * 1e-3), region, c);
    CHECK(std::abs(moved.center_height_mm - r.isocenter_height_mm) < 1e-9);
    CHECK(std::abs(moved.displacement_mm) < 1e-9);
    CHECK(iso_error(r, r.center_height_mm) < 1e-9);
  }
}

TEST_CASE("thickness is invariant to a rigid change of the camera frame") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const BodyRegion region = region_mask(mini(), "thorax");
  const PosedBody body = supine_body(ShapeParams{});
  for (int trial = 0; trial < 20; ++trial) {
    const ScannerCalibration c = random_calibration(rng);
    // Camera frame moved by (Q, s); the calibration absorbs the inverse.
    const Eigen::Matrix3d q = random_rotation(rng);
    const Eigen::Vector3d s(u(rng), u(rng), u(rng));
    ScannerCalibration c2 = c;
    c2.rotation = c.rotation * q.transpose();
    c2.translation = c.translation - c2.rotation * s;
    const IsoResult a = thickness(body, region, c);
    const IsoResult b = thickness(transform_body(body, q, s), region, c2);
    CHECK(std::abs(a.thickness_mm - b.thickness_mm) < 1e-9);
    CHECK(std::abs(a.displacement_mm - b.displacement_mm) < 1e-9);
  }
}

TEST_CASE("girth shape component thickens the abdomen") {
  const BodyRegion region = region_mask(mini(), "abdomen");
  const ScannerCalibration c;  // model frame: table normal along +y
  int increases = 0, steps = 0;
  for (double base : {-1.0, 0.0, 1.0}) {
    double prev = -1.0;
    for (double b1 = -2.0; b1 <= 2.0 + 1e-12; b1 += 0.5) {
      ShapeParams beta;
      beta.beta(0) = base;
      beta.beta(1) = b1;
      const double t = thickness(supine_body(beta), region, c).thickness_mm;
      if (prev >= 0.0) {
        ++steps;
        if (t > prev) ++increases;
      }
      prev = t;
    }
  }
  CHECK(increases == steps);
}

TEST_CASE("table travel limits clamp the displacement") {
  const BodyRegion all{"box", {0, 1, 2, 3, 4, 5, 6, 7}};
  ScannerCalibration c;
  c.min_displacement = -0.04;
  IsoResult r = thickness(box(0.2), all, c);
  CHECK(r.clamped);
  CHECK(r.displacement_mm == doctest::Approx(-40.0));
  CHECK(iso_error(r, r.center_height_mm) == doctest::Approx(60.0));
  c.min_displacement.reset();
  c.max_displacement = 0.5;
  r = thickness(box(0.2), all, c);
  CHECK_FALSE(r.clamped);
}

TEST_CASE("iso_error") {
  IsoResult r;
  r.isocenter_height_mm = 120.0;
  r.displacement_mm = -30.0;
  CHECK(iso_error(r, 150.0) == 0.0);
  CHECK(iso_error(r, 155.0) == doctest::Approx(5.0));
  CHECK(iso_error(r, 145.0) == doctest::Approx(5.0));
}

TEST_CASE("rest_on_table puts the lowest vertex on the table") {
  std::mt19937_64 rng(3);
  const PosedBody body = supine_body(ShapeParams{});
  for (int trial = 0; trial < 5; ++trial) {
    const ScannerCalibration c = random_calibration(rng);
    const PosedBody rested = rest_on_table(body, c);
    const Eigen::VectorXd h = to_scanner(rested.vertices, c) * c.table_normal;
    CHECK(std::abs(h.minCoeff() - c.table_height) < 1e-12);
    // Joints and keypoints travel with the mesh.
    const Eigen::RowVector3d d = rested.vertices.row(0) - body.vertices.row(0);
    CHECK(((rested.joints - body.joints).rowwise() - d).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("axial band regions") {
  const BodyModel& m = mini();
  const auto& d = m.data();
  const Eigen::MatrixX3d joints = d.joint_regressor * d.template_vertices;
  const BodyRegion head = region_mask(m, "head");
  for (int v : head.vertices) CHECK(d.template_vertices(v, 1) >= joints(kNeck, 1));

  std::set<int> seen;
  std::size_t total = 0;
  for (const char* name : {"abdomen", "thorax", "head"}) {
    const BodyRegion r = region_mask(m, name);
    CHECK_FALSE(r.vertices.empty());
    total += r.vertices.size();
    seen.insert(r.vertices.begin(), r.vertices.end());
  }
  CHECK(seen.size() == total);  // disjoint
  CHECK(static_cast<int>(seen.size()) < m.num_vertices());

  try {
    region_mask(m, "pelvis");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("pelvis") != std::string::npos);
    CHECK(msg.find("abdomen, head, thorax") != std::string::npos);
  }
}

TEST_CASE("empty or out-of-range regions are rejected") {
  CHECK_THROWS_AS(thickness(box(0.2), BodyRegion{"none", {}}, ScannerCalibration{}), ConfigError);
  CHECK_THROWS_AS(thickness(box(0.2), BodyRegion{"bad", {8}}, ScannerCalibration{}), DimensionError);
}

TEST_CASE("calibration validation and file round trip") {
  std::mt19937_64 rng(13);
  ScannerCalibration c = random_calibration(rng);
  c.min_displacement = -0.2;
  c.max_displacement = 0.3;
  CHECK_NOTHROW(validate(c));

  TempDir dir;
  save_calibration(c, dir / "calib.json");
  const ScannerCalibration back = load_calibration(dir / "calib.json");
  CHECK((back.rotation - c.rotation).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((back.isocenter - c.isocenter).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.table_height == c.table_height);
  CHECK(*back.max_displacement == 0.3);

  ScannerCalibration bad = c;
  bad.rotation(0, 0) += 1e-3;
  CHECK_THROWS_AS(validate(bad), InvariantError);
  bad = c;
  bad.rotation = -c.rotation;  // det -1
  CHECK_THROWS_AS(validate(bad), InvariantError);
  bad = c;
  bad.table_normal *= 1.001;
  CHECK_THROWS_AS(validate(bad), InvariantError);
  bad = c;
  bad.min_displacement = 0.5;
  CHECK_THROWS_AS(validate(bad), InvariantError);

  spit(dir / "short.json", R"({"rotation":[1,0,0,0,1,0,0,0],"translation":[0,0,0],)"
                           R"("table_normal":[0,1,0],"isocenter":[0,0,0],"table_height":0})");
  CHECK_THROWS_AS(load_calibration(dir / "short.json"), FormatError);
  spit(dir / "skew.json", R"({"rotation":[1,0,0,0,1,0,0,0,2],"translation":[0,0,0],)"
                          R"("table_normal":[0,1,0],"isocenter":[0,0,0],"table_height":0})");
  CHECK_THROWS_AS(load_calibration(dir / "skew.json"), InvariantError);
  spit(dir / "junk.json", "{ not json");
  CHECK_THROWS_AS(load_calibration(dir / "junk.json"), FormatError);
  CHECK_THROWS_AS(load_calibration(dir / "missing.json"), IoError);
}
