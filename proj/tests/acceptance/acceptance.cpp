// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Criterion 9 reuses the network trained for criterion 4.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "pmesh/fusion.hpp"
#include "pmesh/heatmap.hpp"
#include "pmesh/metrics.hpp"
#include "pmesh/pipeline.hpp"
#include "temp_dir.hpp"

using namespace pmesh;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int id, const std::string& name, bool ok, double secs, double limit_s, const std::string& detail) {
  const bool in_time = secs < limit_s;
  ok = ok && in_time;
  if (!ok) ++failures;
  std::printf("[%s] %2d %s: %s; %.1f s (limit %.0f s)%s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(),
              secs, limit_s, in_time ? "" : " over time");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

const BodyModel& mini() {
  static const BodyModel m = make_mini_model(0);
  return m;
}

void lbs_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    PoseParams th;
    ShapeParams be;
    for (Eigen::Index k = 0; k < th.theta.size(); ++k) th.theta(k) = 0.5 * g(rng);
    for (Eigen::Index k = 0; k < be.beta.size(); ++k) be.beta(k) = g(rng);
    const PosedBody b = pose(mini(), th, be);
    const auto ref = oracle::naive_lbs(mini().data(), th.theta, be.beta);
    worst = std::max(worst, (b.vertices - ref.vertices).cwiseAbs().maxCoeff());
  }
  report(1, "LBS oracle equivalence", worst < 1e-9, seconds_since(t0), 10,
         fmt("max vertex deviation %.2e m over 100 samples (limit 1e-9)", worst));
}

void procrustes_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  std::normal_distribution<double> g(0.0, 0.3);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  double worst_gap = 0.0, worst_pa = 0.0;
  for (int i = 0; i < 50; ++i) {
    Eigen::MatrixX3d p(12, 3), q(12, 3);
    for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] = g(rng);
    for (Eigen::Index k = 0; k < q.size(); ++k) q.data()[k] = g(rng);
    const double closed = (procrustes_align(p, q).apply(p) - q).squaredNorm();
    worst_gap = std::max(worst_gap, std::abs(closed - oracle::numeric_procrustes_objective(p, q)));

    const Eigen::Matrix3d r = oracle::aa_to_matrix(Eigen::Vector3d(5 * g(rng), 5 * g(rng), 5 * g(rng)));
    const Eigen::RowVector3d t(g(rng), g(rng), g(rng));
    const Eigen::MatrixX3d moved = ((u(rng) * q) * r.transpose()).rowwise() + t;
    const std::vector<Eigen::MatrixX3d> pred{moved}, gt{q};
    worst_pa = std::max(worst_pa, pa_mpjpe(pred, gt).mean);
  }
  report(2, "Procrustes oracle", worst_gap < 1e-6 && worst_pa < 1e-9, seconds_since(t0), 30,
         fmt("objective gap %.2e (limit 1e-6), PA MPJPE of similarity copies %.2e mm (limit 1e-9)", worst_gap,
             worst_pa));
}

void gradient_check() {
  const auto t0 = Clock::now();
  std::ostringstream log;
  const PipelineConfig cfg = load_config({});
  const GradCheckReport r = cmd_grad_check(cfg, {}, 10, log);
  report(3, "Gradient verification", r.passed && r.max_rel_error < 1e-4, seconds_since(t0), 60,
         fmt("max relative error %.2e over 10 samples (limit 1e-4)", r.max_rel_error));
}

struct HeldOut {
  PoseParams theta;
  ShapeParams beta;
  CameraExtrinsics extrinsics;
  Prediction pred;
};

struct Trained {
  std::vector<HeldOut> held_out;
  bool ok = false;
};

Trained closed_loop_regression(const fs::path& work) {
  const auto t0 = Clock::now();
  Trained out;
  const PipelineConfig cfg = load_config({});  // 20000 records, seed 7, default network and schedule
  std::ostringstream log;
  const fs::path data = work / "dataset";
  cmd_gen_data(cfg, data, log);
  const TrainOutputs tr = cmd_train(cfg, data, work / "regressor.ckpt", log);
  const RegressorNet net = load_checkpoint(tr.checkpoint);

  // Held-out records keep parameters and predictions only; heatmaps are large.
  const BodyModel& model = mini();
  const std::size_t nval = holdout_count(cfg, cfg.gen.count);
  std::vector<RegressionSample> val;
  for_each_dataset_record(data, model, cfg.gen.count - nval, nval, [&](TrainingPair&& p) {
    out.held_out.push_back({p.theta, p.beta, p.extrinsics, forward(net, p.heatmaps)});
    val.push_back(make_sample(p, model, net.input));
  });

  const RegressorNet untrained = make_regressor(net.input, cfg.hidden, cfg.init_seed);
  const double pa_untrained = joint_errors(untrained, val, model).second;
  const double pa_trained = joint_errors(net, val, model).second;

  // Constant predictor: mean parameters over the training records.
  Prediction mean;
  mean.theta.theta.setZero();
  mean.beta.beta.setZero();
  const std::size_t ntrain = cfg.gen.count - nval;
  for_each_dataset_record(data, model, 0, ntrain, [&](TrainingPair&& p) {
    mean.theta.theta += p.theta.theta;
    mean.beta.beta += p.beta.beta;
  });
  mean.theta.theta /= static_cast<double>(ntrain);
  mean.beta.beta /= static_cast<double>(ntrain);
  const std::vector<Prediction> constant(val.size(), mean);
  const double pa_mean = joint_errors(constant, val, model).second;

  const double gain = 1.0 - pa_trained / pa_untrained;
  out.ok = gain >= 0.5 && pa_trained < pa_mean;
  report(4, "Closed-loop regression", out.ok, seconds_since(t0), 900,
         fmt("held-out PA MPJPE %.1f mm vs untrained %.1f mm (%.0f%% better, need 50%%), mean pose %.1f mm",
             pa_trained, pa_untrained, 100 * gain, pa_mean) +
             ", " + std::to_string(tr.curve.size()) + " epochs");
  return out;
}

void fusion_benefit(const fs::path& work) {
  const auto t0 = Clock::now();
  std::ostringstream log;
  const PipelineConfig cfg = load_config({});
  const FusionReport r = cmd_fuse_sim(cfg, work / "fusion_report.json", log);
  const bool ok = r.accuracy >= 0.9 && r.mpjpe_fused_px <= r.mpjpe_first_px && r.mpjpe_fused_px <= r.mpjpe_second_px;
  report(5, "Fusion benefit", ok, seconds_since(t0), 300,
         fmt("accuracy %.3f (need 0.9), 2D MPJPE fused %.2f px vs branches %.2f / %.2f px", r.accuracy,
             r.mpjpe_fused_px, r.mpjpe_first_px, r.mpjpe_second_px));
}

void fusion_label_grid() {
  const auto t0 = Clock::now();
  int checked = 0, wrong = 0;
  for (int i = 0; i <= 200; ++i)
    for (int j = 0; j <= 200; ++j) {
      const double a = 0.05 * i, b = 0.05 * j;
      const int expect = a > b ? 0 : 1;  // ties keep the second branch
      ++checked;
      if (fusion_label(a, b) != expect) ++wrong;
    }
  for (double a : {0.0, 1e-300, 1e-12, 3.0, 1e300}) {
    ++checked;
    if (fusion_label(a, a) != 1) ++wrong;
    ++checked;
    if (fusion_label(std::nextafter(a, 2e300), a) != 0) ++wrong;
  }
  report(6, "Fusion label rule", wrong == 0, seconds_since(t0), 1,
         std::to_string(checked) + " error pairs, " + std::to_string(wrong) + " mismatches");
}

void heatmap_round_trip() {
  const auto t0 = Clock::now();
  const HeatmapParams p;
  const double w = p.width * p.stride, h = p.height * p.stride, margin = 3 * p.sigma;
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> ux(0.0, w), uy(0.0, h);
  double worst_arg = 0.0, worst_soft = 0.0;
  int interior = 0;
  for (int i = 0; i < 1000; ++i) {
    KeypointSet k(1);
    k.coords.row(0) << ux(rng), uy(rng);
    k.visible(0) = true;
    k.confidence(0) = 1.0;
    const HeatmapStack s = render(k, p);
    const KeypointSet a = decode_argmax(s);
    worst_arg = std::max({worst_arg, std::abs(a.coords(0, 0) - k.coords(0, 0)), std::abs(a.coords(0, 1) - k.coords(0, 1))});
    const double x = k.coords(0, 0), y = k.coords(0, 1);
    if (x >= margin && x <= w - margin && y >= margin && y <= h - margin) {
      ++interior;
      const KeypointSet sa = decode_soft_argmax(s, 0.1);
      worst_soft = std::max(worst_soft, (sa.coords.row(0) - k.coords.row(0)).norm());
    }
  }
  report(7, "Heatmap round trip", worst_arg <= 0.5 * p.stride && worst_soft <= 0.1, seconds_since(t0), 10,
         fmt("argmax %.3f px per axis (limit %.1f), soft-argmax %.2e px on %.0f interior peaks (limit 0.1)", worst_arg,
             0.5 * p.stride, worst_soft, interior));
}

void pve_scale_invariance() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(808);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  double worst_change = 0.0, worst_s = 0.0;
  for (int i = 0; i < 50; ++i) {
    ShapeParams a, b;
    for (int k = 0; k < kNumBetas; ++k) {
      a.beta(k) = 1.5 * g(rng);
      b.beta(k) = 1.5 * g(rng);
    }
    const Eigen::MatrixX3d va = t_pose_vertices(mini(), a), vb = t_pose_vertices(mini(), b);
    const std::vector<Eigen::MatrixX3d> gt{va};
    const double base = pve_t_sc(std::vector<Eigen::MatrixX3d>{vb}, gt).mean;
    for (int c = 0; c < 5; ++c) {
      const double f = c == 0 ? 0.5 : c == 1 ? 2.0 : u(rng);
      worst_change = std::max(worst_change, std::abs(pve_t_sc(std::vector<Eigen::MatrixX3d>{f * vb}, gt).mean - base));
    }
    // s* as the root of the derivative of the centered squared error.
    const Eigen::MatrixX3d pc = vb.rowwise() - vb.colwise().mean();
    const Eigen::MatrixX3d gc = va.rowwise() - va.colwise().mean();
    const double s_num = oracle::bisect([&](double s) { return ((s * pc - gc).array() * pc.array()).sum(); }, 0.0, 10.0);
    worst_s = std::max(worst_s, std::abs(optimal_scale(vb, va) - s_num));
  }
  report(8, "PVE-T-SC scale invariance", worst_change < 1e-9 && worst_s < 1e-9, seconds_since(t0), 10,
         fmt("metric change %.2e mm (limit 1e-9), s* vs 1-D minimizer %.2e (limit 1e-9)", worst_change, worst_s));
}

void isocenter_closed_loop(const Trained& t) {
  const auto t0 = Clock::now();
  const BodyModel& model = mini();
  const ScannerCalibration calib = default_calibration();
  double worst_scan = 0.0, worst_align = 0.0;
  std::string detail;
  bool e2e_ok = t.ok;
  for (const char* name : {"abdomen", "thorax", "head"}) {
    const BodyRegion region = region_mask(model, name);
    double sum = 0.0;
    for (const HeldOut& p : t.held_out) {
      const PosedBody gt_body = place_on_table(model, p.theta, p.beta, p.extrinsics, calib);
      const IsoResult gt = thickness(gt_body, region, calib);

      // Naive scan: explicit loops over region vertices in scanner coordinates.
      double lo = 1e300, hi = -1e300;
      for (int v : region.vertices) {
        double hgt = 0.0;
        for (int r = 0; r < 3; ++r) {
          double s = calib.translation(r);
          for (int k = 0; k < 3; ++k) s += calib.rotation(r, k) * gt_body.vertices(v, k);
          hgt += calib.table_normal(r) * s;
        }
        lo = std::min(lo, hgt);
        hi = std::max(hi, hgt);
      }
      worst_scan = std::max({worst_scan, std::abs(gt.thickness_mm - (hi - lo) * 1e3),
                             std::abs(gt.center_height_mm - 0.5 * (hi + lo) * 1e3)});
      const IsoResult moved = thickness(shift_along_table(gt_body, calib, gt.displacement_mm * 1e-3), region, calib);
      worst_align = std::max(worst_align, std::abs(moved.center_height_mm - gt.isocenter_height_mm));

      const IsoResult est = thickness(place_on_table(model, p.pred.theta, p.pred.beta, p.extrinsics, calib),
                                      region, calib);
      sum += iso_error(est, gt.center_height_mm);
    }
    const double mean = sum / static_cast<double>(t.held_out.size());
    e2e_ok = e2e_ok && mean < 15.0;
    detail += name + fmt(" %.1f mm, ", mean);
  }
  report(9, "Isocentering closed loop", worst_scan < 1e-9 && worst_align < 1e-9 && e2e_ok, seconds_since(t0), 120,
         fmt("scan oracle %.2e mm, alignment %.2e mm (limits 1e-9); mean end-to-end error ", worst_scan, worst_align) +
             detail + std::to_string(t.held_out.size()) + " held-out samples (limit 15 mm)");
}

void determinism(const fs::path& work) {
  const auto t0 = Clock::now();
  std::ostringstream log;
  PipelineConfig cfg = load_config({}, {{"gen.count", "4000"}, {"gen.records_per_shard", "500"}, {"train.epochs", "2"}});
  const BodyModel& model = mini();
  const PoseBank bank = build_bank(cfg);
  auto concat = [&](const fs::path& dir) {
    const Manifest m = load_manifest(dir / "manifest.json");
    std::string all = slurp(dir / "manifest.json");
    for (const auto& s : m.shards) all += slurp(dir / s.file);
    return all;
  };
  GenConfig g = cfg.gen;
  g.workers = 1;
  generate_dataset(model, bank, g, work / "w1");
  g.workers = 4;
  generate_dataset(model, bank, g, work / "w4");
  const bool gen_same = concat(work / "w1") == concat(work / "w4");

  cmd_train(cfg, work / "w1", work / "run1" / "net.ckpt", log);
  cmd_train(cfg, work / "w1", work / "run2" / "net.ckpt", log);
  const bool train_same = slurp(work / "run1" / "net.ckpt") == slurp(work / "run2" / "net.ckpt") &&
                          slurp(work / "run1" / "loss.csv") == slurp(work / "run2" / "loss.csv");
  report(10, "Determinism and parallel equivalence", gen_same && train_same, seconds_since(t0), 1200,
         std::string("1 vs 4 workers ") + (gen_same ? "bitwise identical" : "DIFFER") + " (4000 records, 8 shards); " +
             "two training runs " + (train_same ? "bitwise identical" : "DIFFER"));
}

}  // namespace

int main() {
  TempDir work;
  try {
    lbs_oracle();
    procrustes_oracle();
    gradient_check();
    const Trained t = closed_loop_regression(work.path);
    fusion_benefit(work.path);
    fusion_label_grid();
    heatmap_round_trip();
    pve_scale_invariance();
    isocenter_closed_loop(t);
    determinism(work.path);
  } catch (const std::exception& e) {
    std::cerr << "acceptance aborted: " << e.what() << "\n";
    return 1;
  }
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
