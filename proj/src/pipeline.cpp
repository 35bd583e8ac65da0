#include "pmesh/pipeline.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>

#include "CLI11.hpp"
#include "json.hpp"
#include "pmesh/error.hpp"
#include "pmesh/fusion.hpp"
#include "pmesh/metrics.hpp"

namespace pmesh {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const InvariantError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e))
    return kExitFormat;
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return kExitIo;
  return 1;
}

fs::path output_root(const PipelineConfig& cfg) {
  const char* root = std::getenv("PMESH_OUTPUT_ROOT");
  if (root && *root && cfg.output_dir.is_relative()) return fs::path(root) / cfg.output_dir;
  return cfg.output_dir;
}

ScannerCalibration default_calibration() {
  ScannerCalibration c;
  c.rotation = overhead_rotation().transpose();
  c.translation = {0.0, 2.6, 0.0};
  c.table_normal = Eigen::Vector3d::UnitY();
  c.table_height = 0.0;
  c.isocenter = {0.0, 0.12, 0.0};
  return c;
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

ScannerCalibration calibration_of(const PipelineConfig& cfg, std::ostream& log) {
  if (cfg.calibration.empty()) {
    log << "calibration: built-in overhead rig (table at 0 m, isocenter 0.12 m above it)\n";
    return default_calibration();
  }
  return load_calibration(cfg.calibration);
}

}  // namespace

ShardHeader for_each_dataset_record(const fs::path& dir, const BodyModel& model, std::size_t first,
                                    std::size_t count, const std::function<void(TrainingPair&&)>& fn,
                                    Manifest* manifest) {
  const Manifest m = load_manifest(dir / "manifest.json");
  if (first > m.count) throw ConfigError("dataset has only " + std::to_string(m.count) + " records");
  const std::size_t end = count == 0 ? m.count : std::min(m.count, first + count);
  ShardHeader header;
  bool have_header = false;
  std::size_t seen = 0;
  for (const auto& s : m.shards) {
    if (s.first_id + s.count <= first || s.first_id >= end) continue;
    const ShardHeader h = read_shard(dir / s.file, [&](TrainingPair&& p) {
      if (p.id >= first && p.id < end) {
        ++seen;
        fn(std::move(p));
      }
    }, &model);
    if (have_header && !(h == header))
      throw FormatError("shard " + s.file + ": header differs from the other shards of " + dir.string());
    header = h;
    have_header = true;
  }
  if (seen != end - first)
    throw FormatError("dataset " + dir.string() + ": manifest lists " + std::to_string(end - first) +
                      " records in range, shards hold " + std::to_string(seen));
  if (manifest) *manifest = m;
  return header;
}

Dataset load_dataset(const fs::path& dir, const BodyModel& model, std::size_t first, std::size_t count) {
  Dataset d;
  d.header = for_each_dataset_record(dir, model, first, count,
                                     [&](TrainingPair&& p) { d.records.push_back(std::move(p)); }, &d.manifest);
  return d;
}

std::size_t holdout_count(const PipelineConfig& cfg, std::size_t n) {
  return std::min(cfg.val_count, n / 10);
}

fs::path cmd_gen_data(const PipelineConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  const BodyModel model = build_model(cfg);
  const PoseBank bank = build_bank(cfg);
  const Manifest m = generate_dataset(model, bank, cfg.gen, out_dir);
  log << "dataset: " << out_dir.string() << "\n"
      << "records: " << m.count << " in " << m.shards.size() << " shard(s), seed " << m.seed << "\n"
      << "dataset config hash: " << m.config_hash << "\n"
      << "visibility threshold: " << m.visibility_threshold << " of " << model.num_keypoints() << " keypoints\n";
  return out_dir / "manifest.json";
}

TrainOutputs cmd_train(const PipelineConfig& cfg, const fs::path& data_dir, const fs::path& checkpoint,
                       std::ostream& log) {
  const BodyModel model = build_model(cfg);
  const ShardHeader header = read_shard_header(data_dir / load_manifest(data_dir / "manifest.json").shards.at(0).file);
  InputSpec spec = cfg.input;
  spec.joints = static_cast<int>(header.joints);
  spec.heatmap = header.heatmap_params();
  spec.image_width = static_cast<int>(header.image_width);
  spec.image_height = static_cast<int>(header.image_height);

  std::vector<RegressionSample> samples;
  for_each_dataset_record(data_dir, model, 0, 0,
                          [&](TrainingPair&& p) { samples.push_back(make_sample(p, model, spec)); });
  const std::size_t n = samples.size();
  const std::size_t nval = holdout_count(cfg, n);
  if (n - nval == 0) throw ConfigError("dataset " + data_dir.string() + " leaves no training records");
  const std::span<const RegressionSample> all(samples);
  const auto tr = all.first(n - nval), val = all.last(nval);
  log << "training on " << tr.size() << " records, validating on " << val.size() << "\n";

  RegressorNet net = make_regressor(spec, cfg.hidden, cfg.init_seed);
  net.config_hash = cfg.hash();
  TrainOutputs out;
  out.curve = train(net, tr, cfg.train, model, val, [&](const EpochStats& e) {
    log << "epoch " << e.epoch << "  loss " << e.loss;
    if (e.val_pa_mpjpe_mm >= 0) log << "  val MPJPE " << e.val_mpjpe_mm << " mm  PA " << e.val_pa_mpjpe_mm << " mm";
    log << "\n";
  });
  out.flat = cfg.train.learning_rate == 0.0 ||
             std::abs(out.curve.back().loss - out.curve.front().loss) <= 1e-9 * std::abs(out.curve.front().loss);
  if (out.flat) log << "warning: loss curve is flat (learning rate " << cfg.train.learning_rate << ")\n";

  ensure_dir(checkpoint.parent_path().empty() ? fs::path(".") : checkpoint.parent_path());
  save_checkpoint(net, checkpoint);
  out.checkpoint = checkpoint;
  out.loss_csv = checkpoint.parent_path() / "loss.csv";
  write_loss_csv(out.curve, out.loss_csv);
  log << "checkpoint: " << checkpoint.string() << "\nloss curve: " << out.loss_csv.string() << "\n";
  return out;
}

EvalReport cmd_eval(const PipelineConfig& cfg, const fs::path& checkpoint, const fs::path& data_dir,
                    const fs::path& csv, bool oracle, std::ostream& log) {
  const BodyModel model = build_model(cfg);
  const Manifest m = load_manifest(data_dir / "manifest.json");
  const std::size_t nval = std::max<std::size_t>(1, holdout_count(cfg, m.count));
  const ShardHeader header = read_shard_header(data_dir / m.shards.at(0).file);

  RegressorNet net;
  if (!oracle) {
    net = load_checkpoint(checkpoint);
    const auto& in = net.input;
    const HeatmapParams hp = header.heatmap_params();
    if (in.joints != static_cast<int>(header.joints) || !(in.heatmap == hp))
      throw DimensionError("header mismatch: checkpoint expects " + std::to_string(in.joints) + " joints on " +
                           std::to_string(in.heatmap.height) + "x" + std::to_string(in.heatmap.width) +
                           " grids, dataset has " + std::to_string(header.joints) + " joints on " +
                           std::to_string(hp.height) + "x" + std::to_string(hp.width));
  }
  std::vector<EvalInput> items;
  items.reserve(nval);
  for_each_dataset_record(data_dir, model, m.count - nval, nval, [&](TrainingPair&& p) {
    const Prediction pr = oracle ? Prediction{p.theta, p.beta} : forward(net, p.heatmaps);
    items.push_back({pr, p.theta, p.beta, p.extrinsics, std::move(p.keypoints_2d)});
  });
  const EvalReport r = evaluate(items, model, header.intrinsics(), cfg.pck_alpha);

  ensure_dir(csv.parent_path().empty() ? fs::path(".") : csv.parent_path());
  std::ofstream out(csv);
  if (!out) throw IoError("cannot write " + csv.string());
  write_csv_header(out);
  const std::string name = data_dir.filename().string();
  std::ostringstream pck_name;
  pck_name << "pck@" << cfg.pck_alpha;
  out << std::setprecision(10) << name << ",mpjpe_3d,mm," << r.mpjpe_3d_mm << ',' << r.count << '\n'
      << name << ",pa_mpjpe,mm," << r.pa_mpjpe_mm << ',' << r.count << '\n'
      << name << ",pve_t_sc,mm," << r.pve_t_sc_mm << ',' << r.count << '\n'
      << name << ",mpjpe_2d,px," << r.mpjpe_2d_px << ',' << r.count << '\n'
      << name << ',' << pck_name.str() << ",fraction," << r.pck << ',' << r.count << '\n';
  if (!out) throw IoError("write failed for " + csv.string());
  log << "evaluated " << r.count << " held-out records" << (oracle ? " (ground-truth passthrough)" : "") << "\n"
      << "  MPJPE " << r.mpjpe_3d_mm << " mm\n  PA MPJPE " << r.pa_mpjpe_mm << " mm\n  PVE-T-SC " << r.pve_t_sc_mm
      << " mm\n  2D MPJPE " << r.mpjpe_2d_px << " px\n  " << pck_name.str() << ' ' << r.pck << "\n"
      << "metrics: " << csv.string() << "\n";
  return r;
}

FusionReport cmd_fuse_sim(const PipelineConfig& cfg, const fs::path& report, std::ostream& log) {
  const BodyModel model = build_model(cfg);
  const PoseBank bank = build_bank(cfg);
  const std::size_t n = cfg.fusion_frames;
  const std::size_t ntest = std::max<std::size_t>(2, static_cast<std::size_t>(std::round(cfg.fusion_holdout * n)));
  const std::size_t ntrain = n - ntest;

  std::mt19937_64 rng(cfg.fusion_seed);
  std::vector<SimFrame> frames;
  std::vector<KeypointSet> gt;
  std::vector<FusionExample> examples;
  frames.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    GenConfig g = cfg.gen;
    g.seed = cfg.fusion_seed;
    KeypointSet k = make_record(model, bank, g, i).keypoints_2d;
    frames.push_back(simulate_frame(k, i % 2 == 0, cfg.fusion, rng));
    examples.push_back({heatmap_features(frames.back().first), heatmap_features(frames.back().second),
                        frames.back().label});
    gt.push_back(std::move(k));
  }
  const std::span<const FusionExample> all(examples);
  const FusionClassifier clf = train_classifier(all.first(ntrain), cfg.fusion_train);

  FusionReport rep;
  rep.train_frames = ntrain;
  rep.test_frames = ntest;
  rep.accuracy = accuracy(clf, all.last(ntest));
  std::vector<KeypointSet> first, second, fused, truth;
  for (std::size_t i = ntrain; i < n; ++i) {
    const double s = classify(clf, examples[i].first, examples[i].second);
    first.push_back(decode_argmax(frames[i].first));
    second.push_back(decode_argmax(frames[i].second));
    fused.push_back(decode_argmax(fuse(s, frames[i].first, frames[i].second)));
    truth.push_back(gt[i]);
  }
  rep.mpjpe_first_px = mpjpe_2d(first, truth).mean;
  rep.mpjpe_second_px = mpjpe_2d(second, truth).mean;
  rep.mpjpe_fused_px = mpjpe_2d(fused, truth).mean;

  ensure_dir(report.parent_path().empty() ? fs::path(".") : report.parent_path());
  const json j = {{"config_hash", cfg.hash()},
                  {"train_frames", rep.train_frames},
                  {"test_frames", rep.test_frames},
                  {"accuracy", rep.accuracy},
                  {"mpjpe_px", {{"first", rep.mpjpe_first_px}, {"second", rep.mpjpe_second_px}, {"fused", rep.mpjpe_fused_px}}}};
  std::ofstream out(report);
  if (!out) throw IoError("cannot write " + report.string());
  out << j.dump(2) << '\n';
  save_classifier(clf, report.parent_path() / "fusion_classifier.json");
  log << "fusion simulation: " << ntrain << " training / " << ntest << " held-out frames\n"
      << "  classifier accuracy " << rep.accuracy << "\n"
      << "  2D MPJPE first " << rep.mpjpe_first_px << " px, second " << rep.mpjpe_second_px << " px, fused "
      << rep.mpjpe_fused_px << " px\n"
      << "report: " << report.string() << "\n";
  return rep;
}

PosedBody place_on_table(const BodyModel& model, const PoseParams& theta, const ShapeParams& beta,
                         const CameraExtrinsics& extr, const ScannerCalibration& calib) {
  return rest_on_table(transform_body(pose(model, theta, beta), extr.rotation, extr.translation), calib);
}

IsoOutputs cmd_isocenter(const PipelineConfig& cfg, const fs::path& checkpoint, const fs::path& shard,
                         std::size_t index, bool oracle, std::ostream& log) {
  const BodyModel model = build_model(cfg);
  const BodyRegion region = region_mask(model, cfg.region);
  const ScannerCalibration calib = calibration_of(cfg, log);
  const auto recs = read_shard(shard, &model);
  if (index >= recs.size())
    throw ConfigError("record index " + std::to_string(index) + " out of range; shard holds " +
                      std::to_string(recs.size()));
  const TrainingPair& p = recs[index];
  Prediction pr{p.theta, p.beta};
  if (!oracle) pr = forward(load_checkpoint(checkpoint), p.heatmaps);

  IsoOutputs out;
  out.result = thickness(place_on_table(model, pr.theta, pr.beta, p.extrinsics, calib), region, calib);
  out.gt_center_height_mm =
      thickness(place_on_table(model, p.theta, p.beta, p.extrinsics, calib), region, calib).center_height_mm;
  out.error_mm = iso_error(out.result, out.gt_center_height_mm);
  const auto& r = out.result;
  log << std::fixed << std::setprecision(3) << "region: " << r.region << "\n"
      << "thickness_mm: " << r.thickness_mm << "\n"
      << "center_height_mm: " << r.center_height_mm << "\n"
      << "isocenter_height_mm: " << r.isocenter_height_mm << "\n"
      << "displacement_mm: " << r.displacement_mm << (r.clamped ? " (clamped to table travel)" : "") << "\n"
      << "reference_center_height_mm: " << out.gt_center_height_mm << "\n"
      << "residual_error_mm: " << out.error_mm << "\n"
      << std::defaultfloat;
  return out;
}

GradCheckReport cmd_grad_check(const PipelineConfig& cfg, const fs::path& checkpoint, int samples,
                               std::ostream& log) {
  if (samples < 1) throw ConfigError("grad-check needs at least one sample");
  const BodyModel model = build_model(cfg);
  const PoseBank bank = build_bank(cfg);
  InputSpec spec = cfg.input;
  spec.joints = model.num_keypoints();
  spec.heatmap = storage_rounded(cfg.gen).heatmap;
  const RegressorNet net = checkpoint.empty() ? make_regressor(spec, cfg.hidden, cfg.init_seed) : load_checkpoint(checkpoint);
  const Mlp<double> net64 = net.mlp.cast<double>();
  GradCheckReport worst;
  for (int i = 0; i < samples; ++i) {
    const TrainingPair p = make_record(model, bank, cfg.gen, static_cast<std::uint64_t>(i));
    const RegressionSample s = make_sample(p, model, net.input);
    GradCheckOptions opt;
    opt.seed = static_cast<std::uint64_t>(i);
    const GradCheckReport r = grad_check(net64, s.input.cast<double>(), s.target, model, cfg.train.loss, opt);
    log << "sample " << i << ": max relative error " << r.max_rel_error << " over " << r.checked << " parameters\n";
    if (i == 0 || r.max_rel_error > worst.max_rel_error) worst = r;
  }
  worst.passed = worst.max_rel_error < GradCheckOptions{}.tolerance;
  log << "gradient check " << (worst.passed ? "passed" : "FAILED") << ": max relative error " << worst.max_rel_error
      << " (tolerance " << GradCheckOptions{}.tolerance << ")\n";
  return worst;
}

namespace {

// "--key value" / "--key=value" pairs left over by the option parser become
// config overrides. Bare keys that are not top-level are looked up in the
// subcommand's sections in order.
std::vector<std::pair<std::string, std::string>> overrides_from(const std::vector<std::string>& extra,
                                                                const std::vector<std::string>& sections) {
  const json defaults = default_config_json();
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extra.size(); ++i) {
    const std::string& a = extra[i];
    if (a.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + a + "'");
    std::string key = a.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 == extra.size()) throw ConfigError("option --" + key + " needs a value");
      value = extra[++i];
    }
    if (key.find('.') == std::string::npos && !defaults.contains(key))
      for (const auto& section : sections)
        if (defaults[section].contains(key)) {
          key = section + "." + key;
          break;
        }
    out.emplace_back(key, value);
  }
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Synthetic-data patient mesh pipeline: data generation, regression, fusion and isocentering"};
  app.require_subcommand(1);
  std::string config_file;
  app.add_option("-c,--config", config_file, "JSON config file; any config key can also be set with --key value");

  std::string data, checkpoint, out_path, shard;
  std::size_t record = 0;
  bool oracle = false;
  int samples = 10;
  std::uint64_t model_seed = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset (shards + manifest)");
  gen->add_option("--out", out_path, "Dataset directory (default <output>/dataset)");
  auto* tr = app.add_subcommand("train", "Train the regressor on a generated dataset");
  tr->add_option("--data", data, "Dataset directory (default <output>/dataset)");
  tr->add_option("--checkpoint", checkpoint, "Checkpoint to write (default <output>/regressor.ckpt)");
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the held-out records of a dataset");
  ev->add_option("--data", data, "Dataset directory (default <output>/dataset)");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint (default <output>/regressor.ckpt)");
  ev->add_option("--out", out_path, "Metrics CSV (default <output>/metrics.csv)");
  ev->add_flag("--oracle", oracle, "Use ground-truth parameters as predictions");
  auto* fz = app.add_subcommand("fuse-sim", "Simulate two heatmap branches and train the fusion classifier");
  fz->add_option("--out", out_path, "Report JSON (default <output>/fusion_report.json)");
  auto* iso = app.add_subcommand("isocenter", "Thickness and table displacement for one record");
  iso->add_option("--checkpoint", checkpoint, "Checkpoint (default <output>/regressor.ckpt)");
  iso->add_option("--heatmaps", shard, "Shard file holding the input heatmaps")->required();
  iso->add_option("--record", record, "Record index within the shard");
  iso->add_flag("--oracle", oracle, "Use the stored parameters instead of the regressor");
  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the regressor gradients");
  gc->add_option("--checkpoint", checkpoint, "Checkpoint to check (default: freshly initialized network)");
  gc->add_option("--samples", samples, "Number of samples");
  auto* mm = app.add_subcommand("make-mini-model", "Write the procedural body model to a file");
  mm->add_option("--seed", model_seed, "Model seed");
  mm->add_option("--out", out_path, "Model file (default <output>/mini_model.json)");
  for (auto* s : {gen, tr, ev, fz, iso, gc}) s->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    std::vector<std::string> sections;
    if (name == "gen-data") sections = {"gen", "heatmap"};
    else if (name == "train" || name == "grad-check") sections = {"train", "regressor"};
    else if (name == "eval") sections = {"metrics"};
    else if (name == "fuse-sim") sections = {"fusion"};
    const PipelineConfig cfg = load_config(config_file, overrides_from(sub->remaining(), sections));
    const fs::path root = output_root(cfg);
    out << "config hash: " << cfg.hash() << "\n";
    const fs::path data_dir = data.empty() ? root / "dataset" : fs::path(data);
    const fs::path ckpt = checkpoint.empty() ? root / "regressor.ckpt" : fs::path(checkpoint);

    if (name == "gen-data") {
      cmd_gen_data(cfg, out_path.empty() ? root / "dataset" : fs::path(out_path), out);
    } else if (name == "train") {
      cmd_train(cfg, data_dir, ckpt, out);
    } else if (name == "eval") {
      cmd_eval(cfg, ckpt, data_dir, out_path.empty() ? root / "metrics.csv" : fs::path(out_path), oracle, out);
    } else if (name == "fuse-sim") {
      cmd_fuse_sim(cfg, out_path.empty() ? root / "fusion_report.json" : fs::path(out_path), out);
    } else if (name == "isocenter") {
      cmd_isocenter(cfg, ckpt, shard, record, oracle, out);
    } else if (name == "grad-check") {
      if (!cmd_grad_check(cfg, checkpoint, samples, out).passed) return kExitNumeric;
    } else {
      const fs::path path = out_path.empty() ? root / "mini_model.json" : fs::path(out_path);
      ensure_dir(path.parent_path().empty() ? fs::path(".") : path.parent_path());
      save_model(make_mini_model(model_seed), path);
      out << "model: " << path.string() << "\n";
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e);
  }
  return kExitOk;
}

}  // namespace pmesh
