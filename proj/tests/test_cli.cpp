#include <cstdlib>
#include <cstring>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "pmesh/error.hpp"
#include "pmesh/pipeline.hpp"
#include "temp_dir.hpp"

using namespace pmesh;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pmesh");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

bool has(const std::string& s, const std::string& what) { return s.find(what) != std::string::npos; }

std::string first_shard(const std::filesystem::path& dataset) {
  const json m = json::parse(slurp(dataset / "manifest.json"));
  return (dataset / m["shards"][0]["file"].get<std::string>()).string();
}

// Small shared dataset: 200 records, 20 held out.
const std::filesystem::path& small_dataset() {
  static TempDir dir;
  static const bool made = [] {
    const Run r = cli({"gen-data", "--out", (dir / "d").string(), "--count", "200", "--records_per_shard", "80"});
    REQUIRE(r.code == 0);
    return true;
  }();
  (void)made;
  static const std::filesystem::path p = dir / "d";
  return p;
}

}  // namespace

TEST_CASE("gen-data is deterministic and prints the config hash") {
  TempDir dir;
  const Run a = cli({"gen-data", "--out", (dir / "a").string(), "--count", "100", "--seed", "7"});
  const Run b = cli({"gen-data", "--out", (dir / "b").string(), "--count", "100", "--seed", "7"});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(dir / "a" / "manifest.json") == slurp(dir / "b" / "manifest.json"));
  CHECK(slurp(first_shard(dir / "a")) == slurp(first_shard(dir / "b")));
  CHECK(has(a.out, "config hash: "));
  CHECK(a.out.substr(0, 30) == b.out.substr(0, 30));
}

TEST_CASE("config errors exit with the config code") {
  TempDir dir;
  const auto missing = (dir / "nope.json").string();
  Run r = cli({"-c", missing, "gen-data", "--out", (dir / "x").string()});
  CHECK(r.code == kExitConfig);
  CHECK(has(r.err, missing));

  r = cli({"gen-data", "--out", (dir / "x").string(), "--count", "0"});
  CHECK(r.code == kExitConfig);
  CHECK(has(r.err, "count"));

  CHECK(cli({"gen-data", "--bogus", "1"}).code == kExitConfig);
  CHECK(cli({"gen-data", "--count"}).code == kExitConfig);
  CHECK(cli({"no-such-command"}).code == kExitConfig);
  CHECK(cli({}).code == kExitConfig);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("train writes checkpoint and curve; lr 0 warns about a flat curve") {
  TempDir dir;
  const auto& data = small_dataset();
  Run r = cli({"train", "--data", data.string(), "--checkpoint", (dir / "a" / "net.ckpt").string(), "--epochs", "3",
               "--batch", "16", "--hidden", "[32]"});
  REQUIRE(r.code == 0);
  CHECK(has(r.out, "training on 180 records, validating on 20"));
  CHECK_FALSE(has(r.out, "flat"));
  const std::string csv = slurp(dir / "a" / "loss.csv");
  CHECK(csv.rfind("epoch,loss,val_mpjpe_mm,val_pa_mpjpe_mm\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(load_checkpoint(dir / "a" / "net.ckpt").config_hash.size() == 16);

  r = cli({"train", "--data", data.string(), "--checkpoint", (dir / "b" / "net.ckpt").string(), "--epochs", "2",
           "--lr", "0", "--hidden", "[32]"});
  CHECK(r.code == kExitOk);
  CHECK(has(r.out, "warning: loss curve is flat"));
}

TEST_CASE("corrupted shard names the file and offset") {
  TempDir dir;
  std::filesystem::copy(small_dataset(), dir / "d");
  const std::string shard = first_shard(dir / "d");
  std::string bytes = slurp(shard);
  // A NaN in the first stored keypoint.
  const std::size_t pos = bytes.size() / 2;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  for (std::size_t i = 0; i < 64; i += 4) std::memcpy(&bytes[pos + i], &nan, 4);
  spit(shard, bytes);
  const Run r = cli({"train", "--data", (dir / "d").string(), "--checkpoint", (dir / "c.ckpt").string()});
  CHECK(r.code == kExitFormat);
  CHECK(has(r.err, std::filesystem::path(shard).filename().string()));
  CHECK(has(r.err, "offset"));

  spit(shard, bytes.substr(0, 100));
  CHECK(cli({"train", "--data", (dir / "d").string(), "--checkpoint", (dir / "c.ckpt").string()}).code ==
        kExitFormat);
  CHECK(cli({"train", "--data", (dir / "missing").string()}).code != kExitOk);
}

TEST_CASE("eval: oracle passthrough, trained checkpoint and header mismatch") {
  TempDir dir;
  const auto& data = small_dataset();
  Run r = cli({"eval", "--oracle", "--data", data.string(), "--out", (dir / "oracle.csv").string()});
  REQUIRE(r.code == 0);
  const std::string csv = slurp(dir / "oracle.csv");
  CHECK(csv.rfind("dataset,metric,units,mean,count\n", 0) == 0);
  CHECK(has(csv, "d,mpjpe_3d,mm,0,20\n"));
  CHECK(has(csv, "d,pve_t_sc,mm,0,20\n"));
  CHECK(has(csv, "d,pck@0.3,fraction,1,20\n"));
  std::istringstream rows(csv);
  std::string line;
  std::getline(rows, line);
  int n = 0;
  while (std::getline(rows, line)) {
    ++n;
    const double mean = std::stod(line.substr(line.rfind(',', line.rfind(',') - 1) + 1));
    if (has(line, ",mm,")) CHECK(mean < 1e-9);
    if (has(line, ",px,")) CHECK(mean < 1e-4);  // keypoints stored as f32
  }
  CHECK(n == 5);

  const Run t = cli({"train", "--data", data.string(), "--checkpoint", (dir / "net.ckpt").string(), "--epochs", "2",
                     "--hidden", "[32]"});
  REQUIRE(t.code == 0);
  r = cli({"eval", "--data", data.string(), "--checkpoint", (dir / "net.ckpt").string(), "--out",
           (dir / "m.csv").string()});
  CHECK(r.code == 0);
  CHECK(has(r.out, "evaluated 20 held-out records"));

  // A checkpoint built for 11 keypoints.
  RegressorNet net = load_checkpoint(dir / "net.ckpt");
  InputSpec spec = net.input;
  spec.joints = 11;
  save_checkpoint(make_regressor(spec, {8}, 1), dir / "eleven.ckpt");
  r = cli({"eval", "--data", data.string(), "--checkpoint", (dir / "eleven.ckpt").string(), "--out",
           (dir / "x.csv").string()});
  CHECK(r.code == kExitFormat);
  CHECK(has(r.err, "header mismatch"));
}

TEST_CASE("fuse-sim is reproducible and fusion is harmless without corruption") {
  TempDir dir;
  const Run a = cli({"fuse-sim", "--out", (dir / "a.json").string(), "--frames", "200", "--epochs", "20"});
  const Run b = cli({"fuse-sim", "--out", (dir / "b.json").string(), "--frames", "200", "--epochs", "20"});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  CHECK(std::filesystem::exists(dir / "fusion_classifier.json"));
  const json rep = json::parse(slurp(dir / "a.json"));
  CHECK(rep["test_frames"] == 50);
  CHECK(rep["mpjpe_px"]["fused"].get<double>() <= rep["mpjpe_px"]["first"].get<double>());
  CHECK(rep["mpjpe_px"]["fused"].get<double>() <= rep["mpjpe_px"]["second"].get<double>());

  const Run c = cli({"fuse-sim", "--out", (dir / "c.json").string(), "--frames", "200", "--epochs", "20",
                     "--fusion.corrupted.jitter_px", "1", "--fusion.corrupted.amplitude_min", "0.8",
                     "--fusion.corrupted.amplitude_max", "1", "--fusion.corrupted.sigma_scale", "1",
                     "--fusion.corrupted.distractor", "0"});
  REQUIRE(c.code == 0);
  const json clean = json::parse(slurp(dir / "c.json"))["mpjpe_px"];
  const double f = clean["fused"], p = clean["first"], q = clean["second"];
  // Same noise model on both branches: all three errors are of the jitter scale.
  CHECK(std::abs(p - q) < 0.3);
  CHECK(f < 1.2 * std::max(p, q));
  CHECK(f > 0.5 * std::min(p, q));
}

TEST_CASE("isocenter: oracle matches a direct thickness call; unknown region") {
  TempDir dir;
  const auto& data = small_dataset();
  const std::string shard = first_shard(data);
  save_calibration(ScannerCalibration{}, dir / "identity.json");

  std::ostringstream log;
  const PipelineConfig cfg = load_config({}, {{"calibration", (dir / "identity.json").string()}});
  const IsoOutputs o = cmd_isocenter(cfg, {}, shard, 4, true, log);

  const BodyModel model = build_model(cfg);
  const TrainingPair p = read_shard(shard, &model).at(4);
  const ScannerCalibration id;
  const PosedBody body = rest_on_table(transform_body(pose(model, p.theta, p.beta), p.extrinsics.rotation,
                                                      p.extrinsics.translation), id);
  const IsoResult direct = thickness(body, region_mask(model, "abdomen"), id);
  CHECK(o.result.thickness_mm == direct.thickness_mm);
  CHECK(o.result.center_height_mm == direct.center_height_mm);
  CHECK(o.result.displacement_mm == direct.displacement_mm);
  CHECK(o.error_mm == 0.0);

  Run r = cli({"isocenter", "--oracle", "--heatmaps", shard, "--record", "4", "--region", "thorax"});
  CHECK(r.code == 0);
  CHECK(has(r.out, "region: thorax"));
  CHECK(has(r.out, "residual_error_mm: 0.000"));

  r = cli({"isocenter", "--oracle", "--heatmaps", shard, "--region", "knee"});
  CHECK(r.code == kExitConfig);
  CHECK(has(r.err, "abdomen, head, thorax"));
  CHECK(cli({"isocenter", "--oracle", "--heatmaps", shard, "--record", "999"}).code == kExitConfig);
  spit(dir / "bad.json", R"({"rotation":[2,0,0,0,1,0,0,0,1],"translation":[0,0,0],)"
                         R"("table_normal":[0,1,0],"isocenter":[0,0,0],"table_height":0})");
  r = cli({"isocenter", "--oracle", "--heatmaps", shard, "--calibration", (dir / "bad.json").string()});
  CHECK(r.code == kExitFormat);
  CHECK(cli({"isocenter", "--oracle"}).code == kExitConfig);
}

TEST_CASE("grad-check and make-mini-model") {
  TempDir dir;
  Run r = cli({"grad-check", "--samples", "2", "--hidden", "[16]"});
  CHECK(r.code == 0);
  CHECK(has(r.out, "gradient check passed"));

  r = cli({"make-mini-model", "--seed", "4", "--out", (dir / "m.json").string()});
  REQUIRE(r.code == 0);
  const BodyModel loaded = load_model(dir / "m.json");
  const BodyModel made = make_mini_model(4);
  CHECK(loaded.data().template_vertices == made.data().template_vertices);
  CHECK(loaded.data().skin_weights == made.data().skin_weights);

  // The written model drives the rest of the pipeline.
  r = cli({"gen-data", "--out", (dir / "d").string(), "--count", "5", "--model.source", "file", "--model.path",
           (dir / "m.json").string()});
  CHECK(r.code == 0);
}

TEST_CASE("output root comes from the environment") {
  TempDir dir;
  ::setenv("PMESH_OUTPUT_ROOT", dir.path.c_str(), 1);
  const Run r = cli({"gen-data", "--count", "5", "--output_dir", "run1"});
  ::unsetenv("PMESH_OUTPUT_ROOT");
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(dir / "run1" / "dataset" / "manifest.json"));
}

TEST_CASE("exit code classes") {
  CHECK(exit_code(ConfigError("x")) == 2);
  CHECK(exit_code(FormatError("x")) == 3);
  CHECK(exit_code(InvariantError("f", "x")) == 3);
  CHECK(exit_code(DimensionError("x")) == 3);
  CHECK(exit_code(NumericError("x")) == 4);
  CHECK(exit_code(IoError("x")) == 5);
  CHECK(exit_code(std::runtime_error("x")) == 1);
}
