#include "pmesh/synthgen.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "pmesh/config.hpp"
#include "pmesh/error.hpp"
#include "pmesh/shard.hpp"

namespace pmesh {

using nlohmann::json;

void validate(const GenConfig& c) {
  if (c.count < 1) throw ConfigError("gen.count must be at least 1");
  if (!(c.beta_std > 0.0) || !std::isfinite(c.beta_std)) throw ConfigError("gen.beta_std must be positive");
  if (!(c.pose_noise_std >= 0.0) || !std::isfinite(c.pose_noise_std))
    throw ConfigError("gen.pose_noise_std must be nonnegative");
  if (c.records_per_shard < 1) throw ConfigError("gen.records_per_shard must be at least 1");
  if (c.workers < 1) throw ConfigError("gen.workers must be at least 1");
  if (c.max_attempts < 1) throw ConfigError("gen.max_attempts must be at least 1");
  try {
    validate(c.intrinsics);
  } catch (const InvariantError& e) {
    throw ConfigError(std::string("gen.") + e.what());
  }
  validate(c.camera);
  validate(c.heatmap);
}

namespace {

std::uint64_t splitmix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double f32(double x) { return static_cast<double>(static_cast<float>(x)); }

template <typename Derived>
void round_f32(Eigen::MatrixBase<Derived>& m) {
  m = m.template cast<float>().template cast<double>();
}

int visibility_threshold(int joints) { return (joints + 1) / 2; }

}  // namespace

std::uint64_t record_seed(std::uint64_t seed, std::uint64_t id) { return splitmix(splitmix(seed) ^ id); }

GenConfig storage_rounded(const GenConfig& cfg) {
  GenConfig c = cfg;
  c.intrinsics.fx = f32(c.intrinsics.fx);
  c.intrinsics.fy = f32(c.intrinsics.fy);
  c.intrinsics.cx = f32(c.intrinsics.cx);
  c.intrinsics.cy = f32(c.intrinsics.cy);
  c.heatmap.stride = f32(c.heatmap.stride);
  c.heatmap.sigma = f32(c.heatmap.sigma);
  return c;
}

void quantize(HeatmapStack& h, HeatmapDtype dtype) {
  auto& v = h.values();
  if (dtype == HeatmapDtype::kF32) {
    v = v.cast<float>().cast<double>();
  } else {
    for (Eigen::Index i = 0; i < v.size(); ++i)
      v.data()[i] = static_cast<double>(static_cast<float>(Eigen::half(static_cast<float>(v.data()[i]))));
  }
}

KeypointSet derive_keypoints(const BodyModel& model, const TrainingPair& pair, const CameraIntrinsics& intr) {
  const PosedBody body = pose(model, pair.theta, pair.beta);
  const Projection proj = project(body.keypoints_3d, intr, pair.extrinsics);
  KeypointSet k(static_cast<int>(proj.pixels.rows()));
  k.coords = proj.pixels;
  round_f32(k.coords);
  k.visible = proj.visible;
  k.confidence = proj.visible.cast<double>();
  return k;
}

TrainingPair sample_pair(const BodyModel& model, const PoseBank& bank, const GenConfig& cfg, std::mt19937_64& rng,
                         std::uint64_t id) {
  validate(cfg);
  validate(bank);
  const GenConfig c = storage_rounded(cfg);
  std::normal_distribution<double> noise(0.0, 1.0);
  const int need = visibility_threshold(model.num_keypoints());
  for (int attempt = 0; attempt < c.max_attempts; ++attempt) {
    std::size_t idx = 0;
    if (bank.weights.empty()) {
      idx = std::uniform_int_distribution<std::size_t>(0, bank.poses.size() - 1)(rng);
    } else {
      idx = std::discrete_distribution<std::size_t>(bank.weights.begin(), bank.weights.end())(rng);
    }
    TrainingPair p;
    p.id = id;
    p.theta = bank.poses[idx];
    for (int i = 0; i < kPoseDim; ++i) p.theta.theta(i) += c.pose_noise_std * noise(rng);
    for (int i = 0; i < kNumBetas; ++i) p.beta.beta(i) = c.beta_std * noise(rng);
    p.extrinsics = sample_camera(c.camera, rng);
    round_f32(p.theta.theta);
    round_f32(p.beta.beta);
    round_f32(p.extrinsics.rotation);
    round_f32(p.extrinsics.translation);

    p.keypoints_2d = derive_keypoints(model, p, c.intrinsics);
    if (p.keypoints_2d.num_visible() < need) continue;
    p.heatmaps = render(p.keypoints_2d, c.heatmap);
    quantize(p.heatmaps, c.dtype);
    return p;
  }
  throw ConfigError("record " + std::to_string(id) + ": no draw with at least " + std::to_string(need) +
                    " visible keypoints in " + std::to_string(c.max_attempts) +
                    " attempts (check camera translation ranges)");
}

TrainingPair make_record(const BodyModel& model, const PoseBank& bank, const GenConfig& cfg, std::uint64_t id) {
  std::mt19937_64 rng(record_seed(cfg.seed, id));
  return sample_pair(model, bank, cfg, rng, id);
}

namespace {

// Runs task(i) for i in [0, n) on `workers` threads; rethrows the first failure.
template <typename Task>
void parallel_for(std::size_t n, int workers, Task task) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int extra = std::max(0, std::min(workers, static_cast<int>(n)) - 1);
  std::vector<std::thread> pool;
  for (int t = 0; t < extra; ++t) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

void for_each_record(const BodyModel& model, const PoseBank& bank, const GenConfig& cfg, std::uint64_t first,
                     std::size_t count, int workers, const std::function<void(TrainingPair&&)>& fn) {
  validate(cfg);
  const std::size_t block = 64 * static_cast<std::size_t>(std::max(1, workers));
  std::vector<TrainingPair> buf;
  for (std::size_t start = 0; start < count; start += block) {
    const std::size_t n = std::min(block, count - start);
    buf.assign(n, TrainingPair{});
    parallel_for(n, workers, [&](std::size_t i) { buf[i] = make_record(model, bank, cfg, first + start + i); });
    for (auto& p : buf) fn(std::move(p));
  }
}

Manifest generate_dataset(const BodyModel& model, const PoseBank& bank, const GenConfig& cfg,
                          const std::filesystem::path& out_dir) {
  validate(cfg);
  validate(bank);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create dataset directory " + out_dir.string() + ": " + ec.message());

  const json cfg_json = gen_config_to_json(cfg);
  Manifest m;
  m.seed = cfg.seed;
  m.count = cfg.count;
  m.config_hash = config_hash(cfg_json);
  m.config_json = cfg_json.dump();
  m.visibility_threshold = visibility_threshold(model.num_keypoints());
  const std::size_t shards = (cfg.count + cfg.records_per_shard - 1) / cfg.records_per_shard;
  for (std::size_t s = 0; s < shards; ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "shard-%05zu.spmk", s);
    const std::uint64_t first = s * cfg.records_per_shard;
    m.shards.push_back({name, std::min<std::size_t>(cfg.records_per_shard, cfg.count - first), first});
  }

  const ShardHeader header = make_header(cfg, model.num_keypoints());
  std::mutex mu;
  std::vector<std::uint64_t> failed;
  parallel_for(shards, cfg.workers, [&](std::size_t s) {
    const auto& info = m.shards[s];
    ShardWriter w(out_dir / info.file, header);
    for (std::size_t i = 0; i < info.count; ++i) {
      const std::uint64_t id = info.first_id + i;
      try {
        w.write(make_record(model, bank, cfg, id));
      } catch (const ConfigError&) {
        std::lock_guard lock(mu);
        failed.push_back(id);
      }
    }
    w.close();
  });
  if (!failed.empty()) {
    std::sort(failed.begin(), failed.end());
    std::string ids;
    for (std::size_t i = 0; i < failed.size() && i < 20; ++i) ids += (i ? ", " : "") + std::to_string(failed[i]);
    throw ConfigError(std::to_string(failed.size()) + " record(s) exhausted visibility rejection (ids " + ids +
                      (failed.size() > 20 ? ", ..." : "") + "); check camera translation ranges");
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  json j;
  j["format"] = "pmesh-dataset";
  j["version"] = 1;
  j["seed"] = m.seed;
  j["count"] = m.count;
  j["config_hash"] = m.config_hash;
  j["visibility_threshold"] = m.visibility_threshold;
  j["shards"] = json::array();
  for (const auto& s : m.shards) j["shards"].push_back({{"file", s.file}, {"count", s.count}, {"first_id", s.first_id}});
  j["config"] = m.config_json.empty() ? json::object() : json::parse(m.config_json);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json j;
  try {
    in >> j;
    if (j.at("format") != "pmesh-dataset") throw FormatError("manifest " + path.string() + ": wrong format tag");
    Manifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.count = j.at("count").get<std::size_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.visibility_threshold = j.at("visibility_threshold").get<int>();
    for (const auto& s : j.at("shards"))
      m.shards.push_back({s.at("file").get<std::string>(), s.at("count").get<std::size_t>(),
                          s.at("first_id").get<std::uint64_t>()});
    if (j.contains("config")) m.config_json = j["config"].dump();
    std::size_t listed = 0;
    for (const auto& s : m.shards) listed += s.count;
    if (m.shards.empty() || listed != m.count)
      throw FormatError("manifest " + path.string() + ": shards list " + std::to_string(listed) + " of " +
                        std::to_string(m.count) + " records");
    return m;
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace pmesh
