#include "pmesh/config.hpp"

#include <cstdio>
#include <fstream>

#include "pmesh/error.hpp"

namespace pmesh {

using nlohmann::json;

json gen_config_to_json(const GenConfig& c) {
  const auto& t = c.camera.translation;
  return {{"count", c.count},
          {"beta_std", c.beta_std},
          {"pose_noise_std", c.pose_noise_std},
          {"seed", c.seed},
          {"records_per_shard", c.records_per_shard},
          {"dtype", c.dtype == HeatmapDtype::kF16 ? "f16" : "f32"},
          {"max_attempts", c.max_attempts},
          {"intrinsics",
           {{"fx", c.intrinsics.fx},
            {"fy", c.intrinsics.fy},
            {"cx", c.intrinsics.cx},
            {"cy", c.intrinsics.cy},
            {"width", c.intrinsics.width},
            {"height", c.intrinsics.height}}},
          {"camera",
           {{"tx", {t[0].min, t[0].max}},
            {"ty", {t[1].min, t[1].max}},
            {"tz", {t[2].min, t[2].max}},
            {"fixed_rotation", c.camera.fixed_rotation}}},
          {"heatmap",
           {{"height", c.heatmap.height},
            {"width", c.heatmap.width},
            {"stride", c.heatmap.stride},
            {"sigma", c.heatmap.sigma}}}};
}

std::string config_hash(const json& j) {
  // nlohmann objects are key-sorted, so the compact dump is canonical.
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json default_config_json() {
  const PipelineConfig d;
  json g = gen_config_to_json(d.gen);
  g.erase("heatmap");
  g["workers"] = d.gen.workers;
  const auto noise = [](const BranchNoise& n) {
    return json{{"jitter_px", n.jitter_px},
                {"amplitude_min", n.amplitude_min},
                {"amplitude_max", n.amplitude_max},
                {"sigma_scale", n.sigma_scale},
                {"distractor", n.distractor}};
  };
  return {{"model", {{"source", d.model_source}, {"seed", d.model_seed}, {"path", ""}}},
          {"pose_bank", {{"size", d.pose_bank_size}, {"seed", d.pose_bank_seed}, {"path", ""}}},
          {"gen", g},
          {"heatmap",
           {{"height", d.gen.heatmap.height},
            {"width", d.gen.heatmap.width},
            {"stride", d.gen.heatmap.stride},
            {"sigma", d.gen.heatmap.sigma}}},
          {"regressor",
           {{"input", "heatmap"},
            {"pooled", d.input.pooled},
            {"temperature", d.input.temperature},
            {"hidden", d.hidden},
            {"init_seed", d.init_seed}}},
          {"train",
           {{"lr", d.train.learning_rate},
            {"batch", d.train.batch_size},
            {"epochs", d.train.epochs},
            {"seed", d.train.seed},
            {"w_param", d.train.loss.param},
            {"w_joint", d.train.loss.joint},
            {"optimizer", "adam"},
            {"momentum", d.train.momentum},
            {"jitter_px", d.train.jitter_px},
            {"val_count", d.val_count}}},
          {"metrics", {{"pck_alpha", d.pck_alpha}}},
          {"fusion",
           {{"frames", d.fusion_frames},
            {"holdout", d.fusion_holdout},
            {"seed", d.fusion_seed},
            {"epochs", d.fusion_train.epochs},
            {"batch", d.fusion_train.batch_size},
            {"hidden", d.fusion_train.hidden},
            {"lr", d.fusion_train.learning_rate},
            {"weight_decay", d.fusion_train.weight_decay},
            {"train_seed", d.fusion_train.seed},
            {"clean", noise(d.fusion.clean)},
            {"corrupted", noise(d.fusion.corrupted)}}},
          {"calibration", ""},
          {"region", d.region},
          {"output_dir", d.output_dir.string()}};
}

namespace {

bool compatible(const json& def, const json& v) {
  if (def.is_number()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  return def.type() == v.type();
}

void merge(json& base, const json& patch, const std::string& prefix) {
  if (!patch.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (const auto& [k, v] : patch.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (!base.contains(k)) throw ConfigError("unknown config key '" + key + "'");
    json& slot = base[k];
    if (slot.is_object()) {
      merge(slot, v, key);
    } else {
      if (!compatible(slot, v)) throw ConfigError("config key '" + key + "' has the wrong type");
      slot = v;
    }
  }
}

AxisRange range(const json& j, const char* name) {
  if (j.size() != 2) throw ConfigError(std::string("gen.camera.") + name + " must be [min, max]");
  return {j[0].get<double>(), j[1].get<double>()};
}

BranchNoise noise_from(const json& j) {
  return {j["jitter_px"].get<double>(), j["amplitude_min"].get<double>(), j["amplitude_max"].get<double>(),
          j["sigma_scale"].get<double>(), j["distractor"].get<double>()};
}

template <typename T>
T nonneg(const json& j, const std::string& key) {
  if (j.is_number_float() || j.get<double>() < 0) throw ConfigError(key + " must be a nonnegative integer");
  return j.get<T>();
}

void validate_noise(const BranchNoise& n, const std::string& key) {
  if (!(n.jitter_px >= 0.0) || !(n.amplitude_min > 0.0) || !(n.amplitude_max >= n.amplitude_min) ||
      !(n.amplitude_max <= 1.0) || !(n.sigma_scale > 0.0) || !(n.distractor >= 0.0 && n.distractor <= 1.0))
    throw ConfigError(key + ": need jitter >= 0, 0 < amplitude_min <= amplitude_max <= 1, sigma_scale > 0, "
                            "distractor in [0, 1]");
}

}  // namespace

PipelineConfig parse_config(const json& doc) {
  json merged = default_config_json();
  merge(merged, doc, "");
  PipelineConfig c;
  c.source = merged;
  try {
    const json& m = merged["model"];
    c.model_source = m["source"].get<std::string>();
    if (c.model_source != "mini" && c.model_source != "file")
      throw ConfigError("model.source must be 'mini' or 'file', got '" + c.model_source + "'");
    c.model_seed = nonneg<std::uint64_t>(m["seed"], "model.seed");
    c.model_path = m["path"].get<std::string>();
    if (c.model_source == "file" && c.model_path.empty()) throw ConfigError("model.path is required for source 'file'");

    const json& b = merged["pose_bank"];
    c.pose_bank_size = nonneg<std::size_t>(b["size"], "pose_bank.size");
    c.pose_bank_seed = nonneg<std::uint64_t>(b["seed"], "pose_bank.seed");
    c.pose_bank_path = b["path"].get<std::string>();
    if (c.pose_bank_path.empty() && c.pose_bank_size == 0) throw ConfigError("pose_bank.size must be positive");

    const json& h = merged["heatmap"];
    c.gen.heatmap = {h["height"].get<int>(), h["width"].get<int>(), h["stride"].get<double>(), h["sigma"].get<double>()};

    const json& g = merged["gen"];
    c.gen.count = nonneg<std::size_t>(g["count"], "gen.count");
    c.gen.beta_std = g["beta_std"].get<double>();
    c.gen.pose_noise_std = g["pose_noise_std"].get<double>();
    c.gen.seed = nonneg<std::uint64_t>(g["seed"], "gen.seed");
    c.gen.records_per_shard = nonneg<std::size_t>(g["records_per_shard"], "gen.records_per_shard");
    const auto dtype = g["dtype"].get<std::string>();
    if (dtype != "f16" && dtype != "f32") throw ConfigError("gen.dtype must be 'f16' or 'f32'");
    c.gen.dtype = dtype == "f16" ? HeatmapDtype::kF16 : HeatmapDtype::kF32;
    c.gen.max_attempts = g["max_attempts"].get<int>();
    c.gen.workers = g["workers"].get<int>();
    const json& in = g["intrinsics"];
    c.gen.intrinsics = {in["fx"].get<double>(), in["fy"].get<double>(), in["cx"].get<double>(),
                        in["cy"].get<double>(), in["width"].get<int>(),  in["height"].get<int>()};
    const json& cam = g["camera"];
    c.gen.camera.translation = {range(cam["tx"], "tx"), range(cam["ty"], "ty"), range(cam["tz"], "tz")};
    c.gen.camera.fixed_rotation = cam["fixed_rotation"].get<bool>();
    validate(c.gen);

    const json& r = merged["regressor"];
    const auto kind = r["input"].get<std::string>();
    if (kind != "heatmap" && kind != "coords") throw ConfigError("regressor.input must be 'heatmap' or 'coords'");
    c.input.kind = kind == "heatmap" ? InputKind::kHeatmap : InputKind::kCoords;
    c.input.pooled = r["pooled"].get<int>();
    c.input.temperature = r["temperature"].get<double>();
    c.input.heatmap = c.gen.heatmap;
    c.input.image_width = c.gen.intrinsics.width;
    c.input.image_height = c.gen.intrinsics.height;
    c.hidden = r["hidden"].get<std::vector<int>>();
    for (int w : c.hidden)
      if (w <= 0) throw ConfigError("regressor.hidden widths must be positive");
    c.init_seed = nonneg<std::uint64_t>(r["init_seed"], "regressor.init_seed");

    const json& t = merged["train"];
    c.train.learning_rate = t["lr"].get<double>();
    c.train.batch_size = t["batch"].get<int>();
    c.train.epochs = t["epochs"].get<int>();
    c.train.seed = nonneg<std::uint64_t>(t["seed"], "train.seed");
    c.train.loss = {t["w_param"].get<double>(), t["w_joint"].get<double>()};
    const auto opt = t["optimizer"].get<std::string>();
    if (opt == "sgd")
      c.train.optimizer = Optimizer::kSgd;
    else if (opt == "momentum")
      c.train.optimizer = Optimizer::kMomentum;
    else if (opt == "adam")
      c.train.optimizer = Optimizer::kAdam;
    else
      throw ConfigError("train.optimizer must be one of sgd, momentum, adam; got '" + opt + "'");
    c.train.momentum = t["momentum"].get<double>();
    c.train.jitter_px = t["jitter_px"].get<double>();
    c.val_count = nonneg<std::size_t>(t["val_count"], "train.val_count");
    validate(c.train);

    c.pck_alpha = merged["metrics"]["pck_alpha"].get<double>();
    if (!(c.pck_alpha > 0.0)) throw ConfigError("metrics.pck_alpha must be positive");

    const json& f = merged["fusion"];
    c.fusion.heatmap = c.gen.heatmap;
    c.fusion.clean = noise_from(f["clean"]);
    c.fusion.corrupted = noise_from(f["corrupted"]);
    validate_noise(c.fusion.clean, "fusion.clean");
    validate_noise(c.fusion.corrupted, "fusion.corrupted");
    c.fusion_frames = nonneg<std::size_t>(f["frames"], "fusion.frames");
    c.fusion_holdout = f["holdout"].get<double>();
    if (c.fusion_frames < 4) throw ConfigError("fusion.frames must be at least 4");
    if (!(c.fusion_holdout > 0.0 && c.fusion_holdout < 1.0)) throw ConfigError("fusion.holdout must be in (0, 1)");
    c.fusion_seed = nonneg<std::uint64_t>(f["seed"], "fusion.seed");
    c.fusion_train = {f["epochs"].get<int>(), f["batch"].get<int>(), f["hidden"].get<int>(),
                      f["lr"].get<double>(), f["weight_decay"].get<double>(),
                      nonneg<std::uint64_t>(f["train_seed"], "fusion.train_seed")};
    if (c.fusion_train.epochs <= 0 || c.fusion_train.batch_size <= 0 || c.fusion_train.hidden <= 0 ||
        !(c.fusion_train.learning_rate > 0.0) || !(c.fusion_train.weight_decay >= 0.0))
      throw ConfigError("fusion: epochs, batch, hidden and lr must be positive, weight_decay >= 0");

    c.calibration = merged["calibration"].get<std::string>();
    c.region = merged["region"].get<std::string>();
    c.output_dir = merged["output_dir"].get<std::string>();
    if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const InvariantError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

void apply_override(json& doc, const std::string& key, const std::string& value) {
  const json defaults = default_config_json();
  const json* def = &defaults;
  json* slot = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty() || !def->is_object() || !def->contains(part))
      throw ConfigError("unknown config key '" + key + "'");
    def = &(*def)[part];
    if (!slot->is_object()) *slot = json::object();
    slot = &(*slot)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (def->is_object()) throw ConfigError("config key '" + key + "' is a section, not a value");
  json v = json::parse(value, nullptr, false);
  if (v.is_discarded() || def->is_string()) v = value;
  if (!compatible(*def, v)) throw ConfigError("config key '" + key + "' cannot take the value '" + value + "'");
  *slot = v;
}

PipelineConfig load_config(const std::filesystem::path& file,
                           const std::vector<std::pair<std::string, std::string>>& overrides) {
  json doc = json::object();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file " + file.string());
    doc = json::parse(in, nullptr, false, true);
    if (doc.is_discarded()) throw ConfigError("config file " + file.string() + " is not valid JSON");
    if (!doc.is_object()) throw ConfigError("config file " + file.string() + " must hold a JSON object");
  }
  for (const auto& [k, v] : overrides) apply_override(doc, k, v);
  return parse_config(doc);
}

BodyModel build_model(const PipelineConfig& c) {
  return c.model_source == "mini" ? make_mini_model(c.model_seed) : load_model(c.model_path);
}

PoseBank build_bank(const PipelineConfig& c) {
  return c.pose_bank_path.empty() ? build_pose_bank(c.pose_bank_size, c.pose_bank_seed)
                                  : load_pose_bank(c.pose_bank_path);
}

}  // namespace pmesh
