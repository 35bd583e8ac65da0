#include "pmesh/regressor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

#include "json.hpp"
#include "pmesh/camera.hpp"
#include "pmesh/error.hpp"
#include "pmesh/metrics.hpp"

namespace pmesh {

using nlohmann::json;

void validate(const InputSpec& s) {
  if (s.joints <= 0) throw ConfigError("input.joints must be positive");
  validate(s.heatmap);
  if (s.kind == InputKind::kHeatmap) {
    if (s.pooled <= 0 || s.heatmap.height % s.pooled != 0 || s.heatmap.width % s.pooled != 0)
      throw ConfigError("input.pooled must divide the heatmap resolution");
  } else {
    if (s.image_width <= 0 || s.image_height <= 0) throw ConfigError("input image size must be positive");
    if (!(s.temperature > 0.0)) throw ConfigError("input.temperature must be positive");
  }
}

RegressorNet make_regressor(const InputSpec& input, const std::vector<int>& hidden, std::uint64_t seed,
                            bool zero_last) {
  validate(input);
  std::vector<int> widths{input.size()};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(kRegressorOutputs);
  RegressorNet net;
  net.input = input;
  net.mlp = Mlp<float>::xavier(widths, seed, zero_last);
  return net;
}

namespace {

void check_stack(const HeatmapStack& h, const InputSpec& s) {
  if (h.joints() != s.joints || h.height() != s.heatmap.height || h.width() != s.heatmap.width)
    throw DimensionError("heatmap stack " + std::to_string(h.joints()) + "x" + std::to_string(h.height()) + "x" +
                         std::to_string(h.width()) + " does not match the network input spec " +
                         std::to_string(s.joints) + "x" + std::to_string(s.heatmap.height) + "x" +
                         std::to_string(s.heatmap.width));
}

void write_coords(const KeypointSet& k, const InputSpec& s, Eigen::VectorXf& out) {
  for (int j = 0; j < s.joints; ++j) {
    if (!k.visible(j)) {
      out(2 * j) = out(2 * j + 1) = 0.0f;
      continue;
    }
    out(2 * j) = static_cast<float>(2.0 * k.coords(j, 0) / s.image_width - 1.0);
    out(2 * j + 1) = static_cast<float>(2.0 * k.coords(j, 1) / s.image_height - 1.0);
  }
}

// Block means of a 1-D Gaussian profile sampled at cell centers.
Eigen::ArrayXd pooled_profile(double mu, int cells, int pooled, double stride, double sigma) {
  const int f = cells / pooled;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(pooled);
  for (int c = 0; c < cells; ++c) {
    const double d = cell_center(c, stride) - mu;
    out(c / f) += std::exp(-d * d * inv);
  }
  return out / f;
}

}  // namespace

Eigen::VectorXf regressor_input(const HeatmapStack& h, const InputSpec& s) {
  check_stack(h, s);
  Eigen::VectorXf out(s.size());
  if (s.kind == InputKind::kCoords) {
    write_coords(decode_soft_argmax(h, s.temperature), s, out);
    return out;
  }
  const int p = s.pooled, fh = h.height() / p, fw = h.width() / p;
  const double norm = 1.0 / (fh * fw);
  for (int j = 0; j < s.joints; ++j) {
    const auto g = h.grid(j);
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c)
        out(j * p * p + r * p + c) = static_cast<float>(g.block(r * fh, c * fw, fh, fw).sum() * norm);
  }
  return out;
}

Eigen::VectorXf regressor_input(const KeypointSet& k, const InputSpec& s) {
  if (k.size() != s.joints) throw DimensionError("keypoint count does not match the network input spec");
  Eigen::VectorXf out = Eigen::VectorXf::Zero(s.size());
  if (s.kind == InputKind::kCoords) {
    write_coords(k, s, out);
    return out;
  }
  const int p = s.pooled;
  const auto& hp = s.heatmap;
  for (int j = 0; j < s.joints; ++j) {
    if (!k.visible(j)) continue;
    const Eigen::ArrayXd px = pooled_profile(k.coords(j, 0), hp.width, p, hp.stride, hp.sigma);
    const Eigen::ArrayXd py = pooled_profile(k.coords(j, 1), hp.height, p, hp.stride, hp.sigma);
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) out(j * p * p + r * p + c) = static_cast<float>(py(r) * px(c));
  }
  return out;
}

namespace {

Prediction unpack(const Eigen::Ref<const Eigen::VectorXd>& y) {
  Prediction p;
  p.theta.theta = y.head<kPoseDim>();
  p.beta.beta = y.segment<kNumBetas>(kPoseDim);
  return p;
}

}  // namespace

Prediction forward(const RegressorNet& net, const HeatmapStack& h) {
  const Eigen::VectorXf x = regressor_input(h, net.input);
  const Eigen::MatrixXf y = net.mlp.forward(x);
  if (!y.allFinite()) throw NumericError("network produced a non-finite output");
  return unpack(y.col(0).cast<double>());
}

PosedBody infer_mesh(const RegressorNet& net, const HeatmapStack& h, const BodyModel& model) {
  const Prediction p = forward(net, h);
  return pose(model, p.theta, p.beta);
}

RegressionTarget make_target(const BodyModel& model, const PoseParams& theta, const ShapeParams& beta) {
  return {theta, beta, forward_kinematics(model, theta, beta).posed_joints};
}

double regression_loss(const Eigen::Ref<const Eigen::VectorXd>& pred, const RegressionTarget& truth,
                       const BodyModel& model, const LossWeights& w, Eigen::VectorXd* grad) {
  if (pred.size() != kRegressorOutputs) throw DimensionError("prediction must have 82 entries");
  Eigen::VectorXd t(kRegressorOutputs);
  t << truth.theta.theta, truth.beta.beta;
  const Eigen::VectorXd diff = pred - t;
  double loss = w.param * diff.squaredNorm();
  if (grad) *grad = 2.0 * w.param * diff;
  if (w.joint > 0.0) {
    const Prediction p = unpack(pred);
    const Kinematics kin = forward_kinematics(model, p.theta, p.beta);
    const Eigen::MatrixX3d d = kin.posed_joints - truth.joints;
    const double nj = static_cast<double>(d.rows());
    loss += w.joint * d.squaredNorm() / nj;
    if (grad) {
      Eigen::VectorXd gt(kPoseDim), gb(kNumBetas);
      posed_joints_backward(model, kin, (2.0 * w.joint / nj) * d, gt, gb);
      grad->head<kPoseDim>() += gt;
      grad->segment<kNumBetas>(kPoseDim) += gb;
    }
  }
  return loss;
}

void validate(const TrainConfig& c) {
  if (!(c.learning_rate >= 0.0) || !std::isfinite(c.learning_rate)) throw ConfigError("train.learning_rate must be >= 0");
  if (c.batch_size <= 0) throw ConfigError("train.batch_size must be positive");
  if (c.epochs <= 0) throw ConfigError("train.epochs must be positive");
  if (!(c.loss.param >= 0.0) || !(c.loss.joint >= 0.0)) throw ConfigError("train.loss weights must be >= 0");
  if (c.loss.param == 0.0 && c.loss.joint == 0.0) throw ConfigError("train.loss weights cannot both be zero");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("train.momentum must be in [0, 1)");
  if (!(c.jitter_px >= 0.0)) throw ConfigError("train.jitter_px must be >= 0");
}

RegressionSample make_sample(const TrainingPair& pair, const BodyModel& model, const InputSpec& spec) {
  RegressionSample s;
  s.id = pair.id;
  s.input = regressor_input(pair.heatmaps, spec);
  s.keypoints = pair.keypoints_2d;
  s.target = make_target(model, pair.theta, pair.beta);
  return s;
}

std::vector<Prediction> predict(const RegressorNet& net, std::span<const RegressionSample> data) {
  std::vector<Prediction> out;
  out.reserve(data.size());
  const std::size_t chunk = 256;
  Eigen::MatrixXf x;
  for (std::size_t s = 0; s < data.size(); s += chunk) {
    const std::size_t n = std::min(chunk, data.size() - s);
    x.resize(net.input.size(), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) x.col(static_cast<Eigen::Index>(i)) = data[s + i].input;
    const Eigen::MatrixXd y = net.mlp.forward(x).cast<double>();
    for (std::size_t i = 0; i < n; ++i) out.push_back(unpack(y.col(static_cast<Eigen::Index>(i))));
  }
  return out;
}

std::pair<double, double> joint_errors(std::span<const Prediction> pred, std::span<const RegressionSample> data,
                                       const BodyModel& model) {
  if (pred.size() != data.size()) throw DimensionError("prediction count differs from sample count");
  if (data.empty()) return {0.0, 0.0};
  std::vector<Eigen::MatrixX3d> p, g;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Eigen::MatrixX3d a = forward_kinematics(model, pred[i].theta, pred[i].beta).posed_joints;
    Eigen::MatrixX3d b = data[i].target.joints;
    a.rowwise() -= Eigen::RowVector3d(a.row(0));
    b.rowwise() -= Eigen::RowVector3d(b.row(0));
    p.push_back(std::move(a));
    g.push_back(std::move(b));
  }
  return {mpjpe_3d(p, g).mean, pa_mpjpe(p, g).mean};
}

std::pair<double, double> joint_errors(const RegressorNet& net, std::span<const RegressionSample> data,
                                       const BodyModel& model) {
  const auto pred = predict(net, data);
  return joint_errors(pred, data, model);
}

namespace {

struct OptimizerState {
  std::vector<DenseLayer<float>> m, v;
  long step = 0;
};

void update(Mlp<float>& net, const std::vector<DenseLayer<float>>& g, OptimizerState& st, const TrainConfig& c) {
  if (st.m.empty()) {
    for (const auto& l : net.layers) {
      DenseLayer<float> z;
      z.weight = Eigen::MatrixXf::Zero(l.weight.rows(), l.weight.cols());
      z.bias = Eigen::VectorXf::Zero(l.bias.size());
      st.m.push_back(z);
      st.v.push_back(z);
    }
  }
  ++st.step;
  const float lr = static_cast<float>(c.learning_rate);
  auto apply = [&](auto& p, const auto& grad, auto& m, auto& v) {
    switch (c.optimizer) {
      case Optimizer::kSgd:
        p.array() -= lr * grad.array();
        break;
      case Optimizer::kMomentum:
        m.array() = static_cast<float>(c.momentum) * m.array() + grad.array();
        p.array() -= lr * m.array();
        break;
      case Optimizer::kAdam: {
        const float b1 = 0.9f, b2 = 0.999f;
        const float c1 = 1.0f - std::pow(b1, static_cast<float>(st.step));
        const float c2 = 1.0f - std::pow(b2, static_cast<float>(st.step));
        m.array() = b1 * m.array() + (1.0f - b1) * grad.array();
        v.array() = b2 * v.array() + (1.0f - b2) * grad.array().square();
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + 1e-8f);
        break;
      }
    }
  };
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    apply(net.layers[k].weight, g[k].weight, st.m[k].weight, st.v[k].weight);
    apply(net.layers[k].bias, g[k].bias, st.m[k].bias, st.v[k].bias);
  }
}

}  // namespace

std::vector<EpochStats> train(RegressorNet& net, std::span<const RegressionSample> data, const TrainConfig& cfg,
                              const BodyModel& model, std::span<const RegressionSample> val,
                              const std::function<void(const EpochStats&)>& on_epoch) {
  validate(cfg);
  if (data.empty()) throw ConfigError("training set is empty");
  for (const auto& s : data)
    if (s.input.size() != net.input.size()) throw DimensionError("sample input size does not match the network");

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  OptimizerState opt;
  std::vector<EpochStats> curve;
  Eigen::MatrixXf x, gout;
  Eigen::VectorXd grad;
  Mlp<float>::Cache cache;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int batch = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch) {
      const std::size_t n = std::min(order.size() - start, static_cast<std::size_t>(cfg.batch_size));
      x.resize(net.input.size(), static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        const auto& s = data[order[start + i]];
        if (cfg.jitter_px > 0.0) {
          KeypointSet k = s.keypoints;
          for (int j = 0; j < k.size(); ++j) {
            k.coords(j, 0) += cfg.jitter_px * jitter(rng);
            k.coords(j, 1) += cfg.jitter_px * jitter(rng);
          }
          x.col(static_cast<Eigen::Index>(i)) = regressor_input(k, net.input);
        } else {
          x.col(static_cast<Eigen::Index>(i)) = s.input;
        }
      }
      const Eigen::MatrixXf y = net.mlp.forward(x, cache);
      gout.resize(y.rows(), y.cols());
      for (std::size_t i = 0; i < n; ++i) {
        const auto& s = data[order[start + i]];
        const double l = regression_loss(y.col(static_cast<Eigen::Index>(i)).cast<double>(), s.target, model,
                                         cfg.loss, &grad);
        if (!std::isfinite(l) || !grad.allFinite())
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                             ", record " + std::to_string(s.id) + " (try a lower learning rate)");
        total += l;
        gout.col(static_cast<Eigen::Index>(i)) = (grad / static_cast<double>(n)).cast<float>();
      }
      update(net.mlp, net.mlp.backward(cache, gout), opt, cfg);
    }
    EpochStats st;
    st.epoch = epoch;
    st.loss = total / static_cast<double>(data.size());
    if (!val.empty()) std::tie(st.val_mpjpe_mm, st.val_pa_mpjpe_mm) = joint_errors(net, val, model);
    curve.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return curve;
}

EvalReport evaluate(std::span<const EvalInput> items, const BodyModel& model, const CameraIntrinsics& intr,
                    double pck_alpha) {
  if (items.empty()) throw ConfigError("evaluation set is empty");
  std::vector<Eigen::MatrixX3d> pj, gj, pv, gv;
  std::vector<KeypointSet> pk, gk;
  std::vector<double> torso;
  for (const auto& it : items) {
    const PosedBody p = pose(model, it.prediction.theta, it.prediction.beta);
    const PosedBody g = pose(model, it.theta, it.beta);
    const Eigen::RowVector3d shift = g.joints.row(0) - p.joints.row(0);
    pj.push_back(p.joints.rowwise() - Eigen::RowVector3d(p.joints.row(0)));
    gj.push_back(g.joints.rowwise() - Eigen::RowVector3d(g.joints.row(0)));
    pv.push_back(t_pose_vertices(model, it.prediction.beta));
    gv.push_back(t_pose_vertices(model, it.beta));
    const Projection proj = project(p.keypoints_3d.rowwise() + shift, intr, it.extrinsics);
    KeypointSet k(static_cast<int>(proj.pixels.rows()));
    k.coords = proj.pixels;
    k.visible = proj.visible;
    k.confidence = proj.visible.cast<double>();
    pk.push_back(std::move(k));
    gk.push_back(it.keypoints);
    torso.push_back(torso_diameter(it.keypoints));
  }
  EvalReport r;
  r.count = items.size();
  r.mpjpe_3d_mm = mpjpe_3d(pj, gj).mean;
  r.pa_mpjpe_mm = pa_mpjpe(pj, gj).mean;
  r.pve_t_sc_mm = pve_t_sc(pv, gv).mean;
  r.mpjpe_2d_px = mpjpe_2d(pk, gk).mean;
  r.pck = pck(pk, gk, pck_alpha, torso).mean;
  return r;
}

double relative_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

GradCheckReport grad_check(const Mlp<double>& net, const Eigen::VectorXd& input, const RegressionTarget& truth,
                           const BodyModel& model, const LossWeights& w, const GradCheckOptions& opt) {
  if (!(opt.tolerance > 0.0) || !(opt.step > 0.0)) throw ConfigError("grad_check: tolerance and step must be positive");
  Mlp<double>::Cache cache;
  const Eigen::MatrixXd y = net.forward(input, cache);
  Eigen::VectorXd gy;
  const double floor = 1e-6 * std::max(1.0, std::abs(regression_loss(y.col(0), truth, model, w, &gy)));
  auto grads = net.backward(cache, gy);
  if (opt.tamper) opt.tamper(grads);

  Mlp<double> probe = net;
  auto loss_at = [&] { return regression_loss(probe.forward(input).col(0), truth, model, w); };
  std::mt19937_64 rng(opt.seed);
  GradCheckReport rep;
  rep.layer_max_rel_error.assign(net.layers.size(), 0.0);
  auto check_tensor = [&](std::size_t layer, double* param, const double* analytic, Eigen::Index size) {
    const Eigen::Index n = std::min<Eigen::Index>(size, opt.samples_per_tensor);
    std::uniform_int_distribution<Eigen::Index> pick(0, size - 1);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::Index i = size <= opt.samples_per_tensor ? k : pick(rng);
      const double keep = param[i];
      param[i] = keep + opt.step;
      const double hi = loss_at();
      param[i] = keep - opt.step;
      const double lo = loss_at();
      param[i] = keep;
      const double e = relative_error(analytic[i], (hi - lo) / (2.0 * opt.step), floor);
      rep.layer_max_rel_error[layer] = std::max(rep.layer_max_rel_error[layer], e);
      ++rep.checked;
    }
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    check_tensor(l, probe.layers[l].weight.data(), grads[l].weight.data(), probe.layers[l].weight.size());
    check_tensor(l, probe.layers[l].bias.data(), grads[l].bias.data(), probe.layers[l].bias.size());
  }
  rep.max_rel_error = *std::max_element(rep.layer_max_rel_error.begin(), rep.layer_max_rel_error.end());
  rep.passed = rep.max_rel_error < opt.tolerance;
  return rep;
}

namespace {

json input_to_json(const InputSpec& s) {
  return {{"kind", s.kind == InputKind::kHeatmap ? "heatmap" : "coords"},
          {"joints", s.joints},
          {"pooled", s.pooled},
          {"height", s.heatmap.height},
          {"width", s.heatmap.width},
          {"stride", s.heatmap.stride},
          {"sigma", s.heatmap.sigma},
          {"image_width", s.image_width},
          {"image_height", s.image_height},
          {"temperature", s.temperature}};
}

InputSpec input_from_json(const json& j) {
  InputSpec s;
  const auto kind = j.at("kind").get<std::string>();
  if (kind != "heatmap" && kind != "coords") throw FormatError("checkpoint: unknown input kind '" + kind + "'");
  s.kind = kind == "heatmap" ? InputKind::kHeatmap : InputKind::kCoords;
  s.joints = j.at("joints").get<int>();
  s.pooled = j.at("pooled").get<int>();
  s.heatmap.height = j.at("height").get<int>();
  s.heatmap.width = j.at("width").get<int>();
  s.heatmap.stride = j.at("stride").get<double>();
  s.heatmap.sigma = j.at("sigma").get<double>();
  s.image_width = j.at("image_width").get<int>();
  s.image_height = j.at("image_height").get<int>();
  s.temperature = j.at("temperature").get<double>();
  return s;
}

void put_f32(std::string& blob, float v) {
  unsigned char b[4];
  std::memcpy(b, &v, 4);
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + 4);
  blob.append(reinterpret_cast<const char*>(b), 4);
}

float get_f32(const char* p) {
  unsigned char b[4];
  std::memcpy(b, p, 4);
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + 4);
  float v;
  std::memcpy(&v, b, 4);
  return v;
}

}  // namespace

void save_checkpoint(const RegressorNet& net, const std::filesystem::path& path) {
  std::string blob;
  json layers = json::array();
  for (const auto& l : net.mlp.layers) {
    layers.push_back({{"in", l.in()}, {"out", l.out()},
                      {"activation", l.activation == Activation::kSoftplus ? "softplus" : "identity"}});
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put_f32(blob, l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put_f32(blob, l.bias(r));
  }
  json h;
  h["format"] = "pmesh-regressor";
  h["version"] = 1;
  h["input"] = input_to_json(net.input);
  h["layers"] = layers;
  h["outputs"] = {{"theta", kPoseDim}, {"beta", kNumBetas}};
  h["config_hash"] = net.config_hash;
  h["dtype"] = "f32-le";
  h["blob_bytes"] = blob.size();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << h.dump() << '\n';
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

RegressorNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  RegressorNet net;
  std::size_t blob_bytes = 0;
  try {
    const json h = json::parse(line);
    if (h.at("format") != "pmesh-regressor") throw FormatError("checkpoint " + path.string() + ": wrong format tag");
    if (h.at("version") != 1) throw FormatError("checkpoint " + path.string() + ": unsupported version");
    if (h.at("dtype") != "f32-le") throw FormatError("checkpoint " + path.string() + ": unsupported dtype");
    net.input = input_from_json(h.at("input"));
    net.config_hash = h.value("config_hash", "");
    blob_bytes = h.at("blob_bytes").get<std::size_t>();
    for (const auto& l : h.at("layers")) {
      DenseLayer<float> d;
      d.weight.resize(l.at("out").get<Eigen::Index>(), l.at("in").get<Eigen::Index>());
      d.bias.resize(d.weight.rows());
      const auto act = l.at("activation").get<std::string>();
      if (act != "softplus" && act != "identity") throw FormatError("checkpoint: unknown activation '" + act + "'");
      d.activation = act == "softplus" ? Activation::kSoftplus : Activation::kIdentity;
      net.mlp.layers.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw FormatError("checkpoint " + path.string() + ": bad header: " + e.what());
  }
  std::size_t expect = 0;
  for (const auto& l : net.mlp.layers) expect += 4 * static_cast<std::size_t>(l.weight.size() + l.bias.size());
  if (expect != blob_bytes) throw FormatError("checkpoint " + path.string() + ": blob size disagrees with layers");
  std::string blob(blob_bytes, '\0');
  in.read(blob.data(), static_cast<std::streamsize>(blob_bytes));
  if (static_cast<std::size_t>(in.gcount()) != blob_bytes) throw FormatError("checkpoint " + path.string() + ": truncated");
  const char* p = blob.data();
  for (auto& l : net.mlp.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c, p += 4) l.weight(r, c) = get_f32(p);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r, p += 4) l.bias(r) = get_f32(p);
  }
  try {
    net.mlp.check();
  } catch (const InvariantError& e) {
    throw FormatError("checkpoint " + path.string() + ": " + e.what());
  }
  if (net.mlp.input_dim() != net.input.size() || net.mlp.output_dim() != kRegressorOutputs)
    throw FormatError("checkpoint " + path.string() + ": layers do not match the input spec");
  return net;
}

void write_loss_csv(const std::vector<EpochStats>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,loss,val_mpjpe_mm,val_pa_mpjpe_mm\n" << std::setprecision(10);
  for (const auto& e : curve) {
    out << e.epoch << ',' << e.loss << ',';
    if (e.val_mpjpe_mm >= 0.0) out << e.val_mpjpe_mm;
    out << ',';
    if (e.val_pa_mpjpe_mm >= 0.0) out << e.val_pa_mpjpe_mm;
    out << '\n';
  }
}

}  // namespace pmesh
