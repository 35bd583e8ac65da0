#include "pmesh/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "pmesh/error.hpp"
#include "pmesh/metrics.hpp"

namespace pmesh {

using nlohmann::json;

int fusion_label(double err_first, double err_second) {
  if (!(err_first >= 0.0) || !(err_second >= 0.0)) throw ConfigError("fusion_label: errors must be nonnegative numbers");
  return err_first > err_second ? 0 : 1;
}

HeatmapStack fuse(double score, const HeatmapStack& a, const HeatmapStack& b) {
  if (!(score >= 0.0 && score <= 1.0)) throw ConfigError("fuse: score outside [0, 1]");
  if (!a.same_layout(b)) throw DimensionError("fuse: heatmap stacks differ in layout");
  HeatmapStack out = a;
  out.values() = score * a.values() + (1.0 - score) * b.values();
  return out;
}

Eigen::VectorXd heatmap_features(const HeatmapStack& h) {
  Eigen::VectorXd f(kStatsPerJoint * h.joints());
  const double log_cells = std::log(static_cast<double>(h.height()) * h.width());
  for (int j = 0; j < h.joints(); ++j) {
    const auto row = h.values().row(j);
    const double m = row.maxCoeff(), s = row.sum();
    double entropy = 1.0, sharp = 0.0;
    if (s > 0.0) {
      double e = 0.0;
      for (Eigen::Index i = 0; i < row.size(); ++i) {
        const double p = row(i) / s;
        if (p > 0.0) e -= p * std::log(p);
      }
      entropy = e / log_cells;
      sharp = m / s;
    }
    f(3 * j) = m;
    f(3 * j + 1) = entropy;
    f(3 * j + 2) = sharp;
  }
  return f;
}

BranchPrediction make_branch(HeatmapStack h, Modality m) {
  BranchPrediction b;
  b.feature = heatmap_features(h);
  b.heatmaps = std::move(h);
  b.modality = m;
  return b;
}

FusionClassifier make_classifier(int groups, int hidden) {
  if (groups <= 0 || hidden <= 0) throw ConfigError("fusion classifier: sizes must be positive");
  constexpr int d = kStatsPerJoint;
  FusionClassifier c;
  c.groups = groups;
  c.feature_mean = Eigen::VectorXd::Zero(groups * d);
  c.feature_scale = Eigen::VectorXd::Ones(groups * d);
  c.attn_first = Eigen::VectorXd::Zero(d);
  c.attn_second = Eigen::VectorXd::Zero(d);
  c.bilinear = Eigen::MatrixXd::Zero(d, d);
  c.w1 = Eigen::MatrixXd::Zero(hidden, c.input_dim());
  c.b1 = Eigen::VectorXd::Zero(hidden);
  c.w2 = Eigen::VectorXd::Zero(hidden);
  return c;
}

namespace {

using GroupMatrix = Eigen::Matrix<double, Eigen::Dynamic, kStatsPerJoint, Eigen::RowMajor>;

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

struct Branch {
  GroupMatrix x;
  Eigen::VectorXd alpha;
  Eigen::Vector3d pooled;
};

struct Forward {
  Branch a, b;
  double gate = 0.5;
  Eigen::VectorXd z, h;
  double logit = 0.0;
};

Branch attend(const FusionClassifier& c, const Eigen::VectorXd& f, const Eigen::VectorXd& u) {
  Branch br;
  const Eigen::VectorXd x = (f - c.feature_mean).cwiseQuotient(c.feature_scale);
  br.x = Eigen::Map<const GroupMatrix>(x.data(), c.groups, kStatsPerJoint);
  const Eigen::VectorXd a = br.x * u;
  const Eigen::ArrayXd e = (a.array() - a.maxCoeff()).exp();
  br.alpha = e / e.sum();
  br.pooled = br.x.transpose() * br.alpha;
  return br;
}

Forward forward(const FusionClassifier& c, const Eigen::VectorXd& f1, const Eigen::VectorXd& f2) {
  if (f1.size() != c.feature_dim() || f2.size() != c.feature_dim())
    throw DimensionError("fusion classifier: feature dimension mismatch");
  constexpr int d = kStatsPerJoint;
  const int n = c.feature_dim();
  Forward fw;
  fw.a = attend(c, f1, c.attn_first);
  fw.b = attend(c, f2, c.attn_second);
  fw.gate = sigmoid(fw.a.pooled.dot(c.bilinear * fw.b.pooled) + c.gate_bias);
  fw.z.resize(c.input_dim());
  fw.z.segment(0, n) = Eigen::Map<const Eigen::VectorXd>(fw.a.x.data(), n);
  fw.z.segment(n, n) = Eigen::Map<const Eigen::VectorXd>(fw.b.x.data(), n);
  fw.z.segment<d>(2 * n) = fw.a.pooled;
  fw.z.segment<d>(2 * n + d) = fw.b.pooled;
  fw.z.segment<d>(2 * n + 2 * d) = fw.gate * (fw.a.pooled - fw.b.pooled);
  fw.h = (c.w1 * fw.z + c.b1).array().tanh();
  fw.logit = c.w2.dot(fw.h) + c.b2;
  return fw;
}

// Gradient of the attention-pooled vector p w.r.t. the attention vector u.
Eigen::Vector3d attention_grad(const Branch& br, const Eigen::Vector3d& dp) {
  const Eigen::VectorXd dalpha = br.x * dp;
  const Eigen::VectorXd da = br.alpha.cwiseProduct(dalpha.array().matrix() -
                                                   Eigen::VectorXd::Constant(dalpha.size(), br.alpha.dot(dalpha)));
  return br.x.transpose() * da;
}

}  // namespace

double classify(const FusionClassifier& c, const Eigen::VectorXd& f1, const Eigen::VectorXd& f2) {
  return sigmoid(forward(c, f1, f2).logit);
}

Eigen::VectorXd pack_parameters(const FusionClassifier& c) {
  const Eigen::Index n = 2 * 3 + 9 + 1 + c.w1.size() + c.b1.size() + c.w2.size() + 1;
  Eigen::VectorXd p(n);
  Eigen::Index o = 0;
  auto put = [&](const auto& m) {
    p.segment(o, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    o += m.size();
  };
  put(c.attn_first);
  put(c.attn_second);
  put(c.bilinear);
  p(o++) = c.gate_bias;
  put(c.w1);
  put(c.b1);
  put(c.w2);
  p(o++) = c.b2;
  return p;
}

void unpack_parameters(FusionClassifier& c, const Eigen::VectorXd& p) {
  if (p.size() != pack_parameters(c).size()) throw DimensionError("fusion classifier: parameter count mismatch");
  Eigen::Index o = 0;
  auto get = [&](auto& m) {
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = p.segment(o, m.size());
    o += m.size();
  };
  get(c.attn_first);
  get(c.attn_second);
  get(c.bilinear);
  c.gate_bias = p(o++);
  get(c.w1);
  get(c.b1);
  get(c.w2);
  c.b2 = p(o++);
}

double example_loss(const FusionClassifier& c, const FusionExample& ex, Eigen::VectorXd* grad) {
  constexpr int d = kStatsPerJoint;
  const int n = c.feature_dim();
  const Forward fw = forward(c, ex.first, ex.second);
  const double y = ex.label;
  // log(1 + e^x) evaluated without overflow.
  auto softplus = [](double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); };
  const double loss = y * softplus(-fw.logit) + (1.0 - y) * softplus(fw.logit);
  if (!grad) return loss;

  const double dlogit = sigmoid(fw.logit) - y;
  const Eigen::VectorXd dw2 = dlogit * fw.h;
  const Eigen::VectorXd da1 = (dlogit * c.w2).cwiseProduct((1.0 - fw.h.array().square()).matrix());
  const Eigen::MatrixXd dw1 = da1 * fw.z.transpose();
  const Eigen::VectorXd dz = c.w1.transpose() * da1;

  Eigen::Vector3d dpa = dz.segment<d>(2 * n), dpb = dz.segment<d>(2 * n + d);
  const Eigen::Vector3d dgv = dz.segment<d>(2 * n + 2 * d);
  const Eigen::Vector3d diff = fw.a.pooled - fw.b.pooled;
  dpa += fw.gate * dgv;
  dpb -= fw.gate * dgv;
  const double dq = dgv.dot(diff) * fw.gate * (1.0 - fw.gate);
  const Eigen::Matrix3d dm = dq * fw.a.pooled * fw.b.pooled.transpose();
  dpa += dq * (c.bilinear * fw.b.pooled);
  dpb += dq * (c.bilinear.transpose() * fw.a.pooled);

  FusionClassifier g = c;
  g.attn_first = attention_grad(fw.a, dpa);
  g.attn_second = attention_grad(fw.b, dpb);
  g.bilinear = dm;
  g.gate_bias = dq;
  g.w1 = dw1;
  g.b1 = da1;
  g.w2 = dw2;
  g.b2 = dlogit;
  *grad = pack_parameters(g);
  return loss;
}

FusionClassifier train_classifier(std::span<const FusionExample> data, const FusionTrainConfig& cfg,
                                  std::vector<double>* loss_curve) {
  if (data.empty()) throw ConfigError("fusion training: empty dataset");
  const auto ones = std::count_if(data.begin(), data.end(), [](const FusionExample& e) { return e.label == 1; });
  if (ones == 0 || ones == static_cast<std::ptrdiff_t>(data.size()))
    throw ConfigError("fusion training: need examples of both labels");
  if (cfg.epochs <= 0 || cfg.batch_size <= 0 || !(cfg.learning_rate > 0.0))
    throw ConfigError("fusion training: epochs, batch size and learning rate must be positive");
  const Eigen::Index dim = data[0].first.size();
  if (dim % kStatsPerJoint != 0) throw DimensionError("fusion training: feature size not a multiple of 3");

  FusionClassifier c = make_classifier(static_cast<int>(dim / kStatsPerJoint), cfg.hidden);
  // Shared standardization keeps the two branch inputs exchangeable.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim), sq = Eigen::VectorXd::Zero(dim);
  for (const auto& e : data) {
    if (e.first.size() != dim || e.second.size() != dim) throw DimensionError("fusion training: ragged features");
    mean += e.first + e.second;
    sq += e.first.cwiseAbs2() + e.second.cwiseAbs2();
  }
  const double n2 = 2.0 * static_cast<double>(data.size());
  mean /= n2;
  c.feature_mean = mean;
  c.feature_scale = (sq / n2 - mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-6);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < c.w1.size(); ++i) c.w1.data()[i] = normal(rng) / std::sqrt(double(c.input_dim()));
  for (Eigen::Index i = 0; i < c.w2.size(); ++i) c.w2(i) = normal(rng) / std::sqrt(double(cfg.hidden));

  Eigen::VectorXd params = pack_parameters(c);
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(params.size()), m2 = m1, grad, sum;
  const double b1 = 0.9, b2 = 0.999;
  long step = 0;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      sum = Eigen::VectorXd::Zero(params.size());
      for (std::size_t i = start; i < end; ++i) {
        epoch_loss += example_loss(c, data[order[i]], &grad);
        sum += grad;
      }
      sum /= static_cast<double>(end - start);
      sum += cfg.weight_decay * params;
      if (!sum.allFinite()) throw NumericError("fusion training: non-finite gradient at epoch " + std::to_string(epoch));
      ++step;
      m1 = b1 * m1 + (1 - b1) * sum;
      m2 = b2 * m2 + (1 - b2) * sum.cwiseAbs2();
      const double c1 = 1 - std::pow(b1, double(step)), c2 = 1 - std::pow(b2, double(step));
      params.array() -= cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + 1e-8);
      unpack_parameters(c, params);
    }
    if (loss_curve) loss_curve->push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return c;
}

double accuracy(const FusionClassifier& c, std::span<const FusionExample> data) {
  if (data.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& e : data) hit += ((classify(c, e.first, e.second) >= 0.5 ? 1 : 0) == e.label);
  return static_cast<double>(hit) / static_cast<double>(data.size());
}

namespace {

json to_json(const Eigen::MatrixXd& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Eigen::MatrixXd matrix_from(const json& j, const char* key) {
  if (!j.contains(key)) throw FormatError(std::string("fusion checkpoint: missing '") + key + "'");
  const auto& a = j.at(key);
  try {
    const auto rows = a.at("rows").get<Eigen::Index>(), cols = a.at("cols").get<Eigen::Index>();
    const auto data = a.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw FormatError(std::string("fusion checkpoint: '") + key + "' has inconsistent size");
    return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
  } catch (const json::exception& e) {
    throw FormatError(std::string("fusion checkpoint: '") + key + "': " + e.what());
  }
}

}  // namespace

void save_classifier(const FusionClassifier& c, const std::filesystem::path& path) {
  json j;
  j["format"] = "pmesh-fusion-classifier";
  j["version"] = 1;
  j["feature_spec"] = {{"joints", c.groups},
                       {"stats", {"peak", "entropy", "sharpness"}},
                       {"layout", "joint-major"},
                       {"entropy_normalizer", "log(cells)"}};
  j["feature_mean"] = to_json(c.feature_mean);
  j["feature_scale"] = to_json(c.feature_scale);
  j["attn_first"] = to_json(c.attn_first);
  j["attn_second"] = to_json(c.attn_second);
  j["bilinear"] = to_json(c.bilinear);
  j["gate_bias"] = c.gate_bias;
  j["w1"] = to_json(c.w1);
  j["b1"] = to_json(c.b1);
  j["w2"] = to_json(c.w2);
  j["b2"] = c.b2;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write classifier " + path.string());
  out << j.dump(1) << '\n';
}

FusionClassifier load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open classifier " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("fusion checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "pmesh-fusion-classifier") throw FormatError("fusion checkpoint: wrong format tag");
  if (!j.contains("feature_spec") || !j["feature_spec"].contains("joints"))
    throw FormatError("fusion checkpoint: missing feature_spec");
  FusionClassifier c;
  c.groups = j["feature_spec"]["joints"].get<int>();
  c.feature_mean = matrix_from(j, "feature_mean");
  c.feature_scale = matrix_from(j, "feature_scale");
  c.attn_first = matrix_from(j, "attn_first");
  c.attn_second = matrix_from(j, "attn_second");
  c.bilinear = matrix_from(j, "bilinear");
  c.gate_bias = j.value("gate_bias", 0.0);
  c.w1 = matrix_from(j, "w1");
  c.b1 = matrix_from(j, "b1");
  c.w2 = matrix_from(j, "w2");
  c.b2 = j.value("b2", 0.0);
  const int d = kStatsPerJoint;
  if (c.feature_mean.size() != c.feature_dim() || c.feature_scale.size() != c.feature_dim() ||
      c.attn_first.size() != d || c.attn_second.size() != d || c.bilinear.rows() != d || c.bilinear.cols() != d ||
      c.w1.cols() != c.input_dim() || c.b1.size() != c.w1.rows() || c.w2.size() != c.w1.rows())
    throw FormatError("fusion checkpoint: parameter shapes disagree with feature_spec");
  if (!pack_parameters(c).allFinite()) throw InvariantError("fusion classifier", "non-finite parameter");
  return c;
}

HeatmapStack simulate_branch(const KeypointSet& gt, const BranchNoise& noise, const HeatmapParams& params,
                             std::mt19937_64& rng) {
  std::normal_distribution<double> jitter(0.0, noise.jitter_px);
  std::uniform_real_distribution<double> amp(noise.amplitude_min, noise.amplitude_max);
  std::uniform_real_distribution<double> ux(0.0, params.width * params.stride), uy(0.0, params.height * params.stride);
  HeatmapParams p = params;
  p.sigma = params.sigma * noise.sigma_scale;

  HeatmapStack out(gt.size(), params.height, params.width, params.stride);
  for (int j = 0; j < gt.size(); ++j) {
    if (!gt.visible(j)) continue;
    KeypointSet k(2);
    k.coords.row(0) << gt.coords(j, 0) + jitter(rng), gt.coords(j, 1) + jitter(rng);
    k.visible(0) = true;
    const double a = amp(rng);
    if (noise.distractor > 0.0) {
      k.coords.row(1) << ux(rng), uy(rng);
      k.visible(1) = true;
    }
    const HeatmapStack h = render(k, p);
    out.values().row(j) = a * h.values().row(0);
    if (noise.distractor > 0.0)
      out.values().row(j) = out.values().row(j).max(noise.distractor * a * h.values().row(1));
  }
  return out;
}

SimFrame simulate_frame(const KeypointSet& gt, bool corrupt_first, const FusionSimConfig& cfg, std::mt19937_64& rng) {
  SimFrame f;
  f.first_corrupted = corrupt_first;
  f.first = simulate_branch(gt, corrupt_first ? cfg.corrupted : cfg.clean, cfg.heatmap, rng);
  f.second = simulate_branch(gt, corrupt_first ? cfg.clean : cfg.corrupted, cfg.heatmap, rng);
  f.label = fusion_label(mpjpe_2d(decode_argmax(f.first), gt).mean, mpjpe_2d(decode_argmax(f.second), gt).mean);
  return f;
}

}  // namespace pmesh
