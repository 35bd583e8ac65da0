#include <fstream>

#include "json.hpp"
#include "pmesh/body_model.hpp"
#include "pmesh/error.hpp"

namespace pmesh {

using nlohmann::json;

namespace {

constexpr int kModelFormatVersion = 1;

std::vector<double> read_array(const json& j, const char* key, std::size_t expected) {
  if (!j.contains(key)) throw FormatError(std::string("model file: missing array '") + key + "'");
  const json& a = j.at(key);
  if (!a.is_array()) throw FormatError(std::string("model file: '") + key + "' is not an array");
  if (a.size() != expected)
    throw FormatError(std::string("model file: '") + key + "' has " + std::to_string(a.size()) +
                      " entries, dims require " + std::to_string(expected));
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    if (!a[i].is_number())
      throw FormatError(std::string("model file: '") + key + "' entry " + std::to_string(i) + " is not a number");
    out[i] = a[i].get<double>();
  }
  return out;
}

template <typename Matrix>
Matrix row_major(const std::vector<double>& flat, Eigen::Index rows, Eigen::Index cols) {
  using Row = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  return Eigen::Map<const Row>(flat.data(), rows, cols).cast<typename Matrix::Scalar>();
}

int read_dim(const json& dims, const char* key) {
  if (!dims.contains(key) || !dims[key].is_number_integer() || dims[key].get<long long>() < 0)
    throw FormatError(std::string("model file: dims.") + key + " missing or invalid");
  return dims[key].get<int>();
}

template <typename Matrix>
std::vector<double> flatten(const Matrix& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = m.template cast<double>();
  return {r.data(), r.data() + r.size()};
}

}  // namespace

BodyModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("model file " + path.string() + ": parse error: " + e.what());
  }
  if (!j.is_object()) throw FormatError("model file: top level must be an object");
  if (!j.contains("version") || j["version"] != kModelFormatVersion)
    throw FormatError("model file: unsupported or missing version");
  if (!j.contains("dims") || !j["dims"].is_object()) throw FormatError("model file: missing 'dims' header");
  const json& dims = j["dims"];
  const int v = read_dim(dims, "vertices");
  const int f = read_dim(dims, "faces");
  const int nj = read_dim(dims, "joints");
  const int nb = read_dim(dims, "betas");
  const int np = read_dim(dims, "pose_basis");
  const auto sz = [](long long a, long long b) { return static_cast<std::size_t>(a * b); };

  BodyModelData d;
  d.template_vertices = row_major<Eigen::MatrixX3d>(read_array(j, "template_vertices", sz(v, 3)), v, 3);
  d.faces = row_major<Eigen::MatrixX3i>(read_array(j, "faces", sz(f, 3)), f, 3);
  d.shape_dirs = row_major<Eigen::MatrixXd>(read_array(j, "shape_dirs", sz(3LL * v, nb)), 3LL * v, nb);
  d.pose_dirs = row_major<Eigen::MatrixXd>(read_array(j, "pose_dirs", sz(3LL * v, np)), 3LL * v, np);
  d.joint_regressor = row_major<Eigen::MatrixXd>(read_array(j, "joint_regressor", sz(nj, v)), nj, v);
  d.skin_weights = row_major<Eigen::MatrixXd>(read_array(j, "skin_weights", sz(v, nj)), v, nj);
  for (double p : read_array(j, "kinematic_parents", static_cast<std::size_t>(nj))) d.kinematic_parents.push_back(static_cast<int>(p));

  if (!j.contains("keypoint_map") || !j["keypoint_map"].is_array())
    throw FormatError("model file: missing array 'keypoint_map'");
  for (const auto& e : j["keypoint_map"]) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_number_integer())
      throw FormatError("model file: keypoint_map entries must be [\"joint\"|\"vertex\", index]");
    const auto kind = e[0].get<std::string>();
    if (kind != "joint" && kind != "vertex") throw FormatError("model file: keypoint_map kind '" + kind + "'");
    d.keypoint_map.push_back({kind == "joint" ? KeypointSource::Kind::kJoint : KeypointSource::Kind::kVertex,
                              e[1].get<int>()});
  }
  if (j.contains("regions")) {
    if (!j["regions"].is_object()) throw FormatError("model file: 'regions' must be an object");
    for (const auto& [name, idx] : j["regions"].items()) {
      if (!idx.is_array()) throw FormatError("model file: region '" + name + "' is not an array");
      auto& dst = d.regions[name];
      for (const auto& i : idx) {
        if (!i.is_number_integer()) throw FormatError("model file: region '" + name + "' has a non-integer index");
        dst.push_back(i.get<int>());
      }
    }
  }
  return BodyModel(std::move(d));
}

void save_model(const BodyModel& model, const std::filesystem::path& path) {
  const auto& d = model.data();
  json j;
  j["version"] = kModelFormatVersion;
  j["dims"] = {{"vertices", model.num_vertices()}, {"faces", model.num_faces()},
               {"joints", model.num_joints()},     {"betas", d.shape_dirs.cols()},
               {"pose_basis", d.pose_dirs.cols()}, {"keypoints", model.num_keypoints()}};
  j["template_vertices"] = flatten(d.template_vertices);
  j["faces"] = flatten(d.faces);
  j["shape_dirs"] = flatten(d.shape_dirs);
  j["pose_dirs"] = flatten(d.pose_dirs);
  j["joint_regressor"] = flatten(d.joint_regressor);
  j["skin_weights"] = flatten(d.skin_weights);
  j["kinematic_parents"] = d.kinematic_parents;
  json kp = json::array();
  for (const auto& k : d.keypoint_map)
    kp.push_back({k.kind == KeypointSource::Kind::kJoint ? "joint" : "vertex", k.index});
  j["keypoint_map"] = kp;
  if (!d.regions.empty()) j["regions"] = d.regions;

  std::ofstream out(path);
  if (!out) throw IoError("cannot write model file " + path.string());
  out << j.dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace pmesh
