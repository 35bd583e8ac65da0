#include "pmesh/shard.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "pmesh/error.hpp"

namespace pmesh {

namespace {

constexpr char kMagic[4] = {'S', 'P', 'M', 'K'};
constexpr std::size_t kHeaderBytes = 4 + 2 + 2 + 3 * 4 + 2 * 4 + 4 * 4 + 2 * 4;
constexpr std::size_t kParamFloats = kPoseDim + kNumBetas + 12;

template <typename T>
void put(std::vector<unsigned char>& buf, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  buf.insert(buf.end(), b, b + sizeof(T));
}

template <typename T>
T get(const unsigned char* p) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

std::size_t cell_bytes(HeatmapDtype d) { return d == HeatmapDtype::kF16 ? 2 : 4; }

std::string where(const std::filesystem::path& path, std::uint64_t offset) {
  return "shard " + path.filename().string() + " at byte offset " + std::to_string(offset);
}

ShardHeader parse_header(const unsigned char* p, const std::filesystem::path& path) {
  if (std::memcmp(p, kMagic, 4) != 0) throw FormatError(where(path, 0) + ": bad magic (not an SPMK shard)");
  ShardHeader h;
  h.version = get<std::uint16_t>(p + 4);
  if (h.version != kShardVersion)
    throw FormatError(where(path, 4) + ": unsupported version " + std::to_string(h.version));
  const auto dtype = get<std::uint16_t>(p + 6);
  if (dtype > 1) throw FormatError(where(path, 6) + ": unknown heatmap dtype " + std::to_string(dtype));
  h.dtype = static_cast<HeatmapDtype>(dtype);
  h.joints = get<std::uint32_t>(p + 8);
  h.height = get<std::uint32_t>(p + 12);
  h.width = get<std::uint32_t>(p + 16);
  h.stride = get<float>(p + 20);
  h.sigma = get<float>(p + 24);
  h.fx = get<float>(p + 28);
  h.fy = get<float>(p + 32);
  h.cx = get<float>(p + 36);
  h.cy = get<float>(p + 40);
  h.image_width = get<std::uint32_t>(p + 44);
  h.image_height = get<std::uint32_t>(p + 48);
  if (h.joints == 0 || h.height == 0 || h.width == 0 || h.height > 4096 || h.width > 4096 || h.joints > 1024 ||
      !(h.stride > 0.0f) || !(h.sigma > 0.0f))
    throw FormatError(where(path, 8) + ": implausible header dimensions");
  return h;
}

}  // namespace

HeatmapParams ShardHeader::heatmap_params() const {
  return {static_cast<int>(height), static_cast<int>(width), stride, sigma};
}

CameraIntrinsics ShardHeader::intrinsics() const {
  return {fx, fy, cx, cy, static_cast<int>(image_width), static_cast<int>(image_height)};
}

std::size_t ShardHeader::record_payload_bytes() const {
  return 8 + 4 * kParamFloats + 4 * 3 * std::size_t{joints} +
         cell_bytes(dtype) * std::size_t{joints} * height * width;
}

ShardHeader make_header(const GenConfig& cfg, int joints) {
  ShardHeader h;
  h.dtype = cfg.dtype;
  h.joints = static_cast<std::uint32_t>(joints);
  h.height = static_cast<std::uint32_t>(cfg.heatmap.height);
  h.width = static_cast<std::uint32_t>(cfg.heatmap.width);
  h.stride = static_cast<float>(cfg.heatmap.stride);
  h.sigma = static_cast<float>(cfg.heatmap.sigma);
  h.fx = static_cast<float>(cfg.intrinsics.fx);
  h.fy = static_cast<float>(cfg.intrinsics.fy);
  h.cx = static_cast<float>(cfg.intrinsics.cx);
  h.cy = static_cast<float>(cfg.intrinsics.cy);
  h.image_width = static_cast<std::uint32_t>(cfg.intrinsics.width);
  h.image_height = static_cast<std::uint32_t>(cfg.intrinsics.height);
  return h;
}

ShardWriter::ShardWriter(const std::filesystem::path& path, const ShardHeader& header)
    : path_(path), header_(header), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw IoError("cannot create shard " + path.string());
  std::vector<unsigned char> b;
  b.insert(b.end(), kMagic, kMagic + 4);
  put(b, header.version);
  put(b, static_cast<std::uint16_t>(header.dtype));
  put(b, header.joints);
  put(b, header.height);
  put(b, header.width);
  put(b, header.stride);
  put(b, header.sigma);
  put(b, header.fx);
  put(b, header.fy);
  put(b, header.cx);
  put(b, header.cy);
  put(b, header.image_width);
  put(b, header.image_height);
  out_.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

ShardWriter::~ShardWriter() {
  if (out_.is_open()) out_.close();
}

void ShardWriter::write(const TrainingPair& p) {
  const auto& h = p.heatmaps;
  if (p.keypoints_2d.size() != static_cast<int>(header_.joints) || h.joints() != static_cast<int>(header_.joints) ||
      h.height() != static_cast<int>(header_.height) || h.width() != static_cast<int>(header_.width))
    throw DimensionError("record " + std::to_string(p.id) + " does not match shard header");
  buf_.clear();
  put(buf_, static_cast<std::uint32_t>(header_.record_payload_bytes()));
  put(buf_, p.id);
  for (int i = 0; i < kPoseDim; ++i) put(buf_, static_cast<float>(p.theta.theta(i)));
  for (int i = 0; i < kNumBetas; ++i) put(buf_, static_cast<float>(p.beta.beta(i)));
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) put(buf_, static_cast<float>(p.extrinsics.rotation(r, c)));
  for (int i = 0; i < 3; ++i) put(buf_, static_cast<float>(p.extrinsics.translation(i)));
  for (int j = 0; j < p.keypoints_2d.size(); ++j) {
    put(buf_, static_cast<float>(p.keypoints_2d.coords(j, 0)));
    put(buf_, static_cast<float>(p.keypoints_2d.coords(j, 1)));
    put(buf_, p.keypoints_2d.visible(j) ? 1.0f : 0.0f);
  }
  const auto& v = h.values();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const float f = static_cast<float>(v.data()[i]);
    if (header_.dtype == HeatmapDtype::kF16)
      put(buf_, Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(f)));
    else
      put(buf_, f);
  }
  out_.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  if (!out_) throw IoError("write failed for shard " + path_.string());
}

void ShardWriter::close() {
  out_.flush();
  if (!out_) throw IoError("write failed for shard " + path_.string());
  out_.close();
}

ShardHeader read_shard_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open shard " + path.string());
  unsigned char hb[kHeaderBytes];
  in.read(reinterpret_cast<char*>(hb), kHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kHeaderBytes)) throw FormatError(where(path, 0) + ": truncated header");
  return parse_header(hb, path);
}

ShardHeader read_shard(const std::filesystem::path& path, const std::function<void(TrainingPair&&)>& fn,
                       const BodyModel* model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open shard " + path.string());
  unsigned char hb[kHeaderBytes];
  in.read(reinterpret_cast<char*>(hb), kHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kHeaderBytes)) throw FormatError(where(path, 0) + ": truncated header");
  const ShardHeader h = parse_header(hb, path);
  if (model && static_cast<int>(h.joints) != model->num_keypoints())
    throw FormatError(where(path, 8) + ": header has " + std::to_string(h.joints) + " keypoints, model has " +
                      std::to_string(model->num_keypoints()));
  const std::size_t payload = h.record_payload_bytes();
  const HeatmapParams hp = h.heatmap_params();
  const CameraIntrinsics intr = h.intrinsics();
  const int nj = static_cast<int>(h.joints);
  std::vector<unsigned char> buf(payload);
  std::uint64_t offset = kHeaderBytes;

  while (true) {
    unsigned char lb[4];
    in.read(reinterpret_cast<char*>(lb), 4);
    if (in.gcount() == 0 && in.eof()) break;
    if (in.gcount() != 4) throw FormatError(where(path, offset) + ": truncated record length");
    const auto len = get<std::uint32_t>(lb);
    if (len != payload)
      throw FormatError(where(path, offset) + ": record length " + std::to_string(len) + ", header implies " +
                        std::to_string(payload));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(payload));
    if (in.gcount() != static_cast<std::streamsize>(payload)) throw FormatError(where(path, offset) + ": truncated record");

    const unsigned char* p = buf.data();
    TrainingPair r;
    r.id = get<std::uint64_t>(p);
    p += 8;
    auto next = [&p] {
      const float v = get<float>(p);
      p += 4;
      return static_cast<double>(v);
    };
    for (int i = 0; i < kPoseDim; ++i) r.theta.theta(i) = next();
    for (int i = 0; i < kNumBetas; ++i) r.beta.beta(i) = next();
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) r.extrinsics.rotation(a, b) = next();
    for (int i = 0; i < 3; ++i) r.extrinsics.translation(i) = next();
    r.keypoints_2d = KeypointSet(nj);
    for (int j = 0; j < nj; ++j) {
      r.keypoints_2d.coords(j, 0) = next();
      r.keypoints_2d.coords(j, 1) = next();
      const double vis = next();
      if (vis != 0.0 && vis != 1.0) throw FormatError(where(path, offset) + ": visibility flag is not 0 or 1");
      r.keypoints_2d.visible(j) = vis == 1.0;
      r.keypoints_2d.confidence(j) = vis;
    }
    r.heatmaps = HeatmapStack(nj, hp.height, hp.width, hp.stride);
    auto& v = r.heatmaps.values();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (h.dtype == HeatmapDtype::kF16) {
        v.data()[i] = static_cast<double>(static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(get<std::uint16_t>(p))));
        p += 2;
      } else {
        v.data()[i] = next();
      }
    }
    if (!r.theta.theta.allFinite() || !r.beta.beta.allFinite() || !r.extrinsics.translation.allFinite() ||
        !r.extrinsics.rotation.allFinite() || !v.allFinite() || (v < 0.0).any())
      throw FormatError(where(path, offset) + ": record " + std::to_string(r.id) + " holds non-finite or negative values");

    if (model) {
      const KeypointSet k = derive_keypoints(*model, r, intr);
      if ((k.visible != r.keypoints_2d.visible).any() || (k.coords - r.keypoints_2d.coords).cwiseAbs().maxCoeff() > 1e-6)
        throw FormatError(where(path, offset) + ": record " + std::to_string(r.id) +
                          " keypoints disagree with its stored pose and camera");
      HeatmapStack expect = render(r.keypoints_2d, hp);
      quantize(expect, h.dtype);
      if ((expect.values() - v).abs().maxCoeff() > 1e-9)
        throw FormatError(where(path, offset) + ": record " + std::to_string(r.id) +
                          " heatmaps disagree with its keypoints");
    }
    fn(std::move(r));
    offset += 4 + payload;
  }
  return h;
}

std::vector<TrainingPair> read_shard(const std::filesystem::path& path, const BodyModel* model) {
  std::vector<TrainingPair> out;
  read_shard(path, [&](TrainingPair&& p) { out.push_back(std::move(p)); }, model);
  return out;
}

}  // namespace pmesh
