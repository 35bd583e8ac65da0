#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <vector>

#include "pmesh/synthgen.hpp"

namespace pmesh {

// Shard layout, little-endian:
//   "SPMK" u16 version u16 dtype u32 joints u32 height u32 width f32 stride f32 sigma
//   f32 fx f32 fy f32 cx f32 cy u32 image_width u32 image_height
//   records: u32 payload bytes, u64 id, 72 f32 theta, 10 f32 beta,
//            12 f32 extrinsics (row-major R then t), joints x (u, v, vis) f32,
//            joints*height*width heatmap cells (f16 or f32)

inline constexpr std::uint16_t kShardVersion = 1;

struct ShardHeader {
  std::uint16_t version = kShardVersion;
  HeatmapDtype dtype = HeatmapDtype::kF16;
  std::uint32_t joints = 0, height = 0, width = 0;
  float stride = 0.0f, sigma = 0.0f;
  float fx = 0.0f, fy = 0.0f, cx = 0.0f, cy = 0.0f;
  std::uint32_t image_width = 0, image_height = 0;

  HeatmapParams heatmap_params() const;
  CameraIntrinsics intrinsics() const;
  std::size_t record_payload_bytes() const;
  friend bool operator==(const ShardHeader&, const ShardHeader&) = default;
};

ShardHeader make_header(const GenConfig& cfg, int joints);

class ShardWriter {
 public:
  ShardWriter(const std::filesystem::path& path, const ShardHeader& header);
  ~ShardWriter();
  ShardWriter(const ShardWriter&) = delete;
  ShardWriter& operator=(const ShardWriter&) = delete;

  void write(const TrainingPair& pair);
  void close();

 private:
  std::filesystem::path path_;
  ShardHeader header_;
  std::ofstream out_;
  std::vector<unsigned char> buf_;
};

/// Streams the records of a shard. With `model` set, every record is checked
/// against keypoints and heatmaps re-derived from its stored parameters.
/// Errors name the shard file and the byte offset of the bad record.
ShardHeader read_shard(const std::filesystem::path& path, const std::function<void(TrainingPair&&)>& fn,
                       const BodyModel* model = nullptr);

std::vector<TrainingPair> read_shard(const std::filesystem::path& path, const BodyModel* model = nullptr);

ShardHeader read_shard_header(const std::filesystem::path& path);

}  // namespace pmesh
