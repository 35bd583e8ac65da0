#pragma once

#include <Eigen/Core>

namespace pmesh {

using RowArrayXXd = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct HeatmapParams {
  int height = 64, width = 64;
  double stride = 4.0;  // source px per cell
  double sigma = 8.0;   // source px

  friend bool operator==(const HeatmapParams&, const HeatmapParams&) = default;
};

void validate(const HeatmapParams& p);

/// N_J grids stored contiguously, one row-major grid per row of values().
/// Cell (r, c) covers source pixels centered at ((c + 0.5) * stride, (r + 0.5) * stride).
class HeatmapStack {
 public:
  HeatmapStack() = default;
  HeatmapStack(int joints, int height, int width, double stride);

  int joints() const noexcept { return static_cast<int>(values_.rows()); }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  double stride() const noexcept { return stride_; }

  Eigen::Map<RowArrayXXd> grid(int j) { return {values_.row(j).data(), height_, width_}; }
  Eigen::Map<const RowArrayXXd> grid(int j) const { return {values_.row(j).data(), height_, width_}; }

  RowArrayXXd& values() noexcept { return values_; }
  const RowArrayXXd& values() const noexcept { return values_; }

  bool same_layout(const HeatmapStack& o) const noexcept {
    return joints() == o.joints() && height_ == o.height_ && width_ == o.width_ && stride_ == o.stride_;
  }

 private:
  int height_ = 0, width_ = 0;
  double stride_ = 1.0;
  RowArrayXXd values_;
};

/// Throws InvariantError on negative or non-finite cells.
void validate(const HeatmapStack& h);

struct KeypointSet {
  Eigen::Matrix<double, Eigen::Dynamic, 2> coords;
  Eigen::ArrayXd confidence;
  Eigen::Array<bool, Eigen::Dynamic, 1> visible;

  KeypointSet() = default;
  explicit KeypointSet(int n)
      : coords(Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(n, 2)),
        confidence(Eigen::ArrayXd::Zero(n)),
        visible(Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(n, false)) {}

  int size() const noexcept { return static_cast<int>(coords.rows()); }
  int num_visible() const noexcept { return static_cast<int>(visible.count()); }
};

void validate(const KeypointSet& k);

/// Source-frame position of a cell center.
inline double cell_center(int index, double stride) { return (index + 0.5) * stride; }

/// Unnormalized Gaussians, peak value 1 at the continuous keypoint position.
HeatmapStack render(const KeypointSet& kps, const HeatmapParams& params);

KeypointSet decode_argmax(const HeatmapStack& h);

/// Expectation of cell positions under weights (h / max)^(1 / temperature),
/// i.e. a softmax over log-heat scaled by 1/temperature.
KeypointSet decode_soft_argmax(const HeatmapStack& h, double temperature);

}  // namespace pmesh
