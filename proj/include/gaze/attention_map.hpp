#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gaze/image_io.hpp"
#include "gaze/track.hpp"

namespace gaze {

/// Row-major dense grid; rows index y, columns index x.
template <typename Scalar>
using GridT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Grid = GridT<double>;

/// Non-negative map over image space. Pixel (row r, col c) sits at image
/// coordinate (x = c, y = r).
struct AttentionMap {
  Grid values;

  AttentionMap() = default;
  AttentionMap(int width, int height) : values(Grid::Zero(height, width)) {}
  explicit AttentionMap(Grid grid) : values(std::move(grid)) {}

  int width() const noexcept { return static_cast<int>(values.cols()); }
  int height() const noexcept { return static_cast<int>(values.rows()); }
  double max() const { return values.size() ? values.maxCoeff() : 0.0; }

  friend bool operator==(const AttentionMap& a, const AttentionMap& b) {
    return a.values.rows() == b.values.rows() && a.values.cols() == b.values.cols() &&
           (a.values == b.values).all();
  }
};

struct KernelConfig {
  double radius = 99.0;
  double sigma = 30.2;

  void validate() const;
  KernelConfig scaled(double factor) const { return {radius * factor, sigma * factor}; }
};

/// Axis-aligned box in pixels. Covers pixel columns c with x <= c < x + w.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  BBox scaled(double sx, double sy) const { return {x * sx, y * sy, w * sx, h * sy}; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

using Point = Eigen::Vector2d;

std::vector<Point> track_points(const GazeTrack& track);

/// Sum of truncated Gaussian kernels, one per point, divided by the grid
/// maximum. An empty point list gives an all-zero map.
AttentionMap render_gaze_map(std::span<const Point> points, int width, int height,
                             const KernelConfig& cfg = {});

/// 1 inside the union of boxes, 0 elsewhere.
AttentionMap bbox_map(std::span<const BBox> boxes, int width, int height);

/// Area-weighted resampling to out_w x out_h, without renormalisation.
Grid area_resample(const Grid& grid, int out_w, int out_h);

/// Area-average pooling followed by max-renormalisation (skipped for all-zero maps).
AttentionMap downsample(const AttentionMap& map, int out_w = 16, int out_h = 16);

/// Nearest-neighbour upsampling to out_w x out_h.
AttentionMap upsample_nearest(const AttentionMap& map, int out_w, int out_h);

/// IoU between {map >= level * max(map)} and the union of `boxes`.
/// Throws EmptyUnion when both regions are empty.
double iou(const AttentionMap& map, std::span<const BBox> boxes, double level = 0.5);

// GAMAP1: "GAMAP1", u32 LE width, u32 LE height, width*height f32 LE, row-major.
std::string encode_gamap(const AttentionMap& map);
AttentionMap decode_gamap(std::string_view bytes);
void write_gamap(const std::filesystem::path& path, const AttentionMap& map);
AttentionMap read_gamap(const std::filesystem::path& path);

/// value * 255, rounded half-up, clamped to [0, 255].
Gray8 to_gray8(const AttentionMap& map);

}  // namespace gaze
