#include "gaze/attention_map.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>

#include <Eigen/Dense>

#include "gaze/error.hpp"

namespace gaze {

namespace {

constexpr std::string_view kGamapMagic = "GAMAP1";

void check_dims(int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorCode::BadGeometry, "map dimensions must be positive");
}

void validate_box(const BBox& box, int width, int height) {
  if (!(box.w > 0.0) || !(box.h > 0.0) || !std::isfinite(box.x) || !std::isfinite(box.y) ||
      !std::isfinite(box.w) || !std::isfinite(box.h)) {
    throw Error(ErrorCode::InvalidBox, "box needs positive finite extent");
  }
  const double c0 = std::max(std::ceil(box.x), 0.0);
  const double c1 = std::min(std::ceil(box.x + box.w), static_cast<double>(width));
  const double r0 = std::max(std::ceil(box.y), 0.0);
  const double r1 = std::min(std::ceil(box.y + box.h), static_cast<double>(height));
  if (c0 >= c1 || r0 >= r1) throw Error(ErrorCode::InvalidBox, "box lies outside the image");
}

// Row o of the result holds the fractional overlap of source cells with output cell o.
Eigen::MatrixXd pooling_weights(int in, int out) {
  Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(out, in);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double lo = o * scale;
    const double hi = (o + 1) * scale;
    for (int i = static_cast<int>(std::floor(lo)); i < std::min(in, static_cast<int>(std::ceil(hi))); ++i) {
      const double overlap = std::min(hi, i + 1.0) - std::max(lo, static_cast<double>(i));
      if (overlap > 0.0) weights(o, i) = overlap / scale;
    }
  }
  return weights;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
  }
  return v;
}

}  // namespace

void KernelConfig::validate() const {
  if (!(radius >= 1.0) || !(sigma > 0.0)) {
    throw Error(ErrorCode::BadGeometry, "kernel needs radius >= 1 and sigma > 0");
  }
}

std::vector<Point> track_points(const GazeTrack& track) {
  std::vector<Point> points;
  points.reserve(track.size());
  for (const auto& s : track.samples) points.emplace_back(s.x, s.y);
  return points;
}

AttentionMap render_gaze_map(std::span<const Point> points, int width, int height,
                             const KernelConfig& cfg) {
  check_dims(width, height);
  cfg.validate();
  AttentionMap map(width, height);
  const double inv_two_var = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  const double r2 = cfg.radius * cfg.radius;
  Eigen::ArrayXd ex;
  Eigen::ArrayXd ey;

  for (const auto& p : points) {
    const int c0 = std::max(0, static_cast<int>(std::ceil(p.x() - cfg.radius)));
    const int c1 = std::min(width - 1, static_cast<int>(std::floor(p.x() + cfg.radius)));
    const int r0 = std::max(0, static_cast<int>(std::ceil(p.y() - cfg.radius)));
    const int r1 = std::min(height - 1, static_cast<int>(std::floor(p.y() + cfg.radius)));
    if (c0 > c1 || r0 > r1) continue;
    const Eigen::ArrayXd dx = Eigen::ArrayXd::LinSpaced(c1 - c0 + 1, c0, c1) - p.x();
    const Eigen::ArrayXd dy = Eigen::ArrayXd::LinSpaced(r1 - r0 + 1, r0, r1) - p.y();
    ex = (-dx.square() * inv_two_var).exp();
    ey = (-dy.square() * inv_two_var).exp();
    for (int r = r0; r <= r1; ++r) {
      const double dy2 = dy[r - r0] * dy[r - r0];
      if (dy2 > r2) continue;
      // Columns inside the disc form one contiguous run.
      const double half = std::sqrt(r2 - dy2);
      const int a = std::max(c0, static_cast<int>(std::ceil(p.x() - half)));
      const int b = std::min(c1, static_cast<int>(std::floor(p.x() + half)));
      if (a > b) continue;
      auto row = map.values.row(r).segment(a, b - a + 1);
      row += ey[r - r0] * ex.segment(a - c0, b - a + 1).transpose();
    }
  }
  const double peak = map.max();
  if (peak > 0.0) map.values /= peak;
  return map;
}

AttentionMap bbox_map(std::span<const BBox> boxes, int width, int height) {
  check_dims(width, height);
  AttentionMap map(width, height);
  for (const auto& box : boxes) {
    validate_box(box, width, height);
    const int c0 = static_cast<int>(std::max(std::ceil(box.x), 0.0));
    const int c1 = static_cast<int>(std::min(std::ceil(box.x + box.w), static_cast<double>(width)));
    const int r0 = static_cast<int>(std::max(std::ceil(box.y), 0.0));
    const int r1 = static_cast<int>(std::min(std::ceil(box.y + box.h), static_cast<double>(height)));
    map.values.block(r0, c0, r1 - r0, c1 - c0) = 1.0;
  }
  return map;
}

Grid area_resample(const Grid& grid, int out_w, int out_h) {
  check_dims(out_w, out_h);
  if (grid.size() == 0) throw Error(ErrorCode::BadGeometry, "cannot resample an empty grid");
  if (grid.cols() == out_w && grid.rows() == out_h) return grid;
  const Eigen::MatrixXd rows = pooling_weights(static_cast<int>(grid.rows()), out_h);
  const Eigen::MatrixXd cols = pooling_weights(static_cast<int>(grid.cols()), out_w);
  return (rows * grid.matrix() * cols.transpose()).array();
}

AttentionMap downsample(const AttentionMap& map, int out_w, int out_h) {
  AttentionMap out(area_resample(map.values, out_w, out_h));
  const double peak = out.max();
  if (peak > 0.0) out.values /= peak;
  return out;
}

AttentionMap upsample_nearest(const AttentionMap& map, int out_w, int out_h) {
  check_dims(out_w, out_h);
  AttentionMap out(out_w, out_h);
  for (int r = 0; r < out_h; ++r) {
    const int sr = static_cast<int>(static_cast<long>(r) * map.height() / out_h);
    for (int c = 0; c < out_w; ++c) {
      const int sc = static_cast<int>(static_cast<long>(c) * map.width() / out_w);
      out.values(r, c) = map.values(sr, sc);
    }
  }
  return out;
}

double iou(const AttentionMap& map, std::span<const BBox> boxes, double level) {
  using Mask = GridT<bool>;
  const Mask truth = bbox_map(boxes, map.width(), map.height()).values > 0.5;
  const double peak = map.max();
  const Mask detected = (map.values >= level * peak) && (map.values > 0.0);
  const auto inter = (detected && truth).count();
  const auto uni = (detected || truth).count();
  if (uni == 0) throw Error(ErrorCode::EmptyUnion, "detected region and boxes are both empty");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::string encode_gamap(const AttentionMap& map) {
  std::string out(kGamapMagic);
  out.reserve(kGamapMagic.size() + 8 + 4 * static_cast<std::size_t>(map.values.size()));
  put_u32(out, static_cast<std::uint32_t>(map.width()));
  put_u32(out, static_cast<std::uint32_t>(map.height()));
  for (Eigen::Index r = 0; r < map.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < map.values.cols(); ++c) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(map.values(r, c))));
    }
  }
  return out;
}

AttentionMap decode_gamap(std::string_view bytes) {
  const std::size_t header = kGamapMagic.size() + 8;
  if (bytes.size() < header || bytes.substr(0, kGamapMagic.size()) != kGamapMagic) {
    throw Error(ErrorCode::BadFormat, "missing GAMAP1 header");
  }
  const std::uint32_t width = get_u32(bytes, kGamapMagic.size());
  const std::uint32_t height = get_u32(bytes, kGamapMagic.size() + 4);
  const std::size_t cells = static_cast<std::size_t>(width) * height;
  if (width == 0 || height == 0 || bytes.size() != header + 4 * cells) {
    throw Error(ErrorCode::BadFormat, "GAMAP1 payload size does not match its header");
  }
  AttentionMap map(static_cast<int>(width), static_cast<int>(height));
  for (std::size_t i = 0; i < cells; ++i) {
    map.values.data()[i] = std::bit_cast<float>(get_u32(bytes, header + 4 * i));
  }
  return map;
}

void write_gamap(const std::filesystem::path& path, const AttentionMap& map) {
  write_file(path, encode_gamap(map));
}

AttentionMap read_gamap(const std::filesystem::path& path) { return decode_gamap(read_file(path)); }

Gray8 to_gray8(const AttentionMap& map) {
  return (map.values * 255.0 + 0.5).floor().max(0.0).min(255.0).cast<std::uint8_t>();
}

}  // namespace gaze
