#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gaze/attention_net.hpp"
#include "gaze/track.hpp"

namespace gaze::testing {

/// Inverse-CDF draws from the density proportional to s^-2 on [a, b].
inline std::vector<double> power_law_samples(std::size_t n, double a, double b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> out(n);
  for (auto& s : out) s = 1.0 / (1.0 / a - unit(rng) * (1.0 / a - 1.0 / b));
  return out;
}

/// Normalisation constant of the truncated s^-2 law: ab / (b - a).
inline double power_law_constant(double a, double b) { return a * b / (b - a); }

inline GazeTrack make_track(const std::vector<Eigen::Vector2d>& points, double dt_ms = 1000.0 / 90.0,
                            int width = 800, int height = 800) {
  GazeTrack track;
  track.meta.image_id = "img";
  track.meta.reader_id = "reader";
  track.meta.image_width = width;
  track.meta.image_height = height;
  for (std::size_t i = 0; i < points.size(); ++i) {
    track.samples.push_back({static_cast<double>(i) * dt_ms, points[i].x(), points[i].y()});
  }
  return track;
}

/// Random walk from `origin` with step lengths log-normally spread around `step`.
inline std::vector<Eigen::Vector2d> walk(std::size_t n, Eigen::Vector2d origin, double step, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
  std::lognormal_distribution<double> spread(0.0, 0.5);
  std::vector<Eigen::Vector2d> pts{origin};
  while (pts.size() < n) {
    const double a = angle(rng);
    Eigen::Vector2d next = pts.back() + step * spread(rng) * Eigen::Vector2d(std::cos(a), std::sin(a));
    next = next.cwiseMax(0.0).cwiseMin(800.0);
    pts.push_back(next);
  }
  return pts;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("gaze_test_" + std::to_string(rd()) + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Random examples with non-negative features; every other one carries a gaze map.
inline std::vector<Example> random_examples(std::size_t n, int channels, std::uint64_t seed,
                                            bool with_gaze = true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> grade(0, kNumGrades - 1);
  std::vector<Example> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& ex = out[i];
    ex.features.values.resize(channels, kFeatureGrid * kFeatureGrid);
    for (Eigen::Index j = 0; j < ex.features.values.size(); ++j) {
      ex.features.values.data()[j] = unit(rng) < 0.3 ? 0.0 : unit(rng);
    }
    ex.label = grade(rng);
    ex.image_width = 64;
    ex.image_height = 64;
    if (with_gaze && i % 2 == 0) {
      Eigen::RowVectorXd g(kFeatureGrid * kFeatureGrid);
      for (Eigen::Index j = 0; j < g.size(); ++j) g[j] = unit(rng);
      g /= g.maxCoeff();
      ex.gaze = g;
    }
  }
  return out;
}

inline std::vector<const Example*> pointers(const std::vector<Example>& examples) {
  std::vector<const Example*> out;
  for (const auto& e : examples) out.push_back(&e);
  return out;
}

inline ClassifierParams random_params(int channels, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  ClassifierParams p;
  p.W.resize(kNumGrades, channels);
  for (Eigen::Index j = 0; j < p.W.size(); ++j) p.W.data()[j] = normal(rng);
  p.u = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  return p;
}

}  // namespace gaze::testing

namespace gaze::testing {

struct FdCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

/// Central differences on every entry of W and on u, compared with the analytic
/// gradient. Relative error uses max(|analytic|, |numeric|, floor) as denominator.
inline FdCheck finite_difference_check(Batch batch, const ClassifierParams& params, const TrainConfig& cfg,
                                       double h = 1e-5, double floor = 1e-6) {
  const Gradients g = gradients(batch, params, cfg);
  FdCheck out;
  auto record = [&](double analytic, double numeric) {
    const double abs_err = std::abs(analytic - numeric);
    out.max_abs_error = std::max(out.max_abs_error, abs_err);
    out.max_rel_error =
        std::max(out.max_rel_error, abs_err / std::max({std::abs(analytic), std::abs(numeric), floor}));
  };
  ClassifierParams p = params;
  for (Eigen::Index i = 0; i < p.W.size(); ++i) {
    const double keep = p.W.data()[i];
    p.W.data()[i] = keep + h;
    const double up = total_loss(batch, p, cfg);
    p.W.data()[i] = keep - h;
    const double down = total_loss(batch, p, cfg);
    p.W.data()[i] = keep;
    record(g.dW.data()[i], (up - down) / (2 * h));
  }
  p.u = params.u + h;
  const double up = total_loss(batch, p, cfg);
  p.u = params.u - h;
  const double down = total_loss(batch, p, cfg);
  record(g.du, (up - down) / (2 * h));
  return out;
}

}  // namespace gaze::testing
