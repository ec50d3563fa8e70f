#include "gaze/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "gaze/error.hpp"

namespace gaze {

void PowerLawFitConfig::validate() const {
  if (!(s_min > 0.0 && s_min < s_max) || !std::isfinite(s_max) || n_bins < 4) {
    throw Error(ErrorCode::BadGeometry, "power-law fit needs 0 < s_min < s_max and n_bins >= 4");
  }
}

double fit_gamma(std::span<const double> steps, const PowerLawFitConfig& cfg) {
  cfg.validate();
  const auto n_bins = static_cast<std::size_t>(cfg.n_bins);
  const double log_span = std::log(cfg.s_max / cfg.s_min);

  std::vector<std::size_t> counts(n_bins, 0);
  std::size_t in_range = 0;
  for (double s : steps) {
    if (s > cfg.s_max) continue;
    const double ratio = std::max(s, cfg.s_min) / cfg.s_min;
    auto bin = static_cast<std::size_t>(std::log(ratio) / log_span * static_cast<double>(n_bins));
    counts[std::min(bin, n_bins - 1)] += 1;
    ++in_range;
  }
  if (in_range < 8) {
    throw Error(ErrorCode::InsufficientData,
                std::to_string(in_range) + " steps inside [s_min, s_max], need 8");
  }
  if (std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) < 2) {
    throw Error(ErrorCode::DegenerateSteps, "all steps fall into one bin");
  }

  const auto total = static_cast<double>(steps.size());
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < n_bins; ++j) {
    const double lo = cfg.s_min * std::exp(log_span * static_cast<double>(j) / cfg.n_bins);
    const double hi = cfg.s_min * std::exp(log_span * static_cast<double>(j + 1) / cfg.n_bins);
    const double center = std::sqrt(lo * hi);
    const double density = static_cast<double>(counts[j]) / total / (hi - lo);
    const double inv_sq = 1.0 / (center * center);
    num += density * inv_sq;
    den += inv_sq * inv_sq;
  }
  return num / den;
}

double fit_gamma(const StepSeries& steps, const PowerLawFitConfig& cfg) {
  return fit_gamma(std::span<const double>(steps.data(), static_cast<std::size_t>(steps.size())),
                   cfg);
}

std::size_t window_count(std::size_t n, std::size_t window, std::size_t stride) {
  if (stride == 0 || window < 2 || n < window + 1) return 0;
  return (n - window) / stride + 1;
}

AttentionLevelSeries attention_levels(const GazeTrack& track, const PowerLawFitConfig& cfg,
                                      std::size_t window, std::size_t stride) {
  cfg.validate();
  if (stride == 0 || window < 2) {
    throw Error(ErrorCode::BadGeometry, "window must be >= 2 samples and stride >= 1");
  }
  const std::size_t positions = window_count(track.size(), window, stride);
  if (positions == 0) {
    throw Error(ErrorCode::TrackTooShort, std::to_string(track.size()) + " samples, need " +
                                              std::to_string(window + 1));
  }
  const StepSeries steps = step_lengths(track);

  AttentionLevelSeries series;
  series.window_width = window;
  series.stride = stride;
  series.track_size = track.size();
  series.gammas.reserve(positions);

  std::optional<double> previous;
  std::size_t leading_failures = 0;
  for (std::size_t p = 0; p < positions; ++p) {
    const std::size_t start = p * stride;
    const std::span<const double> window_steps(steps.data() + start, window - 1);
    WindowLevel level{start + window / 2, 0.0};
    try {
      level.gamma = fit_gamma(window_steps, cfg);
      previous = level.gamma;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InsufficientData && e.code() != ErrorCode::DegenerateSteps) throw;
      if (previous) {
        level.gamma = *previous;
      } else {
        ++leading_failures;
      }
    }
    series.gammas.push_back(level);
  }
  if (!previous) throw Error(ErrorCode::NoValidWindows, "no window admits a power-law fit");
  for (std::size_t p = 0; p < leading_failures; ++p) {
    series.gammas[p].gamma = series.gammas[leading_failures].gamma;
  }
  return series;
}

double calibrate_threshold(std::span<const GazeTrack> healthy_tracks, const PowerLawFitConfig& cfg,
                           std::size_t window, std::size_t stride) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& track : healthy_tracks) {
    if (window_count(track.size(), window, stride) == 0) continue;
    AttentionLevelSeries levels;
    try {
      levels = attention_levels(track, cfg, window, stride);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NoValidWindows) continue;
      throw;
    }
    for (const auto& level : levels.gammas) sum += level.gamma;
    count += levels.gammas.size();
  }
  if (count == 0) throw Error(ErrorCode::NoValidWindows, "no healthy track yields a window");
  return sum / static_cast<double>(count);
}

double FilterResult::kept_fraction() const {
  if (mask.empty()) return 0.0;
  return static_cast<double>(std::count(mask.begin(), mask.end(), true)) /
         static_cast<double>(mask.size());
}

FilterResult filter_fixations(const GazeTrack& track, const AttentionLevelSeries& levels,
                              double gamma_th) {
  const std::size_t positions = window_count(track.size(), levels.window_width, levels.stride);
  if (levels.track_size != track.size() || positions == 0 || levels.gammas.size() != positions) {
    throw Error(ErrorCode::MismatchedSeries, "attention levels were not computed from this track");
  }
  const auto half = static_cast<double>(levels.window_width / 2);
  const auto stride = static_cast<double>(levels.stride);
  const auto last = static_cast<double>(positions - 1);

  FilterResult result;
  result.mask.resize(track.size());
  for (std::size_t i = 0; i < track.size(); ++i) {
    const double p = std::clamp(std::round((static_cast<double>(i) - half) / stride), 0.0, last);
    result.mask[i] = levels.gammas[static_cast<std::size_t>(p)].gamma > gamma_th;
  }
  result.track = subset(track, result.mask);
  return result;
}

}  // namespace gaze
