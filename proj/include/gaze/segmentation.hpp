#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gaze/track.hpp"

namespace gaze {

/// Binning for the step-length density fit. Bins are log-spaced on [s_min, s_max].
struct PowerLawFitConfig {
  double s_min = 1.0;
  double s_max = 400.0;
  int n_bins = 24;

  void validate() const;
};

/// Least-squares coefficient of p(s) = gamma * s^-2 fitted to the binned
/// density of `steps`. Steps below s_min are clipped into the first bin; steps
/// above s_max count towards the total but are not binned.
double fit_gamma(std::span<const double> steps, const PowerLawFitConfig& cfg = {});
double fit_gamma(const StepSeries& steps, const PowerLawFitConfig& cfg = {});

struct WindowLevel {
  std::size_t center_index = 0;
  double gamma = 0.0;
};

struct AttentionLevelSeries {
  std::size_t window_width = 60;
  std::size_t stride = 1;
  std::size_t track_size = 0;
  std::vector<WindowLevel> gammas;
  std::optional<double> threshold;
};

/// Number of window positions for a track of `n` samples.
std::size_t window_count(std::size_t n, std::size_t window, std::size_t stride);

AttentionLevelSeries attention_levels(const GazeTrack& track, const PowerLawFitConfig& cfg = {},
                                      std::size_t window = 60, std::size_t stride = 1);

/// Mean of every per-window gamma pooled over the tracks long enough to yield a window.
double calibrate_threshold(std::span<const GazeTrack> healthy_tracks,
                           const PowerLawFitConfig& cfg = {}, std::size_t window = 60,
                           std::size_t stride = 1);

using FixationMask = std::vector<bool>;

struct FilterResult {
  FixationMask mask;
  GazeTrack track;

  double kept_fraction() const;
};

/// Keeps a sample when the window centred on it (nearest valid window at the
/// track edges) has gamma strictly above `gamma_th`.
FilterResult filter_fixations(const GazeTrack& track, const AttentionLevelSeries& levels,
                              double gamma_th);

}  // namespace gaze
