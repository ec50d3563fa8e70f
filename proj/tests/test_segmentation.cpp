#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "gaze/error.hpp"
#include "gaze/segmentation.hpp"
#include "support.hpp"

using namespace gaze;
using gaze::testing::make_track;
using gaze::testing::power_law_samples;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no gaze::Error thrown";
  return ErrorCode::IoError;
}

// Brute-force fit used as an independent check: explicit bin edges, per-bin
// scan instead of the logarithmic index formula.
double reference_fit(const std::vector<double>& steps, const PowerLawFitConfig& cfg) {
  std::vector<double> edges(cfg.n_bins + 1);
  for (int j = 0; j <= cfg.n_bins; ++j) edges[j] = cfg.s_min * std::pow(cfg.s_max / cfg.s_min, double(j) / cfg.n_bins);
  double num = 0.0, den = 0.0;
  for (int j = 0; j < cfg.n_bins; ++j) {
    std::size_t count = 0;
    for (double s : steps) {
      const double c = std::max(s, cfg.s_min);
      if (c > cfg.s_max) continue;
      const bool last = j == cfg.n_bins - 1;
      if (c >= edges[j] && (c < edges[j + 1] || (last && c <= edges[j + 1]))) ++count;
    }
    const double centre = std::sqrt(edges[j] * edges[j + 1]);
    const double d = double(count) / double(steps.size()) / (edges[j + 1] - edges[j]);
    num += d / (centre * centre);
    den += 1.0 / std::pow(centre, 4);
  }
  return num / den;
}

// Tight jitter cluster followed by wide jumps.
GazeTrack cluster_then_jumps(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pts = gaze::testing::walk(120, {400, 400}, 1.0, rng);
  const auto jumps = gaze::testing::walk(120, pts.back(), 50.0, rng);
  pts.insert(pts.end(), jumps.begin() + 1, jumps.end());
  pts.push_back(pts.back() + Eigen::Vector2d(30, 40));
  return make_track(pts);
}

}  // namespace

TEST(FitGamma, RecoversTruncatedNormalisation) {
  const PowerLawFitConfig cfg{2.0, 200.0, 24};
  const double expected = gaze::testing::power_law_constant(2.0, 200.0);
  EXPECT_NEAR(expected, 2.0202, 1e-4);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto steps = power_law_samples(10000, 2.0, 200.0, seed);
    const double g = fit_gamma(steps, cfg);
    EXPECT_NEAR(g / expected, 1.0, 0.05) << "seed " << seed;
  }
}

TEST(FitGamma, MatchesBruteForceBinning) {
  const PowerLawFitConfig cfg{1.0, 400.0, 24};
  std::mt19937_64 rng(5);
  std::lognormal_distribution<double> dist(1.5, 1.2);
  std::vector<double> steps(700);
  for (auto& s : steps) s = dist(rng);
  steps.push_back(0.0);
  steps.push_back(1000.0);
  EXPECT_NEAR(fit_gamma(steps, cfg), reference_fit(steps, cfg), 1e-12);
}

TEST(FitGamma, Errors) {
  EXPECT_EQ(code_of([] { fit_gamma(std::vector<double>(50, 7.0)); }), ErrorCode::DegenerateSteps);
  EXPECT_EQ(code_of([] { fit_gamma(std::vector<double>{1, 2, 3, 4, 5, 6, 7}); }), ErrorCode::InsufficientData);
  // Steps above s_max do not count as in-range.
  std::vector<double> far(20, 1000.0);
  far.insert(far.end(), {1, 2, 3, 4, 5, 6, 7});
  EXPECT_EQ(code_of([&] { fit_gamma(far); }), ErrorCode::InsufficientData);
  EXPECT_EQ(code_of([] { fit_gamma(std::vector<double>(20, 1.0), PowerLawFitConfig{5.0, 1.0, 24}); }),
            ErrorCode::BadGeometry);
  EXPECT_EQ(code_of([] { fit_gamma(std::vector<double>(20, 1.0), PowerLawFitConfig{1.0, 10.0, 3}); }),
            ErrorCode::BadGeometry);
}

TEST(FitGamma, ZeroStepsClipIntoFirstBin) {
  std::vector<double> steps(10, 0.0);
  steps.push_back(50.0);
  std::vector<double> clipped(10, 1.0);
  clipped.push_back(50.0);
  EXPECT_EQ(fit_gamma(steps), fit_gamma(clipped));
}

TEST(FitGamma, ScaleCovariance) {
  // Scaling steps and bin edges by k scales the fitted coefficient by k.
  const PowerLawFitConfig cfg{1.0, 400.0, 24};
  const auto steps = power_law_samples(3000, 1.0, 400.0, 9);
  const double base = fit_gamma(steps, cfg);
  for (double k : {2.0, 0.25, 3.7, 11.0}) {
    std::vector<double> scaled(steps);
    for (auto& s : scaled) s *= k;
    const double g = fit_gamma(scaled, {cfg.s_min * k, cfg.s_max * k, cfg.n_bins});
    EXPECT_NEAR(g / (k * base), 1.0, 1e-9) << "k=" << k;
  }
}

TEST(FitGamma, ShrinkingStepsNeverDecreasesGamma) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    auto steps = power_law_samples(59, 1.0, 600.0, rng());
    const double before = fit_gamma(steps);
    const double factor = std::uniform_real_distribution<double>(0.1, 0.99)(rng);
    for (auto& s : steps) s *= factor;
    EXPECT_GE(fit_gamma(steps), before);
  }
}

TEST(FitGamma, Deterministic) {
  const auto steps = power_law_samples(2000, 1.0, 400.0, 4);
  EXPECT_EQ(fit_gamma(steps), fit_gamma(steps));
}

TEST(WindowCount, Arithmetic) {
  EXPECT_EQ(window_count(61, 60, 1), 2u);
  EXPECT_EQ(window_count(60, 60, 1), 0u);
  EXPECT_EQ(window_count(900, 60, 1), 841u);
  EXPECT_EQ(window_count(100, 60, 10), 5u);
  EXPECT_EQ(window_count(100, 60, 0), 0u);
}

TEST(AttentionLevels, SixtyOneSamplesGiveTwoWindows) {
  std::mt19937_64 rng(1);
  const auto track = make_track(gaze::testing::walk(61, {400, 400}, 5.0, rng));
  const auto levels = attention_levels(track);
  ASSERT_EQ(levels.gammas.size(), 2u);
  EXPECT_EQ(levels.gammas[0].center_index, 30u);
  EXPECT_EQ(levels.gammas[1].center_index, 31u);
}

TEST(AttentionLevels, ShortTrackThrows) {
  std::mt19937_64 rng(1);
  const auto track = make_track(gaze::testing::walk(60, {400, 400}, 5.0, rng));
  EXPECT_EQ(code_of([&] { attention_levels(track); }), ErrorCode::TrackTooShort);
}

TEST(AttentionLevels, ClusterWindowsExceedJumpWindows) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto track = cluster_then_jumps(seed);
    const auto levels = attention_levels(track);
    double min_cluster = INFINITY, max_jump = -INFINITY;
    for (std::size_t p = 0; p < levels.gammas.size(); ++p) {
      const std::size_t first = p, last = p + 59;  // samples covered
      if (last < 120) min_cluster = std::min(min_cluster, levels.gammas[p].gamma);
      if (first >= 120) max_jump = std::max(max_jump, levels.gammas[p].gamma);
    }
    EXPECT_GT(min_cluster, max_jump) << "seed " << seed;
  }
}

TEST(AttentionLevels, MatchesDirectPerWindowFit) {
  std::mt19937_64 rng(3);
  const auto track = make_track(gaze::testing::walk(200, {300, 300}, 8.0, rng));
  const auto levels = attention_levels(track, {}, 60, 7);
  const auto steps = step_lengths(track);
  for (std::size_t p = 0; p < levels.gammas.size(); ++p) {
    std::vector<double> w(steps.data() + p * 7, steps.data() + p * 7 + 59);
    EXPECT_EQ(levels.gammas[p].gamma, fit_gamma(w));
    EXPECT_EQ(levels.gammas[p].center_index, p * 7 + 30);
  }
}

TEST(AttentionLevels, FailedWindowsInheritNeighbours) {
  // Middle section of identical points gives degenerate windows.
  std::mt19937_64 rng(8);
  auto pts = gaze::testing::walk(80, {200, 200}, 10.0, rng);
  pts.insert(pts.end(), 100, pts.back());
  const auto track = make_track(pts);
  const auto levels = attention_levels(track);
  for (const auto& w : levels.gammas) EXPECT_GT(w.gamma, 0.0);
  const auto last_valid = levels.gammas[20].gamma;  // window 20 spans samples 20..79
  EXPECT_EQ(levels.gammas.back().gamma, levels.gammas[levels.gammas.size() - 2].gamma);
  EXPECT_GT(last_valid, 0.0);

  // Leading degenerate windows take the first valid value.
  std::vector<Eigen::Vector2d> lead(100, {400, 400});
  const auto tail = gaze::testing::walk(80, {400, 400}, 10.0, rng);
  lead.insert(lead.end(), tail.begin(), tail.end());
  const auto lead_track = make_track(lead);
  const auto levels2 = attention_levels(lead_track);
  // Step 100 is the first non-zero one; window 42 is the first to contain it.
  const auto lead_steps = step_lengths(lead_track);
  const std::vector<double> first_valid(lead_steps.data() + 42, lead_steps.data() + 42 + 59);
  EXPECT_EQ(levels2.gammas[42].gamma, fit_gamma(first_valid));
  for (std::size_t p = 0; p < 42; ++p) EXPECT_EQ(levels2.gammas[p].gamma, levels2.gammas[42].gamma);

  const auto still = make_track(std::vector<Eigen::Vector2d>(100, {1, 1}));
  EXPECT_EQ(code_of([&] { attention_levels(still); }), ErrorCode::NoValidWindows);
}

TEST(Calibrate, PooledMeanOverWindows) {
  std::mt19937_64 rng(13);
  const auto a = make_track(gaze::testing::walk(150, {200, 200}, 4.0, rng));
  const auto b = make_track(gaze::testing::walk(90, {500, 500}, 20.0, rng));
  const auto short_track = make_track(gaze::testing::walk(30, {100, 100}, 4.0, rng));
  const std::vector<GazeTrack> tracks{a, b, short_track};
  std::vector<double> pooled;
  for (const auto* t : {&a, &b}) {
    for (const auto& w : attention_levels(*t).gammas) pooled.push_back(w.gamma);
  }
  const double expected = std::accumulate(pooled.begin(), pooled.end(), 0.0) / double(pooled.size());
  EXPECT_NEAR(calibrate_threshold(tracks), expected, 1e-12);
}

TEST(Calibrate, SingleWindowIsIdentity) {
  std::mt19937_64 rng(2);
  const auto track = make_track(gaze::testing::walk(61, {400, 400}, 6.0, rng));
  const auto steps = step_lengths(track);
  const std::vector<double> window(steps.data(), steps.data() + 59);
  const std::vector<GazeTrack> tracks{track};
  EXPECT_EQ(calibrate_threshold(tracks, {}, 60, 2), fit_gamma(window));
}

TEST(Calibrate, EmptySetHasNoWindows) {
  EXPECT_EQ(code_of([] { calibrate_threshold({}); }), ErrorCode::NoValidWindows);
}

TEST(FilterFixations, ThresholdExtremes) {
  const auto track = cluster_then_jumps(4);
  const auto levels = attention_levels(track);
  const auto all = filter_fixations(track, levels, -1.0);
  EXPECT_TRUE(std::all_of(all.mask.begin(), all.mask.end(), [](bool b) { return b; }));
  EXPECT_EQ(all.track, track);
  EXPECT_EQ(all.kept_fraction(), 1.0);
  const auto none = filter_fixations(track, levels, 1e9);
  EXPECT_TRUE(std::none_of(none.mask.begin(), none.mask.end(), [](bool b) { return b; }));
  EXPECT_TRUE(none.track.samples.empty());
}

TEST(FilterFixations, CentredWindowDecidesEachSample) {
  const auto track = cluster_then_jumps(6);
  const auto levels = attention_levels(track);
  const double th = 0.5 * (levels.gammas.front().gamma + levels.gammas.back().gamma);
  const auto result = filter_fixations(track, levels, th);
  for (std::size_t i = 0; i < track.size(); ++i) {
    const std::size_t p = std::clamp<long>(long(i) - 30, 0, long(levels.gammas.size()) - 1);
    EXPECT_EQ(result.mask[i], levels.gammas[p].gamma > th) << i;
  }
  EXPECT_TRUE(result.mask.front());
  EXPECT_FALSE(result.mask.back());
  // Kept samples keep their order and timestamps.
  std::size_t k = 0;
  for (std::size_t i = 0; i < track.size(); ++i) {
    if (result.mask[i]) {
      EXPECT_EQ(result.track.samples[k++], track.samples[i]);
    }
  }
  EXPECT_EQ(k, result.track.samples.size());
}

TEST(FilterFixations, MismatchedLevels) {
  const auto track = cluster_then_jumps(1);
  auto levels = attention_levels(track);
  auto shorter = track;
  shorter.samples.pop_back();
  EXPECT_EQ(code_of([&] { filter_fixations(shorter, levels, 0.0); }), ErrorCode::MismatchedSeries);
  levels.gammas.pop_back();
  EXPECT_EQ(code_of([&] { filter_fixations(track, levels, 0.0); }), ErrorCode::MismatchedSeries);
}
