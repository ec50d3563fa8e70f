#include "gaze/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "gaze/error.hpp"

namespace gaze {

double mean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::InsufficientData, "mean of an empty sample");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double median(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::InsufficientData, "median of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  return sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
}

namespace {

double sample_variance(std::span<const double> values, double m) {
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return ss / static_cast<double>(values.size() - 1);
}

}  // namespace

TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw Error(ErrorCode::InsufficientData, "Welch test needs two values per sample");
  }
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = mean(a);
  const double mb = mean(b);
  const double qa = sample_variance(a, ma) / na;
  const double qb = sample_variance(b, mb) / nb;
  const double se2 = qa + qb;

  TTestResult result;
  if (se2 == 0.0) {
    // Both samples constant: either identical means or an infinitely significant shift.
    result.df = na + nb - 2.0;
    if (ma == mb) return result;
    result.t = ma > mb ? std::numeric_limits<double>::infinity()
                       : -std::numeric_limits<double>::infinity();
    result.p = 0.0;
    return result;
  }
  result.t = (ma - mb) / std::sqrt(se2);
  result.df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
  const boost::math::students_t dist(result.df);
  result.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(result.t))));
  return result;
}

}  // namespace gaze
