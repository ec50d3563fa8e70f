#pragma once

#include <span>

namespace gaze {

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};

/// Welch's unequal-variance t-test, a minus b. Each sample needs two or more values.
TTestResult welch_t_test(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> values);
double median(std::span<const double> values);

}  // namespace gaze
