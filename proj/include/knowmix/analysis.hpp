// SPDX-License-Identifier: Apache-2.0
//
// Threshold-popularity estimation from accuracy observations, and OLS fits
// of the scaling-law forms used for training-step and threshold data.
//
// All regressions use natural logarithms.

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace knowmix {

struct AccuracyObservation {
  double popularity = 0.0;  // > 0
  bool correct = false;
};

/// Scans popularity groups from the most popular down, tracking the accuracy
/// over everything at or above the current group. Each group whose running
/// accuracy is below \p accuracy_target counts as a failure; the popularity
/// of the group that brings the count to \p max_failures is returned. When
/// the scan finishes first, the smallest popularity is returned. Equal
/// popularities are consumed as one group.
double estimate_threshold_popularity(std::span<const AccuracyObservation> observations,
                                     double accuracy_target = 0.6, std::size_t max_failures = 5);

enum class FitModel { exponential, power_law, loglog };

const char* to_string(FitModel model);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Ordinary least squares y = intercept + slope * x, with the pieces needed
/// for t intervals and delta-method propagation.
struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double intercept_stderr = 0.0;
  double covariance = 0.0;  // cov(slope, intercept)
  double residual_variance = 0.0;
  double x_mean = 0.0;
  double sxx = 0.0;
  double r_squared = 1.0;
  std::size_t n = 0;

  std::size_t dof() const noexcept { return n - 2; }
};

LinearFit fit_linear(std::span<const double> x, std::span<const double> y);

struct FitResult {
  FitModel model = FitModel::loglog;
  std::map<std::string, double> params;
  std::map<std::string, double> standard_error;
  std::map<std::string, Interval> ci95;
  double r_squared = 1.0;
  std::size_t n = 0;
  LinearFit line;  // regression in transformed coordinates
};

using Point = std::pair<double, double>;

/// T(r) = A exp(B / r): regresses ln T on 1/r. Params logA, B.
FitResult fit_exponential(std::span<const Point> points);

/// T(r) = C r^(-D): regresses ln T on ln r. Params logC, D (D > 0 when T
/// decreases in r).
FitResult fit_power_law(std::span<const Point> points);

/// ln y = intercept + slope ln x. Params slope, intercept.
FitResult fit_loglog(std::span<const Point> points);

struct Estimate {
  double value = 0.0;
  Interval ci95;
};

/// y at a new x under a loglog fit, with a 95% prediction interval.
Estimate predict_loglog(const FitResult& fit, double x);

/// Solves a loglog fit for the x that reaches \p y. The interval propagates
/// the slope/intercept covariance through the delta method on ln x.
Estimate invert_size(const FitResult& fit, double y);

/// 1 - SS_res / SS_tot; 1 when both vanish.
double r_squared(std::span<const double> observed, std::span<const double> fitted);

/// Two-sided 95% quantile of Student's t with \p dof degrees of freedom.
double student_t_975(std::size_t dof);

/// Values reported for the training-step fits and the PopQA size
/// extrapolation, kept for comparison output.
struct FitReference {
  static constexpr double exponential_log_a = -0.25512;
  static constexpr double exponential_b = 1.5137;
  static constexpr double exponential_r2 = 0.9980;
  static constexpr double power_c = 0.098158;
  static constexpr double power_d = 3.83878;
  static constexpr double power_r2 = 0.9853;
  // Predicted model sizes in billions of parameters with their intervals.
  static constexpr double size_predictions[4] = {61, 514, 226, 24};
  static constexpr double size_intervals[4][2] = {{12, 314}, {80, 3315}, {39, 1313}, {5, 118}};
};

}  // namespace knowmix
