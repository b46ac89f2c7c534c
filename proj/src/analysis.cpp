// SPDX-License-Identifier: Apache-2.0

#include "knowmix/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

namespace knowmix {

double estimate_threshold_popularity(std::span<const AccuracyObservation> observations,
                                     double accuracy_target, std::size_t max_failures) {
  if (observations.empty()) {
    throw std::domain_error("estimate_threshold_popularity needs at least one observation");
  }
  if (!(accuracy_target > 0.0 && accuracy_target < 1.0)) {
    throw std::domain_error(
        fmt::format("accuracy_target must lie in (0, 1), got {}", accuracy_target));
  }
  if (max_failures < 1) throw std::domain_error("max_failures must be >= 1");
  for (const auto& obs : observations) {
    if (!(obs.popularity > 0.0)) {
      throw std::domain_error(fmt::format("popularity must be > 0, got {}", obs.popularity));
    }
  }

  const auto n = static_cast<std::ptrdiff_t>(observations.size());
  std::vector<std::size_t> order(observations.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return observations[a].popularity < observations[b].popularity;
  });
  const auto x = [&](std::ptrdiff_t pos) {
    return observations[order[static_cast<std::size_t>(pos)]].popularity;
  };

  double sum_correct = 0.0;
  std::size_t failures = 0;
  std::ptrdiff_t j = n - 1;
  while (j >= 0) {
    std::ptrdiff_t k = j;
    while (k >= 0 && x(k) == x(j)) --k;
    for (std::ptrdiff_t l = k + 1; l <= j; ++l) {
      sum_correct += observations[order[static_cast<std::size_t>(l)]].correct ? 1.0 : 0.0;
    }
    if (sum_correct / static_cast<double>(n - k - 1) < accuracy_target) ++failures;
    if (failures == max_failures) return x(j);
    j = k;
  }
  return x(0);
}

const char* to_string(FitModel model) {
  switch (model) {
    case FitModel::exponential:
      return "exponential";
    case FitModel::power_law:
      return "power_law";
    case FitModel::loglog:
      return "loglog";
  }
  return "unknown";
}

double student_t_975(std::size_t dof) {
  if (dof == 0) throw std::domain_error("t quantile needs at least one degree of freedom");
  const boost::math::students_t_distribution<double> dist(static_cast<double>(dof));
  return boost::math::quantile(dist, 0.975);
}

double r_squared(std::span<const double> observed, std::span<const double> fitted) {
  if (observed.size() != fitted.size()) {
    throw std::invalid_argument(fmt::format("r_squared length mismatch: {} observed vs {} fitted",
                                            observed.size(), fitted.size()));
  }
  if (observed.size() < 2) throw std::invalid_argument("r_squared needs at least 2 values");
  const double n = static_cast<double>(observed.size());
  const double mean = std::accumulate(observed.begin(), observed.end(), 0.0) / n;
  double ss_tot = 0.0;
  double ss_res = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    ss_tot += (observed[i] - mean) * (observed[i] - mean);
    ss_res += (observed[i] - fitted[i]) * (observed[i] - fitted[i]);
    scale = std::max(scale, std::abs(observed[i]));
  }
  // Sums of squares at rounding level count as zero.
  const double eps = 4.0 * std::numeric_limits<double>::epsilon() * std::max(scale, 1e-300);
  const double zero = n * eps * eps;
  if (ss_tot <= zero) return ss_res <= zero ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

LinearFit fit_linear(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_linear: x and y differ in length");
  if (x.size() < 3) {
    throw std::invalid_argument(fmt::format("fit needs at least 3 points, got {}", x.size()));
  }
  LinearFit fit;
  fit.n = x.size();
  const double n = static_cast<double>(fit.n);
  fit.x_mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0;
  for (std::size_t i = 0; i < fit.n; ++i) {
    fit.sxx += (x[i] - fit.x_mean) * (x[i] - fit.x_mean);
    sxy += (x[i] - fit.x_mean) * (y[i] - y_mean);
  }
  const double x_scale = std::max(std::abs(fit.x_mean), 1.0);
  if (!(fit.sxx > n * 1e-24 * x_scale * x_scale)) {
    throw std::invalid_argument("degenerate design: all regressor values are equal");
  }
  fit.slope = sxy / fit.sxx;
  fit.intercept = y_mean - fit.slope * fit.x_mean;

  std::vector<double> fitted(fit.n);
  double ss_res = 0.0;
  for (std::size_t i = 0; i < fit.n; ++i) {
    fitted[i] = fit.intercept + fit.slope * x[i];
    ss_res += (y[i] - fitted[i]) * (y[i] - fitted[i]);
  }
  fit.residual_variance = ss_res / static_cast<double>(fit.dof());
  fit.slope_stderr = std::sqrt(fit.residual_variance / fit.sxx);
  fit.intercept_stderr =
      std::sqrt(fit.residual_variance * (1.0 / n + fit.x_mean * fit.x_mean / fit.sxx));
  fit.covariance = -fit.x_mean * fit.residual_variance / fit.sxx;
  fit.r_squared = r_squared(y, fitted);
  return fit;
}

namespace {

Interval t_interval(double estimate, double se, double t) {
  return {estimate - t * se, estimate + t * se};
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw std::domain_error(fmt::format("{} must be positive and finite, got {}", what, v));
  }
}

void require_ratio(double r) {
  if (!(r > 0.0 && r < 1.0)) {
    throw std::domain_error(fmt::format("mixing ratio r must lie in (0, 1), got {}", r));
  }
}

FitResult make_result(FitModel model, const LinearFit& line) {
  FitResult out;
  out.model = model;
  out.line = line;
  out.n = line.n;
  out.r_squared = line.r_squared;
  return out;
}

}  // namespace

FitResult fit_exponential(std::span<const Point> points) {
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& [r, t] : points) {
    require_ratio(r);
    require_positive(t, "T");
    x.push_back(1.0 / r);
    y.push_back(std::log(t));
  }
  const auto line = fit_linear(x, y);
  auto out = make_result(FitModel::exponential, line);
  const double t = student_t_975(line.dof());
  out.params = {{"logA", line.intercept}, {"B", line.slope}};
  out.standard_error = {{"logA", line.intercept_stderr}, {"B", line.slope_stderr}};
  out.ci95 = {{"logA", t_interval(line.intercept, line.intercept_stderr, t)},
              {"B", t_interval(line.slope, line.slope_stderr, t)}};
  return out;
}

FitResult fit_power_law(std::span<const Point> points) {
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& [r, t] : points) {
    require_ratio(r);
    require_positive(t, "T");
    x.push_back(std::log(r));
    y.push_back(std::log(t));
  }
  const auto line = fit_linear(x, y);
  auto out = make_result(FitModel::power_law, line);
  const double t = student_t_975(line.dof());
  out.params = {{"logC", line.intercept}, {"D", -line.slope}};
  out.standard_error = {{"logC", line.intercept_stderr}, {"D", line.slope_stderr}};
  out.ci95 = {{"logC", t_interval(line.intercept, line.intercept_stderr, t)},
              {"D", t_interval(-line.slope, line.slope_stderr, t)}};
  return out;
}

FitResult fit_loglog(std::span<const Point> points) {
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& [px, py] : points) {
    require_positive(px, "x");
    require_positive(py, "y");
    x.push_back(std::log(px));
    y.push_back(std::log(py));
  }
  const auto line = fit_linear(x, y);
  auto out = make_result(FitModel::loglog, line);
  const double t = student_t_975(line.dof());
  out.params = {{"slope", line.slope}, {"intercept", line.intercept}};
  out.standard_error = {{"slope", line.slope_stderr}, {"intercept", line.intercept_stderr}};
  out.ci95 = {{"slope", t_interval(line.slope, line.slope_stderr, t)},
              {"intercept", t_interval(line.intercept, line.intercept_stderr, t)}};
  return out;
}

Estimate predict_loglog(const FitResult& fit, double x) {
  if (fit.model != FitModel::loglog) throw std::invalid_argument("predict_loglog needs a loglog fit");
  require_positive(x, "x");
  const auto& line = fit.line;
  const double lx = std::log(x);
  const double ly = line.intercept + line.slope * lx;
  const double n = static_cast<double>(line.n);
  const double se = std::sqrt(line.residual_variance *
                              (1.0 + 1.0 / n + (lx - line.x_mean) * (lx - line.x_mean) / line.sxx));
  const double t = student_t_975(line.dof());
  return {std::exp(ly), {std::exp(ly - t * se), std::exp(ly + t * se)}};
}

Estimate invert_size(const FitResult& fit, double y) {
  if (fit.model != FitModel::loglog) throw std::invalid_argument("invert_size needs a loglog fit");
  require_positive(y, "threshold popularity");
  const auto& line = fit.line;
  if (line.slope == 0.0) throw std::domain_error("invert_size: fit has zero slope");
  const double a = line.slope;
  const double u = (std::log(y) - line.intercept) / a;
  const double var_u = (line.intercept_stderr * line.intercept_stderr +
                        u * u * line.slope_stderr * line.slope_stderr +
                        2.0 * u * line.covariance) /
                       (a * a);
  const double se = std::sqrt(std::max(var_u, 0.0));
  const double t = student_t_975(line.dof());
  return {std::exp(u), {std::exp(u - t * se), std::exp(u + t * se)}};
}

}  // namespace knowmix
