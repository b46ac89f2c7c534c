// SPDX-License-Identifier: Apache-2.0
//
// Theory-exact synthetic experiments: accuracy sweeps over model size or
// mixing ratio, and the power-law subset experiment that traces the
// threshold frequency across capacities.

#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "knowmix/allocator.hpp"
#include "knowmix/analysis.hpp"
#include "knowmix/corpus.hpp"
#include "knowmix/universe.hpp"

namespace knowmix {

/// Entropy-weighted learned fraction, sum H_i f_i / H_tot (1 when H_tot = 0).
double accuracy(const Allocation& allocation, const KnowledgeUniverse& knowledge);

/// Mean learned fraction over facts (each fact counts once).
double accuracy_by_count(const Allocation& allocation);

enum class SweepAxis { model_size, mixing_ratio };

struct SweepConfig {
  MixtureUniverse mixture;       // mixing_ratio is ignored on the ratio axis
  SweepAxis axis = SweepAxis::model_size;
  std::vector<double> grid;      // strictly increasing
  double fixed_capacity = 0.0;   // capacity used on the ratio axis
  double accuracy_target = 0.8;

  /// Throws std::invalid_argument on an empty or unsorted grid, a target
  /// outside (0,1) or ratio-axis values outside (0,1).
  void validate() const;
};

struct SweepRow {
  double axis_value = 0.0;
  double accuracy = 0.0;
  double accuracy_count = 0.0;
  double knowledge_loss = 0.0;
  double web_loss = 0.0;
  double mixture_loss = 0.0;
  double knowledge_capacity = 0.0;
};

/// One row per grid point, in grid order. Grid points are evaluated on up to
/// \p workers threads; the result does not depend on the worker count.
std::vector<SweepRow> sweep(const SweepConfig& config, unsigned workers = 1);

/// First axis value whose accuracy reaches the target, if any.
std::optional<double> first_reaching(const std::vector<SweepRow>& rows, double target);

/// 41 geometric points over [3e9, 2e10] bits. With the default web curve the
/// threshold group moves from about 20 to about 90 over this range; lower
/// groups are spaced too coarsely in frequency for a clean slope.
std::vector<double> default_subset_capacity_grid();

struct SubsetExperiment {
  std::size_t group_count = 100;
  std::size_t group_size = 100;
  double powerlaw_exponent = 1.5;
  double mixing_ratio = 0.01;
  double fact_entropy = synbio_entropy_bits();  // bits per fact
  double accuracy_target = 0.8;
  WebLossCurve web_curve = WebLossCurve::power_law(0.0, 3e6, 0.283);
  std::vector<double> capacity_grid = default_subset_capacity_grid();

  void validate() const;
};

/// Group weights, normalized to sum 1, group g (1-based) weighing g^-exponent.
std::vector<double> subset_group_weights(const SubsetExperiment& exp);

/// Knowledge universe of the experiment: group g's weight split evenly among
/// its facts.
KnowledgeUniverse subset_universe(const SubsetExperiment& exp);

struct SubsetPoint {
  double capacity = 0.0;
  std::vector<double> group_accuracy;  // index g-1
  /// Corpus frequency r * p of the first group, in descending weight order,
  /// whose accuracy is below target; nullopt when every group reaches it.
  std::optional<double> f_thres;
};

std::vector<SubsetPoint> run_subset_experiment(const SubsetExperiment& exp);

/// Marker written in place of f_thres when every group reaches the target.
inline constexpr const char* kBelowRange = "below_range";

/// Log-log fit of f_thres against capacity. The fitted slope is negative;
/// its magnitude estimates alpha + 1.
FitResult threshold_law(const std::vector<std::pair<double, double>>& points);

/// Observed and predicted threshold exponents reported for the biography
/// experiments, kept for comparison output.
struct ThresholdExponentReference {
  static constexpr double observed = 1.152;
  static constexpr double predicted = 1.283;
  static constexpr double web_exponent = 0.283;
};

}  // namespace knowmix
