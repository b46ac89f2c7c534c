// SPDX-License-Identifier: Apache-2.0
//
// Optimal bounded-capacity allocation between the knowledge domain and the
// web domain, and the phase-transition thresholds it implies.

#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "knowmix/universe.hpp"

namespace knowmix {

struct Allocation {
  double total_capacity = 0.0;
  double knowledge_capacity = 0.0;  // m1
  double web_capacity = 0.0;        // m2
  double knowledge_loss = 0.0;      // expected loss on the knowledge domain
  double web_loss = 0.0;
  double mixture_loss = 0.0;        // r * knowledge_loss + (1 - r) * web_loss
  std::vector<double> learned;      // per fact, original order
};

/// r * F1(m) + (1 - r) * F2(M - m) for one candidate knowledge capacity m.
double mixture_objective(const MixtureUniverse& mixture, double total_capacity,
                         double knowledge_capacity);

/// Minimizes the mixture objective over m1 in [0, min(M, H_tot)].
///
/// Facts are filled in frequency order; while filling a fact of frequency p
/// the knowledge side pays off until the web capacity drops to
/// m0_minus(r p / (1 - r)). This evaluates the convex objective's optimality
/// condition exactly, so for a power law with uniform facts it reduces to
/// m1 = clamp(M - m0_minus(rp / (1 - r)), 0, min(M, H_tot)). Among equal-loss
/// allocations the largest m1 is returned.
Allocation optimal_allocation(const MixtureUniverse& mixture, double total_capacity);

/// Golden-section search for the minimizer of a convex function on [lo, hi],
/// followed by a comparison against both endpoints (ties go to \p hi).
double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double tolerance = 1e-9);

/// The same minimization as optimal_allocation, done numerically with
/// golden_section_minimize. Independent of the marginal-threshold solver.
double optimal_knowledge_capacity_numeric(const MixtureUniverse& mixture, double total_capacity,
                                          double tolerance = 1e-9);

struct DomainLosses {
  double knowledge_loss = 0.0;
  double web_loss = 0.0;
};

DomainLosses domain_losses(const MixtureUniverse& mixture, double total_capacity);

struct MixingRatioThresholds {
  double r_lower = 0.0;       // at or below: nothing learned
  double r_upper = 1.0;       // at or above: everything learned
  double r_asymptotic = 0.0;  // small-r limit -F2'(M) / p
};

struct FrequencyThresholds {
  double f_lower = 0.0;
  double f_upper = 0.0;
  double f_asymptotic = 0.0;  // -F2'(M), the small-r limit
};

struct ThresholdReport {
  double model_size_lower = 0.0;  // m0_minus(rp/(1-r))
  double model_size_upper = 0.0;  // m0_plus(rp/(1-r)) + H_tot
  std::optional<double> model_size_nominal;  // (A alpha (1-r)/(r p))^(1/(alpha+1)), power law only
  std::optional<double> exponent;            // alpha + 1, power law only
  std::optional<double> total_capacity;      // set when ratio/frequency fields are filled
  std::optional<MixingRatioThresholds> mixing_ratio;
  std::optional<FrequencyThresholds> frequency;
};

/// Model-size band of the phase transition. Requires uniform fact frequency.
ThresholdReport threshold_model_size(const MixtureUniverse& mixture);

/// Mixing-ratio band at fixed capacity M > 0. Requires uniform fact
/// frequency. When M <= H_tot the upper bound is 1.
MixingRatioThresholds threshold_mixing_ratio(const KnowledgeUniverse& knowledge,
                                             const WebLossCurve& web, double total_capacity);

/// Threshold per-fact corpus frequency r p at capacity M for a fact of
/// within-domain frequency \p within_domain_p in a domain of entropy \p h_tot.
FrequencyThresholds threshold_frequency(const WebLossCurve& web, double total_capacity,
                                        double within_domain_p, double h_tot);

/// threshold_model_size plus the ratio and frequency bounds at M.
ThresholdReport full_threshold_report(const MixtureUniverse& mixture, double total_capacity);

/// Keeps the first ceil(keep_ratio * K) facts and divides their frequency by
/// keep_ratio, so the knowledge domain's token share is unchanged.
MixtureUniverse apply_subsampling(const MixtureUniverse& mixture, double keep_ratio);

/// (1 + tau * t_orig / t_compact) / (1 + tau).
double ckm_frequency_multiplier(double ckm_ratio, double original_tokens_per_fact,
                                double compact_tokens_per_fact);

/// Scales every fact's frequency by ckm_frequency_multiplier.
MixtureUniverse apply_ckm(const MixtureUniverse& mixture, double ckm_ratio,
                          double original_tokens_per_fact, double compact_tokens_per_fact);

}  // namespace knowmix
