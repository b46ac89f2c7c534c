// SPDX-License-Identifier: Apache-2.0
//
// Data universes and their best-achievable loss curves.
//
// All entropies and losses are in bits.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

namespace knowmix {

/// One random fact of the knowledge domain.
struct FactSpec {
  double exposure_frequency = 0.0;  // probability a context of this fact appears
  double target_entropy = 0.0;      // H(Y_i) of the target token

  /// Throws std::invalid_argument when either field is out of range.
  void validate() const;
};

/// K random facts with disjoint contexts plus the loss left over at
/// unbounded capacity.
class KnowledgeUniverse {
 public:
  KnowledgeUniverse() = default;
  KnowledgeUniverse(std::vector<FactSpec> facts, double irreducible_loss);

  /// \p count facts sharing frequency \p p and entropy \p h.
  static KnowledgeUniverse uniform(std::size_t count, double p, double h,
                                   double irreducible_loss = 0.0);

  /// Every frequency multiplied by \p factor. The result counts occurrences
  /// per unit of knowledge-domain tokens, so the total may exceed 1 (compact
  /// rephrasings fit more occurrences into the same token share). Each fact
  /// must still satisfy 0 < p <= 1.
  static KnowledgeUniverse rescaled(const KnowledgeUniverse& base, double factor);

  const std::vector<FactSpec>& facts() const noexcept { return facts_; }
  std::size_t size() const noexcept { return facts_.size(); }
  double irreducible_loss() const noexcept { return irreducible_loss_; }
  double total_entropy() const noexcept { return total_entropy_; }
  double total_frequency() const noexcept;

  /// Loss with zero capacity: C + sum p_i H_i.
  double loss_at_zero() const;

  /// The shared exposure frequency when every fact has the same one
  /// (relative tolerance 1e-12); nullopt otherwise or when empty.
  std::optional<double> uniform_frequency() const noexcept;

 private:
  struct SkipMassCheck {};
  KnowledgeUniverse(std::vector<FactSpec> facts, double irreducible_loss, SkipMassCheck);
  void validate(bool check_mass);

  std::vector<FactSpec> facts_;
  double irreducible_loss_ = 0.0;
  double total_entropy_ = 0.0;
};

enum class Side { left, right };

/// F(M) = floor + amplitude * M^(-exponent).
struct PowerLawCurve {
  double floor = 0.0;
  double amplitude = 1.0;
  double exponent = 0.5;
};

/// Piecewise-linear convex curve through (capacity, loss) points.
struct TabulatedCurve {
  std::vector<std::pair<double, double>> points;
};

/// Best-achievable loss of the web domain as a function of capacity.
///
/// Construction validates the curve: power laws need exponent in (0,1),
/// amplitude > 0 and floor >= 0; tables need at least two points starting at
/// capacity 0, strictly increasing capacities, non-increasing losses and
/// non-decreasing slopes. Non-convex tables are rejected, never repaired.
class WebLossCurve {
 public:
  explicit WebLossCurve(PowerLawCurve curve);
  explicit WebLossCurve(TabulatedCurve curve);

  static WebLossCurve power_law(double floor, double amplitude, double exponent) {
    return WebLossCurve(PowerLawCurve{floor, amplitude, exponent});
  }
  static WebLossCurve tabulated(std::vector<std::pair<double, double>> points) {
    return WebLossCurve(TabulatedCurve{std::move(points)});
  }

  bool is_power_law() const noexcept { return std::holds_alternative<PowerLawCurve>(curve_); }
  const PowerLawCurve* as_power_law() const noexcept { return std::get_if<PowerLawCurve>(&curve_); }
  const TabulatedCurve* as_tabulated() const noexcept { return std::get_if<TabulatedCurve>(&curve_); }

  /// F(M). A power law returns +infinity at M = 0; tables clamp to the last
  /// loss past the final point.
  double eval(double capacity) const;

  /// -D^-F(M) or -D^+F(M), always >= 0.
  double marginal(double capacity, Side side) const;

  /// sup{ M >= 0 : -F'(M) > t }, 0 when the set is empty.
  double m0_minus(double t) const;
  /// inf{ M >= 0 : -F'(M) < t }.
  double m0_plus(double t) const;

 private:
  std::variant<PowerLawCurve, TabulatedCurve> curve_;
  std::vector<double> slopes_;  // -slope of each table segment, non-increasing
};

/// A knowledge domain mixed with web data at ratio r.
struct MixtureUniverse {
  KnowledgeUniverse knowledge;
  WebLossCurve web;
  double mixing_ratio;

  MixtureUniverse(KnowledgeUniverse k, WebLossCurve w, double r);
};

double eval_web_loss(const WebLossCurve& curve, double capacity);
double web_marginal(const WebLossCurve& curve, double capacity, Side side);
double m0_minus(const WebLossCurve& curve, double t);
double m0_plus(const WebLossCurve& curve, double t);

/// C + p * max(H_tot - M, 0). Requires every fact to share one exposure
/// frequency; throws std::invalid_argument otherwise (use knowledge_frontier).
double warmup_loss(const KnowledgeUniverse& knowledge, double capacity);

struct FrontierResult {
  double loss = 0.0;
  std::vector<double> learned;  // per fact, original order, in [0, 1]
};

/// Greedy fractional fill: most frequent facts first (ties by index), the
/// boundary fact partially learned.
FrontierResult knowledge_frontier(const KnowledgeUniverse& knowledge, double capacity);

/// Fact indices in fill order: frequency descending, index ascending on ties.
std::vector<std::size_t> fill_order(const KnowledgeUniverse& knowledge);

}  // namespace knowmix
