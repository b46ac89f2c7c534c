// SPDX-License-Identifier: Apache-2.0

#include "knowmix/universe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include <fmt/format.h>

namespace knowmix {

namespace {

constexpr double kUniformTolerance = 1e-12;

void require_capacity(double capacity) {
  if (!(capacity >= 0.0)) {
    throw std::domain_error(fmt::format("capacity must be >= 0, got {}", capacity));
  }
}

void require_threshold(double t) {
  if (!(t > 0.0)) {
    throw std::domain_error(fmt::format("marginal threshold t must be > 0, got {}", t));
  }
}

}  // namespace

void FactSpec::validate() const {
  if (!(exposure_frequency > 0.0 && exposure_frequency <= 1.0)) {
    throw std::invalid_argument(
        fmt::format("exposure_frequency must lie in (0, 1], got {}", exposure_frequency));
  }
  if (!(target_entropy >= 0.0) || !std::isfinite(target_entropy)) {
    throw std::invalid_argument(
        fmt::format("target_entropy must be finite and >= 0, got {}", target_entropy));
  }
}

// ---------------------------------------------------------------------------
// KnowledgeUniverse
// ---------------------------------------------------------------------------

KnowledgeUniverse::KnowledgeUniverse(std::vector<FactSpec> facts, double irreducible_loss)
    : facts_(std::move(facts)), irreducible_loss_(irreducible_loss) {
  validate(true);
}

KnowledgeUniverse::KnowledgeUniverse(std::vector<FactSpec> facts, double irreducible_loss,
                                     SkipMassCheck)
    : facts_(std::move(facts)), irreducible_loss_(irreducible_loss) {
  validate(false);
}

void KnowledgeUniverse::validate(bool check_mass) {
  if (!(irreducible_loss_ >= 0.0) || !std::isfinite(irreducible_loss_)) {
    throw std::invalid_argument(
        fmt::format("irreducible_loss must be finite and >= 0, got {}", irreducible_loss_));
  }
  double mass = 0.0;
  total_entropy_ = 0.0;
  for (const auto& fact : facts_) {
    fact.validate();
    mass += fact.exposure_frequency;
    total_entropy_ += fact.target_entropy;
  }
  // Contexts of different facts are disjoint, so their probabilities add up
  // to at most one.
  if (check_mass && mass > 1.0 + 1e-12) {
    throw std::invalid_argument(
        fmt::format("sum of exposure_frequency must be <= 1, got {}", mass));
  }
  if (!std::isfinite(total_entropy_)) {
    throw std::invalid_argument("total target entropy is not finite");
  }
}

KnowledgeUniverse KnowledgeUniverse::rescaled(const KnowledgeUniverse& base, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw std::domain_error(fmt::format("frequency factor must be positive, got {}", factor));
  }
  auto facts = base.facts_;
  if (factor != 1.0) {
    for (auto& fact : facts) fact.exposure_frequency *= factor;
  }
  return KnowledgeUniverse(std::move(facts), base.irreducible_loss_, SkipMassCheck{});
}

KnowledgeUniverse KnowledgeUniverse::uniform(std::size_t count, double p, double h,
                                             double irreducible_loss) {
  return KnowledgeUniverse(std::vector<FactSpec>(count, FactSpec{p, h}), irreducible_loss);
}

double KnowledgeUniverse::total_frequency() const noexcept {
  double mass = 0.0;
  for (const auto& fact : facts_) mass += fact.exposure_frequency;
  return mass;
}

double KnowledgeUniverse::loss_at_zero() const {
  // Summed in fill order so it matches knowledge_frontier at zero capacity
  // to the last bit.
  double unlearned = 0.0;
  for (const std::size_t i : fill_order(*this)) {
    unlearned += facts_[i].exposure_frequency * facts_[i].target_entropy;
  }
  return irreducible_loss_ + unlearned;
}

std::optional<double> KnowledgeUniverse::uniform_frequency() const noexcept {
  if (facts_.empty()) return std::nullopt;
  const double p = facts_.front().exposure_frequency;
  for (const auto& fact : facts_) {
    if (std::abs(fact.exposure_frequency - p) > kUniformTolerance * p) return std::nullopt;
  }
  return p;
}

// ---------------------------------------------------------------------------
// WebLossCurve
// ---------------------------------------------------------------------------

WebLossCurve::WebLossCurve(PowerLawCurve curve) : curve_(curve) {
  if (!(curve.exponent > 0.0 && curve.exponent < 1.0)) {
    throw std::invalid_argument(
        fmt::format("power-law exponent alpha must lie in (0, 1), got {}", curve.exponent));
  }
  if (!(curve.amplitude > 0.0) || !std::isfinite(curve.amplitude)) {
    throw std::invalid_argument(
        fmt::format("power-law amplitude must be > 0, got {}", curve.amplitude));
  }
  if (!(curve.floor >= 0.0) || !std::isfinite(curve.floor)) {
    throw std::invalid_argument(fmt::format("power-law floor must be >= 0, got {}", curve.floor));
  }
}

WebLossCurve::WebLossCurve(TabulatedCurve curve) : curve_(std::move(curve)) {
  const auto& pts = std::get<TabulatedCurve>(curve_).points;
  if (pts.size() < 2) {
    throw std::invalid_argument("tabulated curve needs at least 2 points");
  }
  if (pts.front().first != 0.0) {
    throw std::invalid_argument("tabulated curve must start at capacity 0");
  }
  for (const auto& [m, f] : pts) {
    if (!std::isfinite(m) || !std::isfinite(f)) {
      throw std::invalid_argument("tabulated curve points must be finite");
    }
  }
  slopes_.reserve(pts.size() - 1);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double dm = pts[i + 1].first - pts[i].first;
    const double df = pts[i + 1].second - pts[i].second;
    if (!(dm > 0.0)) {
      throw std::invalid_argument("tabulated curve capacities must be strictly increasing");
    }
    if (df > 0.0) {
      throw std::invalid_argument(
          fmt::format("tabulated curve loss increases between capacities {} and {}",
                      pts[i].first, pts[i + 1].first));
    }
    slopes_.push_back(-df / dm);
  }
  for (std::size_t i = 0; i + 1 < slopes_.size(); ++i) {
    const double tol = 1e-12 * std::max(1.0, slopes_[i]);
    if (slopes_[i + 1] > slopes_[i] + tol) {
      throw std::invalid_argument(fmt::format(
          "tabulated curve is not convex at capacity {}", pts[i + 1].first));
    }
    // Clamp rounding-level violations so the marginal is exactly monotone.
    slopes_[i + 1] = std::min(slopes_[i + 1], slopes_[i]);
  }
}

double WebLossCurve::eval(double capacity) const {
  require_capacity(capacity);
  if (const auto* pl = as_power_law()) {
    if (capacity == 0.0) return std::numeric_limits<double>::infinity();
    return pl->floor + pl->amplitude * std::pow(capacity, -pl->exponent);
  }
  const auto& pts = as_tabulated()->points;
  if (capacity >= pts.back().first) return pts.back().second;
  // First point with capacity > M; M >= 0 = pts[0] so it is never begin().
  const auto hi = std::upper_bound(pts.begin(), pts.end(), capacity,
                                   [](double m, const auto& p) { return m < p.first; });
  const auto lo = std::prev(hi);
  const double w = (capacity - lo->first) / (hi->first - lo->first);
  return lo->second + w * (hi->second - lo->second);
}

double WebLossCurve::marginal(double capacity, Side side) const {
  require_capacity(capacity);
  if (side == Side::left && capacity == 0.0) {
    throw std::domain_error("left marginal is undefined at capacity 0");
  }
  if (const auto* pl = as_power_law()) {
    if (capacity == 0.0) return std::numeric_limits<double>::infinity();
    return pl->amplitude * pl->exponent * std::pow(capacity, -pl->exponent - 1.0);
  }
  const auto& pts = as_tabulated()->points;
  if (side == Side::right) {
    if (capacity >= pts.back().first) return 0.0;
    const auto hi = std::upper_bound(pts.begin(), pts.end(), capacity,
                                     [](double m, const auto& p) { return m < p.first; });
    return slopes_[static_cast<std::size_t>(hi - pts.begin()) - 1];
  }
  if (capacity > pts.back().first) return 0.0;
  // First point with capacity >= M ends the segment to the left of M.
  const auto hi = std::lower_bound(pts.begin(), pts.end(), capacity,
                                   [](const auto& p, double m) { return p.first < m; });
  return slopes_[static_cast<std::size_t>(hi - pts.begin()) - 1];
}

double WebLossCurve::m0_minus(double t) const {
  require_threshold(t);
  if (const auto* pl = as_power_law()) {
    return std::pow(pl->amplitude * pl->exponent / t, 1.0 / (pl->exponent + 1.0));
  }
  const auto& pts = as_tabulated()->points;
  const auto steep = static_cast<std::size_t>(
      std::partition_point(slopes_.begin(), slopes_.end(), [t](double s) { return s > t; }) -
      slopes_.begin());
  return steep == 0 ? 0.0 : pts[steep].first;
}

double WebLossCurve::m0_plus(double t) const {
  require_threshold(t);
  if (const auto* pl = as_power_law()) {
    return std::pow(pl->amplitude * pl->exponent / t, 1.0 / (pl->exponent + 1.0));
  }
  const auto& pts = as_tabulated()->points;
  const auto not_flat = static_cast<std::size_t>(
      std::partition_point(slopes_.begin(), slopes_.end(), [t](double s) { return s >= t; }) -
      slopes_.begin());
  return pts[not_flat].first;
}

MixtureUniverse::MixtureUniverse(KnowledgeUniverse k, WebLossCurve w, double r)
    : knowledge(std::move(k)), web(std::move(w)), mixing_ratio(r) {
  if (!(r > 0.0 && r < 1.0)) {
    throw std::invalid_argument(fmt::format("mixing_ratio must lie in (0, 1), got {}", r));
  }
}

// ---------------------------------------------------------------------------
// Free functions
// ---------------------------------------------------------------------------

double eval_web_loss(const WebLossCurve& curve, double capacity) { return curve.eval(capacity); }

double web_marginal(const WebLossCurve& curve, double capacity, Side side) {
  return curve.marginal(capacity, side);
}

double m0_minus(const WebLossCurve& curve, double t) { return curve.m0_minus(t); }
double m0_plus(const WebLossCurve& curve, double t) { return curve.m0_plus(t); }

double warmup_loss(const KnowledgeUniverse& knowledge, double capacity) {
  require_capacity(capacity);
  const auto p = knowledge.uniform_frequency();
  if (!p && !knowledge.facts().empty()) {
    throw std::invalid_argument(
        "warmup_loss requires a single shared exposure_frequency; "
        "use knowledge_frontier for heterogeneous facts");
  }
  const double freq = p.value_or(0.0);
  return knowledge.irreducible_loss() +
         freq * std::max(knowledge.total_entropy() - capacity, 0.0);
}

std::vector<std::size_t> fill_order(const KnowledgeUniverse& knowledge) {
  const auto& facts = knowledge.facts();
  std::vector<std::size_t> order(facts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&facts](std::size_t a, std::size_t b) {
    return facts[a].exposure_frequency > facts[b].exposure_frequency;
  });
  return order;
}

FrontierResult knowledge_frontier(const KnowledgeUniverse& knowledge, double capacity) {
  require_capacity(capacity);
  const auto& facts = knowledge.facts();
  FrontierResult result;
  result.learned.assign(facts.size(), 0.0);

  if (capacity >= knowledge.total_entropy()) {
    result.learned.assign(facts.size(), 1.0);
    result.loss = knowledge.irreducible_loss();
    return result;
  }
  double remaining = capacity;
  double unlearned_loss = 0.0;
  for (const std::size_t i : fill_order(knowledge)) {
    const auto& fact = facts[i];
    double unlearned_bits = fact.target_entropy;
    if (fact.target_entropy == 0.0) {
      // Costs no capacity, so always learned.
      result.learned[i] = 1.0;
    } else if (remaining > 0.0) {
      if (fact.target_entropy <= remaining) {
        result.learned[i] = 1.0;
        unlearned_bits = 0.0;
        remaining -= fact.target_entropy;
      } else {
        result.learned[i] = remaining / fact.target_entropy;
        unlearned_bits = fact.target_entropy - remaining;
        remaining = 0.0;
      }
    }
    unlearned_loss += fact.exposure_frequency * unlearned_bits;
  }
  result.loss = knowledge.irreducible_loss() + unlearned_loss;
  return result;
}

}  // namespace knowmix
