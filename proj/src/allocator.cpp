// SPDX-License-Identifier: Apache-2.0

#include "knowmix/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

namespace knowmix {

namespace {

double require_uniform(const KnowledgeUniverse& knowledge, const char* what) {
  const auto p = knowledge.uniform_frequency();
  if (!p) {
    throw std::invalid_argument(fmt::format(
        "{} requires every fact to share one exposure_frequency (heterogeneous or empty universe)",
        what));
  }
  return *p;
}

// Frequency ratio at which one bit spent on a fact of frequency p saves as
// much mixture loss as one bit spent on the web domain.
double marginal_threshold(double r, double p) { return r * p / (1.0 - r); }

}  // namespace

double mixture_objective(const MixtureUniverse& mixture, double total_capacity,
                         double knowledge_capacity) {
  const double r = mixture.mixing_ratio;
  const double web_capacity = std::max(total_capacity - knowledge_capacity, 0.0);
  return r * knowledge_frontier(mixture.knowledge, knowledge_capacity).loss +
         (1.0 - r) * mixture.web.eval(web_capacity);
}

Allocation optimal_allocation(const MixtureUniverse& mixture, double total_capacity) {
  if (!(total_capacity >= 0.0)) {
    throw std::domain_error(
        fmt::format("total_capacity must be >= 0, got {}", total_capacity));
  }
  const auto& knowledge = mixture.knowledge;
  const auto& web = mixture.web;
  const double r = mixture.mixing_ratio;
  const double cap = std::min(total_capacity, knowledge.total_entropy());

  double m1 = 0.0;
  if (cap > 0.0) {
    if (const auto p = knowledge.uniform_frequency()) {
      const double reserve = web.m0_minus(marginal_threshold(r, *p));
      m1 = std::clamp(total_capacity - reserve, 0.0, cap);
    } else {
      const auto& facts = knowledge.facts();
      for (const std::size_t i : fill_order(knowledge)) {
        const auto& fact = facts[i];
        if (fact.target_entropy == 0.0) continue;
        const double reserve = web.m0_minus(marginal_threshold(r, fact.exposure_frequency));
        const double room = std::min(total_capacity - reserve, cap) - m1;
        if (room <= 0.0) break;
        const double take = std::min(fact.target_entropy, room);
        m1 += take;
        // Facts further down the order have lower frequency and need at
        // least as much web reserve, so nothing after a partial fact fits.
        if (take < fact.target_entropy) break;
      }
      m1 = std::min(m1, cap);
    }
  }

  Allocation out;
  out.total_capacity = total_capacity;
  out.knowledge_capacity = m1;
  out.web_capacity = total_capacity - m1;
  auto frontier = knowledge_frontier(knowledge, m1);
  out.knowledge_loss = frontier.loss;
  out.learned = std::move(frontier.learned);
  out.web_loss = web.eval(out.web_capacity);
  out.mixture_loss = r * out.knowledge_loss + (1.0 - r) * out.web_loss;
  return out;
}

double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double tolerance) {
  if (!(hi >= lo)) throw std::invalid_argument("golden_section_minimize needs lo <= hi");
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  // Stop also when the bracket no longer shrinks in floating point.
  for (int iter = 0; b - a > tolerance && iter < 400; ++iter) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  const double mid = 0.5 * (a + b);
  double best = hi;
  double best_value = f(hi);
  for (const double x : {mid, lo}) {
    const double v = f(x);
    if (v < best_value) {
      best = x;
      best_value = v;
    }
  }
  return best;
}

double optimal_knowledge_capacity_numeric(const MixtureUniverse& mixture, double total_capacity,
                                          double tolerance) {
  const double cap = std::min(total_capacity, mixture.knowledge.total_entropy());
  if (cap <= 0.0) return 0.0;
  return golden_section_minimize(
      [&](double m) { return mixture_objective(mixture, total_capacity, m); }, 0.0, cap,
      tolerance);
}

DomainLosses domain_losses(const MixtureUniverse& mixture, double total_capacity) {
  const auto a = optimal_allocation(mixture, total_capacity);
  return {a.knowledge_loss, a.web_loss};
}

ThresholdReport threshold_model_size(const MixtureUniverse& mixture) {
  const double p = require_uniform(mixture.knowledge, "threshold_model_size");
  const double r = mixture.mixing_ratio;
  const double t = marginal_threshold(r, p);

  ThresholdReport report;
  report.model_size_lower = mixture.web.m0_minus(t);
  report.model_size_upper = mixture.web.m0_plus(t) + mixture.knowledge.total_entropy();
  if (const auto* pl = mixture.web.as_power_law()) {
    report.exponent = pl->exponent + 1.0;
    report.model_size_nominal = std::pow(pl->amplitude * pl->exponent * (1.0 - r) / (r * p),
                                         1.0 / (pl->exponent + 1.0));
  }
  return report;
}

MixingRatioThresholds threshold_mixing_ratio(const KnowledgeUniverse& knowledge,
                                             const WebLossCurve& web, double total_capacity) {
  const double p = require_uniform(knowledge, "threshold_mixing_ratio");
  if (!(total_capacity > 0.0)) {
    throw std::domain_error(
        fmt::format("total_capacity must be > 0 for mixing-ratio thresholds, got {}",
                    total_capacity));
  }
  MixingRatioThresholds out;
  const double g = web.marginal(total_capacity, Side::left);
  out.r_lower = g / (p + g);
  out.r_asymptotic = g / p;
  const double web_when_full = total_capacity - knowledge.total_entropy();
  if (web_when_full <= 0.0) {
    out.r_upper = 1.0;
  } else {
    const double g_full = web.marginal(web_when_full, Side::right);
    out.r_upper = g_full / (p + g_full);
  }
  out.r_lower = std::clamp(out.r_lower, 0.0, 1.0);
  out.r_upper = std::clamp(out.r_upper, out.r_lower, 1.0);
  return out;
}

FrequencyThresholds threshold_frequency(const WebLossCurve& web, double total_capacity,
                                        double within_domain_p, double h_tot) {
  if (!(total_capacity > 0.0)) {
    throw std::domain_error(fmt::format("total_capacity must be > 0, got {}", total_capacity));
  }
  if (!(within_domain_p > 0.0)) {
    throw std::domain_error(
        fmt::format("within-domain exposure_frequency must be > 0, got {}", within_domain_p));
  }
  if (!(h_tot >= 0.0)) {
    throw std::domain_error(fmt::format("h_tot must be >= 0, got {}", h_tot));
  }
  const double p = within_domain_p;
  FrequencyThresholds out;
  const double g = web.marginal(total_capacity, Side::left);
  out.f_asymptotic = g;
  out.f_lower = p * g / (p + g);
  const double web_when_full = total_capacity - h_tot;
  if (web_when_full <= 0.0) {
    out.f_upper = p;
  } else {
    const double g_full = web.marginal(web_when_full, Side::right);
    out.f_upper = p * g_full / (p + g_full);
  }
  out.f_upper = std::max(out.f_upper, out.f_lower);
  return out;
}

ThresholdReport full_threshold_report(const MixtureUniverse& mixture, double total_capacity) {
  auto report = threshold_model_size(mixture);
  report.total_capacity = total_capacity;
  report.mixing_ratio = threshold_mixing_ratio(mixture.knowledge, mixture.web, total_capacity);
  report.frequency =
      threshold_frequency(mixture.web, total_capacity, *mixture.knowledge.uniform_frequency(),
                          mixture.knowledge.total_entropy());
  return report;
}

MixtureUniverse apply_subsampling(const MixtureUniverse& mixture, double keep_ratio) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) {
    throw std::domain_error(fmt::format("keep_ratio must lie in (0, 1], got {}", keep_ratio));
  }
  const auto& facts = mixture.knowledge.facts();
  const double exact = keep_ratio * static_cast<double>(facts.size());
  const double nearest = std::round(exact);
  // keep_ratio * K that is an integer up to rounding is not bumped up by ceil.
  const double kept_real =
      std::abs(exact - nearest) <= 1e-9 * std::max(1.0, exact) ? nearest : std::ceil(exact);
  const auto kept = std::min(facts.size(), static_cast<std::size_t>(kept_real));

  std::vector<FactSpec> retained(facts.begin(), facts.begin() + static_cast<std::ptrdiff_t>(kept));
  const KnowledgeUniverse prefix(std::move(retained), mixture.knowledge.irreducible_loss());
  // Rounding K up can leave the rescaled mass a little above the original.
  return MixtureUniverse(KnowledgeUniverse::rescaled(prefix, 1.0 / keep_ratio), mixture.web,
                         mixture.mixing_ratio);
}

double ckm_frequency_multiplier(double ckm_ratio, double original_tokens_per_fact,
                                double compact_tokens_per_fact) {
  if (!(ckm_ratio >= 0.0) || !std::isfinite(ckm_ratio)) {
    throw std::domain_error(fmt::format("ckm_ratio must be finite and >= 0, got {}", ckm_ratio));
  }
  if (!(original_tokens_per_fact > 0.0) || !(compact_tokens_per_fact > 0.0)) {
    throw std::domain_error(fmt::format(
        "token counts per fact must be > 0, got original={} compact={}",
        original_tokens_per_fact, compact_tokens_per_fact));
  }
  return (1.0 + ckm_ratio * original_tokens_per_fact / compact_tokens_per_fact) /
         (1.0 + ckm_ratio);
}

MixtureUniverse apply_ckm(const MixtureUniverse& mixture, double ckm_ratio,
                          double original_tokens_per_fact, double compact_tokens_per_fact) {
  const double multiplier =
      ckm_frequency_multiplier(ckm_ratio, original_tokens_per_fact, compact_tokens_per_fact);
  return MixtureUniverse(KnowledgeUniverse::rescaled(mixture.knowledge, multiplier), mixture.web,
                         mixture.mixing_ratio);
}

}  // namespace knowmix
