// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "knowmix/simulator.hpp"
#include "oracles.hpp"

using namespace knowmix;

namespace {

MixtureUniverse example_mixture(double r = 0.25) {
  return {KnowledgeUniverse::uniform(5, 1e-3, 1000.0), WebLossCurve::power_law(1.0, 100.0, 0.5), r};
}

std::vector<double> geometric(double lo, double hi, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
  return out;
}

std::vector<double> linear(double lo, double hi, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(lo + (hi - lo) * i / (n - 1));
  return out;
}

std::vector<std::pair<double, double>> threshold_points(const std::vector<SubsetPoint>& pts) {
  std::vector<std::pair<double, double>> out;
  for (const auto& p : pts) {
    if (p.f_thres) out.emplace_back(p.capacity, *p.f_thres);
  }
  return out;
}

}  // namespace

TEST_CASE("accuracy") {
  const auto mix = example_mixture();
  const double h_tot = mix.knowledge.total_entropy();
  Allocation a;
  a.learned.assign(5, 0.0);
  CHECK(accuracy(a, mix.knowledge) == 0.0);
  a.learned.assign(5, 1.0);
  CHECK(accuracy(a, mix.knowledge) == 1.0);
  // One and a quarter facts of five learned.
  a.learned = {1.0, 0.25, 0.0, 0.0, 0.0};
  CHECK(accuracy(a, mix.knowledge) == doctest::Approx(0.25));
  CHECK(accuracy_by_count(a) == doctest::Approx(0.25));
  CHECK(h_tot == 5000.0);

  const KnowledgeUniverse mixed({{0.1, 30.0}, {0.2, 10.0}}, 0.0);
  a.learned = {0.0, 1.0};
  CHECK(accuracy(a, mixed) == doctest::Approx(0.25));
  CHECK(accuracy_by_count(a) == doctest::Approx(0.5));

  const KnowledgeUniverse empty_h({{0.5, 0.0}}, 0.0);
  a.learned = {0.0};
  CHECK(accuracy(a, empty_h) == 1.0);
}

TEST_CASE("model-size sweep shape") {
  const auto mix = example_mixture();
  const auto band = threshold_model_size(mix);
  const double h_tot = mix.knowledge.total_entropy();
  SweepConfig cfg{mix, SweepAxis::model_size, linear(1.0, band.model_size_upper * 2, 400)};
  const auto rows = sweep(cfg);
  REQUIRE(rows.size() == 400);
  double first_rise = -1.0;
  double last_rise = -1.0;
  for (const auto& row : rows) {
    if (row.axis_value <= band.model_size_lower) CHECK(row.accuracy == 0.0);
    if (row.axis_value >= band.model_size_upper) CHECK(row.accuracy == 1.0);
    if (row.accuracy > 0.0 && row.accuracy < 1.0) {
      if (first_rise < 0) first_rise = row.axis_value;
      last_rise = row.axis_value;
    }
  }
  REQUIRE(first_rise > 0);
  const auto* pl = mix.web.as_power_law();
  REQUIRE(pl != nullptr);
  const double t = mix.mixing_ratio * 1e-3 / (1 - mix.mixing_ratio);
  CHECK(last_rise - first_rise <= h_tot + (mix.web.m0_plus(t) - mix.web.m0_minus(t)));
  CHECK(rows.front().accuracy == 0.0);
  CHECK(rows.back().accuracy == 1.0);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].accuracy >= rows[i - 1].accuracy);
    CHECK(rows[i].axis_value > rows[i - 1].axis_value);
  }
  const auto reached = first_reaching(rows, 0.8);
  REQUIRE(reached.has_value());
  CHECK(*reached > band.model_size_lower);
  CHECK(*reached < band.model_size_upper);
}

TEST_CASE("mixing-ratio sweep") {
  const auto base = example_mixture();
  const double m = 20000.0;
  const auto th = threshold_mixing_ratio(base.knowledge, base.web, m);
  REQUIRE(th.r_lower < th.r_upper);
  SweepConfig cfg{base, SweepAxis::mixing_ratio, linear(0.005, 0.995, 199), m};
  for (const auto& row : sweep(cfg)) {
    if (row.axis_value <= th.r_lower) CHECK(row.accuracy == 0.0);
    if (row.axis_value >= th.r_upper) CHECK(row.accuracy == 1.0);
  }

  // Capacity below m0_minus even at the largest ratio.
  const double r_max = 0.3;
  const double t = r_max * 1e-3 / (1 - r_max);
  SweepConfig low{base, SweepAxis::mixing_ratio, linear(0.01, r_max, 30), 0.5 * base.web.m0_minus(t)};
  for (const auto& row : sweep(low)) CHECK(row.accuracy == 0.0);
}

TEST_CASE("sweep invariants on random mixtures") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 1 + rng() % 20;
    const double h = 10 + 1000 * u(rng);
    const auto know = KnowledgeUniverse::uniform(k, (0.1 + 0.9 * u(rng)) / k, h, u(rng));
    const auto web = WebLossCurve::power_law(u(rng), 1 + 100 * u(rng), 0.1 + 0.8 * u(rng));
    const MixtureUniverse mix(know, web, 0.05 + 0.9 * u(rng));
    SweepConfig cfg{mix, SweepAxis::model_size, geometric(1.0, 1e7, 60)};
    const auto rows = sweep(cfg);
    const double h_tot = know.total_entropy();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& row = rows[i];
      if (i > 0) CHECK(row.accuracy >= rows[i - 1].accuracy);
      CHECK(row.accuracy * h_tot + (h_tot - row.knowledge_capacity) == doctest::Approx(h_tot).epsilon(1e-12));
      CHECK(row.mixture_loss ==
            doctest::Approx(mix.mixing_ratio * row.knowledge_loss + (1 - mix.mixing_ratio) * row.web_loss));
    }
    SweepConfig ratio{mix, SweepAxis::mixing_ratio, linear(0.01, 0.99, 50), 1e4 * u(rng) + 1};
    const auto rrows = sweep(ratio);
    for (std::size_t i = 1; i < rrows.size(); ++i) CHECK(rrows[i].accuracy >= rrows[i - 1].accuracy);
  }
}

TEST_CASE("sweep is independent of worker count") {
  const auto mix = example_mixture();
  SweepConfig cfg{mix, SweepAxis::model_size, geometric(1.0, 1e6, 97)};
  const auto one = sweep(cfg, 1);
  for (unsigned w : {2u, 3u, 8u, 200u}) {
    const auto many = sweep(cfg, w);
    REQUIRE(many.size() == one.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
      CHECK(many[i].axis_value == one[i].axis_value);
      CHECK(many[i].accuracy == one[i].accuracy);
      CHECK(many[i].mixture_loss == one[i].mixture_loss);
    }
  }
}

TEST_CASE("sweep validation") {
  const auto mix = example_mixture();
  CHECK_THROWS_AS(sweep(SweepConfig{mix, SweepAxis::model_size, {}}), std::invalid_argument);
  CHECK_THROWS_AS(sweep(SweepConfig{mix, SweepAxis::model_size, {2, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(sweep(SweepConfig{mix, SweepAxis::model_size, {1, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(sweep(SweepConfig{mix, SweepAxis::mixing_ratio, {0.5, 1.0}, 10.0}), std::invalid_argument);
  CHECK_THROWS_AS(sweep(SweepConfig{mix, SweepAxis::model_size, {1, 2}, 0.0, 1.0}), std::invalid_argument);
}

TEST_CASE("subset group weights and universe") {
  SubsetExperiment exp;
  const auto w = subset_group_weights(exp);
  REQUIRE(w.size() == 100);
  double sum = 0;
  for (double x : w) sum += x;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w[1] / w[0] == doctest::Approx(std::pow(2.0, -1.5)));
  for (std::size_t g = 1; g < w.size(); ++g) CHECK(w[g] < w[g - 1]);
  const auto uni = subset_universe(exp);
  CHECK(uni.size() == 10000);
  CHECK(uni.facts()[0].exposure_frequency == doctest::Approx(w[0] / 100));
  CHECK(uni.facts()[9999].exposure_frequency == doctest::Approx(w[99] / 100));
  CHECK(uni.total_frequency() == doctest::Approx(1.0).epsilon(1e-12));

  SubsetExperiment bad;
  bad.group_count = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = SubsetExperiment{};
  bad.powerlaw_exponent = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = SubsetExperiment{};
  bad.capacity_grid = {};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("subset experiment: full capacity and monotone groups") {
  SubsetExperiment exp;
  exp.group_count = 20;
  exp.group_size = 10;
  const auto uni = subset_universe(exp);
  exp.capacity_grid = geometric(1e5, 1e10, 40);
  const MixtureUniverse mix(uni, exp.web_curve, exp.mixing_ratio);
  const auto pts = run_subset_experiment(exp);
  REQUIRE(pts.size() == 40);
  for (const auto& p : pts) {
    for (std::size_t g = 1; g < p.group_accuracy.size(); ++g) CHECK(p.group_accuracy[g] <= p.group_accuracy[g - 1]);
    const auto alloc = optimal_allocation(mix, p.capacity);
    if (alloc.knowledge_capacity >= uni.total_entropy()) {
      CHECK(!p.f_thres.has_value());
      for (double a : p.group_accuracy) CHECK(a == 1.0);
    }
  }
  // Far above every threshold the sentinel is reported.
  exp.capacity_grid = {1e15};
  const auto top = run_subset_experiment(exp);
  CHECK(!top[0].f_thres.has_value());
  for (double a : top[0].group_accuracy) CHECK(a == 1.0);
}

TEST_CASE("subset experiment: two-group toy") {
  SubsetExperiment exp;
  exp.group_count = 2;
  exp.group_size = 1;
  exp.fact_entropy = 100.0;
  exp.mixing_ratio = 0.1;
  exp.web_curve = WebLossCurve::power_law(0.0, 50.0, 0.5);
  const auto w = subset_group_weights(exp);
  CHECK(w[0] / w[1] == doctest::Approx(std::pow(2.0, 1.5)));

  // Pick M so the web reserve at m1 = 100 lies between the two facts' m0.
  const double t1 = exp.mixing_ratio * w[0] / (1 - exp.mixing_ratio);
  const double t2 = exp.mixing_ratio * w[1] / (1 - exp.mixing_ratio);
  const double m0_1 = exp.web_curve.m0_minus(t1);
  const double m0_2 = exp.web_curve.m0_minus(t2);
  REQUIRE(m0_1 < m0_2);
  const double capacity = 0.5 * (m0_1 + m0_2) + 100.0;
  exp.capacity_grid = {capacity};
  const auto pts = run_subset_experiment(exp);
  CHECK(pts[0].group_accuracy[0] == doctest::Approx(1.0));
  CHECK(pts[0].group_accuracy[1] == 0.0);
  REQUIRE(pts[0].f_thres.has_value());
  CHECK(*pts[0].f_thres == doctest::Approx(exp.mixing_ratio * w[1]));

  // Brute force over a 1e-3 grid of m1 agrees on the split.
  const MixtureUniverse mix(subset_universe(exp), exp.web_curve, exp.mixing_ratio);
  const auto facts = oracle::facts_of(mix.knowledge);
  double best_m = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 200000; ++i) {
    const double m1 = 200.0 * i / 200000;
    const double v = exp.mixing_ratio * oracle::knowledge_loss(facts, 0.0, m1) +
                     (1 - exp.mixing_ratio) * oracle::power_law(0.0, 50.0, 0.5, capacity - m1);
    if (v < best) {
      best = v;
      best_m = m1;
    }
  }
  CHECK(best_m == doctest::Approx(100.0).epsilon(1e-4));
}

TEST_CASE("subset experiment: default exponent law") {
  const SubsetExperiment exp;
  const auto pts = run_subset_experiment(exp);
  const auto th = threshold_points(pts);
  REQUIRE(th.size() >= 10);
  const auto fit = threshold_law(th);
  const double predicted = -(exp.web_curve.as_power_law()->exponent + 1);
  MESSAGE("fitted slope " << fit.params.at("slope") << " vs " << predicted);
  CHECK(std::abs(fit.params.at("slope") / predicted - 1) <= 0.02);
  CHECK(ThresholdExponentReference::predicted == doctest::Approx(ThresholdExponentReference::web_exponent + 1));
  CHECK(ThresholdExponentReference::observed == 1.152);
}

TEST_CASE("threshold frequency does not depend on small r") {
  // Fine groups so f_thres resolves small shifts.
  SubsetExperiment exp;
  exp.group_count = 2000;
  exp.group_size = 1;
  exp.capacity_grid = geometric(3e9, 1.5e10, 7);
  for (double r : {0.0025, 0.005}) {
    auto a = exp;
    a.mixing_ratio = r;
    auto b = exp;
    b.mixing_ratio = 2 * r;
    const auto pa = run_subset_experiment(a);
    const auto pb = run_subset_experiment(b);
    for (std::size_t i = 0; i < pa.size(); ++i) {
      REQUIRE(pa[i].f_thres.has_value());
      REQUIRE(pb[i].f_thres.has_value());
      CHECK(std::abs(std::log(*pb[i].f_thres) - std::log(*pa[i].f_thres)) <= 0.01);
    }
  }
}

TEST_CASE("threshold law") {
  std::vector<std::pair<double, double>> pts;
  for (double m = 1e6; m < 1e10; m *= 3) pts.emplace_back(m, 7 * std::pow(m, -1.283));
  const auto fit = threshold_law(pts);
  CHECK(fit.params.at("slope") == doctest::Approx(-1.283).epsilon(1e-12));
  CHECK(fit.r_squared == doctest::Approx(1.0).epsilon(1e-12));
  for (auto& p : pts) p.second = 0.25;
  CHECK(std::abs(threshold_law(pts).params.at("slope")) <= 1e-12);
  CHECK_THROWS_AS(threshold_law({{1, 1}, {2, 0}, {3, 1}}), std::domain_error);
  CHECK_THROWS_AS(threshold_law({{1, 1}, {2, 1}}), std::invalid_argument);
}
