// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Each check compares the library against the oracles in
// oracles.hpp or against closed forms computed here.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "cli.hpp"
#include "knowmix/allocator.hpp"
#include "knowmix/analysis.hpp"
#include "knowmix/corpus.hpp"
#include "knowmix/serialization.hpp"
#include "knowmix/simulator.hpp"
#include "knowmix/universe.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace knowmix;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
double log_uniform(Rng& rng, double lo, double hi) { return std::exp(uniform(rng, std::log(lo), std::log(hi))); }

KnowledgeUniverse random_facts(Rng& rng, std::size_t k) {
  std::vector<double> raw(k);
  double sum = 0;
  for (auto& x : raw) sum += (x = log_uniform(rng, 1e-3, 1.0));
  const double mass = uniform(rng, 0.05, 1.0);
  std::vector<FactSpec> facts;
  for (double x : raw) facts.push_back({x / sum * mass, uniform(rng, 1.0, 200.0)});
  return {facts, uniform(rng, 0.0, 2.0)};
}

/// Convex non-increasing table starting at capacity 0.
std::vector<std::pair<double, double>> random_table(Rng& rng) {
  const int n = 2 + static_cast<int>(rng() % 6);
  std::vector<double> slopes(n - 1);
  for (auto& s : slopes) s = log_uniform(rng, 1e-4, 1.0);
  std::sort(slopes.begin(), slopes.end(), std::greater<>());
  std::vector<std::pair<double, double>> pts{{0.0, uniform(rng, 5.0, 50.0)}};
  for (double s : slopes) {
    const double dx = uniform(rng, 10.0, 500.0);
    pts.emplace_back(pts.back().first + dx, pts.back().second - s * dx);
  }
  return pts;
}

struct RandomMixture {
  MixtureUniverse mixture;
  std::function<double(double)> web;  // oracle evaluation of the web curve
};

RandomMixture random_mixture(Rng& rng) {
  auto know = random_facts(rng, 1 + rng() % 8);
  const double r = uniform(rng, 0.02, 0.98);
  if (rng() % 2 == 0) {
    const double c = uniform(rng, 0.0, 2.0);
    const double a = log_uniform(rng, 1.0, 1000.0);
    const double alpha = uniform(rng, 0.1, 0.9);
    return {MixtureUniverse(std::move(know), WebLossCurve::power_law(c, a, alpha), r),
            [=](double m) { return oracle::power_law(c, a, alpha, m); }};
  }
  auto table = random_table(rng);
  return {MixtureUniverse(std::move(know), WebLossCurve::tabulated(table), r),
          [=](double m) { return oracle::tabulated(table, m); }};
}

double oracle_objective(const RandomMixture& rm, double m, double m1) {
  const auto facts = oracle::facts_of(rm.mixture.knowledge);
  const double r = rm.mixture.mixing_ratio;
  return r * oracle::knowledge_loss(facts, rm.mixture.knowledge.irreducible_loss(), m1) + (1 - r) * rm.web(m - m1);
}

Outcome warmup_law() {
  Outcome o;
  Rng rng(101);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const double c = uniform(rng, 0, 5);
    const std::size_t k = 1 + rng() % 50;
    const double p = uniform(rng, 1e-6, 1.0 / static_cast<double>(k));
    const double h = log_uniform(rng, 0.1, 1e4);
    const auto know = KnowledgeUniverse::uniform(k, p, h, c);
    const double h_tot = know.total_entropy();
    const double m = uniform(rng, 0, 2 * h_tot);
    const double expected = c + p * std::max(h_tot - m, 0.0);
    const double got = warmup_loss(know, m);
    worst = std::max(worst, std::abs(got - expected));
    o.require(std::abs(got - expected) <= 1e-12 * std::max(1.0, std::abs(expected)), "warmup value mismatch");
    const double a = uniform(rng, 0, h_tot);
    const double b = uniform(rng, 0, h_tot);
    if (std::abs(a - b) > 1e-6 * h_tot) {
      const double slope = (warmup_loss(know, a) - warmup_loss(know, b)) / (a - b);
      o.require(std::abs(slope + p) <= 1e-6 * p, fmt::format("slope {} != -{}", slope, p));
    }
  }
  if (o.pass) o.detail = fmt::format("1000 cases, max |error| {:.3g}", worst);
  return o;
}

Outcome allocation_optimality() {
  Outcome o;
  Rng rng(202);
  double worst = -1e300;
  for (int i = 0; i < 200; ++i) {
    const auto rm = random_mixture(rng);
    const double h_tot = rm.mixture.knowledge.total_entropy();
    const double m = log_uniform(rng, 1.0, 4 * h_tot + 2000);
    const auto alloc = optimal_allocation(rm.mixture, m);
    const double hi = std::min(m, h_tot);
    const double brute = oracle::grid_min([&](double m1) { return oracle_objective(rm, m, m1); }, hi, 1000);
    const double ours = oracle_objective(rm, m, alloc.knowledge_capacity);
    worst = std::max(worst, ours - brute);
    o.require(ours <= brute + 1e-6, fmt::format("mixture {}: gap {}", i, ours - brute));
    o.require(std::abs(ours - alloc.mixture_loss) <= 1e-9 * std::max(1.0, ours), "reported loss mismatch");
  }
  if (o.pass) o.detail = fmt::format("200 mixtures, worst gap {:.3g}", worst);
  return o;
}

Outcome phase_transition() {
  Outcome o;
  Rng rng(303);
  int tested = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t k = 1 + rng() % 20;
    const double p = uniform(rng, 0.01, 1.0) / static_cast<double>(k);
    const auto know = KnowledgeUniverse::uniform(k, p, uniform(rng, 1.0, 100.0), uniform(rng, 0, 1));
    const double a = log_uniform(rng, 1.0, 1e4);
    const double alpha = uniform(rng, 0.1, 0.9);
    const double r = uniform(rng, 0.01, 0.99);
    const MixtureUniverse mix(know, WebLossCurve::power_law(uniform(rng, 0, 1), a, alpha), r);
    const double t = r * p / (1 - r);
    const double lower = mix.web.m0_minus(t);
    const double upper = mix.web.m0_plus(t) + know.total_entropy();
    const double h_tot = know.total_entropy();

    const double closed = std::pow(a * alpha / t, 1.0 / (alpha + 1));
    const double bisected = oracle::bisect_m0(a, alpha, t);
    o.require(std::abs(closed - bisected) <= 1e-9 * closed, "closed form vs bisection");
    o.require(std::abs(lower - closed) <= 1e-9 * closed, "m0_minus vs closed form");

    for (int j = 0; j <= 20; ++j) {
      const double below = lower * j / 20.0;
      const double above = upper * (1 + j / 4.0);
      o.require(std::abs(optimal_allocation(mix, below).knowledge_capacity) <= 1e-9,
                fmt::format("mixture {}: m1 > 0 at M = {} <= {}", i, below, lower));
      o.require(std::abs(optimal_allocation(mix, above).knowledge_capacity - h_tot) <= 1e-9 * std::max(1.0, h_tot),
                fmt::format("mixture {}: m1 < H_tot at M = {} >= {}", i, above, upper));
      tested += 2;
    }
  }
  if (o.pass) o.detail = fmt::format("100 mixtures, {} capacities", tested);
  return o;
}

Outcome exponent_law() {
  Outcome o;
  const SubsetExperiment exp;
  o.require(exp.group_count == 100 && exp.group_size == 100, "default groups");
  o.require(exp.powerlaw_exponent == 1.5 && exp.mixing_ratio == 0.01, "default exponent and ratio");
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : run_subset_experiment(exp)) {
    if (p.f_thres) pts.emplace_back(p.capacity, *p.f_thres);
  }
  o.require(pts.size() >= 10, "too few capacities with a threshold");
  if (!o.pass) return o;
  const double alpha = exp.web_curve.as_power_law()->exponent;
  const double slope = threshold_law(pts).params.at("slope");
  const double predicted = -(alpha + 1);
  o.require(std::abs(slope / predicted - 1) <= 0.02, fmt::format("slope {} vs {}", slope, predicted));
  o.require(std::abs(alpha + 1 - ThresholdExponentReference::predicted) <= 1e-12, "0.283 + 1 != 1.283");
  o.detail = fmt::format("slope {:.4f} vs {:.3f} over {} capacities", slope, predicted, pts.size());
  return o;
}

Outcome algorithm_equivalence() {
  Outcome o;
  Rng rng(505);
  int tied = 0;
  for (int i = 0; i < 1000; ++i) {
    const bool ties = i % 5 < 2;
    const std::size_t n = 1 + rng() % 80;
    std::vector<AccuracyObservation> obs;
    for (std::size_t j = 0; j < n; ++j) {
      const double pop = ties ? static_cast<double>(1 + rng() % 8) : log_uniform(rng, 1, 1e6);
      obs.push_back({pop, uniform(rng, 0, 1) < std::min(1.0, 0.1 + std::log(pop + 1) / 10)});
    }
    std::map<double, int> counts;
    for (const auto& ob : obs) ++counts[ob.popularity];
    if (std::any_of(counts.begin(), counts.end(), [](const auto& kv) { return kv.second > 1; })) ++tied;
    const double got = estimate_threshold_popularity(obs);
    o.require(got == oracle::threshold_popularity(obs, 0.6, 5), fmt::format("instance {} differs", i));
  }
  o.require(tied >= 300, fmt::format("only {} tied instances", tied));
  if (o.pass) o.detail = fmt::format("1000 instances, {} with ties", tied);
  return o;
}

Outcome fit_round_trips() {
  Outcome o;
  std::vector<Point> exp_pts;
  std::vector<Point> pow_pts;
  for (int i = 0; i <= 10; ++i) {
    const double r = 0.3 + 0.05 * i;
    exp_pts.emplace_back(r, std::exp(FitReference::exponential_log_a + FitReference::exponential_b / r));
    pow_pts.emplace_back(r, FitReference::power_c * std::pow(r, -FitReference::power_d));
  }
  const auto e = fit_exponential(exp_pts);
  const auto p = fit_power_law(pow_pts);
  o.require(std::abs(e.params.at("logA") - FitReference::exponential_log_a) <= 1e-9, "logA");
  o.require(std::abs(e.params.at("B") - FitReference::exponential_b) <= 1e-9, "B");
  o.require(std::abs(std::exp(p.params.at("logC")) - FitReference::power_c) <= 1e-9, "C");
  o.require(std::abs(p.params.at("D") - FitReference::power_d) <= 1e-9, "D");
  o.require(std::abs(e.r_squared - 1) <= 1e-12 && std::abs(p.r_squared - 1) <= 1e-12, "R^2 != 1");

  int covered = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Rng rng(60000 + trial);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::vector<Point> pts;
    for (int i = 0; i < 15; ++i) {
      const double x = std::pow(10.0, 2 + 4.0 * i / 14);
      pts.emplace_back(x, 3.0 * std::pow(x, -1.283) * std::exp(noise(rng)));
    }
    const auto ci = fit_loglog(pts).ci95.at("slope");
    if (ci.low <= -1.283 && -1.283 <= ci.high) ++covered;
  }
  o.require(covered >= 930, fmt::format("coverage {}/1000", covered));
  if (o.pass) o.detail = fmt::format("parameters to 1e-9, coverage {}/1000", covered);
  return o;
}

Outcome convexity() {
  Outcome o;
  Rng rng(707);
  for (int i = 0; i < 500; ++i) {
    const auto rm = random_mixture(rng);
    const double h_tot = rm.mixture.knowledge.total_entropy();
    const double m1 = log_uniform(rng, 1.0, 4 * h_tot + 2000);
    const double m2 = log_uniform(rng, 1.0, 4 * h_tot + 2000);
    const double lambda = uniform(rng, 0, 1);
    const auto best = [&](double m) { return optimal_allocation(rm.mixture, m).mixture_loss; };
    const double mid = best(lambda * m1 + (1 - lambda) * m2);
    const double chord = lambda * best(m1) + (1 - lambda) * best(m2);
    o.require(mid <= chord + 1e-9 * std::max(1.0, chord), fmt::format("triple {}: not convex", i));
    o.require(best(std::max(m1, m2)) <= best(std::min(m1, m2)) + 1e-9, fmt::format("triple {}: increases", i));
  }
  if (o.pass) o.detail = "500 triples";
  return o;
}

Outcome strategy_math() {
  Outcome o;
  Rng rng(808);
  for (int i = 0; i < 100; ++i) {
    const std::size_t k = 2 * (1 + rng() % 500);
    const double p = uniform(rng, 0.2, 1.0) / static_cast<double>(k);
    const MixtureUniverse mix(KnowledgeUniverse::uniform(k, p, uniform(rng, 1, 100)),
                              WebLossCurve::power_law(uniform(rng, 0, 1), log_uniform(rng, 1, 1e4),
                                                      uniform(rng, 0.1, 0.9)),
                              uniform(rng, 0.01, 0.5));
    const double m = log_uniform(rng, 10, 1e7);
    const auto full = threshold_mixing_ratio(mix.knowledge, mix.web, m);
    const auto half = apply_subsampling(mix, 0.5);
    o.require(half.knowledge.size() == k / 2, "kept fact count");
    const auto sub = threshold_mixing_ratio(half.knowledge, half.web, m);
    o.require(std::abs(sub.r_asymptotic / full.r_asymptotic - 0.5) <= 1e-9,
              fmt::format("ratio {}", sub.r_asymptotic / full.r_asymptotic));

    const double tau = uniform(rng, 0, 5);
    const double t_o = uniform(rng, 10, 100);
    const double t_c = uniform(rng, 1, 2 * t_o);
    const double mult = ckm_frequency_multiplier(tau, t_o, t_c);
    o.require(mult == (1 + tau * t_o / t_c) / (1 + tau), "multiplier formula");
    if (t_c < t_o && tau > 0) o.require(mult > 1, "multiplier <= 1 with a compact form");
    const auto ckm = apply_ckm(mix, tau, t_o, t_c);
    o.require(ckm.knowledge.facts()[0].exposure_frequency == p * mult, "CKM frequency");
  }
  if (o.pass) o.detail = "100 mixtures";
  return o;
}

std::string corpus_bytes(std::size_t count, std::uint64_t seed) {
  std::string out;
  for (const auto& r : generate_synbio(count, seed)) out += to_json(r).dump() + "\n";
  return out;
}

Outcome corpus_determinism() {
  Outcome o;
  o.require(corpus_bytes(2000, 17) == corpus_bytes(2000, 17), "corpus differs between runs");
  o.require(corpus_bytes(2000, 17) != corpus_bytes(2000, 18), "seed has no effect");
  const std::size_t sizes[] = {33600, 200, 300, 100, 263};
  double sum = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    o.require(attribute_domain(kAttributes[i]).size() == sizes[i],
              fmt::format("{} has {} values", attribute_name(kAttributes[i]), attribute_domain(kAttributes[i]).size()));
    sum += std::log2(static_cast<double>(sizes[i]));
  }
  o.require(std::abs(synbio_entropy_bits() - sum) <= 1e-9, "entropy constant");
  o.require(std::abs(sum - 45.59) < 0.005, "entropy near 45.59");
  const auto plan = plan_mixture(32e9, 0.1, 3.2e7, std::nullopt, 320000, 100);
  o.require(std::abs(plan.knowledge_epochs - 100) <= 1e-12, "knowledge epochs");
  if (o.pass) o.detail = fmt::format("entropy {:.6f} bits, epochs {}", synbio_entropy_bits(), plan.knowledge_epochs);
  return o;
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
  std::map<std::string, std::string> files;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

CliRun run_in(const fs::path& dir, std::vector<std::string> args) {
  for (auto& a : args) {
    if (a.rfind("@/", 0) == 0) a = (dir / a.substr(2)).string();
  }
  std::ostringstream out;
  std::ostringstream err;
  CliRun res{cli::run(args, out, err), out.str(), err.str(), {}};
  for (const auto& e : fs::directory_iterator(dir)) res.files[e.path().filename().string()] = slurp(e.path());
  return res;
}

Outcome cli_reproducibility() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / fmt::format("knowmix-acceptance-{}", ::getpid());
  const auto prepare = [&](const std::string& name) {
    const fs::path dir = root / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "mix.json")
        << R"({"knowledge":{"uniform":{"count":5,"p":0.001,"h":1000}},)"
           R"("web":{"power_law":{"c":1,"a":100,"alpha":0.5}},"r":0.25,"capacity":20000})";
    std::ofstream(dir / "obs.csv") << "popularity,correct\n1,0\n2,0\n3,1\n4,1\n5,1\n";
    std::ofstream(dir / "pts.csv") << "m,f\n10,1\n100,0.12\n1000,0.01\n";
    std::ostringstream sink;
    cli::run({"synbio", "--count", "30", "--seed", "1", "--out", (dir / "bio.jsonl").string()}, sink, sink);
    return dir;
  };
  const std::vector<std::vector<std::string>> commands{
      {"allocate", "--config", "@/mix.json"},
      {"thresholds", "--config", "@/mix.json", "--out", "@/th.json"},
      {"sweep", "--config", "@/mix.json", "--grid-start", "1", "--grid-stop", "4e4", "--grid-count", "25", "--out",
       "@/sweep.csv"},
      {"subsets", "--out", "@/subsets.csv"},
      {"synbio", "--count", "40", "--seed", "3", "--out", "@/b.jsonl", "--exposures", "@/e.txt"},
      {"mixplan", "--total-tokens", "1e6", "--r", "0.1", "--knowledge-tokens", "1e4", "--corpus", "@/bio.jsonl",
       "--seed", "2"},
      {"subsample", "--corpus", "@/bio.jsonl", "--keep-ratio", "0.5", "--seed", "4"},
      {"ckm", "--corpus", "@/bio.jsonl", "--ckm-ratio", "0.8", "--seed", "5", "--out", "@/ckm.txt"},
      {"estimate", "--input", "@/obs.csv"},
      {"fit", "--input", "@/pts.csv", "--invert", "0.05"}};
  for (const auto& cmd : commands) {
    const auto a = run_in(prepare("a"), cmd);
    const auto b = run_in(prepare("b"), cmd);
    o.require(a.code == 0, fmt::format("{} failed: {}", cmd[0], a.err));
    o.require(a.out == b.out && a.files == b.files, fmt::format("{} output differs between runs", cmd[0]));
  }

  const fs::path dir = prepare("v");
  const std::vector<std::pair<std::vector<std::string>, std::string>> invalid{
      {{"allocate", "--config", "@/mix.json", "--r", "1.5"}, "mixing_ratio"},
      {{"allocate", "--config", "@/mix.json", "--capacity", "-3"}, "capacity"},
      {{"mixplan", "--total-tokens", "100", "--r", "0.5", "--knowledge-tokens", "10", "--web-pool-tokens", "40",
        "--facts", "1", "--tokens-per-fact", "1"},
       "web_pool_tokens"},
      {{"subsample", "--corpus", "@/bio.jsonl", "--keep-ratio", "0", "--seed", "1"}, "keep_ratio"},
      {{"ckm", "--corpus", "@/bio.jsonl", "--ckm-ratio", "-1", "--seed", "1"}, "ckm_ratio"},
      {{"estimate", "--input", "@/obs.csv", "--target", "1.5"}, "accuracy_target"},
      {{"synbio", "--count", "3"}, "seed"}};
  for (const auto& [cmd, name] : invalid) {
    const auto res = run_in(dir, cmd);
    o.require(res.code == cli::kExitValidation, fmt::format("{} exited {}", cmd[0], res.code));
    o.require(res.err.find(name) != std::string::npos, fmt::format("{} error omits {}: {}", cmd[0], name, res.err));
  }
  fs::remove_all(root);
  if (o.pass) o.detail = fmt::format("{} subcommands, {} invalid inputs", commands.size(), invalid.size());
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"warmup law", warmup_law},
      {"allocation optimality", allocation_optimality},
      {"phase-transition exactness", phase_transition},
      {"threshold exponent law", exponent_law},
      {"threshold popularity equivalence", algorithm_equivalence},
      {"fit round trips and interval coverage", fit_round_trips},
      {"convexity and monotonicity", convexity},
      {"subsampling and compact-form math", strategy_math},
      {"corpus determinism and cardinalities", corpus_determinism},
      {"command-line reproducibility", cli_reproducibility}};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
