// SPDX-License-Identifier: Apache-2.0

#include "knowmix/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <exception>
#include <thread>

#include <fmt/format.h>

namespace knowmix {

double accuracy(const Allocation& allocation, const KnowledgeUniverse& knowledge) {
  if (allocation.learned.size() != knowledge.size()) {
    throw std::invalid_argument(fmt::format("allocation has {} facts, universe has {}",
                                            allocation.learned.size(), knowledge.size()));
  }
  const double h_tot = knowledge.total_entropy();
  if (h_tot == 0.0) return 1.0;
  double learned_bits = 0.0;
  for (std::size_t i = 0; i < knowledge.size(); ++i) {
    learned_bits += knowledge.facts()[i].target_entropy * allocation.learned[i];
  }
  return std::clamp(learned_bits / h_tot, 0.0, 1.0);
}

double accuracy_by_count(const Allocation& allocation) {
  if (allocation.learned.empty()) return 1.0;
  return std::accumulate(allocation.learned.begin(), allocation.learned.end(), 0.0) /
         static_cast<double>(allocation.learned.size());
}

namespace {

void require_grid(const std::vector<double>& grid, const char* what) {
  if (grid.empty()) throw std::invalid_argument(fmt::format("{} must not be empty", what));
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      throw std::invalid_argument(fmt::format("{} must be strictly increasing ({} then {})", what,
                                              grid[i - 1], grid[i]));
    }
  }
}

void require_target(double target) {
  if (!(target > 0.0 && target < 1.0)) {
    throw std::invalid_argument(
        fmt::format("accuracy_target must lie in (0, 1), got {}", target));
  }
}

SweepRow evaluate(const SweepConfig& config, double x) {
  const bool ratio_axis = config.axis == SweepAxis::mixing_ratio;
  const MixtureUniverse mixture =
      ratio_axis ? MixtureUniverse(config.mixture.knowledge, config.mixture.web, x)
                 : config.mixture;
  const double capacity = ratio_axis ? config.fixed_capacity : x;
  const auto alloc = optimal_allocation(mixture, capacity);
  return {x,
          accuracy(alloc, mixture.knowledge),
          accuracy_by_count(alloc),
          alloc.knowledge_loss,
          alloc.web_loss,
          alloc.mixture_loss,
          alloc.knowledge_capacity};
}

}  // namespace

void SweepConfig::validate() const {
  require_grid(grid, "grid");
  require_target(accuracy_target);
  if (axis == SweepAxis::mixing_ratio) {
    if (grid.front() <= 0.0 || grid.back() >= 1.0) {
      throw std::invalid_argument("mixing_ratio grid values must lie in (0, 1)");
    }
    if (!(fixed_capacity >= 0.0) || !std::isfinite(fixed_capacity)) {
      throw std::invalid_argument(
          fmt::format("capacity must be finite and >= 0, got {}", fixed_capacity));
    }
  } else if (grid.front() < 0.0 || !std::isfinite(grid.back())) {
    throw std::invalid_argument("capacity grid values must be finite and >= 0");
  }
}

std::vector<SweepRow> sweep(const SweepConfig& config, unsigned workers) {
  config.validate();
  std::vector<SweepRow> rows(config.grid.size());
  workers = std::clamp<unsigned>(workers, 1, static_cast<unsigned>(rows.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = evaluate(config, config.grid[i]);
    return rows;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < rows.size(); i += workers) {
          rows[i] = evaluate(config, config.grid[i]);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

std::optional<double> first_reaching(const std::vector<SweepRow>& rows, double target) {
  for (const auto& row : rows) {
    if (row.accuracy >= target) return row.axis_value;
  }
  return std::nullopt;
}

void SubsetExperiment::validate() const {
  if (group_count < 1) throw std::invalid_argument("group_count must be >= 1");
  if (group_size < 1) throw std::invalid_argument("group_size must be >= 1");
  if (!(powerlaw_exponent > 0.0)) {
    throw std::invalid_argument(
        fmt::format("powerlaw_exponent must be > 0, got {}", powerlaw_exponent));
  }
  if (!(mixing_ratio > 0.0 && mixing_ratio < 1.0)) {
    throw std::invalid_argument(
        fmt::format("mixing_ratio must lie in (0, 1), got {}", mixing_ratio));
  }
  if (!(fact_entropy > 0.0) || !std::isfinite(fact_entropy)) {
    throw std::invalid_argument(
        fmt::format("fact_entropy must be positive and finite, got {}", fact_entropy));
  }
  require_target(accuracy_target);
  require_grid(capacity_grid, "capacity_grid");
  if (capacity_grid.front() < 0.0) throw std::invalid_argument("capacity_grid values must be >= 0");
}

std::vector<double> subset_group_weights(const SubsetExperiment& exp) {
  return power_law_partition(exp.group_count * exp.group_size, exp.group_count,
                             exp.powerlaw_exponent);
}

KnowledgeUniverse subset_universe(const SubsetExperiment& exp) {
  const auto weights = subset_group_weights(exp);
  std::vector<FactSpec> facts;
  facts.reserve(exp.group_count * exp.group_size);
  for (const double w : weights) {
    const double p = w / static_cast<double>(exp.group_size);
    for (std::size_t i = 0; i < exp.group_size; ++i) facts.push_back({p, exp.fact_entropy});
  }
  // Rounding in the weights can push the sum a hair past 1; the universe
  // constructor tolerates 1e-12.
  return KnowledgeUniverse(std::move(facts), 0.0);
}

std::vector<SubsetPoint> run_subset_experiment(const SubsetExperiment& exp) {
  exp.validate();
  const auto weights = subset_group_weights(exp);
  const MixtureUniverse mixture(subset_universe(exp), exp.web_curve, exp.mixing_ratio);
  std::vector<SubsetPoint> out;
  out.reserve(exp.capacity_grid.size());
  for (const double capacity : exp.capacity_grid) {
    const auto alloc = optimal_allocation(mixture, capacity);
    SubsetPoint point;
    point.capacity = capacity;
    point.group_accuracy.resize(exp.group_count);
    for (std::size_t g = 0; g < exp.group_count; ++g) {
      const auto begin = alloc.learned.begin() + static_cast<std::ptrdiff_t>(g * exp.group_size);
      const double sum =
          std::accumulate(begin, begin + static_cast<std::ptrdiff_t>(exp.group_size), 0.0);
      point.group_accuracy[g] = sum / static_cast<double>(exp.group_size);
    }
    // Weights decrease with g, so index order is descending weight order.
    for (std::size_t g = 0; g < exp.group_count; ++g) {
      if (point.group_accuracy[g] < exp.accuracy_target) {
        point.f_thres = exp.mixing_ratio * weights[g] / static_cast<double>(exp.group_size);
        break;
      }
    }
    out.push_back(std::move(point));
  }
  return out;
}

std::vector<double> default_subset_capacity_grid() {
  constexpr std::size_t kPoints = 41;
  constexpr double kStart = 3e9;
  constexpr double kStop = 2e10;
  std::vector<double> grid(kPoints);
  for (std::size_t i = 0; i < kPoints; ++i) {
    grid[i] = kStart * std::pow(kStop / kStart, static_cast<double>(i) / (kPoints - 1));
  }
  return grid;
}

FitResult threshold_law(const std::vector<std::pair<double, double>>& points) {
  return fit_loglog(points);
}

}  // namespace knowmix
