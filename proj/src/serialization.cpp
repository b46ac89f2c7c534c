// SPDX-License-Identifier: Apache-2.0

#include "knowmix/serialization.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace knowmix {

namespace {

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json interval(const Interval& i) { return Json::array({num(i.low), num(i.high)}); }

const Json& member(const Json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) {
    throw std::invalid_argument(fmt::format("{}{}: missing field", path, key));
  }
  return j.at(key);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  for (;;) {
    const auto comma = line.find(',');
    cells.push_back(trim(line.substr(0, comma)));
    if (comma == std::string_view::npos) return cells;
    line.remove_prefix(comma + 1);
  }
}

double parse_double(std::string_view cell, std::size_t line_no, std::string_view column) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw std::invalid_argument(
        fmt::format("line {}: {} is not a number: '{}'", line_no, column, cell));
  }
  return value;
}

// Yields (line number, cells) for every non-blank data row after the header.
template <typename F>
void for_each_row(std::istream& in, std::size_t columns, F&& f) {
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != columns) {
      throw std::invalid_argument(
          fmt::format("line {}: expected {} columns, got {}", line_no, columns, cells.size()));
    }
    if (header) {
      header = false;
      continue;
    }
    f(line_no, cells);
  }
  if (header) throw std::invalid_argument("CSV input is empty (header row missing)");
}

}  // namespace

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  return fmt::format("{}", value);
}

double number_at(const Json& j, const char* key, const std::string& path) {
  const auto& v = member(j, key, path);
  if (!v.is_number()) {
    throw std::invalid_argument(fmt::format("{}{}: expected a number", path, key));
  }
  return v.get<double>();
}

Json to_json(const KnowledgeUniverse& knowledge) {
  Json facts = Json::array();
  for (const auto& f : knowledge.facts()) {
    facts.push_back({{"p", f.exposure_frequency}, {"h", f.target_entropy}});
  }
  return {{"facts", std::move(facts)}, {"c1", knowledge.irreducible_loss()}};
}

Json to_json(const WebLossCurve& curve) {
  if (const auto* pl = curve.as_power_law()) {
    return {{"power_law", {{"c", pl->floor}, {"a", pl->amplitude}, {"alpha", pl->exponent}}}};
  }
  Json points = Json::array();
  for (const auto& [m, f] : curve.as_tabulated()->points) points.push_back({m, f});
  return {{"tabulated", std::move(points)}};
}

Json to_json(const MixtureUniverse& mixture) {
  return {{"knowledge", to_json(mixture.knowledge)},
          {"web", to_json(mixture.web)},
          {"r", mixture.mixing_ratio}};
}

Json to_json(const Allocation& a) {
  return {{"m", num(a.total_capacity)}, {"m1", num(a.knowledge_capacity)},
          {"m2", num(a.web_capacity)},  {"loss1", num(a.knowledge_loss)},
          {"loss2", num(a.web_loss)},   {"loss", num(a.mixture_loss)},
          {"learned", a.learned}};
}

Json to_json(const ThresholdReport& report) {
  Json j = {{"m_lower", num(report.model_size_lower)}, {"m_upper", num(report.model_size_upper)}};
  j["m_nominal"] = report.model_size_nominal ? num(*report.model_size_nominal) : Json(nullptr);
  j["exponent"] = report.exponent ? num(*report.exponent) : Json(nullptr);
  if (report.total_capacity) j["m"] = num(*report.total_capacity);
  if (report.mixing_ratio) {
    j["r_lower"] = num(report.mixing_ratio->r_lower);
    j["r_upper"] = num(report.mixing_ratio->r_upper);
    j["r_asymptotic"] = num(report.mixing_ratio->r_asymptotic);
  }
  if (report.frequency) {
    j["f_lower"] = num(report.frequency->f_lower);
    j["f_upper"] = num(report.frequency->f_upper);
    j["f_asymptotic"] = num(report.frequency->f_asymptotic);
  }
  return j;
}

Json to_json(const FitResult& fit) {
  Json params = Json::object();
  Json se = Json::object();
  Json ci = Json::object();
  for (const auto& [k, v] : fit.params) params[k] = num(v);
  for (const auto& [k, v] : fit.standard_error) se[k] = num(v);
  for (const auto& [k, v] : fit.ci95) ci[k] = interval(v);
  return {{"model", to_string(fit.model)}, {"params", std::move(params)},
          {"stderr", std::move(se)},       {"ci95", std::move(ci)},
          {"r2", num(fit.r_squared)},      {"n", fit.n}};
}

Json to_json(const BiographyRecord& record) {
  Json attrs = Json::object();
  for (const Attribute a : kAttributes) attrs[std::string(attribute_name(a))] = record.value(a);
  return {{"name", record.full_name}, {"attrs", std::move(attrs)}, {"pronoun", record.pronoun}};
}

Json to_json(const MixPlan& plan) {
  return {{"total_tokens", num(plan.total_tokens)},
          {"mixing_ratio", num(plan.mixing_ratio)},
          {"knowledge_tokens", num(plan.knowledge_tokens)},
          {"web_pool_tokens", plan.web_pool_tokens ? num(*plan.web_pool_tokens) : Json(nullptr)},
          {"knowledge_epochs", num(plan.knowledge_epochs)},
          {"knowledge_sample_tokens", num(plan.knowledge_sample_tokens)},
          {"web_sample_tokens", num(plan.web_sample_tokens)},
          {"fact_count", plan.fact_count},
          {"tokens_per_fact", num(plan.tokens_per_fact)},
          {"per_fact_frequency", num(plan.per_fact_frequency)}};
}

KnowledgeUniverse knowledge_from_json(const Json& j) {
  const std::string path = "knowledge.";
  const double c1 = j.contains("c1") ? number_at(j, "c1", path) : 0.0;
  if (j.is_object() && j.contains("uniform")) {
    const auto& u = j.at("uniform");
    const double count = number_at(u, "count", path + "uniform.");
    if (!(count >= 1.0) || count != std::floor(count) || count > 1e9) {
      throw std::invalid_argument(
          fmt::format("knowledge.uniform.count must be a positive integer, got {}", count));
    }
    return KnowledgeUniverse::uniform(static_cast<std::size_t>(count),
                                      number_at(u, "p", path + "uniform."),
                                      number_at(u, "h", path + "uniform."), c1);
  }
  const auto& facts = member(j, "facts", path);
  if (!facts.is_array()) throw std::invalid_argument("knowledge.facts: expected an array");
  std::vector<FactSpec> specs;
  specs.reserve(facts.size());
  for (std::size_t i = 0; i < facts.size(); ++i) {
    const auto where = fmt::format("knowledge.facts[{}].", i);
    specs.push_back({number_at(facts[i], "p", where), number_at(facts[i], "h", where)});
  }
  return KnowledgeUniverse(std::move(specs), c1);
}

WebLossCurve web_from_json(const Json& j) {
  if (j.is_object() && j.contains("power_law")) {
    const auto& pl = j.at("power_law");
    const std::string path = "web.power_law.";
    return WebLossCurve::power_law(pl.contains("c") ? number_at(pl, "c", path) : 0.0,
                                   number_at(pl, "a", path), number_at(pl, "alpha", path));
  }
  if (j.is_object() && j.contains("tabulated")) {
    const auto& rows = j.at("tabulated");
    if (!rows.is_array()) throw std::invalid_argument("web.tabulated: expected an array");
    std::vector<std::pair<double, double>> points;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& row = rows[i];
      if (!row.is_array() || row.size() != 2 || !row[0].is_number() || !row[1].is_number()) {
        throw std::invalid_argument(fmt::format("web.tabulated[{}]: expected [M, F]", i));
      }
      points.emplace_back(row[0].get<double>(), row[1].get<double>());
    }
    return WebLossCurve::tabulated(std::move(points));
  }
  throw std::invalid_argument("web: expected a power_law or tabulated curve");
}

MixtureUniverse mixture_from_json(const Json& j) {
  return MixtureUniverse(knowledge_from_json(member(j, "knowledge", "")),
                         web_from_json(member(j, "web", "")), number_at(j, "r", ""));
}

BiographyRecord record_from_json(const Json& j) {
  BiographyRecord record;
  record.full_name = member(j, "name", "record.").get<std::string>();
  record.pronoun = member(j, "pronoun", "record.").get<std::string>();
  const auto& attrs = member(j, "attrs", "record.");
  for (const Attribute a : kAttributes) {
    const std::string key(attribute_name(a));
    record.attribute_values[static_cast<std::size_t>(a)] =
        member(attrs, key.c_str(), "record.attrs.").get<std::string>();
  }
  return record;
}

std::vector<AccuracyObservation> read_observations_csv(std::istream& in) {
  std::vector<AccuracyObservation> out;
  for_each_row(in, 2, [&](std::size_t line_no, const std::vector<std::string_view>& cells) {
    const double popularity = parse_double(cells[0], line_no, "popularity");
    if (cells[1] != "0" && cells[1] != "1") {
      throw std::invalid_argument(
          fmt::format("line {}: correct must be 0 or 1, got '{}'", line_no, cells[1]));
    }
    out.push_back({popularity, cells[1] == "1"});
  });
  return out;
}

std::vector<Point> read_points_csv(std::istream& in) {
  std::vector<Point> out;
  for_each_row(in, 2, [&](std::size_t line_no, const std::vector<std::string_view>& cells) {
    out.emplace_back(parse_double(cells[0], line_no, "x"), parse_double(cells[1], line_no, "y"));
  });
  return out;
}

}  // namespace knowmix
