// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "knowmix/allocator.hpp"
#include "knowmix/analysis.hpp"
#include "knowmix/corpus.hpp"
#include "knowmix/serialization.hpp"
#include "knowmix/simulator.hpp"
#include "knowmix/universe.hpp"

namespace knowmix::cli {

namespace {

namespace fs = std::filesystem;

struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::string format;
  bool json_errors = false;
};

struct GridFlags {
  std::vector<double> values;
  std::optional<double> start;
  std::optional<double> stop;
  std::optional<std::size_t> count;
  std::optional<std::string> scale;
};

// Every option a subcommand may register. Unset optionals fall back to the
// config file, then to the documented default.
struct Flags {
  Common common;
  std::optional<double> capacity;
  std::optional<double> r;
  std::string knowledge_path;
  std::optional<std::string> units;
  std::optional<double> bits_per_param;
  std::optional<std::string> axis;
  GridFlags grid;
  std::optional<double> accuracy_target;
  std::optional<unsigned> workers;
  std::optional<std::size_t> group_count;
  std::optional<std::size_t> group_size;
  std::optional<double> exponent;
  std::optional<double> fact_entropy;
  std::optional<std::size_t> count;
  std::string exposures_path;
  std::string universe_path;
  std::optional<double> total_tokens;
  std::optional<double> knowledge_tokens;
  std::optional<double> web_pool_tokens;
  std::optional<std::size_t> fact_count;
  std::optional<double> tokens_per_fact;
  std::string corpus_path;
  std::optional<double> keep_ratio;
  std::optional<double> ckm_ratio;
  std::string input_path;
  std::optional<std::size_t> max_failures;
  std::optional<std::string> model;
  std::vector<double> predict;
  std::vector<double> invert;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open input file {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Json parse_json_file(const fs::path& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ValidationError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }
}

void atomic_write(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(fmt::format("cannot write {}", tmp.string()));
    f << content;
    f.flush();
    if (!f) throw IoError(fmt::format("write to {} failed", tmp.string()));
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError(fmt::format("cannot move output into place at {}", path.string()));
  }
}

fs::path sidecar(const fs::path& main, const std::string& suffix) {
  return main.parent_path() / (main.stem().string() + suffix);
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

class Context {
 public:
  Context(const Flags& flags, std::string command, std::ostream& out)
      : flags_(flags), command_(std::move(command)), out_(out) {
    if (!flags.common.config_path.empty()) {
      config_ = parse_json_file(flags.common.config_path);
      if (!config_.is_object()) throw ValidationError("config: top level must be a JSON object");
    } else {
      config_ = Json::object();
    }
  }

  const Json& config() const { return config_; }
  const Flags& flags() const { return flags_; }
  std::ostream& out() { return out_; }

  double number(const std::optional<double>& flag, const char* key, std::optional<double> fallback,
                const char* flag_name) const {
    if (flag) return *flag;
    if (config_.contains(key)) return number_at(config_, key, "");
    if (fallback) return *fallback;
    throw ValidationError(
        fmt::format("{}: missing (pass --{} or set \"{}\" in the config)", key, flag_name, key));
  }

  std::optional<double> maybe_number(const std::optional<double>& flag, const char* key) const {
    if (flag) return flag;
    if (config_.contains(key) && !config_.at(key).is_null()) return number_at(config_, key, "");
    return std::nullopt;
  }

  std::size_t count(const std::optional<std::size_t>& flag, const char* key,
                    std::optional<std::size_t> fallback, const char* flag_name) const {
    if (flag) return *flag;
    if (config_.contains(key)) {
      const double v = number_at(config_, key, "");
      if (!(v >= 0.0) || v != std::floor(v) || v > 1e15) {
        throw ValidationError(fmt::format("{}: expected a non-negative integer, got {}", key, v));
      }
      return static_cast<std::size_t>(v);
    }
    if (fallback) return *fallback;
    throw ValidationError(
        fmt::format("{}: missing (pass --{} or set \"{}\" in the config)", key, flag_name, key));
  }

  std::string text(const std::optional<std::string>& flag, const char* key,
                   const std::string& fallback) const {
    if (flag) return *flag;
    if (config_.contains(key)) {
      if (!config_.at(key).is_string()) throw ValidationError(fmt::format("{}: expected a string", key));
      return config_.at(key).get<std::string>();
    }
    return fallback;
  }

  std::string path(const std::string& flag, const char* key) const {
    if (!flag.empty()) return flag;
    return text(std::nullopt, key, "");
  }

  std::uint64_t seed() const {
    if (flags_.common.seed) return *flags_.common.seed;
    throw ValidationError(fmt::format("seed: {} generates random output and needs --seed", command_));
  }

  std::string format(std::initializer_list<const char*> allowed) const {
    const auto& f = flags_.common.format;
    if (f.empty()) return allowed.size() ? *allowed.begin() : "";
    for (const char* a : allowed) {
      if (f == a) return f;
    }
    throw ValidationError(fmt::format("format: {} does not support --format {}", command_, f));
  }

  // Destination of the main artifact: --out, else $KNOWMIX_OUT_DIR/<name>,
  // else standard output.
  std::optional<fs::path> destination(const std::string& extension) const {
    if (!flags_.common.out_path.empty()) return fs::path(flags_.common.out_path);
    if (const char* dir = std::getenv(kOutDirEnv); dir != nullptr && *dir != '\0') {
      return fs::path(dir) / (command_ + "." + extension);
    }
    return std::nullopt;
  }

  void emit(const std::optional<fs::path>& dest, const std::string& content) {
    if (dest) {
      atomic_write(*dest, content);
    } else {
      out_ << content;
    }
  }

 private:
  const Flags& flags_;
  std::string command_;
  std::ostream& out_;
  Json config_;
};

MixtureUniverse load_mixture(const Context& ctx, std::optional<double> default_r = std::nullopt) {
  Json doc = ctx.config();
  const auto knowledge_path = ctx.path(ctx.flags().knowledge_path, "knowledge_file");
  if (!knowledge_path.empty()) {
    const Json k = parse_json_file(knowledge_path);
    doc["knowledge"] = k.contains("knowledge") ? k.at("knowledge") : k;
  }
  if (ctx.flags().r) doc["r"] = *ctx.flags().r;
  if (!doc.contains("r") && default_r) doc["r"] = *default_r;
  if (!doc.contains("r")) throw ValidationError("mixing_ratio: missing (pass --r or set \"r\")");
  if (!doc.at("r").is_number()) throw ValidationError("mixing_ratio: \"r\" must be a number");
  return mixture_from_json(doc);
}

std::vector<double> build_grid(const Context& ctx, const char* key) {
  const auto& g = ctx.flags().grid;
  if (!g.values.empty()) return g.values;
  Json spec = ctx.config().contains(key) ? ctx.config().at(key) : Json::object();
  if (spec.is_array()) {
    if (g.start || g.stop || g.count || g.scale) {
      throw ValidationError(fmt::format("{}: grid range flags cannot override an explicit list", key));
    }
    std::vector<double> values;
    for (std::size_t i = 0; i < spec.size(); ++i) {
      if (!spec[i].is_number()) throw ValidationError(fmt::format("{}[{}]: expected a number", key, i));
      values.push_back(spec[i].get<double>());
    }
    return values;
  }
  if (!spec.is_object()) throw ValidationError(fmt::format("{}: expected a list or a range", key));
  if (g.start) spec["start"] = *g.start;
  if (g.stop) spec["stop"] = *g.stop;
  if (g.count) spec["count"] = *g.count;
  if (g.scale) spec["scale"] = *g.scale;
  const std::string path = std::string(key) + ".";
  const double start = number_at(spec, "start", path);
  const double stop = number_at(spec, "stop", path);
  const double n = number_at(spec, "count", path);
  const std::string scale = spec.value("scale", std::string("geometric"));
  if (!(n >= 1.0) || n != std::floor(n) || n > 1e7) {
    throw ValidationError(fmt::format("{}.count must be a positive integer, got {}", key, n));
  }
  const auto count = static_cast<std::size_t>(n);
  std::vector<double> values(count, start);
  if (scale == "geometric") {
    if (!(start > 0.0 && stop > 0.0)) {
      throw ValidationError(fmt::format("{}: geometric grid needs start and stop > 0", key));
    }
    for (std::size_t i = 1; i < count; ++i) {
      values[i] = start * std::pow(stop / start, static_cast<double>(i) / static_cast<double>(count - 1));
    }
  } else if (scale == "linear") {
    for (std::size_t i = 1; i < count; ++i) {
      values[i] = start + (stop - start) * static_cast<double>(i) / static_cast<double>(count - 1);
    }
  } else {
    throw ValidationError(fmt::format("{}.scale must be geometric or linear, got {}", key, scale));
  }
  if (count > 1) values.back() = stop;
  return values;
}

std::vector<BiographyRecord> read_corpus(const Context& ctx) {
  const auto path = ctx.path(ctx.flags().corpus_path, "corpus");
  if (path.empty()) throw ValidationError("corpus: missing (pass --corpus PATH)");
  std::istringstream in(read_file(path));
  std::vector<BiographyRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw ValidationError(fmt::format("corpus line {}: {}", line_no, e.what()));
    } catch (const std::invalid_argument& e) {
      throw ValidationError(fmt::format("corpus line {}: {}", line_no, e.what()));
    }
  }
  return records;
}

std::string jsonl(const std::vector<BiographyRecord>& records) {
  std::string text;
  for (const auto& r : records) text += to_json(r).dump() + "\n";
  return text;
}

Json uniform_knowledge(std::size_t count, double entropy) {
  return {{"uniform", {{"count", count}, {"p", 1.0 / static_cast<double>(count)}, {"h", entropy}}},
          {"c1", 0.0}};
}

int cmd_allocate(Context& ctx) {
  ctx.format({"json"});
  const auto mixture = load_mixture(ctx);
  const double capacity = ctx.number(ctx.flags().capacity, "capacity", std::nullopt, "capacity");
  if (!(capacity >= 0.0) || !std::isfinite(capacity)) {
    throw ValidationError(fmt::format("capacity must be finite and >= 0, got {}", capacity));
  }
  ctx.emit(ctx.destination("json"), dump(to_json(optimal_allocation(mixture, capacity))));
  return kExitOk;
}

int cmd_thresholds(Context& ctx) {
  ctx.format({"json"});
  const auto mixture = load_mixture(ctx);
  const auto units = ctx.text(ctx.flags().units, "units", "bits");
  if (units != "bits" && units != "params") {
    throw ValidationError(fmt::format("units must be bits or params, got {}", units));
  }
  const double bpp = ctx.number(ctx.flags().bits_per_param, "bits_per_param", 2.0, "bits-per-param");
  if (!(bpp > 0.0) || !std::isfinite(bpp)) {
    throw ValidationError(fmt::format("bits_per_param must be positive, got {}", bpp));
  }
  const double scale = units == "params" ? bpp : 1.0;
  auto capacity = ctx.maybe_number(ctx.flags().capacity, "capacity");
  if (capacity) {
    if (!(*capacity > 0.0) || !std::isfinite(*capacity)) {
      throw ValidationError(fmt::format("capacity must be finite and > 0, got {}", *capacity));
    }
    *capacity *= scale;
  }
  auto report = capacity ? full_threshold_report(mixture, *capacity) : threshold_model_size(mixture);
  if (scale != 1.0) {
    report.model_size_lower /= scale;
    report.model_size_upper /= scale;
    if (report.model_size_nominal) *report.model_size_nominal /= scale;
    if (report.total_capacity) *report.total_capacity /= scale;
  }
  Json j = to_json(report);
  j["units"] = units;
  j["bits_per_param"] = bpp;
  j["fact_entropy_total"] = mixture.knowledge.total_entropy();
  ctx.emit(ctx.destination("json"), dump(j));
  return kExitOk;
}

SweepAxis parse_axis(const std::string& s) {
  if (s == "model_size") return SweepAxis::model_size;
  if (s == "mixing_ratio") return SweepAxis::mixing_ratio;
  throw ValidationError(fmt::format("axis must be model_size or mixing_ratio, got {}", s));
}

int cmd_sweep(Context& ctx) {
  const auto format = ctx.format({"csv", "json"});
  const auto axis = parse_axis(ctx.text(ctx.flags().axis, "axis", "model_size"));
  const auto grid = build_grid(ctx, "grid");
  const bool ratio_axis = axis == SweepAxis::mixing_ratio;
  auto mixture = load_mixture(ctx, ratio_axis && !grid.empty() ? std::optional(grid.front())
                                                               : std::nullopt);
  SweepConfig cfg{mixture, axis, grid, 0.0,
                  ctx.number(ctx.flags().accuracy_target, "accuracy_target", 0.8, "accuracy-target")};
  if (ratio_axis) cfg.fixed_capacity = ctx.number(ctx.flags().capacity, "capacity", std::nullopt, "capacity");
  const double workers = ctx.number(
      ctx.flags().workers ? std::optional<double>(*ctx.flags().workers) : std::nullopt, "workers",
      1.0, "workers");
  if (!(workers >= 1.0) || workers != std::floor(workers) || workers > 1024) {
    throw ValidationError(fmt::format("workers must be an integer in [1, 1024], got {}", workers));
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  const auto rows = sweep(cfg, static_cast<unsigned>(workers));

  std::string body;
  if (format == "csv") {
    body = "axis,accuracy,accuracy_count,knowledge_loss,web_loss,mixture_loss\n";
    for (const auto& r : rows) {
      body += fmt::format("{},{},{},{},{},{}\n", format_number(r.axis_value),
                          format_number(r.accuracy), format_number(r.accuracy_count),
                          format_number(r.knowledge_loss), format_number(r.web_loss),
                          format_number(r.mixture_loss));
    }
  } else {
    Json arr = Json::array();
    for (const auto& r : rows) {
      arr.push_back({{"axis", r.axis_value},
                     {"accuracy", r.accuracy},
                     {"accuracy_count", r.accuracy_count},
                     {"knowledge_loss", std::isfinite(r.knowledge_loss) ? Json(r.knowledge_loss) : Json()},
                     {"web_loss", std::isfinite(r.web_loss) ? Json(r.web_loss) : Json()},
                     {"mixture_loss", std::isfinite(r.mixture_loss) ? Json(r.mixture_loss) : Json()}});
    }
    body = dump(arr);
  }
  const auto dest = ctx.destination(format);
  ctx.emit(dest, body);

  if (dest && mixture.knowledge.uniform_frequency()) {
    Json report;
    if (ratio_axis) {
      const auto r = threshold_mixing_ratio(mixture.knowledge, mixture.web, cfg.fixed_capacity);
      const auto f = threshold_frequency(mixture.web, cfg.fixed_capacity,
                                         *mixture.knowledge.uniform_frequency(),
                                         mixture.knowledge.total_entropy());
      ThresholdReport tr;
      tr.total_capacity = cfg.fixed_capacity;
      tr.mixing_ratio = r;
      tr.frequency = f;
      report = to_json(tr);
      report.erase("m_lower");
      report.erase("m_upper");
      report.erase("m_nominal");
      report.erase("exponent");
    } else {
      report = to_json(threshold_model_size(mixture));
    }
    atomic_write(sidecar(*dest, ".report.json"), dump(report));
  }
  return kExitOk;
}

int cmd_subsets(Context& ctx) {
  ctx.format({"csv"});
  const auto& f = ctx.flags();
  SubsetExperiment exp;
  exp.group_count = ctx.count(f.group_count, "group_count", exp.group_count, "group-count");
  exp.group_size = ctx.count(f.group_size, "group_size", exp.group_size, "group-size");
  exp.powerlaw_exponent = ctx.number(f.exponent, "exponent", exp.powerlaw_exponent, "exponent");
  exp.mixing_ratio = ctx.number(f.r, "r", exp.mixing_ratio, "r");
  exp.fact_entropy = ctx.number(f.fact_entropy, "fact_entropy", exp.fact_entropy, "fact-entropy");
  exp.accuracy_target = ctx.number(f.accuracy_target, "accuracy_target", exp.accuracy_target,
                                   "accuracy-target");
  if (ctx.config().contains("web")) exp.web_curve = web_from_json(ctx.config().at("web"));
  if (!f.grid.values.empty() || f.grid.start || ctx.config().contains("capacity_grid")) {
    exp.capacity_grid = build_grid(ctx, "capacity_grid");
  }
  if (exp.mixing_ratio <= 0.0 || exp.mixing_ratio >= 1.0) {
    throw ValidationError(fmt::format("mixing_ratio must lie in (0, 1), got {}", exp.mixing_ratio));
  }
  try {
    exp.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  const auto weights = subset_group_weights(exp);
  const auto points = run_subset_experiment(exp);

  std::string long_form = "capacity,group,weight,accuracy\n";
  std::string thresholds = "capacity,f_thres\n";
  std::vector<Point> fit_points;
  for (const auto& p : points) {
    for (std::size_t g = 0; g < p.group_accuracy.size(); ++g) {
      long_form += fmt::format("{},{},{},{}\n", format_number(p.capacity), g + 1,
                               format_number(weights[g]), format_number(p.group_accuracy[g]));
    }
    thresholds += fmt::format("{},{}\n", format_number(p.capacity),
                              p.f_thres ? format_number(*p.f_thres) : std::string(kBelowRange));
    if (p.f_thres && p.capacity > 0.0) fit_points.emplace_back(p.capacity, *p.f_thres);
  }
  const auto dest = ctx.destination("csv");
  ctx.emit(dest, long_form);
  if (!dest) return kExitOk;

  atomic_write(sidecar(*dest, ".thresholds.csv"), thresholds);
  Json summary = {{"capacities", points.size()}, {"with_threshold", fit_points.size()}};
  if (const auto* pl = exp.web_curve.as_power_law()) summary["predicted_exponent"] = pl->exponent + 1.0;
  if (fit_points.size() >= 3) {
    const auto fit = threshold_law(fit_points);
    summary["fit"] = to_json(fit);
    summary["fitted_exponent"] = -fit.params.at("slope");
  }
  summary["reference"] = {{"observed", ThresholdExponentReference::observed},
                          {"predicted", ThresholdExponentReference::predicted}};
  const auto text = dump(summary);
  atomic_write(sidecar(*dest, ".summary.json"), text);
  ctx.out() << text;
  return kExitOk;
}

int cmd_synbio(Context& ctx) {
  ctx.format({"jsonl"});
  const std::uint64_t seed = ctx.seed();
  const auto count = ctx.count(ctx.flags().count, "count", std::nullopt, "count");
  const auto records = generate_synbio(count, seed);
  ctx.emit(ctx.destination("jsonl"), jsonl(records));
  if (const auto path = ctx.path(ctx.flags().exposures_path, "exposures"); !path.empty()) {
    std::string text;
    for (std::size_t i = 0; i < records.size(); ++i) text += corpus_exposure(records[i], i, seed) + "\n";
    atomic_write(path, text);
  }
  if (const auto path = ctx.path(ctx.flags().universe_path, "universe"); !path.empty()) {
    if (count == 0) throw ValidationError("count: a universe needs at least one biography");
    atomic_write(path, dump({{"knowledge", uniform_knowledge(count, synbio_entropy_bits())},
                             {"assets_version", synbio_assets_version()}}));
  }
  return kExitOk;
}

int cmd_mixplan(Context& ctx) {
  ctx.format({"json"});
  const auto& f = ctx.flags();
  std::optional<std::size_t> facts = f.fact_count;
  std::optional<double> tokens_per_fact = ctx.maybe_number(f.tokens_per_fact, "tokens_per_fact");
  if (!ctx.path(f.corpus_path, "corpus").empty()) {
    const auto records = read_corpus(ctx);
    if (records.empty()) throw ValidationError("corpus: no records");
    facts = records.size();
    if (!tokens_per_fact) tokens_per_fact = mean_exposure_tokens(records, ctx.seed());
  }
  const auto fact_count = ctx.count(facts, "fact_count", std::nullopt, "facts");
  if (fact_count == 0) throw ValidationError("fact_count must be >= 1");
  if (!tokens_per_fact) {
    throw ValidationError("tokens_per_fact: missing (pass --tokens-per-fact or --corpus)");
  }
  const double total = ctx.number(f.total_tokens, "total_tokens", std::nullopt, "total-tokens");
  const double r = ctx.number(f.r, "r", std::nullopt, "r");
  const double s1 = ctx.number(f.knowledge_tokens, "knowledge_tokens",
                               static_cast<double>(fact_count) * *tokens_per_fact,
                               "knowledge-tokens");
  const auto plan = plan_mixture(total, r, s1, ctx.maybe_number(f.web_pool_tokens, "web_pool_tokens"),
                                 fact_count, *tokens_per_fact);
  Json j = to_json(plan);
  j["knowledge"] = uniform_knowledge(fact_count, synbio_entropy_bits());
  j["r"] = r;
  ctx.emit(ctx.destination("json"), dump(j));
  return kExitOk;
}

int cmd_subsample(Context& ctx) {
  ctx.format({"jsonl"});
  const std::uint64_t seed = ctx.seed();
  const auto records = read_corpus(ctx);
  const double keep = ctx.number(ctx.flags().keep_ratio, "keep_ratio", std::nullopt, "keep-ratio");
  ctx.emit(ctx.destination("jsonl"), jsonl(subsample_corpus(records, keep, seed)));
  return kExitOk;
}

int cmd_ckm(Context& ctx) {
  ctx.format({"txt"});
  const std::uint64_t seed = ctx.seed();
  const auto records = read_corpus(ctx);
  const double ratio = ctx.number(ctx.flags().ckm_ratio, "ckm_ratio", std::nullopt, "ckm-ratio");
  const auto result = ckm_augment(records, ratio, seed);
  Json summary = {{"ckm_ratio", ratio},
                  {"records", records.size()},
                  {"emitted", result.texts.size()},
                  {"flipped", result.flipped},
                  {"original_tokens", result.original_tokens},
                  {"compact_tokens", result.compact_tokens},
                  {"realized_ratio", result.realized_ratio}};
  if (!records.empty() && !result.texts.empty()) {
    const double t_orig = static_cast<double>(result.original_tokens) / static_cast<double>(records.size());
    const double t_compact =
        static_cast<double>(result.compact_tokens) / static_cast<double>(result.texts.size());
    summary["original_tokens_per_fact"] = t_orig;
    summary["compact_tokens_per_fact"] = t_compact;
    summary["frequency_multiplier"] = ckm_frequency_multiplier(ratio, t_orig, t_compact);
  }
  const auto dest = ctx.destination("txt");
  if (!dest) {
    summary["texts"] = result.texts;
    ctx.out() << dump(summary);
    return kExitOk;
  }
  std::string text;
  for (const auto& t : result.texts) text += t + "\n";
  atomic_write(*dest, text);
  const auto s = dump(summary);
  atomic_write(sidecar(*dest, ".summary.json"), s);
  ctx.out() << s;
  return kExitOk;
}

int cmd_estimate(Context& ctx) {
  ctx.format({"json"});
  const auto path = ctx.path(ctx.flags().input_path, "input");
  if (path.empty()) throw ValidationError("input: missing (pass --input PATH)");
  std::istringstream in(read_file(path));
  const auto obs = read_observations_csv(in);
  const double target = ctx.number(ctx.flags().accuracy_target, "accuracy_target", 0.6, "target");
  const auto failures = ctx.count(ctx.flags().max_failures, "max_failures", 5, "max-failures");
  const double p = estimate_threshold_popularity(obs, target, failures);
  ctx.emit(ctx.destination("json"), dump({{"threshold_popularity", p},
                                          {"accuracy_target", target},
                                          {"max_failures", failures},
                                          {"n", obs.size()}}));
  return kExitOk;
}

int cmd_fit(Context& ctx) {
  ctx.format({"json"});
  const auto path = ctx.path(ctx.flags().input_path, "input");
  if (path.empty()) throw ValidationError("input: missing (pass --input PATH)");
  std::istringstream in(read_file(path));
  const auto points = read_points_csv(in);
  const auto model = ctx.text(ctx.flags().model, "model", "loglog");
  FitResult fit;
  if (model == "exp") {
    fit = fit_exponential(points);
  } else if (model == "power") {
    fit = fit_power_law(points);
  } else if (model == "loglog") {
    fit = fit_loglog(points);
  } else {
    throw ValidationError(fmt::format("model must be exp, power or loglog, got {}", model));
  }
  Json j = to_json(fit);
  const auto& f = ctx.flags();
  if ((!f.predict.empty() || !f.invert.empty()) && fit.model != FitModel::loglog) {
    throw ValidationError("model: --predict and --invert need the loglog model");
  }
  if (!f.predict.empty()) {
    j["predictions"] = Json::array();
    for (const double x : f.predict) {
      const auto e = predict_loglog(fit, x);
      j["predictions"].push_back({{"x", x}, {"y", e.value}, {"interval95", {e.ci95.low, e.ci95.high}}});
    }
  }
  if (!f.invert.empty()) {
    j["inversions"] = Json::array();
    for (const double y : f.invert) {
      const auto e = invert_size(fit, y);
      j["inversions"].push_back({{"y", y}, {"x", e.value}, {"ci95", {e.ci95.low, e.ci95.high}}});
    }
  }
  ctx.emit(ctx.destination("json"), dump(j));
  return kExitOk;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON config file; flags override its values");
  app->add_option("--seed", c.seed, "Master seed (required by commands that draw randomness)");
  app->add_option("--out", c.out_path, "Output file (default: $KNOWMIX_OUT_DIR/<command>.<ext> or stdout)");
  app->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"csv", "json", "jsonl", "txt"}));
  app->add_flag("--json-errors", c.json_errors, "Write errors to stderr as JSON");
}

void add_mixture(CLI::App* app, Flags& f) {
  app->add_option("--r", f.r, "Mixing ratio r");
  app->add_option("--knowledge", f.knowledge_path, "JSON file whose knowledge universe replaces the config's");
}

void add_grid(CLI::App* app, GridFlags& g) {
  app->add_option("--grid", g.values, "Explicit grid values")->delimiter(',');
  app->add_option("--grid-start", g.start, "First grid value");
  app->add_option("--grid-stop", g.stop, "Last grid value");
  app->add_option("--grid-count", g.count, "Number of grid points");
  app->add_option("--grid-scale", g.scale, "geometric or linear");
}

using Handler = std::function<int(Context&)>;

int report_error(const Flags& f, std::ostream& err, int code, const std::string& message) {
  if (f.common.json_errors) {
    err << Json{{"error", {{"code", code},
                           {"kind", code == kExitValidation ? "validation" : "internal"},
                           {"message", message}}}}
               .dump()
        << "\n";
  } else {
    err << "knowmix: error: " << message << "\n";
  }
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"Optimal capacity allocation, phase thresholds and SynBio corpora", "knowmix"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string("knowmix 0.1.0"));
  std::vector<std::pair<CLI::App*, Handler>> commands;

  auto* allocate = app.add_subcommand("allocate", "Optimal split of capacity between the domains");
  add_common(allocate, f.common);
  add_mixture(allocate, f);
  allocate->add_option("--capacity", f.capacity, "Total capacity M in bits");
  commands.emplace_back(allocate, cmd_allocate);

  auto* thresholds = app.add_subcommand("thresholds", "Phase-transition thresholds");
  add_common(thresholds, f.common);
  add_mixture(thresholds, f);
  thresholds->add_option("--capacity", f.capacity, "Capacity M at which to report r and f thresholds");
  thresholds->add_option("--units", f.units, "bits or params")->check(CLI::IsMember({"bits", "params"}));
  thresholds->add_option("--bits-per-param", f.bits_per_param, "Bits of capacity per parameter (default 2)");
  commands.emplace_back(thresholds, cmd_thresholds);

  auto* sweep_cmd = app.add_subcommand("sweep", "Accuracy and losses along a model-size or mixing-ratio grid");
  add_common(sweep_cmd, f.common);
  add_mixture(sweep_cmd, f);
  add_grid(sweep_cmd, f.grid);
  sweep_cmd->add_option("--axis", f.axis, "model_size or mixing_ratio");
  sweep_cmd->add_option("--capacity", f.capacity, "Fixed capacity on the mixing-ratio axis");
  sweep_cmd->add_option("--accuracy-target", f.accuracy_target, "Accuracy target (default 0.8)");
  sweep_cmd->add_option("--workers", f.workers, "Worker threads");
  commands.emplace_back(sweep_cmd, cmd_sweep);

  auto* subsets = app.add_subcommand("subsets", "Power-law subset experiment and threshold frequencies");
  add_common(subsets, f.common);
  add_grid(subsets, f.grid);
  subsets->add_option("--r", f.r, "Mixing ratio (default 0.01)");
  subsets->add_option("--group-count", f.group_count, "Number of groups (default 100)");
  subsets->add_option("--group-size", f.group_size, "Facts per group (default 100)");
  subsets->add_option("--exponent", f.exponent, "Power-law exponent of group weights (default 1.5)");
  subsets->add_option("--fact-entropy", f.fact_entropy, "Bits per fact (default: SynBio entropy)");
  subsets->add_option("--accuracy-target", f.accuracy_target, "Accuracy target (default 0.8)");
  commands.emplace_back(subsets, cmd_subsets);

  auto* synbio = app.add_subcommand("synbio", "Generate a SynBio corpus as JSONL");
  add_common(synbio, f.common);
  synbio->add_option("--count", f.count, "Number of biographies");
  synbio->add_option("--exposures", f.exposures_path, "Also write one rendered exposure per line here");
  synbio->add_option("--universe", f.universe_path, "Also write the corpus's knowledge universe here");
  commands.emplace_back(synbio, cmd_synbio);

  auto* mixplan = app.add_subcommand("mixplan", "Data-mixing plan");
  add_common(mixplan, f.common);
  mixplan->add_option("--total-tokens", f.total_tokens, "Training tokens S");
  mixplan->add_option("--r", f.r, "Mixing ratio r");
  mixplan->add_option("--knowledge-tokens", f.knowledge_tokens, "Knowledge dataset tokens S1");
  mixplan->add_option("--web-pool-tokens", f.web_pool_tokens, "Available web tokens S2");
  mixplan->add_option("--facts", f.fact_count, "Number of facts K");
  mixplan->add_option("--tokens-per-fact", f.tokens_per_fact, "Tokens per fact exposure");
  mixplan->add_option("--corpus", f.corpus_path, "JSONL corpus to measure K and tokens per fact from");
  commands.emplace_back(mixplan, cmd_mixplan);

  auto* subsample = app.add_subcommand("subsample", "Uniform random subset of a corpus");
  add_common(subsample, f.common);
  subsample->add_option("--corpus", f.corpus_path, "JSONL corpus");
  subsample->add_option("--keep-ratio", f.keep_ratio, "Fraction of records kept");
  commands.emplace_back(subsample, cmd_subsample);

  auto* ckm = app.add_subcommand("ckm", "Compact knowledge mixing tuples");
  add_common(ckm, f.common);
  ckm->add_option("--corpus", f.corpus_path, "JSONL corpus");
  ckm->add_option("--ckm-ratio", f.ckm_ratio, "Compact token budget relative to the corpus");
  commands.emplace_back(ckm, cmd_ckm);

  auto* estimate = app.add_subcommand("estimate", "Threshold popularity from accuracy observations");
  add_common(estimate, f.common);
  estimate->add_option("--input", f.input_path, "CSV with header popularity,correct");
  estimate->add_option("--target", f.accuracy_target, "Accuracy target (default 0.6)");
  estimate->add_option("--max-failures", f.max_failures, "Failures tolerated (default 5)");
  commands.emplace_back(estimate, cmd_estimate);

  auto* fit = app.add_subcommand("fit", "Fit a scaling law to two-column CSV data");
  add_common(fit, f.common);
  fit->add_option("--input", f.input_path, "Two-column CSV with a header row");
  fit->add_option("--model", f.model, "exp, power or loglog (default loglog)");
  fit->add_option("--predict", f.predict, "x values to predict (loglog)")->delimiter(',');
  fit->add_option("--invert", f.invert, "y values to solve for x (loglog)")->delimiter(',');
  commands.emplace_back(fit, cmd_fit);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    return report_error(f, err, kExitValidation, e.what());
  }

  for (auto& [sub, handler] : commands) {
    if (!sub->parsed()) continue;
    try {
      Context ctx(f, sub->get_name(), out);
      return handler(ctx);
    } catch (const std::invalid_argument& e) {
      return report_error(f, err, kExitValidation, e.what());
    } catch (const std::domain_error& e) {
      return report_error(f, err, kExitValidation, e.what());
    } catch (const Json::exception& e) {
      return report_error(f, err, kExitValidation, e.what());
    } catch (const IoError& e) {
      return report_error(f, err, kExitInternal, e.what());
    } catch (const std::exception& e) {
      return report_error(f, err, kExitInternal, fmt::format("internal error: {}", e.what()));
    }
  }
  return report_error(f, err, kExitValidation, "no subcommand given");
}

}  // namespace knowmix::cli
