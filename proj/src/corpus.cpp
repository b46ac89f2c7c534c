// SPDX-License-Identifier: Apache-2.0

#include "knowmix/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "knowmix/random.hpp"
#include "synbio_assets.hpp"

namespace knowmix {

namespace {

// Stream identifiers under the master seed.
constexpr std::uint64_t kNameStream = 1;
constexpr std::uint64_t kAttributeStream = 2;
constexpr std::uint64_t kRenderStream = 3;
constexpr std::uint64_t kSubsampleStream = 4;
constexpr std::uint64_t kCkmStream = 5;

// Non-empty lines, skipping # comments.
std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  while (!text.empty()) {
    const auto end = text.find('\n');
    auto line = text.substr(0, end);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty() && line.front() != '#') lines.emplace_back(line);
    if (end == std::string_view::npos) break;
    text.remove_prefix(end + 1);
  }
  return lines;
}

std::vector<std::string> load_list(std::string_view asset, std::size_t expected) {
  auto values = split_lines(detail::synbio_asset(asset));
  if (values.size() != expected) {
    throw std::logic_error(fmt::format("bundled list {} has {} entries, expected {}", asset,
                                       values.size(), expected));
  }
  return values;
}

std::vector<std::string> birth_dates() {
  static constexpr std::array<std::string_view, 12> kMonths = {
      "January", "February", "March",     "April",   "May",      "June",
      "July",    "August",   "September", "October", "November", "December"};
  std::vector<std::string> out;
  out.reserve(28 * 12 * 100);
  // 1-28 days x 12 months x every other year of 1900-2099.
  for (int y = 0; y < 100; ++y) {
    const int year = 1900 + 2 * y;
    for (const auto month : kMonths) {
      for (int day = 1; day <= 28; ++day) out.push_back(fmt::format("{} {:02}, {}", month, day, year));
    }
  }
  return out;
}

struct Domains {
  std::vector<std::string> dates = birth_dates();
  std::vector<std::string> cities = load_list("birth_cities.txt", 200);
  std::vector<std::string> universities = load_list("universities.txt", 300);
  std::vector<std::string> majors = load_list("majors.txt", 100);
  std::vector<std::string> employers = load_list("employers.txt", 263);
  std::array<AttributeDomain, 5> table{{
      {Attribute::birth_date,
       "birth_date",
       &dates,
       {"{name} was born on {value}.", "{name} came into this world on {value}.",
        "{name}'s birth date is {value}.", "{name}'s date of birth is {value}.",
        "{name} celebrates {pronoun} birthday on {value}."}},
      {Attribute::birth_city,
       "birth_city",
       &cities,
       {"{name} spent {pronoun} early years in {value}.", "{name} was brought up in {value}.",
        "{name}'s birthplace is {value}.", "{name} originates from {value}.",
        "{name} was born in {value}."}},
      {Attribute::university,
       "university",
       &universities,
       {"{name} received mentorship and guidance from faculty members at {value}.",
        "{name} graduated from {value}.", "{name} spent {pronoun} college years at {value}.",
        "{name} completed {pronoun} degree at {value}.",
        "{name} completed {pronoun} academic journey at {value}."}},
      {Attribute::major,
       "major",
       &majors,
       {"{name} completed {pronoun} education with a focus on {value}.",
        "{name} devoted {pronoun} academic focus to {value}.", "{name} has a degree in {value}.",
        "{name} focused {pronoun} academic pursuits on {value}.",
        "{name} specialized in the field of {value}."}},
      {Attribute::employer,
       "employer",
       &employers,
       {"{name} is employed at {value}.", "{name} a staff member at {value}.",
        "{name} is associated with {value}.", "{name} is engaged in work at {value}.",
        "{name} is part of the team at {value}."}},
  }};
};

const Domains& domains() {
  static const Domains instance;
  return instance;
}

NameLists load_names() {
  NameLists names;
  for (const auto& line : load_list("first_names.tsv", 400)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw std::logic_error("first_names.tsv: missing gender column");
    names.first.push_back(line.substr(0, tab));
    names.first_pronoun.push_back(line.substr(tab + 1) == "f" ? "her" : "his");
  }
  names.middle = load_list("middle_names.txt", 400);
  names.last = load_list("last_names.txt", 1000);
  return names;
}

// Keyed bijection on [0, domain) built from a balanced Feistel network on
// the smallest even bit width covering the domain, with cycle walking.
class NamePermutation {
 public:
  NamePermutation(std::uint64_t domain, std::uint64_t key) : domain_(domain), key_(key) {
    while ((std::uint64_t{1} << (2 * half_bits_)) < domain_) ++half_bits_;
    mask_ = (std::uint64_t{1} << half_bits_) - 1;
  }

  std::uint64_t operator()(std::uint64_t index) const {
    std::uint64_t x = index;
    do {
      x = encrypt(x);
    } while (x >= domain_);
    return x;
  }

 private:
  std::uint64_t encrypt(std::uint64_t x) const {
    std::uint64_t left = x >> half_bits_;
    std::uint64_t right = x & mask_;
    for (std::uint64_t round = 0; round < 6; ++round) {
      const std::uint64_t f = splitmix64(key_ ^ (round << 40) ^ right) & mask_;
      left = std::exchange(right, left ^ f);
    }
    return (left << half_bits_) | right;
  }

  std::uint64_t domain_;
  std::uint64_t key_;
  unsigned half_bits_ = 1;
  std::uint64_t mask_ = 1;
};

std::string fill_template(std::string_view tmpl, const BiographyRecord& r, std::string_view value) {
  std::string out;
  out.reserve(tmpl.size() + r.full_name.size() + value.size());
  while (!tmpl.empty()) {
    const auto open = tmpl.find('{');
    out.append(tmpl.substr(0, open));
    if (open == std::string_view::npos) break;
    const auto close = tmpl.find('}', open);
    const auto slot = tmpl.substr(open + 1, close - open - 1);
    if (slot == "name") {
      out.append(r.full_name);
    } else if (slot == "value") {
      out.append(value);
    } else {
      out.append(r.pronoun);
    }
    tmpl.remove_prefix(close + 1);
  }
  return out;
}

}  // namespace

std::string_view attribute_name(Attribute a) { return attribute_domain(a).name; }

const AttributeDomain& attribute_domain(Attribute a) {
  return domains().table[static_cast<std::size_t>(a)];
}

const NameLists& name_lists() {
  static const NameLists instance = load_names();
  return instance;
}

std::string_view synbio_assets_version() { return detail::synbio_assets_version(); }

double synbio_entropy_bits() {
  double bits = 0.0;
  for (const Attribute a : kAttributes) bits += std::log2(static_cast<double>(attribute_domain(a).size()));
  return bits;
}

BiographyRecord synbio_record(std::uint64_t index, std::uint64_t seed) {
  const auto& names = name_lists();
  const NamePermutation permute(names.product(), stream_seed(seed, kNameStream, 0));
  std::uint64_t code = permute(index);
  const auto last = code % names.last.size();
  code /= names.last.size();
  const auto middle = code % names.middle.size();
  const auto first = code / names.middle.size();

  BiographyRecord record;
  record.full_name = names.first[first] + ' ' + names.middle[middle] + ' ' + names.last[last];
  record.pronoun = names.first_pronoun[first];
  auto rng = make_rng(seed, kAttributeStream, index);
  for (const Attribute a : kAttributes) {
    const auto& domain = attribute_domain(a);
    record.attribute_values[static_cast<std::size_t>(a)] =
        (*domain.values)[uniform_below(rng, domain.size())];
  }
  return record;
}

std::vector<BiographyRecord> generate_synbio(std::size_t count, std::uint64_t seed) {
  const auto limit = name_lists().product();
  if (count > limit) {
    throw std::domain_error(
        fmt::format("count {} exceeds the {} distinct names available", count, limit));
  }
  std::vector<BiographyRecord> records;
  records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) records.push_back(synbio_record(i, seed));
  return records;
}

ExposurePlan exposure_plan(std::uint64_t seed) {
  auto rng = make_rng(seed, kRenderStream, 0);
  ExposurePlan plan{kAttributes, {}};
  shuffle(std::span<Attribute>(plan.order), rng);
  for (auto& t : plan.template_index) t = static_cast<std::uint8_t>(uniform_below(rng, 5));
  return plan;
}

std::string render_exposure(const BiographyRecord& record, const ExposurePlan& plan) {
  std::string text;
  for (const Attribute a : plan.order) {
    const auto& domain = attribute_domain(a);
    if (!text.empty()) text.push_back(' ');
    text += fill_template(domain.templates[plan.template_index[static_cast<std::size_t>(a)]],
                          record, record.value(a));
  }
  return text;
}

std::string render_exposure(const BiographyRecord& record, std::uint64_t seed) {
  return render_exposure(record, exposure_plan(seed));
}

std::vector<double> power_law_partition(std::size_t total, std::size_t groups, double exponent) {
  if (groups == 0) throw std::domain_error("power_law_partition needs at least one group");
  if (total % groups != 0) {
    throw std::domain_error(
        fmt::format("group count {} does not divide total {}", groups, total));
  }
  if (!(exponent > 0.0)) {
    throw std::domain_error(fmt::format("power-law exponent must be > 0, got {}", exponent));
  }
  std::vector<double> weights(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    weights[g] = std::pow(static_cast<double>(g + 1), -exponent);
  }
  const double norm = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (auto& w : weights) w /= norm;
  return weights;
}

MixPlan plan_mixture(double total_tokens, double mixing_ratio, double knowledge_tokens,
                     std::optional<double> web_pool_tokens, std::size_t fact_count,
                     double tokens_per_fact) {
  if (!(total_tokens > 0.0)) {
    throw std::domain_error(fmt::format("total_tokens must be > 0, got {}", total_tokens));
  }
  if (!(mixing_ratio > 0.0 && mixing_ratio < 1.0)) {
    throw std::domain_error(fmt::format("mixing_ratio must lie in (0, 1), got {}", mixing_ratio));
  }
  if (!(knowledge_tokens > 0.0)) {
    throw std::domain_error(fmt::format("knowledge_tokens must be > 0, got {}", knowledge_tokens));
  }
  if (fact_count == 0) throw std::domain_error("fact_count must be >= 1");
  if (!(tokens_per_fact > 0.0)) {
    throw std::domain_error(fmt::format("tokens_per_fact must be > 0, got {}", tokens_per_fact));
  }
  MixPlan plan;
  plan.total_tokens = total_tokens;
  plan.mixing_ratio = mixing_ratio;
  plan.knowledge_tokens = knowledge_tokens;
  plan.web_pool_tokens = web_pool_tokens;
  plan.knowledge_sample_tokens = mixing_ratio * total_tokens;
  plan.knowledge_epochs = plan.knowledge_sample_tokens / knowledge_tokens;
  plan.web_sample_tokens = (1.0 - mixing_ratio) * total_tokens;
  plan.fact_count = fact_count;
  plan.tokens_per_fact = tokens_per_fact;
  plan.per_fact_frequency = mixing_ratio / (static_cast<double>(fact_count) * tokens_per_fact);
  if (web_pool_tokens && plan.web_sample_tokens > *web_pool_tokens) {
    throw std::domain_error(fmt::format(
        "web pool exhausted: (1-r)S = {} tokens exceeds web_pool_tokens S_2 = {} by {}",
        plan.web_sample_tokens, *web_pool_tokens, plan.web_sample_tokens - *web_pool_tokens));
  }
  return plan;
}

std::vector<std::size_t> subsample_indices(std::size_t n, double keep_ratio, std::uint64_t seed) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) {
    throw std::domain_error(fmt::format("keep_ratio must lie in (0, 1], got {}", keep_ratio));
  }
  const auto keep = static_cast<std::size_t>(std::llround(keep_ratio * static_cast<double>(n)));
  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  if (keep == n) return indices;
  // Partial Fisher-Yates: the first keep slots end up a uniform subset.
  auto rng = make_rng(seed, kSubsampleStream, 0);
  for (std::size_t i = 0; i < keep; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_below(rng, n - i));
    std::swap(indices[i], indices[j]);
  }
  indices.resize(keep);
  std::sort(indices.begin(), indices.end());
  return indices;
}

std::vector<BiographyRecord> subsample_corpus(std::span<const BiographyRecord> records,
                                              double keep_ratio, std::uint64_t seed) {
  std::vector<BiographyRecord> out;
  const auto indices = subsample_indices(records.size(), keep_ratio, seed);
  out.reserve(indices.size());
  for (const auto i : indices) out.push_back(records[i]);
  return out;
}

std::size_t whitespace_tokens(std::string_view text) {
  std::size_t count = 0;
  bool in_token = false;
  for (const char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

std::string corpus_exposure(const BiographyRecord& record, std::uint64_t index,
                            std::uint64_t seed) {
  return render_exposure(record, stream_seed(seed, kRenderStream, index));
}

double mean_exposure_tokens(std::span<const BiographyRecord> records, std::uint64_t seed,
                            const TokenCounter& counter) {
  if (records.empty()) throw std::domain_error("mean_exposure_tokens needs at least one record");
  double total = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    total += static_cast<double>(counter(corpus_exposure(records[i], i, seed)));
  }
  return total / static_cast<double>(records.size());
}

std::string compact_tuple(const BiographyRecord& record, bool flip) {
  const auto& date = record.value(Attribute::birth_date);
  const auto& job = record.value(Attribute::employer);
  return flip ? fmt::format("Bio: N {} O {} B {}", record.full_name, job, date)
              : fmt::format("Bio: N {} B {} O {}", record.full_name, date, job);
}

CkmResult ckm_augment(std::span<const BiographyRecord> records, double ckm_ratio,
                      std::uint64_t seed, const TokenCounter& counter) {
  if (!(ckm_ratio >= 0.0) || !std::isfinite(ckm_ratio)) {
    throw std::domain_error(fmt::format("ckm_ratio must be finite and >= 0, got {}", ckm_ratio));
  }
  CkmResult out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    out.original_tokens += counter(corpus_exposure(records[i], i, seed));
  }
  const double budget = ckm_ratio * static_cast<double>(out.original_tokens);
  for (std::uint64_t emitted = 0;
       !records.empty() && static_cast<double>(out.compact_tokens) < budget; ++emitted) {
    auto rng = make_rng(seed, kCkmStream, emitted);
    const bool flip = (rng() >> 63) != 0;
    auto text = compact_tuple(records[emitted % records.size()], flip);
    out.compact_tokens += counter(text);
    out.flipped += flip ? 1 : 0;
    out.texts.push_back(std::move(text));
  }
  out.realized_ratio = out.original_tokens == 0
                           ? 0.0
                           : static_cast<double>(out.compact_tokens) /
                                 static_cast<double>(out.original_tokens);
  return out;
}

KnowledgeUniverse synbio_universe(std::size_t count, double irreducible_loss) {
  if (count == 0) throw std::domain_error("synbio_universe needs at least one biography");
  return KnowledgeUniverse::uniform(count, 1.0 / static_cast<double>(count), synbio_entropy_bits(),
                                    irreducible_loss);
}

}  // namespace knowmix
