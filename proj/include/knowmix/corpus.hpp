// SPDX-License-Identifier: Apache-2.0
//
// SynBio-style biography corpora: deterministic generation, templated
// rendering, power-law partitions and data-mixing plans.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "knowmix/universe.hpp"

namespace knowmix {

enum class Attribute { birth_date, birth_city, university, major, employer };

inline constexpr std::array<Attribute, 5> kAttributes = {
    Attribute::birth_date, Attribute::birth_city, Attribute::university, Attribute::major,
    Attribute::employer};

std::string_view attribute_name(Attribute a);

/// Values and sentence templates of one attribute. Templates use the slots
/// {name}, {value} and {pronoun} (possessive).
struct AttributeDomain {
  Attribute attribute;
  std::string_view name;
  const std::vector<std::string>* values;
  std::array<std::string_view, 5> templates;

  std::size_t size() const noexcept { return values->size(); }
};

const AttributeDomain& attribute_domain(Attribute a);

struct NameLists {
  std::vector<std::string> first;
  std::vector<std::string> first_pronoun;  // possessive pronoun per first name
  std::vector<std::string> middle;
  std::vector<std::string> last;

  std::uint64_t product() const noexcept {
    return std::uint64_t(first.size()) * middle.size() * last.size();
  }
};

const NameLists& name_lists();

/// Version tag of the bundled value and name lists.
std::string_view synbio_assets_version();

/// Sum over attributes of log2 of the domain size: bits needed to pin down
/// one biography.
double synbio_entropy_bits();

struct BiographyRecord {
  std::string full_name;
  std::array<std::string, 5> attribute_values;  // indexed by Attribute
  std::string pronoun;

  const std::string& value(Attribute a) const {
    return attribute_values[static_cast<std::size_t>(a)];
  }
  bool operator==(const BiographyRecord&) const = default;
};

/// Record \p index of the corpus for \p seed. Names come from a keyed
/// permutation of the full name product, so distinct indices never share a
/// name; attribute values are drawn from a per-index stream.
BiographyRecord synbio_record(std::uint64_t index, std::uint64_t seed);

/// Records 0..count-1. Throws std::domain_error when count exceeds the name
/// product.
std::vector<BiographyRecord> generate_synbio(std::size_t count, std::uint64_t seed);

/// Sentence order and per-attribute template choice for one exposure.
struct ExposurePlan {
  std::array<Attribute, 5> order;
  std::array<std::uint8_t, 5> template_index;  // indexed by Attribute
};

ExposurePlan exposure_plan(std::uint64_t seed);
std::string render_exposure(const BiographyRecord& record, const ExposurePlan& plan);
std::string render_exposure(const BiographyRecord& record, std::uint64_t seed);

/// Weight of group g (1-based) proportional to g^-exponent, summing to 1.
std::vector<double> power_law_partition(std::size_t total, std::size_t groups, double exponent);

struct MixPlan {
  double total_tokens = 0.0;             // S
  double mixing_ratio = 0.0;             // r
  double knowledge_tokens = 0.0;         // S1
  std::optional<double> web_pool_tokens; // S2
  double knowledge_epochs = 0.0;         // r S / S1
  double knowledge_sample_tokens = 0.0;  // r S
  double web_sample_tokens = 0.0;        // (1 - r) S
  std::size_t fact_count = 0;
  double tokens_per_fact = 0.0;
  double per_fact_frequency = 0.0;       // r / (K * tokens_per_fact), per corpus token
};

/// Replicate the knowledge data r S / S1 times and draw (1 - r) S web
/// tokens. Throws std::domain_error naming the shortfall when the web pool
/// is smaller than (1 - r) S.
MixPlan plan_mixture(double total_tokens, double mixing_ratio, double knowledge_tokens,
                     std::optional<double> web_pool_tokens, std::size_t fact_count,
                     double tokens_per_fact);

/// round(keep_ratio * n) indices drawn uniformly without replacement, ascending.
std::vector<std::size_t> subsample_indices(std::size_t n, double keep_ratio, std::uint64_t seed);

std::vector<BiographyRecord> subsample_corpus(std::span<const BiographyRecord> records,
                                              double keep_ratio, std::uint64_t seed);

using TokenCounter = std::function<std::size_t(std::string_view)>;

std::size_t whitespace_tokens(std::string_view text);

/// Exposure of record \p index as it appears in the original corpus.
std::string corpus_exposure(const BiographyRecord& record, std::uint64_t index,
                            std::uint64_t seed);

/// Mean token count of corpus_exposure over the records.
double mean_exposure_tokens(std::span<const BiographyRecord> records, std::uint64_t seed,
                            const TokenCounter& counter = whitespace_tokens);

/// "Bio: N {name} B {birth date} O {employer}", with B and O swapped when
/// \p flip is set.
std::string compact_tuple(const BiographyRecord& record, bool flip);

struct CkmResult {
  std::vector<std::string> texts;
  std::size_t original_tokens = 0;
  std::size_t compact_tokens = 0;
  std::size_t flipped = 0;
  double realized_ratio = 0.0;
};

/// Emits compact tuples cycling over the records until their token count
/// reaches ckm_ratio times the original corpus token count.
CkmResult ckm_augment(std::span<const BiographyRecord> records, double ckm_ratio,
                      std::uint64_t seed, const TokenCounter& counter = whitespace_tokens);

/// One fact per biography at within-domain frequency 1/count and entropy
/// synbio_entropy_bits().
KnowledgeUniverse synbio_universe(std::size_t count, double irreducible_loss = 0.0);

}  // namespace knowmix
