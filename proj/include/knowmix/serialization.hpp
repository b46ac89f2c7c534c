// SPDX-License-Identifier: Apache-2.0
//
// JSON and CSV forms of the library types. Field names are stable. Infinite
// or NaN numbers are written as JSON null and as "inf"/"nan" in CSV.

#pragma once

#include <istream>
#include <string>
#include <vector>

#include <json.hpp>

#include "knowmix/allocator.hpp"
#include "knowmix/analysis.hpp"
#include "knowmix/corpus.hpp"
#include "knowmix/universe.hpp"

namespace knowmix {

using Json = nlohmann::ordered_json;

Json to_json(const KnowledgeUniverse& knowledge);
Json to_json(const WebLossCurve& curve);
Json to_json(const MixtureUniverse& mixture);
Json to_json(const Allocation& allocation);
Json to_json(const ThresholdReport& report);
Json to_json(const FitResult& fit);
Json to_json(const BiographyRecord& record);
Json to_json(const MixPlan& plan);

/// {"facts": [{"p", "h"}...], "c1"}. Also accepts the shorthand
/// {"uniform": {"count", "p", "h"}, "c1"}.
KnowledgeUniverse knowledge_from_json(const Json& j);
/// {"power_law": {"c", "a", "alpha"}} or {"tabulated": [[M, F], ...]}.
WebLossCurve web_from_json(const Json& j);
/// {"knowledge", "web", "r"}.
MixtureUniverse mixture_from_json(const Json& j);
BiographyRecord record_from_json(const Json& j);

/// Reads a numeric field, throwing std::invalid_argument naming \p path
/// when it is missing or not a number.
double number_at(const Json& j, const char* key, const std::string& path);

/// Shortest round-trip decimal form; "inf", "-inf" or "nan" otherwise.
std::string format_number(double value);

/// CSV with header popularity,correct; correct is 0 or 1.
std::vector<AccuracyObservation> read_observations_csv(std::istream& in);

/// Two-column numeric CSV with a header row.
std::vector<Point> read_points_csv(std::istream& in);

}  // namespace knowmix
