#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathsentry/as_graph.hpp"
#include "pathsentry/parse_stats.hpp"

namespace pathsentry {

// Per-AS attributes from organization/ranking datasets. Absent fields render
// as "unknown".
struct AsMetadata {
  Asn asn = 0;
  std::optional<std::string> org_name;
  std::optional<std::string> country;
  std::optional<std::uint64_t> number_asns;
  std::optional<std::uint64_t> number_prefixes;
  std::optional<std::uint64_t> number_addresses;
  std::optional<std::uint64_t> announcing_prefixes;
  std::optional<std::uint64_t> announcing_addresses;
};

using MetadataMap = std::map<Asn, AsMetadata>;

// One JSON object per line with keys asn, orgName, country, numberAsns,
// numberPrefixes, numberAddresses, announcingPrefixes, announcingAddresses.
MetadataMap read_metadata(std::istream& in, ParseStats& stats);
nlohmann::ordered_json metadata_to_json(const AsMetadata& meta);

using OrgMap = std::map<Asn, std::string>;

// ASN -> organization name, for ASes whose metadata carries one.
OrgMap org_map_from_metadata(const MetadataMap& meta);

struct PromptSegment {
  Asn asn = 0;
  std::size_t index = 1;  // 1-based
  std::size_t total = 1;
  std::string text;
  std::string template_version;

  bool operator==(const PromptSegment&) const = default;
};

struct DescribeOptions {
  std::size_t neighbor_batch_size = 50;
  std::size_t max_chars = 8000;
  // Halve the batch size until every segment fits max_chars.
  bool auto_size = true;
};

// Version tag of the shipped description template.
const std::string& template_version();

// Number of Unicode code points in a UTF-8 string.
std::size_t char_length(const std::string& utf8);

// Neighbors in rendering order: descending total degree, then ascending ASN.
std::vector<Neighbor> ordered_neighbors(Asn asn, const AsGraph& graph);

// Renders ceil(neighbors / batch) segments (at least one). Each repeats the
// stable attribute block; all but the last end with a remaining-neighbor line.
// Throws ConfigError for a zero batch size and DataError when a segment
// exceeds max_chars (after auto-sizing, if enabled).
std::vector<PromptSegment> render_description(Asn asn, const AsGraph& graph, const AsMetadata& meta,
                                              const DescribeOptions& options);

nlohmann::ordered_json segment_to_json(const PromptSegment& seg);
PromptSegment segment_from_json(const nlohmann::json& j);

}  // namespace pathsentry
