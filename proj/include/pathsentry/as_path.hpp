#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace pathsentry {

using Asn = std::uint32_t;

// One position in an AS path: a single ASN, or an AS set (sorted, deduplicated,
// non-empty). Equality is set equality over members, so a one-member set
// equals the bare ASN.
struct PathElement {
  std::vector<Asn> members;
  bool is_set = false;

  static PathElement single(Asn asn) { return {{asn}, false}; }
  static PathElement set(std::vector<Asn> asns);

  bool is_single() const { return members.size() == 1; }
  Asn front() const { return members.front(); }
  bool contains(Asn asn) const;

  bool operator==(const PathElement& other) const { return members == other.members; }
};

struct AsPath {
  std::vector<PathElement> elements;

  AsPath() = default;
  AsPath(std::initializer_list<Asn> asns);
  explicit AsPath(std::vector<PathElement> elems) : elements(std::move(elems)) {}

  std::size_t size() const { return elements.size(); }
  bool empty() const { return elements.empty(); }
  const PathElement& operator[](std::size_t i) const { return elements[i]; }

  bool operator==(const AsPath&) const = default;
};

// Space separated elements; an AS set is written `{a,b,c}`. Throws DataError.
AsPath parse_as_path(std::string_view text);
std::string format_as_path(const AsPath& path);

// JSON form: an array whose items are an integer or an array of integers.
nlohmann::json path_to_json(const AsPath& path);
AsPath path_from_json(const nlohmann::json& j);

}  // namespace pathsentry
