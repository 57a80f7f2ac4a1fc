#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathsentry/as_path.hpp"
#include "pathsentry/parse_stats.hpp"
#include "pathsentry/prefix.hpp"
#include "pathsentry/prefix_tree.hpp"

namespace pathsentry {

struct RibEntry {
  Asn vantage = 0;
  Prefix prefix;
  AsPath path;
};

// One line of an UPDATE file. An empty `path` is a withdrawal.
struct Update {
  std::int64_t timestamp = 0;
  Asn vantage = 0;
  Prefix prefix;
  std::optional<AsPath> path;
};

struct RouteChange {
  std::int64_t timestamp = 0;
  Asn vantage = 0;
  Prefix announced_prefix;
  Prefix matched_prefix;
  AsPath historical_path;
  AsPath updated_path;

  bool operator==(const RouteChange&) const = default;
};

std::vector<RibEntry> read_rib(std::istream& in, ParseStats& stats);
std::vector<Update> read_updates(std::istream& in, ParseStats& stats);

// Tab-separated `vantage prefix path` and `ts vantage prefix path|WITHDRAW`.
void write_rib(std::ostream& out, std::span<const RibEntry> entries);
void write_updates(std::ostream& out, std::span<const Update> updates);

// Both address families for one vantage point; a tree never mixes families.
struct VantageTable {
  PrefixTree<AsPath> v4{Family::kV4};
  PrefixTree<AsPath> v6{Family::kV6};

  PrefixTree<AsPath>& tree(Family f) { return f == Family::kV4 ? v4 : v6; }
  const PrefixTree<AsPath>& tree(Family f) const { return f == Family::kV4 ? v4 : v6; }
  std::size_t size() const { return v4.size() + v6.size(); }
};

using TreeMap = std::map<Asn, VantageTable>;

// Duplicate (vantage, prefix) entries keep the last one read.
TreeMap build_prefix_trees(std::span<const RibEntry> entries);

std::optional<PrefixTree<AsPath>::Match> lpm_lookup(const PrefixTree<AsPath>& tree, const Prefix& query);

// Applies updates in timestamp order against evolving per-vantage trees. Each
// announcement is compared with its longest-prefix match and then written into
// the tree, so the reference is always the most recent route seen.
class ChangeExtractor {
 public:
  explicit ChangeExtractor(TreeMap trees, std::int64_t slack_secs = 0);

  // Throws DataError when the update is older than the newest seen minus slack.
  std::optional<RouteChange> apply(const Update& update);

  const TreeMap& trees() const { return trees_; }
  std::size_t new_vantages() const { return new_vantages_; }

 private:
  TreeMap trees_;
  std::int64_t slack_;
  std::optional<std::int64_t> newest_;
  std::size_t new_vantages_ = 0;
};

std::vector<RouteChange> extract_route_changes(TreeMap trees, std::span<const Update> updates,
                                               std::int64_t slack_secs = 0);

nlohmann::ordered_json route_change_to_json(const RouteChange& change);
RouteChange route_change_from_json(const nlohmann::json& j);

}  // namespace pathsentry
