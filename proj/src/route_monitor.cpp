#include "pathsentry/route_monitor.hpp"

#include <istream>
#include <ostream>

#include <spdlog/spdlog.h>

#include "pathsentry/errors.hpp"
#include "text_util.hpp"

namespace pathsentry {

namespace {

Asn parse_vantage(std::string_view text) {
  auto v = detail::parse_int<Asn>(detail::trim(text));
  if (!v) throw DataError("bad vantage ASN '" + std::string(text) + "'");
  return *v;
}

// Reads non-comment lines, handing each split record to `fn`; DataError from
// `fn` skips the line.
template <typename Fn>
void for_each_record(std::istream& in, ParseStats& stats, const char* what, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_skippable(line)) continue;
    ++stats.lines;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    try {
      fn(detail::split(line, '\t'));
      ++stats.records;
    } catch (const DataError& e) {
      ++stats.skipped;
      stats.add_error(std::string(what) + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<RibEntry> read_rib(std::istream& in, ParseStats& stats) {
  std::vector<RibEntry> out;
  for_each_record(in, stats, "RIB", [&](const std::vector<std::string_view>& f) {
    if (f.size() != 3) throw DataError("expected 3 tab-separated fields");
    RibEntry e{parse_vantage(f[0]), Prefix::parse(detail::trim(f[1])), parse_as_path(f[2])};
    if (!(e.path[0] == PathElement::single(e.vantage))) ++stats.vantage_mismatch;
    out.push_back(std::move(e));
  });
  if (stats.vantage_mismatch > 0) {
    spdlog::warn("{} RIB entries do not start with their vantage AS (kept)", stats.vantage_mismatch);
  }
  return out;
}

std::vector<Update> read_updates(std::istream& in, ParseStats& stats) {
  std::vector<Update> out;
  for_each_record(in, stats, "UPDATE", [&](const std::vector<std::string_view>& f) {
    if (f.size() != 4) throw DataError("expected 4 tab-separated fields");
    auto ts = detail::parse_int<std::int64_t>(detail::trim(f[0]));
    if (!ts) throw DataError("bad timestamp '" + std::string(f[0]) + "'");
    Update u{*ts, parse_vantage(f[1]), Prefix::parse(detail::trim(f[2])), std::nullopt};
    auto path_text = detail::trim(f[3]);
    if (path_text != "WITHDRAW") u.path = parse_as_path(path_text);
    out.push_back(std::move(u));
  });
  return out;
}

void write_rib(std::ostream& out, std::span<const RibEntry> entries) {
  for (const auto& e : entries) {
    out << e.vantage << '\t' << e.prefix.to_string() << '\t' << format_as_path(e.path) << '\n';
  }
}

void write_updates(std::ostream& out, std::span<const Update> updates) {
  for (const auto& u : updates) {
    out << u.timestamp << '\t' << u.vantage << '\t' << u.prefix.to_string() << '\t'
        << (u.path ? format_as_path(*u.path) : std::string("WITHDRAW")) << '\n';
  }
}

TreeMap build_prefix_trees(std::span<const RibEntry> entries) {
  TreeMap trees;
  for (const auto& e : entries) {
    trees[e.vantage].tree(e.prefix.family()).insert(e.prefix, e.path);
  }
  return trees;
}

std::optional<PrefixTree<AsPath>::Match> lpm_lookup(const PrefixTree<AsPath>& tree, const Prefix& query) {
  return tree.lpm(query);
}

ChangeExtractor::ChangeExtractor(TreeMap trees, std::int64_t slack_secs)
    : trees_(std::move(trees)), slack_(slack_secs) {}

std::optional<RouteChange> ChangeExtractor::apply(const Update& update) {
  if (newest_ && update.timestamp < *newest_ - slack_) {
    throw DataError("update at " + std::to_string(update.timestamp) + " is out of order (newest seen " +
                    std::to_string(*newest_) + ")");
  }
  if (!newest_ || update.timestamp > *newest_) newest_ = update.timestamp;

  auto [it, fresh] = trees_.try_emplace(update.vantage);
  if (fresh) ++new_vantages_;
  auto& tree = it->second.tree(update.prefix.family());

  if (!update.path) {
    tree.remove(update.prefix);
    return std::nullopt;
  }

  std::optional<RouteChange> change;
  if (auto match = tree.lpm(update.prefix); match && !(*match->value == *update.path)) {
    change = RouteChange{update.timestamp, update.vantage, update.prefix, match->prefix, *match->value,
                         *update.path};
  }
  tree.insert(update.prefix, *update.path);
  return change;
}

std::vector<RouteChange> extract_route_changes(TreeMap trees, std::span<const Update> updates,
                                               std::int64_t slack_secs) {
  ChangeExtractor extractor(std::move(trees), slack_secs);
  std::vector<RouteChange> out;
  for (const auto& u : updates) {
    if (auto c = extractor.apply(u)) out.push_back(std::move(*c));
  }
  return out;
}

nlohmann::ordered_json route_change_to_json(const RouteChange& c) {
  nlohmann::ordered_json j;
  j["ts"] = c.timestamp;
  j["vantage"] = c.vantage;
  j["prefix"] = c.announced_prefix.to_string();
  j["matched_prefix"] = c.matched_prefix.to_string();
  j["hist_path"] = path_to_json(c.historical_path);
  j["upd_path"] = path_to_json(c.updated_path);
  return j;
}

RouteChange route_change_from_json(const nlohmann::json& j) {
  try {
    return RouteChange{j.at("ts").get<std::int64_t>(),
                       j.at("vantage").get<Asn>(),
                       Prefix::parse(j.at("prefix").get<std::string>()),
                       Prefix::parse(j.at("matched_prefix").get<std::string>()),
                       path_from_json(j.at("hist_path")),
                       path_from_json(j.at("upd_path"))};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("route change record: ") + e.what());
  }
}

}  // namespace pathsentry
