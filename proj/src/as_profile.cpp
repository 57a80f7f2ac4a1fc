#include "pathsentry/as_profile.hpp"

#include <algorithm>
#include <istream>
#include <utility>

#include "pathsentry/shipped_data.hpp"
#include "pathsentry/errors.hpp"
#include "text_util.hpp"

namespace pathsentry {

namespace {

struct Template {
  std::string version;
  std::string stable;
  std::string neighbors;
  std::string neighbor;
  std::string more;
};

Template parse_template(std::string_view text) {
  Template t;
  std::string* current = nullptr;
  for (auto line : detail::split(text, '\n')) {
    if (line.starts_with("@@")) {
      auto name = detail::trim(line.substr(2));
      if (name == "version") current = &t.version;
      else if (name == "stable") current = &t.stable;
      else if (name == "neighbors") current = &t.neighbors;
      else if (name == "neighbor") current = &t.neighbor;
      else if (name == "more") current = &t.more;
      else current = nullptr;
      continue;
    }
    if (!current) continue;
    if (!current->empty()) *current += '\n';
    *current += line;
  }
  for (auto* s : {&t.version, &t.stable, &t.neighbors, &t.neighbor, &t.more}) {
    while (!s->empty() && (s->back() == '\n' || s->back() == '\r')) s->pop_back();
  }
  t.version = std::string(detail::trim(t.version));
  return t;
}

const Template& shipped_template() {
  static const Template t = parse_template(generated::kDescriptionTemplate);
  return t;
}

using Fields = std::vector<std::pair<std::string_view, std::string>>;

std::string fill(std::string_view pattern, const Fields& fields) {
  std::string out;
  out.reserve(pattern.size() + 64);
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (pattern[i] == '{') {
      auto close = pattern.find('}', i);
      if (close != std::string_view::npos) {
        auto name = pattern.substr(i + 1, close - i - 1);
        auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.first == name; });
        if (it != fields.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += pattern[i++];
  }
  return out;
}

std::string or_unknown(const std::optional<std::string>& v) {
  return v && !v->empty() ? *v : std::string("unknown");
}

std::string or_unknown(const std::optional<std::uint64_t>& v) { return v ? std::to_string(*v) : "unknown"; }

std::optional<std::string> opt_string(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw DataError(std::string(key) + " must be a string");
  return it->get<std::string>();
}

std::optional<std::uint64_t> opt_count(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_unsigned()) throw DataError(std::string(key) + " must be a non-negative integer");
  return it->get<std::uint64_t>();
}

std::vector<PromptSegment> render_with_batch(Asn asn, const AsGraph& graph, const AsMetadata& meta,
                                             std::size_t batch) {
  const auto& tmpl = shipped_template();
  auto counts = graph.counts(asn);
  Fields base = {
      {"asn", std::to_string(asn)},
      {"orgName", or_unknown(meta.org_name)},
      {"country", or_unknown(meta.country)},
      {"provider", std::to_string(counts.providers)},
      {"peer", std::to_string(counts.peers)},
      {"customer", std::to_string(counts.customers)},
      {"total", std::to_string(counts.total())},
      {"numberAsns", or_unknown(meta.number_asns)},
      {"numberPrefixes", or_unknown(meta.number_prefixes)},
      {"numberAddresses", or_unknown(meta.number_addresses)},
      {"announcingPrefixes", or_unknown(meta.announcing_prefixes)},
      {"announcingAddresses", or_unknown(meta.announcing_addresses)},
  };
  const std::string stable = fill(tmpl.stable, base);
  const auto neighbors = ordered_neighbors(asn, graph);
  const std::size_t total = neighbors.empty() ? 1 : (neighbors.size() + batch - 1) / batch;

  std::vector<PromptSegment> out;
  out.reserve(total);
  for (std::size_t s = 0; s < total; ++s) {
    std::string text = stable;
    if (!neighbors.empty()) {
      text += '\n';
      text += fill(tmpl.neighbors, base);
      std::size_t begin = s * batch;
      std::size_t end = std::min(neighbors.size(), begin + batch);
      for (std::size_t k = begin; k < end; ++k) {
        auto nc = graph.counts(neighbors[k].asn);
        Fields f = base;
        f.emplace_back("neighbor", std::to_string(neighbors[k].asn));
        f.emplace_back("relationship", role_name(neighbors[k].role));
        f.emplace_back("n_providers", std::to_string(nc.providers));
        f.emplace_back("n_peers", std::to_string(nc.peers));
        f.emplace_back("n_customers", std::to_string(nc.customers));
        text += '\n';
        text += fill(tmpl.neighbor, f);
      }
      if (s + 1 < total) {
        Fields f = base;
        f.emplace_back("remaining", std::to_string(neighbors.size() - end));
        text += '\n';
        text += fill(tmpl.more, f);
      }
    }
    out.push_back({asn, s + 1, total, std::move(text), tmpl.version});
  }
  return out;
}

}  // namespace

MetadataMap read_metadata(std::istream& in, ParseStats& stats) {
  MetadataMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_skippable(line)) continue;
    ++stats.lines;
    try {
      auto j = nlohmann::json::parse(line);
      if (!j.contains("asn") || !j["asn"].is_number_unsigned()) throw DataError("missing asn");
      AsMetadata m;
      m.asn = j["asn"].get<Asn>();
      m.org_name = opt_string(j, "orgName");
      m.country = opt_string(j, "country");
      m.number_asns = opt_count(j, "numberAsns");
      m.number_prefixes = opt_count(j, "numberPrefixes");
      m.number_addresses = opt_count(j, "numberAddresses");
      m.announcing_prefixes = opt_count(j, "announcingPrefixes");
      m.announcing_addresses = opt_count(j, "announcingAddresses");
      out[m.asn] = std::move(m);
      ++stats.records;
    } catch (const std::exception& e) {
      ++stats.skipped;
      stats.add_error("metadata line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

nlohmann::ordered_json metadata_to_json(const AsMetadata& m) {
  nlohmann::ordered_json j;
  j["asn"] = m.asn;
  if (m.org_name) j["orgName"] = *m.org_name;
  if (m.country) j["country"] = *m.country;
  if (m.number_asns) j["numberAsns"] = *m.number_asns;
  if (m.number_prefixes) j["numberPrefixes"] = *m.number_prefixes;
  if (m.number_addresses) j["numberAddresses"] = *m.number_addresses;
  if (m.announcing_prefixes) j["announcingPrefixes"] = *m.announcing_prefixes;
  if (m.announcing_addresses) j["announcingAddresses"] = *m.announcing_addresses;
  return j;
}

OrgMap org_map_from_metadata(const MetadataMap& meta) {
  std::map<Asn, std::string> out;
  for (const auto& [asn, m] : meta) {
    if (m.org_name && !m.org_name->empty()) out[asn] = *m.org_name;
  }
  return out;
}

const std::string& template_version() { return shipped_template().version; }

std::size_t char_length(const std::string& utf8) {
  return static_cast<std::size_t>(
      std::count_if(utf8.begin(), utf8.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::vector<Neighbor> ordered_neighbors(Asn asn, const AsGraph& graph) {
  auto list = graph.neighbors(asn);
  std::vector<std::pair<std::size_t, Neighbor>> keyed;
  keyed.reserve(list.size());
  for (const auto& n : list) keyed.emplace_back(graph.counts(n.asn).total(), n);
  std::sort(keyed.begin(), keyed.end(), [](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second.asn < y.second.asn;
  });
  std::vector<Neighbor> out;
  out.reserve(keyed.size());
  for (const auto& [_, n] : keyed) out.push_back(n);
  return out;
}

std::vector<PromptSegment> render_description(Asn asn, const AsGraph& graph, const AsMetadata& meta,
                                              const DescribeOptions& options) {
  if (options.neighbor_batch_size == 0) throw ConfigError("neighbor_batch_size must be positive");
  std::size_t batch = options.neighbor_batch_size;
  while (true) {
    auto segments = render_with_batch(asn, graph, meta, batch);
    auto longest = std::max_element(segments.begin(), segments.end(), [](const auto& x, const auto& y) {
      return char_length(x.text) < char_length(y.text);
    });
    if (char_length(longest->text) <= options.max_chars) return segments;
    if (!options.auto_size || batch == 1) {
      throw DataError("description segment for AS" + std::to_string(asn) + " has " +
                      std::to_string(char_length(longest->text)) + " characters, limit is " +
                      std::to_string(options.max_chars));
    }
    batch = std::max<std::size_t>(1, batch / 2);
  }
}

nlohmann::ordered_json segment_to_json(const PromptSegment& seg) {
  nlohmann::ordered_json j;
  j["asn"] = seg.asn;
  j["index"] = seg.index;
  j["total"] = seg.total;
  j["text"] = seg.text;
  j["template_version"] = seg.template_version;
  return j;
}

PromptSegment segment_from_json(const nlohmann::json& j) {
  try {
    return {j.at("asn").get<Asn>(), j.at("index").get<std::size_t>(), j.at("total").get<std::size_t>(),
            j.at("text").get<std::string>(), j.value("template_version", std::string())};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("segment record: ") + e.what());
  }
}

}  // namespace pathsentry
