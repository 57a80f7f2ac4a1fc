#include "pathsentry/aggregator.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <sstream>

#include "pathsentry/errors.hpp"
#include "pathsentry/shipped_data.hpp"
#include "text_util.hpp"

namespace pathsentry {

namespace {

std::optional<Asn> origin_of(const AsPath& path) {
  if (path.empty() || !path.elements.back().is_single()) return std::nullopt;
  return path.elements.back().front();
}

std::set<Asn> members_of(const AsPath& path) {
  std::set<Asn> out;
  for (const auto& e : path.elements) out.insert(e.members.begin(), e.members.end());
  return out;
}

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

bool intersects(const std::set<Asn>& a, const std::set<Asn>& b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i == *j) return true;
    if (*i < *j) {
      ++i;
    } else {
      ++j;
    }
  }
  return false;
}

std::set<Asn> intersection(const std::set<Asn>& a, const std::set<Asn>& b) {
  std::set<Asn> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  return out;
}

}  // namespace

double knee_point(std::span<const double> curve) {
  if (curve.size() < 3) return 0.0;
  std::size_t best = 1;
  double best_value = curve[0] - 2 * curve[1] + curve[2];
  for (std::size_t i = 2; i + 1 < curve.size(); ++i) {
    double v = curve[i - 1] - 2 * curve[i] + curve[i + 1];
    if (v > best_value) {
      best_value = v;
      best = i;
    }
  }
  return curve[best];
}

CandidateMode parse_candidate_mode(const std::string& name) {
  if (name == "union") return CandidateMode::kUnion;
  if (name == "intersection") return CandidateMode::kIntersection;
  throw ConfigError("unknown candidate mode '" + name + "' (expected union or intersection)");
}

std::set<Asn> change_candidates(const RouteChange& change, CandidateMode mode) {
  auto hist = members_of(change.historical_path);
  auto upd = members_of(change.updated_path);
  std::set<Asn> out;
  if (mode == CandidateMode::kUnion) {
    out = std::move(hist);
    out.insert(upd.begin(), upd.end());
  } else {
    out = intersection(hist, upd);
  }
  out.erase(change.vantage);
  return out;
}

std::vector<PrefixEvent> build_prefix_events(std::span<const ScoredChange> scored, std::int64_t w,
                                             CandidateMode mode) {
  if (w <= 0) throw ConfigError("window width must be positive");
  std::map<Prefix, std::map<std::int64_t, std::vector<const ScoredChange*>>> grouped;
  for (const auto& s : scored) {
    if (s.flagged) grouped[s.change.announced_prefix][window_index(s.change.timestamp, w)].push_back(&s);
  }

  std::vector<PrefixEvent> events;
  for (auto& [prefix, windows] : grouped) {
    std::vector<std::size_t> counts;
    for (const auto& [k, list] : windows) {
      std::set<Asn> vantages;
      for (const auto* s : list) vantages.insert(s->change.vantage);
      counts.push_back(vantages.size());
    }
    std::vector<double> curve(counts.begin(), counts.end());
    std::sort(curve.begin(), curve.end(), std::greater<>());
    const double theta = knee_point(curve);

    std::optional<std::int64_t> last_kept;
    std::size_t w_index = 0;
    for (auto& [k, list] : windows) {
      const bool keep = static_cast<double>(counts[w_index++]) > theta;
      if (!keep) continue;
      if (!last_kept || *last_kept != k - 1) {
        PrefixEvent e;
        e.prefix = prefix;
        e.vp_count_curve = counts;
        e.vp_threshold = theta;
        events.push_back(std::move(e));
      }
      auto& e = events.back();
      std::stable_sort(list.begin(), list.end(), [](const ScoredChange* a, const ScoredChange* b) {
        return a->change.timestamp < b->change.timestamp;
      });
      for (const auto* s : list) e.changes.push_back(*s);
      last_kept = k;
    }
  }

  for (auto& e : events) {
    e.start = e.changes.front().change.timestamp;
    e.end = e.changes.back().change.timestamp;
    e.candidate_ases = change_candidates(e.changes.front().change, mode);
    for (std::size_t i = 1; i < e.changes.size(); ++i) {
      e.candidate_ases = intersection(e.candidate_ases, change_candidates(e.changes[i].change, mode));
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const PrefixEvent& a, const PrefixEvent& b) {
    return std::tie(a.start, a.prefix) < std::tie(b.start, b.prefix);
  });
  return events;
}

const char* attribution_name(Attribution a) {
  switch (a) {
    case Attribution::kIntersection:
      return "intersection";
    case Attribution::kAmbiguous:
      return "ambiguous";
    case Attribution::kUnattributed:
      return "unattributed";
  }
  return "?";
}

const char* pattern_name(Pattern p) {
  switch (p) {
    case Pattern::kOriginChange:
      return "OriginChange";
    case Pattern::kRouteLeak:
      return "RouteLeak";
    case Pattern::kPathManipulation:
      return "PathManipulation";
    case Pattern::kRoaMisconfig:
      return "RoaMisconfig";
    case Pattern::kWeakPathTampering:
      return "WeakPathTampering";
    case Pattern::kUnclassified:
      return "Unclassified";
  }
  return "?";
}

std::vector<AnomalyEvent> link_events(std::vector<PrefixEvent> prefix_events) {
  std::stable_sort(prefix_events.begin(), prefix_events.end(), [](const PrefixEvent& a, const PrefixEvent& b) {
    return std::tie(a.start, a.prefix) < std::tie(b.start, b.prefix);
  });
  const std::size_t n = prefix_events.size();
  UnionFind uf(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n && prefix_events[j].start <= prefix_events[i].end; ++j) {
      if (intersects(prefix_events[i].candidate_ases, prefix_events[j].candidate_ases)) uf.unite(i, j);
    }
  }

  // Roots are the smallest member index, so cluster order follows the first member.
  std::map<std::size_t, std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < n; ++i) clusters[uf.find(i)].push_back(i);

  std::vector<AnomalyEvent> out;
  for (auto& [root, idx] : clusters) {
    AnomalyEvent ev;
    ev.start = prefix_events[idx.front()].start;
    ev.end = prefix_events[idx.front()].end;
    std::set<Asn> inter = prefix_events[idx.front()].candidate_ases;
    std::set<Asn> uni;
    std::set<Prefix> prefixes;
    for (auto i : idx) {
      auto& pe = prefix_events[i];
      ev.start = std::min(ev.start, pe.start);
      ev.end = std::max(ev.end, pe.end);
      inter = intersection(inter, pe.candidate_ases);
      uni.insert(pe.candidate_ases.begin(), pe.candidate_ases.end());
      prefixes.insert(pe.prefix);
      ev.members.push_back(std::move(pe));
    }
    ev.prefixes.assign(prefixes.begin(), prefixes.end());
    if (!inter.empty()) {
      ev.responsible_ases = std::move(inter);
    } else if (!uni.empty()) {
      ev.responsible_ases = std::move(uni);
      ev.attribution = Attribution::kAmbiguous;
    } else {
      ev.attribution = Attribution::kUnattributed;
    }
    out.push_back(std::move(ev));
  }
  std::stable_sort(out.begin(), out.end(), [](const AnomalyEvent& a, const AnomalyEvent& b) {
    return std::tie(a.start, a.prefixes.front()) < std::tie(b.start, b.prefixes.front());
  });
  for (std::size_t i = 0; i < out.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "E%04zu", i + 1);
    out[i].event_id = id;
  }
  return out;
}

const char* roa_state_name(RoaState s) {
  switch (s) {
    case RoaState::kValid:
      return "valid";
    case RoaState::kInvalid:
      return "invalid";
    case RoaState::kNotFound:
      return "not-found";
  }
  return "?";
}

void RoaTable::add(const Roa& roa) {
  if (roa.max_length < roa.prefix.length() || roa.max_length > max_length(roa.prefix.family())) {
    throw DataError("ROA for " + roa.prefix.to_string() + " has invalid max length " + std::to_string(roa.max_length));
  }
  auto& tree = roa.prefix.family() == Family::kV4 ? v4_ : v6_;
  std::vector<Roa> list;
  if (const auto* existing = tree.find(roa.prefix)) list = *existing;
  list.push_back(roa);
  tree.insert(roa.prefix, std::move(list));
  ++count_;
}

RoaState RoaTable::validate(const Prefix& prefix, std::optional<Asn> origin) const {
  const auto& tree = prefix.family() == Family::kV4 ? v4_ : v6_;
  bool covered = false;
  bool valid = false;
  tree.for_each_cover(prefix, [&](const Prefix&, const std::vector<Roa>& list) {
    for (const auto& roa : list) {
      covered = true;
      if (origin && roa.asn != 0 && roa.asn == *origin && prefix.length() <= roa.max_length) valid = true;
    }
  });
  if (!covered) return RoaState::kNotFound;
  return valid ? RoaState::kValid : RoaState::kInvalid;
}

RoaTable read_roas(std::istream& in, ParseStats& stats) {
  RoaTable table;
  std::string line;
  while (std::getline(in, line)) {
    ++stats.lines;
    if (detail::is_skippable(line)) continue;
    auto fields = detail::split(detail::trim(line), ',');
    if (fields.size() == 3 && detail::trim(fields[0]) == "prefix") continue;
    try {
      if (fields.size() != 3) throw DataError("expected prefix,max_length,asn");
      auto asn_text = detail::trim(fields[2]);
      if (asn_text.size() > 2 && (asn_text.substr(0, 2) == "AS" || asn_text.substr(0, 2) == "as")) {
        asn_text.remove_prefix(2);
      }
      auto max_len = detail::parse_int<int>(detail::trim(fields[1]));
      auto asn = detail::parse_int<Asn>(asn_text);
      if (!max_len || !asn) throw DataError("bad max_length or asn");
      table.add({Prefix::parse(detail::trim(fields[0])), *max_len, *asn});
      ++stats.records;
    } catch (const DataError& e) {
      ++stats.skipped;
      stats.add_error("ROA line " + std::to_string(stats.lines) + ": " + e.what());
    }
  }
  return table;
}

void AsnRanges::add(Asn lo, Asn hi) {
  if (lo > hi) std::swap(lo, hi);
  ranges_.emplace_back(lo, hi);
  std::sort(ranges_.begin(), ranges_.end());
}

bool AsnRanges::contains(Asn asn) const {
  for (const auto& [lo, hi] : ranges_) {
    if (asn >= lo && asn <= hi) return true;
  }
  return false;
}

AsnRanges read_asn_ranges(std::istream& in, ParseStats& stats) {
  AsnRanges out;
  std::string line;
  while (std::getline(in, line)) {
    ++stats.lines;
    if (detail::is_skippable(line)) continue;
    auto parts = detail::split(detail::trim(line), '-');
    std::optional<Asn> lo = detail::parse_int<Asn>(detail::trim(parts[0]));
    std::optional<Asn> hi = parts.size() == 2 ? detail::parse_int<Asn>(detail::trim(parts[1])) : lo;
    if (parts.size() > 2 || !lo || !hi) {
      ++stats.skipped;
      stats.add_error("ASN range line " + std::to_string(stats.lines) + ": expected `n` or `lo-hi`");
      continue;
    }
    out.add(*lo, *hi);
    ++stats.records;
  }
  return out;
}

const AsnRanges& default_reserved_asns() {
  static const AsnRanges ranges = [] {
    std::istringstream in{std::string(generated::kReservedAsns)};
    ParseStats stats;
    return read_asn_ranges(in, stats);
  }();
  return ranges;
}

bool violates_valley_free(const AsPath& path, const AsGraph& graph) {
  bool descending = false;
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (!path[i - 1].is_single() || !path[i].is_single()) continue;
    auto role = graph.role_of(path[i - 1].front(), path[i].front());
    if (!role) continue;
    if (descending && (*role == Role::kProvider || *role == Role::kPeer)) return true;
    if (*role == Role::kCustomer || *role == Role::kPeer) descending = true;
  }
  return false;
}

namespace {

bool has_manipulation(const AsPath& path, const AsGraph& graph, const AsnRanges& reserved) {
  for (const auto& e : path.elements) {
    for (Asn a : e.members) {
      if (reserved.contains(a)) return true;
    }
  }
  for (std::size_t i = 1; i < path.size(); ++i) {
    if (!path[i - 1].is_single() || !path[i].is_single()) continue;
    if (!graph.role_of(path[i - 1].front(), path[i].front())) return true;
  }
  return false;
}

}  // namespace

void classify_event(AnomalyEvent& event, const ClassifyContext& ctx) {
  if (!ctx.graph || !ctx.reserved) throw ConfigError("classification needs a relationship graph and reserved ranges");
  std::set<Pattern> labels;
  std::set<std::string> notes;
  for (const auto& member : event.members) {
    for (const auto& s : member.changes) {
      const auto& c = s.change;
      const bool leak = violates_valley_free(c.historical_path, *ctx.graph) ||
                        violates_valley_free(c.updated_path, *ctx.graph);
      const bool manipulated = has_manipulation(c.historical_path, *ctx.graph, *ctx.reserved) ||
                               has_manipulation(c.updated_path, *ctx.graph, *ctx.reserved);
      if (leak) labels.insert(Pattern::kRouteLeak);
      if (manipulated) labels.insert(Pattern::kPathManipulation);

      const auto hist_origin = origin_of(c.historical_path);
      const auto upd_origin = origin_of(c.updated_path);
      std::optional<RoaState> upd_state;
      if (ctx.roas) upd_state = ctx.roas->validate(c.announced_prefix, upd_origin);

      if (manipulated && (!upd_state || *upd_state == RoaState::kNotFound)) {
        labels.insert(Pattern::kWeakPathTampering);
      }

      const bool origin_changed = hist_origin != upd_origin || c.announced_prefix != c.matched_prefix;
      if (!origin_changed) continue;
      if (!ctx.roas) {
        notes.insert("needs-RPKI");
        continue;
      }
      const auto hist_state = ctx.roas->validate(c.matched_prefix, hist_origin);
      if (hist_state == *upd_state) continue;
      const std::string* hist_org = nullptr;
      const std::string* upd_org = nullptr;
      if (ctx.orgs && hist_origin && upd_origin) {
        if (auto it = ctx.orgs->find(*hist_origin); it != ctx.orgs->end()) hist_org = &it->second;
        if (auto it = ctx.orgs->find(*upd_origin); it != ctx.orgs->end()) upd_org = &it->second;
      }
      if (!hist_org || !upd_org) {
        notes.insert("needs-org");
        continue;
      }
      labels.insert(*hist_org == *upd_org ? Pattern::kRoaMisconfig : Pattern::kOriginChange);
    }
  }
  if (labels.empty()) labels.insert(Pattern::kUnclassified);
  event.patterns.assign(labels.begin(), labels.end());
  event.notes.assign(notes.begin(), notes.end());
}

ScoreSummary summarize(const AnomalyEvent& event) {
  ScoreSummary out;
  std::set<Asn> vantages;
  double total = 0.0;
  for (const auto& m : event.members) {
    for (const auto& s : m.changes) {
      ++out.n_changes;
      vantages.insert(s.change.vantage);
      out.max_d_star = std::max(out.max_d_star, s.d_star);
      total += s.d_star;
    }
  }
  out.n_vantages = vantages.size();
  if (out.n_changes) out.mean_d_star = total / static_cast<double>(out.n_changes);
  return out;
}

nlohmann::ordered_json emit_report(const std::vector<AnomalyEvent>& events, const nlohmann::ordered_json& run) {
  std::vector<const AnomalyEvent*> order;
  for (const auto& e : events) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(), [](const AnomalyEvent* a, const AnomalyEvent* b) {
    return std::tie(a->start, a->event_id) < std::tie(b->start, b->event_id);
  });

  nlohmann::ordered_json report;
  report["run"] = run;
  report["events"] = nlohmann::ordered_json::array();
  for (const auto* e : order) {
    auto summary = summarize(*e);
    nlohmann::ordered_json j;
    j["event_id"] = e->event_id;
    auto& prefixes = j["prefixes"] = nlohmann::ordered_json::array();
    for (const auto& p : e->prefixes) prefixes.push_back(p.to_string());
    j["responsible_ases"] = std::vector<Asn>(e->responsible_ases.begin(), e->responsible_ases.end());
    j["attribution"] = attribution_name(e->attribution);
    j["start"] = e->start;
    j["end"] = e->end;
    auto& patterns = j["patterns"] = nlohmann::ordered_json::array();
    for (auto p : e->patterns) patterns.push_back(pattern_name(p));
    j["notes"] = e->notes;
    j["n_changes"] = summary.n_changes;
    j["n_prefix_events"] = e->members.size();
    j["n_vantages"] = summary.n_vantages;
    j["max_Dstar"] = summary.max_d_star;
    j["mean_Dstar"] = summary.mean_d_star;
    report["events"].push_back(std::move(j));
  }
  return report;
}

std::string render_report_text(const nlohmann::json& report) {
  std::ostringstream out;
  const auto& events = report.at("events");
  out << events.size() << " anomaly event(s)\n";
  for (const auto& e : events) {
    out << '\n' << e.at("event_id").get<std::string>() << "  [" << e.at("start").get<std::int64_t>() << ", "
        << e.at("end").get<std::int64_t>() << "]\n";
    out << "  patterns:    ";
    for (const auto& p : e.at("patterns")) out << p.get<std::string>() << ' ';
    out << "\n  responsible: ";
    for (const auto& a : e.at("responsible_ases")) out << "AS" << a.get<Asn>() << ' ';
    out << '(' << e.at("attribution").get<std::string>() << ")\n  prefixes:    ";
    const auto& prefixes = e.at("prefixes");
    for (std::size_t i = 0; i < prefixes.size() && i < 8; ++i) out << prefixes[i].get<std::string>() << ' ';
    if (prefixes.size() > 8) out << "... (" << prefixes.size() << " total)";
    out << "\n  changes:     " << e.at("n_changes").get<std::size_t>() << " from "
        << e.at("n_vantages").get<std::size_t>() << " vantage(s), max D* " << e.at("max_Dstar").get<double>()
        << '\n';
    if (!e.at("notes").empty()) {
      out << "  notes:       ";
      for (const auto& n : e.at("notes")) out << n.get<std::string>() << ' ';
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace pathsentry
