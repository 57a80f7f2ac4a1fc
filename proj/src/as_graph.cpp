#include "pathsentry/as_graph.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include <spdlog/spdlog.h>

#include "pathsentry/errors.hpp"
#include "random_util.hpp"
#include "text_util.hpp"

namespace pathsentry {

const char* role_name(Role r) {
  switch (r) {
    case Role::kProvider:
      return "provider";
    case Role::kPeer:
      return "peer";
    case Role::kCustomer:
      return "customer";
  }
  return "?";
}

AsGraph AsGraph::build(std::span<const RelEdge> edges, BuildStats* stats) {
  BuildStats local;
  AsGraph g;
  for (const auto& e : edges) {
    if (e.a == e.b) {
      ++local.self_loops;
      spdlog::warn("skipping self-loop relationship for AS{}", e.a);
      continue;
    }
    auto k = key(std::min(e.a, e.b), std::max(e.a, e.b));
    if (auto it = g.pairs_.find(k); it != g.pairs_.end()) {
      if (it->second == e || (e.rel == Rel::kP2P && it->second.rel == Rel::kP2P)) {
        ++local.duplicates;
      } else {
        ++local.conflicts;
        spdlog::warn("conflicting relationship AS{}-AS{}; keeping the first", e.a, e.b);
      }
      continue;
    }
    g.pairs_.emplace(k, e);
    if (e.rel == Rel::kP2P) {
      g.adjacency_[e.a].push_back({e.b, Role::kPeer});
      g.adjacency_[e.b].push_back({e.a, Role::kPeer});
    } else {
      g.adjacency_[e.a].push_back({e.b, Role::kCustomer});
      g.adjacency_[e.b].push_back({e.a, Role::kProvider});
    }
  }
  for (auto& [asn, list] : g.adjacency_) {
    std::sort(list.begin(), list.end(), [](const Neighbor& x, const Neighbor& y) { return x.asn < y.asn; });
  }
  if (stats) *stats = local;
  return g;
}

const std::vector<Neighbor>& AsGraph::neighbors(Asn asn) const {
  static const std::vector<Neighbor> kNone;
  auto it = adjacency_.find(asn);
  return it == adjacency_.end() ? kNone : it->second;
}

RelCounts AsGraph::counts(Asn asn) const {
  RelCounts c;
  for (const auto& n : neighbors(asn)) {
    switch (n.role) {
      case Role::kProvider:
        ++c.providers;
        break;
      case Role::kPeer:
        ++c.peers;
        break;
      case Role::kCustomer:
        ++c.customers;
        break;
    }
  }
  return c;
}

std::optional<Role> AsGraph::role_of(Asn self, Asn other) const {
  auto it = pairs_.find(key(std::min(self, other), std::max(self, other)));
  if (it == pairs_.end()) return std::nullopt;
  const auto& e = it->second;
  if (e.rel == Rel::kP2P) return Role::kPeer;
  return e.a == other ? Role::kProvider : Role::kCustomer;
}

std::vector<Asn> AsGraph::nodes() const {
  std::vector<Asn> out;
  out.reserve(adjacency_.size());
  for (const auto& [asn, _] : adjacency_) out.push_back(asn);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<RelEdge> AsGraph::edges() const {
  std::vector<RelEdge> out;
  out.reserve(pairs_.size());
  for (const auto& [_, e] : pairs_) {
    if (e.rel == Rel::kP2P) {
      out.push_back({std::min(e.a, e.b), std::max(e.a, e.b), Rel::kP2P});
    } else {
      out.push_back(e);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<RelEdge> read_relationships(std::istream& in, ParseStats& stats) {
  std::vector<RelEdge> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_skippable(line)) continue;
    ++stats.lines;
    auto f = detail::split(detail::trim(line), '|');
    auto a = f.size() >= 3 ? detail::parse_int<Asn>(f[0]) : std::nullopt;
    auto b = f.size() >= 3 ? detail::parse_int<Asn>(f[1]) : std::nullopt;
    auto r = f.size() >= 3 ? detail::parse_int<int>(f[2]) : std::nullopt;
    if (!a || !b || !r || (*r != 0 && *r != -1)) {
      ++stats.skipped;
      stats.add_error("relationship line " + std::to_string(lineno) + ": malformed '" + line + "'");
      continue;
    }
    out.push_back({*a, *b, *r == 0 ? Rel::kP2P : Rel::kP2C});
    ++stats.records;
  }
  return out;
}

void write_relationships(std::ostream& out, std::span<const RelEdge> edges) {
  for (const auto& e : edges) {
    out << e.a << '|' << e.b << '|' << (e.rel == Rel::kP2P ? "0" : "-1") << '\n';
  }
}

NoiseType parse_noise_type(const std::string& name) {
  if (name == "delete") return NoiseType::kDelete;
  if (name == "add") return NoiseType::kAdd;
  if (name == "flip") return NoiseType::kFlip;
  throw ConfigError("unknown noise type '" + name + "' (expected delete, add or flip)");
}

AsGraph perturb_graph(const AsGraph& graph, NoiseType noise, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("noise ratio must be within [0, 1]");
  auto edges = graph.edges();
  auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(edges.size())));
  detail::Rng rng(seed);

  switch (noise) {
    case NoiseType::kDelete: {
      detail::shuffle(edges, rng);
      edges.resize(edges.size() - count);
      break;
    }
    case NoiseType::kFlip: {
      std::vector<std::size_t> idx(edges.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      detail::shuffle(idx, rng);
      for (std::size_t k = 0; k < count; ++k) {
        auto& e = edges[idx[k]];
        if (e.rel == Rel::kP2C) {
          std::swap(e.a, e.b);
        } else {
          e.rel = Rel::kP2C;
          if (rng() & 1) std::swap(e.a, e.b);
        }
      }
      break;
    }
    case NoiseType::kAdd: {
      auto nodes = graph.nodes();
      if (nodes.size() < 2) break;
      std::set<std::pair<Asn, Asn>> present;
      for (const auto& e : edges) present.emplace(std::min(e.a, e.b), std::max(e.a, e.b));
      std::size_t added = 0;
      std::size_t attempts = 0;
      const std::size_t max_attempts = 100 * count + 1000;
      while (added < count && attempts++ < max_attempts) {
        Asn x = nodes[detail::uniform_index(rng, nodes.size())];
        Asn y = nodes[detail::uniform_index(rng, nodes.size())];
        if (x == y || !present.emplace(std::min(x, y), std::max(x, y)).second) continue;
        edges.push_back({x, y, (rng() & 1) ? Rel::kP2P : Rel::kP2C});
        ++added;
      }
      if (added < count) spdlog::warn("perturb add: only {} of {} edges could be added", added, count);
      break;
    }
  }
  std::sort(edges.begin(), edges.end());
  return AsGraph::build(edges);
}

}  // namespace pathsentry
