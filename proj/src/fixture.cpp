#include "pathsentry/fixture.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "pathsentry/errors.hpp"
#include "random_util.hpp"

namespace pathsentry {

namespace {

enum Cls : std::uint8_t { kOrigin = 0, kCustomer = 1, kPeer = 2, kProvider = 3, kNone = 255 };

struct Route {
  std::uint8_t cls = kNone;
  std::vector<Asn> path;  // path.front() is the holder

  bool operator==(const Route&) const = default;
};

struct Seed {
  std::size_t at = 0;
  std::vector<Asn> path;
};

std::uint64_t pair_key(Asn x, Asn y) {
  if (x > y) std::swap(x, y);
  return (std::uint64_t{x} << 32) | y;
}

struct Leak {
  bool active = false;
  Asn leaker = 0;
  Asn from = 0;  // provider whose routes are leaked
  Asn to = 0;    // provider receiving them
};

class Simulator {
 public:
  Simulator(const std::vector<Asn>& asns, const std::vector<int>& tier, const AsGraph& graph) : asns_(asns) {
    for (std::size_t i = 0; i < asns_.size(); ++i) index_[asns_[i]] = i;
    adj_.resize(asns_.size());
    for (std::size_t i = 0; i < asns_.size(); ++i) {
      for (const auto& nb : graph.neighbors(asns_[i])) adj_[i].push_back({index_.at(nb.asn), nb.role});
    }
    up_order_.resize(asns_.size());
    for (std::size_t i = 0; i < asns_.size(); ++i) up_order_[i] = i;
    std::stable_sort(up_order_.begin(), up_order_.end(), [&](std::size_t a, std::size_t b) { return tier[a] > tier[b]; });
    down_order_.assign(up_order_.rbegin(), up_order_.rend());
  }

  std::size_t index(Asn asn) const { return index_.at(asn); }

  void set_link(Asn a, Asn b, bool is_up) {
    if (is_up) {
      down_.erase(pair_key(a, b));
    } else {
      down_.insert(pair_key(a, b));
    }
  }
  bool link_up(Asn a, Asn b) const { return down_.count(pair_key(a, b)) == 0; }
  Leak& leak() { return leak_; }

  // Stable routing state for one prefix under Gao-Rexford export rules.
  std::vector<Route> solve(const std::vector<Seed>& seeds) const {
    std::vector<Route> routes(asns_.size());
    std::vector<const Seed*> seed_of(asns_.size(), nullptr);
    for (const auto& s : seeds) {
      seed_of[s.at] = &s;
      routes[s.at] = Route{kOrigin, s.path};
    }
    for (int sweep = 0; sweep < 64; ++sweep) {
      bool changed = false;
      const auto& order = sweep % 2 == 0 ? up_order_ : down_order_;
      for (std::size_t v : order) {
        if (seed_of[v]) continue;
        const Route* best_from = nullptr;
        std::uint8_t best_cls = kNone;
        std::size_t best_len = 0;
        Asn best_next = 0;
        for (const auto& [u, role] : adj_[v]) {
          const Route& ru = routes[u];
          if (ru.cls == kNone || !link_up(asns_[u], asns_[v])) continue;
          // role is u as seen from v; u exports to v if the route came from a
          // customer (or is u's own), if v is u's customer, or through the leak.
          const bool v_is_customer = role == Role::kProvider;
          const bool leaked = leak_.active && asns_[u] == leak_.leaker && asns_[v] == leak_.to &&
                              ru.path.size() > 1 && ru.path[1] == leak_.from;
          if (!(ru.cls <= kCustomer || v_is_customer || leaked)) continue;
          if (std::find(ru.path.begin(), ru.path.end(), asns_[v]) != ru.path.end()) continue;
          const std::uint8_t cls = role == Role::kCustomer ? kCustomer : role == Role::kPeer ? kPeer : kProvider;
          const std::size_t len = ru.path.size() + 1;
          if (!best_from || std::tie(cls, len, asns_[u]) < std::tie(best_cls, best_len, best_next)) {
            best_from = &ru;
            best_cls = cls;
            best_len = len;
            best_next = asns_[u];
          }
        }
        Route next;
        if (best_from) {
          next.cls = best_cls;
          next.path.reserve(best_len);
          next.path.push_back(asns_[v]);
          next.path.insert(next.path.end(), best_from->path.begin(), best_from->path.end());
        }
        if (!(next == routes[v])) {
          routes[v] = std::move(next);
          changed = true;
        }
      }
      if (!changed) return routes;
    }
    throw DataError("route simulation did not converge");
  }

 private:
  std::vector<Asn> asns_;
  std::unordered_map<Asn, std::size_t> index_;
  std::vector<std::vector<std::pair<std::size_t, Role>>> adj_;
  std::vector<std::size_t> up_order_;
  std::vector<std::size_t> down_order_;
  std::set<std::uint64_t> down_;
  Leak leak_;
};

Prefix v4_prefix(std::uint32_t addr, int len) {
  std::array<std::uint8_t, 16> b{};
  b[0] = static_cast<std::uint8_t>(addr >> 24);
  b[1] = static_cast<std::uint8_t>(addr >> 16);
  b[2] = static_cast<std::uint8_t>(addr >> 8);
  b[3] = static_cast<std::uint8_t>(addr);
  return Prefix(Family::kV4, b, len);
}

Prefix v6_prefix(std::uint32_t block) {
  std::array<std::uint8_t, 16> b{0x20, 0x01, 0x0d, 0xb8};
  b[4] = static_cast<std::uint8_t>(block >> 8);
  b[5] = static_cast<std::uint8_t>(block);
  return Prefix(Family::kV6, b, 48);
}

std::uint64_t address_count(const Prefix& p) {
  return p.family() == Family::kV4 ? (std::uint64_t{1} << (32 - p.length())) : 0;
}

struct Topology {
  std::vector<Asn> asns;
  std::vector<int> tier;  // 1, 2 or 3 (stub)
  std::vector<int> region;
  std::vector<Asn> tier1;
  std::vector<std::vector<Asn>> tier2;  // per region
  std::vector<std::vector<Asn>> stubs;  // per region
  std::vector<RelEdge> edges;
  std::map<Prefix, Asn> origin;
  std::map<Asn, std::vector<Prefix>> owned;
};

Topology build_topology(const FixtureOptions& o, detail::Rng& rng) {
  Topology t;
  auto add = [&](Asn asn, int tier, int region) {
    t.asns.push_back(asn);
    t.tier.push_back(tier);
    t.region.push_back(region);
  };
  for (std::size_t i = 0; i < o.tier1; ++i) {
    t.tier1.push_back(static_cast<Asn>(1000 + i));
    add(t.tier1.back(), 1, -1);
  }
  t.tier2.resize(o.regions);
  t.stubs.resize(o.regions);
  for (std::size_t r = 0; r < o.regions; ++r) {
    for (std::size_t j = 0; j < o.tier2_per_region; ++j) {
      t.tier2[r].push_back(static_cast<Asn>(10000 + 100 * r + j));
      add(t.tier2[r].back(), 2, static_cast<int>(r));
    }
  }
  for (std::size_t r = 0; r < o.regions; ++r) {
    for (std::size_t j = 0; j < o.stubs_per_region; ++j) {
      t.stubs[r].push_back(static_cast<Asn>(20000 + 1000 * r + j));
      add(t.stubs[r].back(), 3, static_cast<int>(r));
    }
  }

  auto two_of = [&](const std::vector<Asn>& pool) {
    Asn a = pool[detail::uniform_index(rng, pool.size())];
    Asn b = a;
    while (b == a) b = pool[detail::uniform_index(rng, pool.size())];
    return std::pair{a, b};
  };
  for (std::size_t i = 0; i < t.tier1.size(); ++i) {
    for (std::size_t j = i + 1; j < t.tier1.size(); ++j) t.edges.push_back({t.tier1[i], t.tier1[j], Rel::kP2P});
  }
  for (std::size_t r = 0; r < o.regions; ++r) {
    for (Asn c : t.tier2[r]) {
      auto [p1, p2] = two_of(t.tier1);
      t.edges.push_back({p1, c, Rel::kP2C});
      t.edges.push_back({p2, c, Rel::kP2C});
    }
    for (std::size_t i = 0; i < t.tier2[r].size(); ++i) {
      for (std::size_t j = i + 1; j < t.tier2[r].size(); ++j) {
        t.edges.push_back({t.tier2[r][i], t.tier2[r][j], Rel::kP2P});
      }
    }
    for (Asn s : t.stubs[r]) {
      auto [p1, p2] = two_of(t.tier2[r]);
      t.edges.push_back({p1, s, Rel::kP2C});
      t.edges.push_back({p2, s, Rel::kP2C});
    }
  }

  // Exchange-point peering between tier-2s of different regions.
  std::vector<std::pair<Asn, std::size_t>> all_tier2;  // (asn, region)
  for (std::size_t r = 0; r < o.regions; ++r) {
    for (Asn a : t.tier2[r]) all_tier2.emplace_back(a, r);
  }
  std::set<std::pair<Asn, Asn>> exchange;
  for (const auto& [a, ra] : all_tier2) {
    for (std::size_t k = 0; k < o.exchange_peers / 2; ++k) {
      const auto& [b, rb] = all_tier2[detail::uniform_index(rng, all_tier2.size())];
      if (ra == rb || !exchange.insert({std::min(a, b), std::max(a, b)}).second) continue;
      t.edges.push_back({std::min(a, b), std::max(a, b), Rel::kP2P});
    }
  }

  std::uint32_t block = 0;
  for (std::size_t r = 0; r < o.regions; ++r) {
    for (Asn s : t.stubs[r]) {
      const std::uint32_t base = (44u << 24) + block * 1024u;
      Prefix p = detail::uniform01(rng) < 0.7 ? v4_prefix(base, 22) : v4_prefix(base, 24);
      t.origin[p] = s;
      t.owned[s].push_back(p);
      if (detail::uniform01(rng) < 0.4) {
        Prefix p6 = v6_prefix(block);
        t.origin[p6] = s;
        t.owned[s].push_back(p6);
      }
      ++block;
    }
  }
  return t;
}

MetadataMap build_metadata(const Topology& t, const AsGraph& graph) {
  static const char* kCountries[] = {"DE", "FR", "JP", "BR", "AU", "IN", "ZA", "CA", "GB", "SG", "MX", "KR"};
  MetadataMap out;
  for (std::size_t i = 0; i < t.asns.size(); ++i) {
    const Asn asn = t.asns[i];
    std::set<Asn> cone{asn};
    std::vector<Asn> stack{asn};
    while (!stack.empty()) {
      Asn x = stack.back();
      stack.pop_back();
      for (const auto& nb : graph.neighbors(x)) {
        if (nb.role == Role::kCustomer && cone.insert(nb.asn).second) stack.push_back(nb.asn);
      }
    }
    std::uint64_t cone_prefixes = 0;
    std::uint64_t cone_addresses = 0;
    for (Asn c : cone) {
      if (auto it = t.owned.find(c); it != t.owned.end()) {
        cone_prefixes += it->second.size();
        for (const auto& p : it->second) cone_addresses += address_count(p);
      }
    }
    AsMetadata m;
    m.asn = asn;
    if (t.tier[i] == 1) {
      m.org_name = "Backbone Carrier Inc";
      m.country = "US";
    } else if (t.tier[i] == 2) {
      m.org_name = "Region " + std::to_string(t.region[i] + 1) + " Telecom";
      m.country = kCountries[static_cast<std::size_t>(t.region[i]) % std::size(kCountries)];
    } else {
      m.org_name = "Customer Network " + std::to_string(asn);
      m.country = kCountries[static_cast<std::size_t>(t.region[i]) % std::size(kCountries)];
    }
    m.number_asns = cone.size();
    m.number_prefixes = cone_prefixes;
    m.number_addresses = cone_addresses;
    std::uint64_t own = 0;
    std::uint64_t own_addresses = 0;
    if (auto it = t.owned.find(asn); it != t.owned.end()) {
      own = it->second.size();
      for (const auto& p : it->second) own_addresses += address_count(p);
    }
    m.announcing_prefixes = own;
    m.announcing_addresses = own_addresses;
    out[asn] = m;
  }
  return out;
}

struct Action {
  enum Kind { kLinkDown, kLinkUp, kHijackStart, kHijackEnd, kLeakStart, kLeakEnd, kForgeStart, kForgeEnd };
  std::int64_t ts = 0;
  Kind kind = kLinkDown;
  Asn a = 0;  // provider end of a flapped link
  Asn b = 0;  // customer end
  std::size_t event = 0;
};

using VantageRoutes = std::vector<std::optional<std::vector<Asn>>>;

AsPath to_path(const std::vector<Asn>& asns) {
  AsPath p;
  for (Asn a : asns) p.elements.push_back(PathElement::single(a));
  return p;
}

class Scenario {
 public:
  Scenario(const Topology& topo, const AsGraph& graph) : topo_(topo), graph_(graph), sim_(topo.asns, topo.tier, graph) {
    for (Asn v : topo.tier1) vantage_index_.push_back(sim_.index(v));
    for (const auto& [p, origin] : topo.origin) prefixes_[p] = {Seed{sim_.index(origin), {origin}}};
  }

  const std::map<Prefix, VantageRoutes>& tables() const { return tables_; }

  void initialize() {
    for (const auto& [p, seeds] : prefixes_) tables_[p] = vantage_routes(seeds);
  }

  // Customer cone of `asn` in the unperturbed graph.
  std::vector<Prefix> cone_prefixes(Asn asn) const {
    std::set<Asn> cone{asn};
    std::vector<Asn> stack{asn};
    while (!stack.empty()) {
      Asn x = stack.back();
      stack.pop_back();
      for (const auto& nb : graph_.neighbors(x)) {
        if (nb.role == Role::kCustomer && cone.insert(nb.asn).second) stack.push_back(nb.asn);
      }
    }
    std::vector<Prefix> out;
    for (Asn c : cone) {
      if (auto it = topo_.owned.find(c); it != topo_.owned.end()) out.insert(out.end(), it->second.begin(), it->second.end());
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  void run(std::vector<Action> actions, std::vector<InjectedEvent>& events, std::vector<Update>& updates,
           std::size_t& benign) {
    std::stable_sort(actions.begin(), actions.end(), [](const Action& x, const Action& y) { return x.ts < y.ts; });
    for (const auto& act : actions) {
      InjectedEvent* ev = act.kind >= Action::kHijackStart ? &events[act.event] : nullptr;
      switch (act.kind) {
        case Action::kLinkDown:
        case Action::kLinkUp:
          sim_.set_link(act.a, act.b, act.kind == Action::kLinkUp);
          benign += refresh(cone_prefixes(act.b), act.ts, updates, nullptr);
          break;
        case Action::kHijackStart:
        case Action::kForgeStart: {
          const Prefix& p = ev->prefixes.front();
          std::vector<Asn> announced{ev->culprit};
          if (act.kind == Action::kForgeStart) announced.push_back(ev->victim);
          prefixes_[p] = {Seed{sim_.index(ev->culprit), announced}};
          tables_[p] = VantageRoutes(vantage_index_.size());
          refresh({p}, act.ts, updates, nullptr);
          break;
        }
        case Action::kHijackEnd:
        case Action::kForgeEnd: {
          const Prefix& p = ev->prefixes.front();
          for (std::size_t v = 0; v < vantage_index_.size(); ++v) {
            if (tables_[p][v]) updates.push_back({act.ts, topo_.tier1[v], p, std::nullopt});
          }
          prefixes_.erase(p);
          tables_.erase(p);
          break;
        }
        case Action::kLeakStart:
        case Action::kLeakEnd: {
          auto& leak = sim_.leak();
          leak.active = act.kind == Action::kLeakStart;
          std::vector<Prefix> all;
          for (const auto& [p, _] : prefixes_) all.push_back(p);
          std::set<Prefix> changed;
          refresh(all, act.ts, updates, &changed);
          if (leak.active) ev->prefixes.assign(changed.begin(), changed.end());
          break;
        }
      }
    }
  }

  Leak& leak() { return sim_.leak(); }

 private:
  VantageRoutes vantage_routes(const std::vector<Seed>& seeds) const {
    auto routes = sim_.solve(seeds);
    VantageRoutes out(vantage_index_.size());
    for (std::size_t v = 0; v < vantage_index_.size(); ++v) {
      const auto& r = routes[vantage_index_[v]];
      if (r.cls != kNone) out[v] = r.path;
    }
    return out;
  }

  // Recomputes the prefixes and emits an update per changed vantage route.
  // Returns the number of announcements replacing an existing route.
  std::size_t refresh(const std::vector<Prefix>& prefixes, std::int64_t ts, std::vector<Update>& updates,
                      std::set<Prefix>* changed) {
    std::size_t replaced = 0;
    for (const auto& p : prefixes) {
      auto it = prefixes_.find(p);
      if (it == prefixes_.end()) continue;
      auto fresh = vantage_routes(it->second);
      auto& old = tables_[p];
      for (std::size_t v = 0; v < vantage_index_.size(); ++v) {
        if (fresh[v] == old[v]) continue;
        if (fresh[v]) {
          updates.push_back({ts, topo_.tier1[v], p, to_path(*fresh[v])});
          if (old[v]) ++replaced;
        } else {
          updates.push_back({ts, topo_.tier1[v], p, std::nullopt});
        }
        if (changed) changed->insert(p);
      }
      old = std::move(fresh);
    }
    return replaced;
  }

  const Topology& topo_;
  const AsGraph& graph_;
  Simulator sim_;
  std::vector<std::size_t> vantage_index_;
  std::map<Prefix, std::vector<Seed>> prefixes_;
  std::map<Prefix, VantageRoutes> tables_;
};

struct Plan {
  std::vector<InjectedEvent> events;
  std::vector<Action> actions;
  Leak leak;
};

Plan plan_injections(const Topology& t, const FixtureOptions& o, const AsGraph& graph, detail::Rng& rng) {
  Plan plan;
  auto hour_start = [&](double frac) {
    auto h = static_cast<std::int64_t>(frac * o.hours);
    return o.start + std::max<std::int64_t>(h, 2) * 3600 + 600;
  };
  auto pick_region = [&] { return detail::uniform_index(rng, t.stubs.size()); };
  auto pick_stub = [&](std::size_t r) { return t.stubs[r][detail::uniform_index(rng, t.stubs[r].size())]; };
  auto v4_of = [&](Asn stub) -> std::optional<Prefix> {
    for (const auto& p : t.owned.at(stub)) {
      if (p.family() == Family::kV4) return p;
    }
    return std::nullopt;
  };
  std::set<Asn> used;

  // Hijack: a more-specific /24 of the victim's /22.
  {
    std::size_t rv = pick_region();
    Asn victim = 0;
    Prefix covering;
    while (true) {
      victim = pick_stub(rv);
      auto p = v4_of(victim);
      if (p && p->length() == 22) {
        covering = *p;
        break;
      }
    }
    std::size_t rh = rv;
    while (rh == rv) rh = pick_region();
    Asn hijacker = pick_stub(rh);
    InjectedEvent ev{"hijack", hijacker, victim, hour_start(0.2), 0, {}, "OriginChange"};
    ev.end = ev.start + 1500;
    ev.prefixes.push_back(Prefix(Family::kV4, covering.bytes(), 24));
    used.insert({victim, hijacker});
    plan.actions.push_back({ev.start, Action::kHijackStart, 0, 0, plan.events.size()});
    plan.actions.push_back({ev.end, Action::kHijackEnd, 0, 0, plan.events.size()});
    plan.events.push_back(ev);
  }
  // Route leak: a stub re-exports routes from one provider to the other.
  {
    Asn leaker = 0;
    do {
      leaker = pick_stub(pick_region());
    } while (used.count(leaker));
    std::vector<Asn> providers;
    for (const auto& nb : graph.neighbors(leaker)) {
      if (nb.role == Role::kProvider) providers.push_back(nb.asn);
    }
    std::sort(providers.begin(), providers.end());
    plan.leak = Leak{false, leaker, providers.front(), providers.back()};
    InjectedEvent ev{"leak", leaker, providers.back(), hour_start(0.5), 0, {}, "RouteLeak"};
    ev.end = ev.start + 1500;
    used.insert(leaker);
    plan.actions.push_back({ev.start, Action::kLeakStart, 0, 0, plan.events.size()});
    plan.actions.push_back({ev.end, Action::kLeakEnd, 0, 0, plan.events.size()});
    plan.events.push_back(ev);
  }
  // Forged adjacency: an AS announces a more-specific of the victim's prefix
  // with a path claiming a direct link to the victim.
  {
    std::size_t rv = pick_region();
    Asn victim = 0;
    do {
      victim = pick_stub(rv);
    } while (used.count(victim) || !v4_of(victim) || v4_of(victim)->length() != 22);
    std::size_t rm = rv;
    while (rm == rv) rm = pick_region();
    Asn forger = 0;
    do {
      forger = pick_stub(rm);
    } while (used.count(forger));
    InjectedEvent ev{"forged-adjacency", forger, victim, hour_start(0.8), 0,
                     {Prefix(Family::kV4, v4_of(victim)->bytes(), 24)}, "PathManipulation"};
    ev.end = ev.start + 1500;
    plan.actions.push_back({ev.start, Action::kForgeStart, 0, 0, plan.events.size()});
    plan.actions.push_back({ev.end, Action::kForgeEnd, 0, 0, plan.events.size()});
    plan.events.push_back(ev);
  }
  return plan;
}

// Link flaps that stay clear of the injected intervals and never cut a
// customer off from all of its providers.
std::vector<Action> plan_flaps(const Topology& t, const FixtureOptions& o, const std::vector<InjectedEvent>& events,
                               std::size_t count, detail::Rng& rng) {
  std::vector<RelEdge> stub_links;
  std::vector<RelEdge> core_links;
  for (const auto& e : t.edges) {
    if (e.rel != Rel::kP2C) continue;
    (e.b >= 20000 ? stub_links : core_links).push_back(e);
  }
  const std::int64_t first = o.start + 60;
  const std::int64_t last = o.start + static_cast<std::int64_t>(o.hours) * 3600 - 60;
  std::map<Asn, std::vector<std::pair<std::int64_t, std::int64_t>>> busy;  // per customer: down intervals
  std::vector<Action> out;
  std::size_t attempts = 0;
  while (out.size() < 2 * count && attempts < 50 * count) {
    ++attempts;
    const auto& pool = detail::uniform01(rng) < 0.7 ? stub_links : core_links;
    const RelEdge& e = pool[detail::uniform_index(rng, pool.size())];
    const std::int64_t down = first + static_cast<std::int64_t>(detail::uniform_index(rng, static_cast<std::size_t>(last - first - 1900)));
    const std::int64_t up = down + 120 + static_cast<std::int64_t>(detail::uniform_index(rng, 1680));
    bool clash = false;
    for (const auto& ev : events) {
      if (down <= ev.end + 60 && up >= ev.start - 60) clash = true;
    }
    for (const auto& [s, f] : busy[e.b]) {
      if (down <= f + 1 && up >= s - 1) clash = true;
    }
    if (clash) continue;
    busy[e.b].push_back({down, up});
    out.push_back({down, Action::kLinkDown, e.a, e.b, 0});
    out.push_back({up, Action::kLinkUp, e.a, e.b, 0});
  }
  return out;
}

}  // namespace

Fixture generate_fixture(const FixtureOptions& options) {
  if (options.tier1 < 3 || options.regions < 2 || options.tier2_per_region < 2 || options.stubs_per_region < 2) {
    throw ConfigError("fixture topology is too small");
  }
  if (options.hours < 4) throw ConfigError("fixture needs at least four hours");
  detail::Rng rng(options.seed);
  Topology topo = build_topology(options, rng);
  AsGraph graph = AsGraph::build(topo.edges);

  Fixture fx;
  fx.edges = graph.edges();
  fx.metadata = build_metadata(topo, graph);
  fx.vantages = topo.tier1;
  for (const auto& [p, origin] : topo.origin) fx.roas.push_back({p, p.length(), origin});

  Plan plan = plan_injections(topo, options, graph, rng);
  detail::Rng flap_rng(options.seed ^ 0xf1a9ull);
  std::size_t flaps = options.min_benign_changes / 30 + 1;
  for (int round = 0; round < 8; ++round) {
    Scenario sc(topo, graph);
    sc.leak() = plan.leak;
    sc.initialize();
    if (round == 0) {
      for (const auto& [p, routes] : sc.tables()) {
        for (std::size_t v = 0; v < routes.size(); ++v) {
          if (routes[v]) fx.rib.push_back({topo.tier1[v], p, to_path(*routes[v])});
        }
      }
      std::stable_sort(fx.rib.begin(), fx.rib.end(), [](const RibEntry& a, const RibEntry& b) {
        return std::tie(a.vantage, a.prefix) < std::tie(b.vantage, b.prefix);
      });
    }
    detail::Rng r = flap_rng;
    auto actions = plan_flaps(topo, options, plan.events, flaps, r);
    actions.insert(actions.end(), plan.actions.begin(), plan.actions.end());
    std::vector<InjectedEvent> events = plan.events;
    std::vector<Update> updates;
    std::size_t benign = 0;
    sc.run(std::move(actions), events, updates, benign);
    spdlog::debug("fixture round {}: {} flaps, {} benign route replacements", round, flaps, benign);
    if (benign >= options.min_benign_changes || round == 7) {
      fx.updates = std::move(updates);
      fx.events = std::move(events);
      fx.benign_updates = benign;
      break;
    }
    const double scale = static_cast<double>(options.min_benign_changes) / std::max<std::size_t>(benign, 1);
    flaps = static_cast<std::size_t>(static_cast<double>(flaps) * scale * 1.1) + 1;
  }
  if (fx.benign_updates < options.min_benign_changes) {
    throw DataError("fixture could not reach the requested number of benign changes");
  }
  return fx;
}

nlohmann::ordered_json ground_truth_to_json(const std::vector<InjectedEvent>& events) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& e : events) {
    nlohmann::ordered_json j;
    j["kind"] = e.kind;
    j["culprit"] = e.culprit;
    j["victim"] = e.victim;
    j["start"] = e.start;
    j["end"] = e.end;
    j["expected_pattern"] = e.expected_pattern;
    auto& prefixes = j["prefixes"] = nlohmann::ordered_json::array();
    for (const auto& p : e.prefixes) prefixes.push_back(p.to_string());
    out.push_back(std::move(j));
  }
  return nlohmann::ordered_json{{"events", out}};
}

std::vector<InjectedEvent> ground_truth_from_json(const nlohmann::json& j) {
  std::vector<InjectedEvent> out;
  try {
    for (const auto& e : j.at("events")) {
      InjectedEvent ev;
      ev.kind = e.at("kind").get<std::string>();
      ev.culprit = e.at("culprit").get<Asn>();
      ev.victim = e.value("victim", Asn{0});
      ev.start = e.at("start").get<std::int64_t>();
      ev.end = e.at("end").get<std::int64_t>();
      ev.expected_pattern = e.value("expected_pattern", std::string());
      for (const auto& p : e.at("prefixes")) ev.prefixes.push_back(Prefix::parse(p.get<std::string>()));
      out.push_back(std::move(ev));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("ground truth: ") + e.what());
  }
  return out;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  return out;
}

}  // namespace

void write_fixture(const Fixture& fx, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "rib.tsv");
    write_rib(out, fx.rib);
  }
  {
    auto out = open_out(dir / "updates.tsv");
    write_updates(out, fx.updates);
  }
  {
    auto out = open_out(dir / "relationships.txt");
    out << "# provider|customer|-1 or peer|peer|0\n";
    write_relationships(out, fx.edges);
  }
  {
    auto out = open_out(dir / "metadata.jsonl");
    for (const auto& [asn, m] : fx.metadata) out << metadata_to_json(m).dump() << '\n';
  }
  {
    auto out = open_out(dir / "roas.csv");
    out << "prefix,max_length,asn\n";
    for (const auto& r : fx.roas) out << r.prefix.to_string() << ',' << r.max_length << ',' << r.asn << '\n';
  }
  {
    auto out = open_out(dir / "ground_truth.json");
    out << ground_truth_to_json(fx.events).dump(2) << '\n';
  }
  {
    nlohmann::ordered_json run;
    run["rib"] = "rib.tsv";
    run["updates"] = "updates.tsv";
    run["relationships"] = "relationships.txt";
    run["metadata"] = "metadata.jsonl";
    run["roa"] = "roas.csv";
    run["work_dir"] = "work";
    run["window_secs"] = 3600;
    run["neighbor_batch_size"] = 2;
    run["reduced_dim"] = 16;
    run["provider"] = "mock";
    run["mock_dim"] = 64;
    run["seed"] = 1;
    run["train_cdr"] = true;
    auto out = open_out(dir / "run.json");
    out << run.dump(2) << '\n';
  }
}

Evaluation evaluate_report(const nlohmann::json& report, const std::vector<InjectedEvent>& truth,
                           std::int64_t slack) {
  Evaluation ev;
  ev.injected = truth.size();
  ev.per_event.assign(truth.size(), false);
  const auto& events = report.at("events");
  ev.reported = events.size();
  for (const auto& r : events) {
    const auto start = r.at("start").get<std::int64_t>();
    const auto end = r.at("end").get<std::int64_t>();
    std::set<Prefix> prefixes;
    for (const auto& p : r.at("prefixes")) prefixes.insert(Prefix::parse(p.get<std::string>()));
    std::set<Asn> responsible;
    for (const auto& a : r.at("responsible_ases")) responsible.insert(a.get<Asn>());
    const bool clean = r.at("attribution").get<std::string>() == "intersection";

    bool matched = false;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const auto& t = truth[i];
      if (start > t.end + slack || end < t.start - slack) continue;
      bool shared = false;
      for (const auto& p : t.prefixes) shared = shared || prefixes.count(p) > 0;
      if (!shared) continue;
      matched = true;
      if (clean && responsible.count(t.culprit)) ev.per_event[i] = true;
    }
    if (!matched) ++ev.false_events;
  }
  for (bool d : ev.per_event) ev.detected += d;
  return ev;
}

}  // namespace pathsentry
