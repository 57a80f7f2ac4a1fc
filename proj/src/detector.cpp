#include "pathsentry/detector.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <thread>

namespace pathsentry {

namespace {

const Vector& lookup(Asn asn, const EmbeddingStore& store) {
  const Vector* v = store.find(asn);
  if (!v) throw UnresolvedAsn(asn);
  return *v;
}

double vector_distance(const Vector& x, const Vector& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - y[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

UnresolvedAsn::UnresolvedAsn(Asn asn)
    : DataError("no reduced embedding for AS" + std::to_string(asn)), asn_(asn) {}

AsPath clean_path(const AsPath& path) {
  if (path.empty()) throw DataError("cannot clean an empty AS path");
  AsPath out;
  for (const auto& e : path.elements) {
    if (out.elements.empty() || !(out.elements.back() == e)) out.elements.push_back(e);
  }
  return out;
}

double node_distance(const PathElement& a, const PathElement& b, const EmbeddingStore& store) {
  if (a == b) {
    // Identical elements, sets included, are the same hop. Resolve anyway so
    // a missing embedding is still reported.
    for (Asn x : a.members) lookup(x, store);
    return 0.0;
  }
  double best = 0.0;
  for (Asn x : a.members) {
    const Vector& vx = lookup(x, store);
    for (Asn y : b.members) {
      best = std::max(best, x == y ? 0.0 : vector_distance(vx, lookup(y, store)));
    }
  }
  return best;
}

double ar_dtw(const AsPath& s, const AsPath& t, const EmbeddingStore& store) {
  if (s.empty() || t.empty()) throw DataError("cannot align an empty AS path");
  if (!(s[0] == t[0])) {
    throw VantageMismatch("paths start at different vantage elements: " + format_as_path(s) + " vs " +
                          format_as_path(t));
  }
  const std::size_t n = s.size();
  const std::size_t m = t.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(m + 1, kInf);
  std::vector<double> cur(m + 1, kInf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = kInf;
    for (std::size_t j = 1; j <= m; ++j) {
      double best = std::min({prev[j], cur[j - 1], prev[j - 1]});
      cur[j] = node_distance(s[i - 1], t[j - 1], store) + best;
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double path_span(const AsPath& path, const EmbeddingStore& store) {
  double total = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) total += node_distance(path[i - 1], path[i], store);
  return total;
}

double normalize_score(double d, const AsPath& s, const AsPath& t, const EmbeddingStore& store) {
  if (d == 0.0) return 0.0;
  double denominator = path_span(s, store) + path_span(t, store);
  return d / std::max(denominator, kScoreEpsilon);
}

std::vector<ScoredChange> score_changes(std::span<const RouteChange> changes, const EmbeddingStore& store,
                                        std::size_t jobs, ScoreStats* stats) {
  enum class Outcome { kScored, kMismatch, kUnresolved };
  std::vector<std::optional<ScoredChange>> slots(changes.size());
  std::vector<Outcome> outcomes(changes.size(), Outcome::kScored);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < changes.size(); i = next++) {
      const auto& c = changes[i];
      try {
        AsPath s = clean_path(c.historical_path);
        AsPath t = clean_path(c.updated_path);
        double d = ar_dtw(s, t, store);
        slots[i] = ScoredChange{c, d, normalize_score(d, s, t, store), false, 0.0};
      } catch (const VantageMismatch&) {
        outcomes[i] = Outcome::kMismatch;
      } catch (const UnresolvedAsn&) {
        outcomes[i] = Outcome::kUnresolved;
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, changes.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  std::vector<ScoredChange> out;
  out.reserve(changes.size());
  ScoreStats local;
  for (std::size_t i = 0; i < changes.size(); ++i) {
    switch (outcomes[i]) {
      case Outcome::kScored:
        out.push_back(std::move(*slots[i]));
        ++local.scored;
        break;
      case Outcome::kMismatch:
        ++local.vantage_mismatch;
        break;
      case Outcome::kUnresolved:
        ++local.unresolved;
        break;
    }
  }
  if (stats) *stats = local;
  return out;
}

std::int64_t window_index(std::int64_t ts, std::int64_t w) {
  std::int64_t q = ts / w;
  return (ts % w != 0 && ts < 0) ? q - 1 : q;
}

std::vector<WindowStats> detect(std::vector<ScoredChange>& scored, std::int64_t w) {
  if (w <= 0) throw ConfigError("window width must be positive");
  for (std::size_t i = 1; i < scored.size(); ++i) {
    if (scored[i].change.timestamp < scored[i - 1].change.timestamp) {
      throw DataError("scored changes are not in timestamp order");
    }
  }

  std::vector<WindowStats> windows;
  std::optional<std::int64_t> prev_index;
  std::optional<WindowStats> prev_stats;
  for (std::size_t begin = 0; begin < scored.size();) {
    const std::int64_t k = window_index(scored[begin].change.timestamp, w);
    std::size_t end = begin;
    while (end < scored.size() && window_index(scored[end].change.timestamp, w) == k) ++end;

    WindowStats ws{k * w, w, 0.0, 0.0, end - begin};
    for (std::size_t i = begin; i < end; ++i) ws.mean += scored[i].d_star;
    ws.mean /= static_cast<double>(ws.count);
    double var = 0.0;
    for (std::size_t i = begin; i < end; ++i) var += (scored[i].d_star - ws.mean) * (scored[i].d_star - ws.mean);
    ws.stddev = std::sqrt(var / static_cast<double>(ws.count));

    const bool has_prev = prev_index && *prev_index == k - 1;
    const WindowStats& basis = has_prev ? *prev_stats : ws;
    const double theta = basis.mean + 4.0 * basis.stddev;
    for (std::size_t i = begin; i < end; ++i) {
      scored[i].threshold = theta;
      scored[i].flagged = scored[i].d_star > theta;
    }
    windows.push_back(ws);
    prev_index = k;
    prev_stats = ws;
    begin = end;
  }
  return windows;
}

nlohmann::ordered_json scored_change_to_json(const ScoredChange& s) {
  auto j = route_change_to_json(s.change);
  j["D"] = s.d;
  j["Dstar"] = s.d_star;
  j["flagged"] = s.flagged;
  j["theta"] = s.threshold;
  return j;
}

ScoredChange scored_change_from_json(const nlohmann::json& j) {
  try {
    return ScoredChange{route_change_from_json(j), j.at("D").get<double>(), j.at("Dstar").get<double>(),
                        j.value("flagged", false), j.value("theta", 0.0)};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("scored change record: ") + e.what());
  }
}

}  // namespace pathsentry
