#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathsentry/embedder.hpp"
#include "pathsentry/errors.hpp"
#include "pathsentry/route_monitor.hpp"

namespace pathsentry {

// The two paths start at different vantage ASes and cannot be aligned.
class VantageMismatch : public DataError {
 public:
  using DataError::DataError;
};

// An ASN with no reduced embedding.
class UnresolvedAsn : public DataError {
 public:
  explicit UnresolvedAsn(Asn asn);
  Asn asn() const { return asn_; }

 private:
  Asn asn_;
};

// Drops consecutive repeats (sets compared by membership). Throws DataError on
// an empty path.
AsPath clean_path(const AsPath& path);

// Euclidean distance between reduced vectors; an AS set contributes the
// largest distance over its members. Identical elements are at distance 0.
double node_distance(const PathElement& a, const PathElement& b, const EmbeddingStore& store);

// Alignment cost of two cleaned paths. Steps (i-1,j), (i,j-1), (i-1,j-1); the
// first elements align with each other and so do the last. Throws
// VantageMismatch when the first elements differ.
double ar_dtw(const AsPath& s, const AsPath& t, const EmbeddingStore& store);

// Sum of distances between consecutive elements.
double path_span(const AsPath& path, const EmbeddingStore& store);

inline constexpr double kScoreEpsilon = 1e-9;

// D divided by the summed spans of both paths; zero whenever D is zero.
double normalize_score(double d, const AsPath& s, const AsPath& t, const EmbeddingStore& store);

struct ScoredChange {
  RouteChange change;
  double d = 0.0;
  double d_star = 0.0;
  bool flagged = false;
  double threshold = 0.0;
};

struct ScoreStats {
  std::size_t scored = 0;
  std::size_t vantage_mismatch = 0;
  std::size_t unresolved = 0;
};

// Scores each change; vantage mismatches and unresolved ASNs are skipped and
// counted. Order is preserved. Runs on up to `jobs` threads.
std::vector<ScoredChange> score_changes(std::span<const RouteChange> changes, const EmbeddingStore& store,
                                        std::size_t jobs = 1, ScoreStats* stats = nullptr);

struct WindowStats {
  std::int64_t window_start = 0;
  std::int64_t width = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t count = 0;
};

// Window index of a timestamp for tumbling windows aligned to multiples of w.
std::int64_t window_index(std::int64_t ts, std::int64_t w);

// Flags every change whose D* exceeds mean + 4 stddev of the previous window.
// A window whose predecessor is empty uses its own statistics. Input must be in
// timestamp order (DataError otherwise); w must be positive (ConfigError).
// Returns the statistics of every non-empty window.
std::vector<WindowStats> detect(std::vector<ScoredChange>& scored, std::int64_t w);

nlohmann::ordered_json scored_change_to_json(const ScoredChange& s);
ScoredChange scored_change_from_json(const nlohmann::json& j);

}  // namespace pathsentry
