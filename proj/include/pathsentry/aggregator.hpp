#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathsentry/as_graph.hpp"
#include "pathsentry/as_profile.hpp"
#include "pathsentry/detector.hpp"
#include "pathsentry/parse_stats.hpp"
#include "pathsentry/prefix_tree.hpp"

namespace pathsentry {

// Value of a descending curve at the index maximizing the second difference
// curve[i-1] - 2 curve[i] + curve[i+1]; ties go to the smallest index.
// Curves shorter than three points yield 0.
double knee_point(std::span<const double> curve);

// Which ASes of a change count as candidates, after removing the vantage.
enum class CandidateMode { kUnion, kIntersection };

CandidateMode parse_candidate_mode(const std::string& name);

std::set<Asn> change_candidates(const RouteChange& change, CandidateMode mode);

struct PrefixEvent {
  Prefix prefix;
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::vector<ScoredChange> changes;
  // Distinct reporting vantages for every window of this prefix that holds a
  // flagged change, in time order.
  std::vector<std::size_t> vp_count_curve;
  double vp_threshold = 0.0;
  std::set<Asn> candidate_ases;  // intersection over the changes
};

// Groups flagged changes by announced prefix, keeps windows whose vantage
// count exceeds the knee of that prefix's descending count curve, and merges
// consecutive kept windows into one event. Sorted by (start, prefix).
std::vector<PrefixEvent> build_prefix_events(std::span<const ScoredChange> scored, std::int64_t w,
                                             CandidateMode mode = CandidateMode::kUnion);

enum class Attribution { kIntersection, kAmbiguous, kUnattributed };

const char* attribution_name(Attribution a);

enum class Pattern { kOriginChange, kRouteLeak, kPathManipulation, kRoaMisconfig, kWeakPathTampering, kUnclassified };

const char* pattern_name(Pattern p);

struct AnomalyEvent {
  std::string event_id;
  std::vector<Prefix> prefixes;       // sorted, unique
  std::set<Asn> responsible_ases;
  Attribution attribution = Attribution::kIntersection;
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::vector<Pattern> patterns;      // sorted by enum order
  std::vector<std::string> notes;
  std::vector<PrefixEvent> members;
};

// Connected components of prefix events under "closed intervals overlap and
// candidate sets intersect". Responsible ASes are the intersection of member
// candidates, or their union marked ambiguous when that is empty. Events are
// numbered E0001, E0002, ... in (start, first prefix) order.
std::vector<AnomalyEvent> link_events(std::vector<PrefixEvent> prefix_events);

// Route origin authorization.
struct Roa {
  Prefix prefix;
  int max_length = 0;
  Asn asn = 0;
};

enum class RoaState { kValid, kInvalid, kNotFound };

const char* roa_state_name(RoaState s);

class RoaTable {
 public:
  void add(const Roa& roa);
  std::size_t size() const { return count_; }

  // Origin validation: NotFound without a covering ROA; Valid when a covering
  // ROA names the origin and permits the prefix length; Invalid otherwise.
  RoaState validate(const Prefix& prefix, std::optional<Asn> origin) const;

 private:
  PrefixTree<std::vector<Roa>> v4_{Family::kV4};
  PrefixTree<std::vector<Roa>> v6_{Family::kV6};
  std::size_t count_ = 0;
};

// CSV lines `prefix,max_length,asn`; `#` comments and a header row are skipped.
RoaTable read_roas(std::istream& in, ParseStats& stats);

// Inclusive ASN ranges.
class AsnRanges {
 public:
  void add(Asn lo, Asn hi);
  bool contains(Asn asn) const;
  std::size_t size() const { return ranges_.size(); }

 private:
  std::vector<std::pair<Asn, Asn>> ranges_;
};

// One range per line: `n` or `lo-hi`; `#` comments allowed.
AsnRanges read_asn_ranges(std::istream& in, ParseStats& stats);
// The IANA special-purpose and private ranges shipped with the tool.
const AsnRanges& default_reserved_asns();

// True if the path, read from the vantage towards the origin, moves to a
// provider or a peer after having moved to a customer or a peer. Links to
// unknown neighbors and AS sets are ignored.
bool violates_valley_free(const AsPath& path, const AsGraph& graph);

struct ClassifyContext {
  const AsGraph* graph = nullptr;
  const OrgMap* orgs = nullptr;
  const RoaTable* roas = nullptr;  // optional
  const AsnRanges* reserved = nullptr;
};

// Labels the event with every matching pattern (Unclassified when none) and
// records notes for checks that could not run.
void classify_event(AnomalyEvent& event, const ClassifyContext& ctx);

struct ScoreSummary {
  std::size_t n_changes = 0;
  std::size_t n_vantages = 0;
  double max_d_star = 0.0;
  double mean_d_star = 0.0;
};

ScoreSummary summarize(const AnomalyEvent& event);

// Events ordered by (start, event_id); `run` is copied verbatim.
nlohmann::ordered_json emit_report(const std::vector<AnomalyEvent>& events, const nlohmann::ordered_json& run);
std::string render_report_text(const nlohmann::json& report);

}  // namespace pathsentry
