#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <span>
#include <unordered_map>
#include <vector>

#include "pathsentry/as_path.hpp"
#include "pathsentry/parse_stats.hpp"

namespace pathsentry {

enum class Rel : std::uint8_t { kP2P, kP2C };

// A business relationship. For kP2C, `a` is the provider of `b`.
struct RelEdge {
  Asn a = 0;
  Asn b = 0;
  Rel rel = Rel::kP2P;

  auto operator<=>(const RelEdge&) const = default;
};

// Role of a neighbor as seen from the AS holding the adjacency list.
enum class Role : std::uint8_t { kProvider, kPeer, kCustomer };

const char* role_name(Role r);

struct Neighbor {
  Asn asn = 0;
  Role role = Role::kPeer;
};

struct RelCounts {
  std::size_t providers = 0;
  std::size_t peers = 0;
  std::size_t customers = 0;

  std::size_t total() const { return providers + peers + customers; }
};

// Undirected store of typed relationships. Immutable after build(); safe for
// concurrent readers.
class AsGraph {
 public:
  struct BuildStats {
    std::size_t self_loops = 0;
    std::size_t duplicates = 0;
    std::size_t conflicts = 0;
  };

  // Self-loops are skipped; a conflicting duplicate pair keeps the first edge.
  static AsGraph build(std::span<const RelEdge> edges, BuildStats* stats = nullptr);

  bool contains(Asn asn) const { return adjacency_.count(asn) > 0; }
  const std::vector<Neighbor>& neighbors(Asn asn) const;
  RelCounts counts(Asn asn) const;

  // Role of `other` relative to `self`, if the two are adjacent.
  std::optional<Role> role_of(Asn self, Asn other) const;

  std::vector<Asn> nodes() const;
  // Canonical edge list, sorted; P2P edges are listed once with a < b.
  std::vector<RelEdge> edges() const;
  std::size_t edge_count() const { return pairs_.size(); }
  std::size_t node_count() const { return adjacency_.size(); }

 private:
  static std::uint64_t key(Asn x, Asn y) { return (std::uint64_t{x} << 32) | y; }

  std::unordered_map<Asn, std::vector<Neighbor>> adjacency_;
  // Unordered pair (min, max) -> original edge.
  std::unordered_map<std::uint64_t, RelEdge> pairs_;
};

// CAIDA serial-1 style: `a|b|-1` (a provider of b) or `a|b|0` (peers).
std::vector<RelEdge> read_relationships(std::istream& in, ParseStats& stats);
void write_relationships(std::ostream& out, std::span<const RelEdge> edges);

enum class NoiseType { kDelete, kAdd, kFlip };

NoiseType parse_noise_type(const std::string& name);

// Relationship noise: delete, add, or flip floor(ratio * |E|) edges, chosen
// uniformly with a seeded generator.
AsGraph perturb_graph(const AsGraph& graph, NoiseType noise, double ratio, std::uint64_t seed);

}  // namespace pathsentry
