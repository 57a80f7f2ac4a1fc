#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathsentry/aggregator.hpp"
#include "pathsentry/as_graph.hpp"
#include "pathsentry/as_profile.hpp"
#include "pathsentry/route_monitor.hpp"

namespace pathsentry {

// Synthetic three-tier Internet: a tier-1 peering mesh owned by one carrier,
// regional tier-2 providers peering inside their region, and dual-homed stubs.
// Every AS of a region belongs to one organization. Tier-1 ASes are the
// vantage points. Routes follow customer > peer > provider preference, then
// shortest path, then lowest next-hop ASN.
struct FixtureOptions {
  std::uint64_t seed = 1;
  std::size_t tier1 = 8;
  std::size_t regions = 8;
  std::size_t tier2_per_region = 8;
  std::size_t stubs_per_region = 60;
  std::size_t exchange_peers = 8;  // extra peerings per tier-2 with other regions
  std::int64_t start = 1'700'002'800;  // aligned to the hour
  int hours = 24;
  std::size_t min_benign_changes = 55'000;
};

struct InjectedEvent {
  std::string kind;  // hijack | leak | forged-adjacency
  Asn culprit = 0;
  Asn victim = 0;
  std::int64_t start = 0;
  std::int64_t end = 0;
  std::vector<Prefix> prefixes;  // prefixes whose vantage routes the event changed
  std::string expected_pattern;
};

struct Fixture {
  std::vector<RelEdge> edges;
  MetadataMap metadata;
  std::vector<Asn> vantages;
  std::vector<RibEntry> rib;
  std::vector<Update> updates;  // timestamp order
  std::vector<Roa> roas;
  std::vector<InjectedEvent> events;
  std::size_t benign_updates = 0;
};

// Deterministic for a given options value.
Fixture generate_fixture(const FixtureOptions& options);

nlohmann::ordered_json ground_truth_to_json(const std::vector<InjectedEvent>& events);
std::vector<InjectedEvent> ground_truth_from_json(const nlohmann::json& j);

// Writes rib.tsv, updates.tsv, relationships.txt, metadata.jsonl, roas.csv,
// ground_truth.json and run.json (a pipeline config tuned for the fixture).
void write_fixture(const Fixture& fixture, const std::filesystem::path& dir);

struct Evaluation {
  std::size_t injected = 0;
  std::size_t detected = 0;   // matched with the culprit attributed unambiguously
  std::size_t reported = 0;
  std::size_t false_events = 0;
  std::vector<bool> per_event;

  double false_event_rate() const {
    return reported ? static_cast<double>(false_events) / static_cast<double>(reported) : 0.0;
  }
};

// A reported event matches an injected one when their time spans overlap
// (the injected span widened by `slack`) and they share a prefix.
Evaluation evaluate_report(const nlohmann::json& report, const std::vector<InjectedEvent>& truth,
                           std::int64_t slack = 0);

}  // namespace pathsentry
