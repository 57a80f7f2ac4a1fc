#include <gtest/gtest.h>

#include <random>
#include <regex>
#include <sstream>

#include "oracles.hpp"
#include "pathsentry/as_graph.hpp"
#include "pathsentry/as_profile.hpp"
#include "pathsentry/errors.hpp"

using namespace pathsentry;

namespace {

// ASNs listed in the Business Neighbors block of one segment.
std::vector<Asn> listed_neighbors(const std::string& text) {
  static const std::regex line(R"(^- AS(\d+) is a )", std::regex::multiline);
  std::vector<Asn> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), line); it != std::sregex_iterator(); ++it) {
    out.push_back(static_cast<Asn>(std::stoul((*it)[1])));
  }
  return out;
}

AsGraph star(Asn center, std::size_t providers, std::size_t peers, std::size_t customers) {
  std::vector<RelEdge> edges;
  Asn next = 1000;
  for (std::size_t i = 0; i < providers; ++i) edges.push_back({next++, center, Rel::kP2C});
  for (std::size_t i = 0; i < peers; ++i) edges.push_back({center, next++, Rel::kP2P});
  for (std::size_t i = 0; i < customers; ++i) edges.push_back({center, next++, Rel::kP2C});
  return AsGraph::build(edges);
}

}  // namespace

TEST(BuildGraph, ProviderCustomerEdge) {
  std::vector<RelEdge> e{{1, 2, Rel::kP2C}};
  auto g = AsGraph::build(e);
  EXPECT_EQ(g.role_of(1, 2), Role::kCustomer);
  EXPECT_EQ(g.role_of(2, 1), Role::kProvider);
  EXPECT_EQ(g.counts(1).customers, 1u);
  EXPECT_EQ(g.counts(2).providers, 1u);
}

TEST(BuildGraph, PeerEdgeIsBidirectional) {
  std::vector<RelEdge> e{{3, 4, Rel::kP2P}};
  auto g = AsGraph::build(e);
  EXPECT_EQ(g.role_of(3, 4), Role::kPeer);
  EXPECT_EQ(g.role_of(4, 3), Role::kPeer);
}

TEST(BuildGraph, EmptySelfLoopAndConflict) {
  EXPECT_EQ(AsGraph::build({}).node_count(), 0u);
  std::vector<RelEdge> e{{1, 1, Rel::kP2P}, {1, 2, Rel::kP2C}, {2, 1, Rel::kP2P}, {1, 2, Rel::kP2C}};
  AsGraph::BuildStats stats;
  auto g = AsGraph::build(e, &stats);
  EXPECT_EQ(stats.self_loops, 1u);
  EXPECT_EQ(stats.conflicts, 1u);
  EXPECT_EQ(g.edge_count(), 1u);
  EXPECT_EQ(g.role_of(1, 2), Role::kCustomer);
  EXPECT_EQ(g.neighbors(1).size(), 1u);
}

TEST(BuildGraph, SymmetryOnRandomGraphs) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = AsGraph::build(oracle::random_edges(rng, 15, 0.3));
    for (Asn x : g.nodes()) {
      for (const auto& n : g.neighbors(x)) {
        auto back = g.role_of(n.asn, x);
        ASSERT_TRUE(back.has_value());
        if (n.role == Role::kPeer) EXPECT_EQ(*back, Role::kPeer);
        if (n.role == Role::kCustomer) EXPECT_EQ(*back, Role::kProvider);
        if (n.role == Role::kProvider) EXPECT_EQ(*back, Role::kCustomer);
      }
    }
  }
}

TEST(Relationships, ReadWriteRoundTrip) {
  std::istringstream in("# header\n1|2|-1\n3|4|0\n5|6|7\n");
  ParseStats stats;
  auto edges = read_relationships(in, stats);
  ASSERT_EQ(edges.size(), 2u);
  EXPECT_EQ(stats.skipped, 1u);
  std::ostringstream out;
  write_relationships(out, edges);
  EXPECT_EQ(out.str(), "1|2|-1\n3|4|0\n");
}

TEST(RenderDescription, SegmentCountIsCeilOfNeighborsOverBatch) {
  auto g = star(1, 2, 1, 3);
  AsMetadata meta{1};
  DescribeOptions opt{2, 8000, false};
  auto segs = render_description(1, g, meta, opt);
  ASSERT_EQ(segs.size(), 3u);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    EXPECT_EQ(segs[i].index, i + 1);
    EXPECT_EQ(segs[i].total, 3u);
    EXPECT_EQ(segs[i].template_version, template_version());
  }
}

TEST(RenderDescription, IsolatedAsGivesOneStableOnlySegment) {
  AsGraph g;
  AsMetadata meta{42};
  auto segs = render_description(42, g, meta, DescribeOptions{});
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_NE(segs[0].text.find("AS number: AS42"), std::string::npos);
  EXPECT_NE(segs[0].text.find("Organization: unknown"), std::string::npos);
  EXPECT_TRUE(listed_neighbors(segs[0].text).empty());
}

TEST(RenderDescription, StableBlockHasCountsAndTotalInEverySegment) {
  auto g = star(1, 2, 1, 3);
  AsMetadata meta{1, "Example Org", "NL", 4, 5, 6, 7, 8};
  auto segs = render_description(1, g, meta, DescribeOptions{2, 8000, false});
  for (const auto& s : segs) {
    EXPECT_NE(s.text.find("2 providers, 1 peers, 3 customers (6 in total)"), std::string::npos);
    EXPECT_NE(s.text.find("Organization: Example Org"), std::string::npos);
    EXPECT_NE(s.text.find("Country: NL"), std::string::npos);
  }
  EXPECT_NE(segs[0].text.find("4 additional neighbors of AS1 follow"), std::string::npos);
  EXPECT_NE(segs[1].text.find("2 additional neighbors of AS1 follow"), std::string::npos);
  EXPECT_EQ(segs[2].text.find("additional neighbors"), std::string::npos);
}

TEST(RenderDescription, ZeroBatchIsConfigError) {
  auto g = star(1, 1, 0, 0);
  EXPECT_THROW(render_description(1, g, AsMetadata{1}, DescribeOptions{0, 8000, true}), ConfigError);
}

TEST(RenderDescription, OverlongSegmentWithoutAutoSizeIsDataError) {
  auto g = star(1, 0, 0, 40);
  EXPECT_THROW(render_description(1, g, AsMetadata{1}, DescribeOptions{50, 1200, false}), DataError);
}

TEST(RenderDescription, CoverageAndLengthBoundUnderAutoSize) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = AsGraph::build(oracle::random_edges(rng, 120, 0.2));
    for (Asn asn : {Asn{1}, Asn{2}, Asn{3}}) {
      if (!g.contains(asn)) continue;
      DescribeOptions opt{50, 1500, true};
      auto segs = render_description(asn, g, AsMetadata{asn}, opt);
      std::vector<Asn> seen;
      for (const auto& s : segs) {
        EXPECT_LE(char_length(s.text), opt.max_chars);
        auto part = listed_neighbors(s.text);
        seen.insert(seen.end(), part.begin(), part.end());
      }
      std::vector<Asn> want;
      for (const auto& n : g.neighbors(asn)) want.push_back(n.asn);
      std::sort(seen.begin(), seen.end());
      std::sort(want.begin(), want.end());
      EXPECT_EQ(seen, want);
    }
  }
}

TEST(RenderDescription, NeighborOrderDegreeDescThenAsn) {
  std::vector<RelEdge> e{{1, 5, Rel::kP2C}, {1, 3, Rel::kP2C}, {1, 4, Rel::kP2C}, {4, 9, Rel::kP2C}};
  auto g = AsGraph::build(e);
  auto order = ordered_neighbors(1, g);
  ASSERT_EQ(order.size(), 3u);
  EXPECT_EQ(order[0].asn, 4u);
  EXPECT_EQ(order[1].asn, 3u);
  EXPECT_EQ(order[2].asn, 5u);
}

TEST(RenderDescription, CharLengthCountsCodePoints) {
  EXPECT_EQ(char_length("abc"), 3u);
  EXPECT_EQ(char_length("Telefónica"), 10u);
  EXPECT_EQ(char_length("日本"), 2u);
}

TEST(Metadata, ReadAndOrgMap) {
  std::istringstream in(
      R"({"asn":1,"orgName":"A","country":"US","numberAsns":3})" "\n"
      R"({"asn":2})" "\n"
      "not json\n");
  ParseStats stats;
  auto meta = read_metadata(in, stats);
  ASSERT_EQ(meta.size(), 2u);
  EXPECT_EQ(meta.at(1).number_asns, 3u);
  EXPECT_FALSE(meta.at(2).org_name.has_value());
  EXPECT_EQ(stats.skipped, 1u);
  auto orgs = org_map_from_metadata(meta);
  EXPECT_EQ(orgs.size(), 1u);
  EXPECT_EQ(orgs.at(1), "A");
}

TEST(Segments, JsonRoundTrip) {
  PromptSegment s{7, 2, 3, "text", template_version()};
  EXPECT_EQ(segment_from_json(segment_to_json(s)), s);
}

TEST(PerturbGraph, RatioZeroIsIdentity) {
  std::mt19937_64 rng(4);
  auto g = AsGraph::build(oracle::random_edges(rng, 30, 0.2));
  for (auto t : {NoiseType::kDelete, NoiseType::kAdd, NoiseType::kFlip}) {
    EXPECT_EQ(perturb_graph(g, t, 0.0, 1).edges(), g.edges());
  }
}

TEST(PerturbGraph, DeleteQuarterOfHundred) {
  std::vector<RelEdge> e;
  for (Asn i = 1; i <= 100; ++i) e.push_back({i, i + 1000, Rel::kP2C});
  auto g = AsGraph::build(e);
  EXPECT_EQ(perturb_graph(g, NoiseType::kDelete, 0.25, 3).edge_count(), 75u);
  EXPECT_EQ(perturb_graph(g, NoiseType::kAdd, 0.25, 3).edge_count(), 125u);
}

TEST(PerturbGraph, FlipSwapsProviderDirection) {
  std::vector<RelEdge> e{{1, 2, Rel::kP2C}};
  auto g = perturb_graph(AsGraph::build(e), NoiseType::kFlip, 1.0, 0);
  EXPECT_EQ(g.edges(), (std::vector<RelEdge>{{2, 1, Rel::kP2C}}));
}

TEST(PerturbGraph, FlipTurnsPeeringIntoTransit) {
  std::vector<RelEdge> e{{1, 2, Rel::kP2P}};
  auto g = perturb_graph(AsGraph::build(e), NoiseType::kFlip, 1.0, 0);
  ASSERT_EQ(g.edge_count(), 1u);
  EXPECT_EQ(g.edges()[0].rel, Rel::kP2C);
}

TEST(PerturbGraph, ReproducibleForEqualSeeds) {
  std::mt19937_64 rng(8);
  auto g = AsGraph::build(oracle::random_edges(rng, 40, 0.2));
  for (auto t : {NoiseType::kDelete, NoiseType::kAdd, NoiseType::kFlip}) {
    std::ostringstream a, b;
    auto ea = perturb_graph(g, t, 0.25, 17).edges();
    auto eb = perturb_graph(g, t, 0.25, 17).edges();
    write_relationships(a, ea);
    write_relationships(b, eb);
    EXPECT_EQ(a.str(), b.str());
  }
  EXPECT_THROW(perturb_graph(g, NoiseType::kDelete, 1.5, 0), ConfigError);
  EXPECT_THROW(parse_noise_type("shuffle"), ConfigError);
}
