// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: acceptance <work_dir>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cdr_support.hpp"
#include "oracles.hpp"
#include "pathsentry/aggregator.hpp"
#include "pathsentry/as_graph.hpp"
#include "pathsentry/as_profile.hpp"
#include "pathsentry/cdr.hpp"
#include "pathsentry/detector.hpp"
#include "pathsentry/fixture.hpp"
#include "pathsentry/pipeline.hpp"
#include "pathsentry/prefix_tree.hpp"
#include "pathsentry/route_monitor.hpp"

namespace fs = std::filesystem;
using namespace pathsentry;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

// Pipeline config from the fixture's run.json with outputs under work_dir.
RunConfig fixture_config(const fs::path& fixture_dir, const fs::path& work_dir) {
  auto j = nlohmann::json::parse(slurp(fixture_dir / "run.json"));
  j["work_dir"] = work_dir.string();
  auto cfg = config_from_json(j, fixture_dir);
  cfg.finalize();
  return cfg;
}

nlohmann::json run_pipeline(const RunConfig& cfg) {
  auto provider = make_provider(cfg);
  run_all(cfg, *provider);
  return nlohmann::json::parse(slurp(cfg.report));
}

// --- 1 ------------------------------------------------------------------

AsPath random_clean_path(std::mt19937_64& rng, Asn vantage, Asn universe, std::size_t max_len) {
  std::vector<PathElement> elems{PathElement::single(vantage)};
  const std::size_t len = 1 + rng() % max_len;
  while (elems.size() < len) {
    PathElement e;
    if (rng() % 5 == 0) {
      std::vector<Asn> m;
      for (std::size_t k = 0, n = 2 + rng() % 2; k < n; ++k) m.push_back(1 + rng() % universe);
      e = PathElement::set(m);
    } else {
      e = PathElement::single(1 + rng() % universe);
    }
    if (e == elems.back()) continue;
    elems.push_back(e);
  }
  return AsPath(elems);
}

Outcome dtw_exact() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-3, 3);
  std::size_t mismatches = 0;
  double worst = 0;
  const auto t0 = Clock::now();
  for (int trial = 0; trial < 500; ++trial) {
    const Asn universe = 6;
    const std::size_t dim = 1 + rng() % 4;
    oracle::VectorMap vecs;
    EmbeddingStore store(dim, "acceptance", "v");
    for (Asn a = 1; a <= universe; ++a) {
      std::vector<double> v(dim);
      for (auto& x : v) x = u(rng);
      vecs[a] = v;
      store.put(a, v);
    }
    auto s = random_clean_path(rng, 1, universe, 5);
    auto t = random_clean_path(rng, 1, universe, 5);
    double got = ar_dtw(s, t, store);
    double want = oracle::dtw_brute(s, t, vecs);
    double err = std::abs(got - want);
    worst = std::max(worst, err);
    if (err > 1e-9 * std::max(1.0, want)) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0,
          std::to_string(mismatches) + "/500 mismatches, max error " + fmt("%.3g", worst) + ", " +
              fmt("%.2f", secs) + " s"};
}

// --- 2 ------------------------------------------------------------------

Outcome lpm_oracle() {
  std::mt19937_64 rng(4242);
  std::size_t mismatches = 0, hits = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Family fam = rng() % 2 ? Family::kV6 : Family::kV4;
    std::array<std::uint8_t, 16> base{};
    for (auto& b : base) b = static_cast<std::uint8_t>(rng());
    const int shared = fam == Family::kV4 ? 8 : 24;
    PrefixTree<AsPath> tree(fam);
    std::vector<Prefix> stored;
    for (int k = 0; k < 20; ++k) {
      auto p = oracle::random_prefix(rng, fam, base, shared);
      tree.insert(p, AsPath{static_cast<Asn>(k + 1)});
      if (std::find(stored.begin(), stored.end(), p) == stored.end()) stored.push_back(p);
    }
    auto q = oracle::random_prefix(rng, fam, base, shared);
    auto got = lpm_lookup(tree, q);
    auto want = oracle::lpm_scan(stored, q);
    hits += want.has_value();
    if (got.has_value() != want.has_value() || (want && got->prefix != *want)) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + "/1000 mismatches (" + std::to_string(hits) + " covered)"};
}

// --- 3 ------------------------------------------------------------------

Outcome gradients() {
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) worst = std::max(worst, cdr_support::check_gradients(seed).max_rel_error);
  return {worst <= 1e-4, "max relative error " + fmt("%.3g", worst) + " over 10 configurations"};
}

// --- 4 ------------------------------------------------------------------

Outcome cdr_separation() {
  EmbeddingStore store;
  OrgMap orgs;
  cdr_support::two_org_store(4, 50, 64, 10.0, 1.0, store, orgs);
  const auto t0 = Clock::now();
  auto r = train(store, orgs, CdrHyper{}, 1);
  auto reduced = reduce(r.model, store);
  const double secs = seconds_since(t0);
  const double tail = cdr_support::trailing_mean(r.loss_trace, 50);
  auto [intra, inter] = cdr_support::mean_intra_inter(reduced, orgs);
  return {tail < r.loss_trace.front() && intra < inter && secs < 60.0,
          "loss " + fmt("%.4g", r.loss_trace.front()) + " -> " + fmt("%.4g", tail) + ", intra " + fmt("%.4g", intra) +
              " < inter " + fmt("%.4g", inter) + ", " + fmt("%.1f", secs) + " s"};
}

// --- 5 ------------------------------------------------------------------

Outcome gaussian_coverage() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<ScoredChange> s;
  for (int i = 0; i < 20000; ++i) {
    ScoredChange c;
    c.change.timestamp = i < 10000 ? 0 : 3600;
    c.d = c.d_star = g(rng);
    s.push_back(c);
  }
  detect(s, 3600);
  std::size_t flagged = 0;
  for (std::size_t i = 10000; i < s.size(); ++i) flagged += s[i].flagged;
  const double frac = static_cast<double>(flagged) / 10000.0;
  return {frac <= 0.001, std::to_string(flagged) + "/10000 flagged"};
}

// --- 6 ------------------------------------------------------------------

Outcome end_to_end(const Fixture& fx, const fs::path& fixture_dir, const fs::path& work) {
  const auto t0 = Clock::now();
  auto report = run_pipeline(fixture_config(fixture_dir, work / "run_a"));
  const double secs = seconds_since(t0);
  auto ev = evaluate_report(report, fx.events);
  std::string per;
  for (std::size_t i = 0; i < fx.events.size(); ++i) {
    per += " " + fx.events[i].kind + "=" + (ev.per_event[i] ? "hit" : "miss");
  }
  const bool pass = ev.detected == ev.injected && ev.false_event_rate() <= 0.05 && fx.benign_updates >= 50000 &&
                    secs < 300.0;
  return {pass, std::to_string(ev.detected) + "/" + std::to_string(ev.injected) + " detected (" + per.substr(1) +
                    "), " + std::to_string(ev.false_events) + "/" + std::to_string(ev.reported) +
                    " false events, " + std::to_string(fx.benign_updates) + " benign changes, " +
                    fmt("%.1f", secs) + " s"};
}

// --- 7 ------------------------------------------------------------------

Outcome new_as(const Fixture& fx, const RunConfig& cfg) {
  std::ifstream model_in(cfg.model);
  auto model = ReductionModel::from_json(nlohmann::json::parse(model_in));
  std::ifstream store_in(cfg.reduced_store);
  const auto before = EmbeddingStore::load(store_in);

  // A fresh stub buying transit from two existing ASes.
  const Asn fresh = 4'100'000'001u;
  auto edges = fx.edges;
  auto nodes = AsGraph::build(fx.edges).nodes();
  edges.push_back({nodes[0], fresh, Rel::kP2C});
  edges.push_back({nodes[1], fresh, Rel::kP2C});
  const auto graph = AsGraph::build(edges);
  AsMetadata meta;
  meta.asn = fresh;
  meta.org_name = "Fresh Networks";

  auto provider = make_provider(cfg);
  auto after = before;
  const auto t0 = Clock::now();
  add_new_as(fresh, graph, meta, DescribeOptions{cfg.neighbor_batch_size, cfg.max_segment_chars, cfg.auto_batch},
             *provider, model, after);
  const double secs = seconds_since(t0);

  std::size_t changed = 0;
  for (const auto& [asn, vec] : before.entries()) {
    const auto* v = after.find(asn);
    changed += v == nullptr || *v != vec;
  }
  const bool one_key = after.size() == before.size() + 1 && after.contains(fresh);
  return {one_key && changed == 0 && secs < 1.0,
          std::to_string(after.size() - before.size()) + " key(s) added, " + std::to_string(changed) +
              " existing vectors changed, " + fmt("%.3f", secs) + " s"};
}

// --- 8 ------------------------------------------------------------------

Outcome noise_robustness(const Fixture& fx, const fs::path& fixture_dir, const fs::path& work) {
  const auto graph = AsGraph::build(fx.edges);
  bool pass = true;
  std::string detail;
  const std::pair<NoiseType, const char*> kinds[] = {
      {NoiseType::kDelete, "delete"}, {NoiseType::kAdd, "add"}, {NoiseType::kFlip, "flip"}};
  for (const auto& [noise, name] : kinds) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const fs::path dir = work / ("noise_" + std::string(name) + "_" + std::to_string(seed));
      fs::create_directories(dir);
      auto noisy = perturb_graph(graph, noise, 0.25, seed);
      {
        std::ofstream out(dir / "relationships.txt", std::ios::binary);
        auto e = noisy.edges();
        write_relationships(out, e);
      }
      auto cfg = fixture_config(fixture_dir, dir);
      cfg.relationships = dir / "relationships.txt";
      auto ev = evaluate_report(run_pipeline(cfg), fx.events);
      pass = pass && ev.detected * 3 >= ev.injected * 2;
      detail += std::string(detail.empty() ? "" : ", ") + name + "/" + std::to_string(seed) + " " +
                std::to_string(ev.detected) + "/" + std::to_string(ev.injected);
    }
  }
  return {pass, detail};
}

// --- 9 ------------------------------------------------------------------

Outcome valley_free() {
  std::mt19937_64 rng(909);
  std::size_t checked = 0, mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    auto edges = oracle::random_edges(rng, 7, 0.45);
    auto g = AsGraph::build(edges);
    oracle::for_each_labeled_path(edges, 6, [&](const std::vector<Asn>& path, const std::vector<Role>& labels) {
      AsPath p;
      for (Asn a : path) p.elements.push_back(PathElement::single(a));
      mismatches += violates_valley_free(p, g) != oracle::vf_rejects(labels);
      ++checked;
    });
  }
  return {mismatches == 0 && checked > 0,
          std::to_string(mismatches) + " mismatches over " + std::to_string(checked) + " paths in 100 graphs"};
}

// --- 10 -----------------------------------------------------------------

Outcome reproducible(const fs::path& fixture_dir, const fs::path& work) {
  auto a = fixture_config(fixture_dir, work / "run_a");
  auto b = fixture_config(fixture_dir, work / "run_b");
  run_pipeline(b);
  const auto ra = slurp(a.report);
  const auto rb = slurp(b.report);
  return {!ra.empty() && ra == rb, ra == rb ? "report.json byte-identical (" + std::to_string(ra.size()) + " bytes)"
                                             : "report.json differs"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: acceptance <work_dir>\n");
    return 1;
  }
  spdlog::set_level(spdlog::level::warn);
  const fs::path work = fs::absolute(argv[1]);
  fs::remove_all(work);
  fs::create_directories(work);

  const auto fx = generate_fixture(FixtureOptions{});
  const fs::path fixture_dir = work / "fixture";
  write_fixture(fx, fixture_dir);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "ar-dtw matches brute-force alignment", dtw_exact},
      {2, "longest-prefix match agrees with linear scan", lpm_oracle},
      {3, "analytic gradients match finite differences", gradients},
      {4, "reduction separates two organizations", cdr_separation},
      {5, "threshold flags at most 0.1% of Gaussian scores", gaussian_coverage},
      {6, "end-to-end detection on the synthetic fixture", [&] { return end_to_end(fx, fixture_dir, work); }},
      {7, "new AS added without touching other vectors",
       [&] { return new_as(fx, fixture_config(fixture_dir, work / "run_a")); }},
      {8, "detection under 25% relationship noise", [&] { return noise_robustness(fx, fixture_dir, work); }},
      {9, "valley-free check agrees with the automaton", valley_free},
      {10, "repeated run gives an identical report", [&] { return reproducible(fixture_dir, work); }},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
