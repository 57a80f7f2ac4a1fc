#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "pathsentry/errors.hpp"
#include "pathsentry/fixture.hpp"
#include "pathsentry/pipeline.hpp"

namespace {

using namespace pathsentry;

struct Flags {
  std::string config;
  std::optional<std::size_t> jobs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> provider;
  std::optional<std::int64_t> window_secs;
  std::optional<std::size_t> reduced_dim;
  std::string gen_fixture;
  bool verbose = false;
  bool quiet = false;

  std::string rib;
  std::string updates;
  std::string output;

  std::string noise = "delete";
  double ratio = 0.0;
  std::uint64_t noise_seed = 0;
};

RunConfig resolve_config(const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.jobs) cfg.jobs = *f.jobs;
  if (f.seed) cfg.seed = *f.seed;
  if (f.provider) cfg.provider = *f.provider;
  if (f.window_secs) cfg.window_secs = *f.window_secs;
  if (f.reduced_dim) cfg.cdr.out_dim = *f.reduced_dim;
  if (!f.rib.empty()) cfg.rib = f.rib;
  if (!f.updates.empty()) cfg.updates = f.updates;
  cfg.finalize();
  return cfg;
}

void print_summary(const nlohmann::ordered_json& summary) { std::cerr << summary.dump(2) << '\n'; }

int run(int argc, char** argv) {
  CLI::App app{"BGP route-change anomaly detection pipeline"};
  app.require_subcommand(0, 1);
  Flags f;
  app.add_option("--config", f.config, "JSON run configuration");
  app.add_option("--jobs", f.jobs, "Worker threads for parallel stages")->check(CLI::PositiveNumber);
  app.add_option("--seed", f.seed, "Seed for the mock provider, training and the fixture generator");
  app.add_option("--provider", f.provider, "Embedding provider")->check(CLI::IsMember({"mock", "http"}));
  app.add_option("--window-secs", f.window_secs, "Detection window width in seconds");
  app.add_option("--reduced-dim", f.reduced_dim, "Reduced embedding dimension");
  app.add_option("--gen-fixture", f.gen_fixture, "Write a synthetic scenario into DIR and exit");
  app.add_flag("-v,--verbose", f.verbose, "Debug logging");
  app.add_flag("-q,--quiet", f.quiet, "Only log warnings and errors");

  auto* monitor = app.add_subcommand("monitor", "Extract route changes from a RIB snapshot and updates");
  monitor->add_option("--rib", f.rib, "RIB snapshot (overrides the config)");
  monitor->add_option("--updates", f.updates, "Update stream (overrides the config)");
  monitor->add_option("-o,--output", f.output, "Route-change output file");
  auto* profile = app.add_subcommand("profile", "Render AS descriptions into prompt segments");
  auto* embed = app.add_subcommand("embed", "Embed prompt segments into an embedding store");
  auto* train_cmd = app.add_subcommand("train-cdr", "Train the contrastive reduction model");
  auto* reduce_cmd = app.add_subcommand("reduce", "Apply the reduction model to the embedding store");
  auto* detect_cmd = app.add_subcommand("detect", "Score and flag route changes");
  auto* aggregate = app.add_subcommand("aggregate", "Aggregate flagged changes into an event report");
  auto* perturb = app.add_subcommand("perturb", "Write a noisy copy of the relationship graph");
  perturb->add_option("--noise", f.noise, "Noise type")->check(CLI::IsMember({"delete", "add", "flip"}));
  perturb->add_option("--ratio", f.ratio, "Fraction of edges affected")->check(CLI::Range(0.0, 1.0));
  perturb->add_option("--noise-seed", f.noise_seed, "Seed for the perturbation");
  perturb->add_option("-o,--output", f.output, "Output relationship file")->required();
  auto* run_all_cmd = app.add_subcommand("run-all", "Run every stage in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("pathsentry"));
  spdlog::set_level(f.verbose ? spdlog::level::debug : f.quiet ? spdlog::level::warn : spdlog::level::info);

  if (!f.gen_fixture.empty()) {
    FixtureOptions opts;
    if (f.seed) opts.seed = *f.seed;
    auto fx = generate_fixture(opts);
    write_fixture(fx, f.gen_fixture);
    spdlog::info("fixture: {} ASes, {} RIB entries, {} updates ({} benign route replacements), {} injected events",
                 fx.metadata.size(), fx.rib.size(), fx.updates.size(), fx.benign_updates, fx.events.size());
    std::cout << (std::filesystem::path(f.gen_fixture) / "run.json").string() << '\n';
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cerr << app.help();
    return 1;
  }

  RunConfig cfg = resolve_config(f);
  if (monitor->parsed()) {
    if (!f.output.empty()) cfg.changes = f.output;
    print_summary(run_monitor(cfg));
  } else if (profile->parsed()) {
    print_summary(run_profile(cfg));
  } else if (embed->parsed()) {
    auto provider = make_provider(cfg);
    print_summary(run_embed(cfg, *provider));
  } else if (train_cmd->parsed()) {
    print_summary(run_train(cfg));
  } else if (reduce_cmd->parsed()) {
    print_summary(run_reduce(cfg));
  } else if (detect_cmd->parsed()) {
    auto provider = make_provider(cfg);
    print_summary(run_detect(cfg, *provider));
  } else if (aggregate->parsed()) {
    print_summary(run_aggregate(cfg));
  } else if (perturb->parsed()) {
    auto in = open_input(cfg.relationships);
    ParseStats stats;
    auto graph = AsGraph::build(read_relationships(in, stats));
    auto noisy = perturb_graph(graph, parse_noise_type(f.noise), f.ratio, f.noise_seed);
    auto out = open_output(f.output);
    write_relationships(out, noisy.edges());
    spdlog::info("perturb: {} edges in, {} edges out", graph.edge_count(), noisy.edge_count());
  } else if (run_all_cmd->parsed()) {
    auto provider = make_provider(cfg);
    auto summary = run_all(cfg, *provider);
    print_summary(summary);
    std::cout << cfg.report.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const DataError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const ProviderError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
}
