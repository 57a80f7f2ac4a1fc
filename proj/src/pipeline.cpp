#include "pathsentry/pipeline.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "pathsentry/errors.hpp"
#include "pathsentry/http_provider.hpp"
#include "pathsentry/route_monitor.hpp"

namespace pathsentry {

namespace {

template <typename T>
T get_field(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

AsGraph load_graph(const RunConfig& cfg) {
  auto in = open_input(cfg.relationships);
  ParseStats stats;
  auto edges = read_relationships(in, stats);
  AsGraph::BuildStats build;
  auto graph = AsGraph::build(edges, &build);
  spdlog::info("relationships: {} edges, {} ASes, {} skipped lines", graph.edge_count(), graph.node_count(),
               stats.skipped);
  return graph;
}

MetadataMap load_metadata(const RunConfig& cfg) {
  if (cfg.metadata.empty()) return {};
  auto in = open_input(cfg.metadata);
  ParseStats stats;
  return read_metadata(in, stats);
}

EmbeddingStore load_store(const fs::path& path) {
  auto in = open_input(path);
  return EmbeddingStore::load(in);
}

void save_store(const EmbeddingStore& store, const fs::path& path) {
  auto out = open_output(path);
  store.save(out);
}

ReductionModel load_model(const fs::path& path) {
  auto in = open_input(path);
  try {
    return ReductionModel::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

DescribeOptions describe_options(const RunConfig& cfg) {
  return {cfg.neighbor_batch_size, cfg.max_segment_chars, cfg.auto_batch};
}

std::vector<RouteChange> load_changes(const fs::path& path) {
  auto in = open_input(path);
  std::vector<RouteChange> out;
  for_each_line(in, [&](const nlohmann::json& j) { out.push_back(route_change_from_json(j)); });
  return out;
}

std::set<Asn> asns_in(const AsPath& path) {
  std::set<Asn> out;
  for (const auto& e : path.elements) out.insert(e.members.begin(), e.members.end());
  return out;
}

template <typename Fn>
nlohmann::ordered_json stage(const char* name, Fn&& fn) {
  try {
    auto summary = fn();
    spdlog::info("stage {}: {}", name, summary.dump());
    return summary;
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("stage ") + name + ": " + e.what());
  } catch (const ProviderError& e) {
    throw ProviderError(e.kind(), e.retryable(), std::string("stage ") + name + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string("stage ") + name + ": " + e.what());
  }
}

}  // namespace

std::ifstream open_input(const fs::path& path) {
  if (path.empty()) throw ConfigError("an input path is not configured");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open input file " + path.string());
  return in;
}

std::ofstream open_output(const fs::path& path) {
  if (path.empty()) throw ConfigError("an output path is not configured");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write output file " + path.string());
  return out;
}

void RunConfig::finalize() {
  if (window_secs <= 0) throw ConfigError("window_secs must be positive");
  if (cdr.out_dim < 2) throw ConfigError("reduced_dim must be at least 2");
  if (neighbor_batch_size == 0) throw ConfigError("neighbor_batch_size must be positive");
  if (max_segment_chars == 0) throw ConfigError("max_segment_chars must be positive");
  if (provider != "mock" && provider != "http") throw ConfigError("provider must be mock or http");
  if (provider == "mock" && mock_dim <= cdr.out_dim) {
    throw ConfigError("mock_dim must exceed reduced_dim");
  }
  if (jobs == 0) throw ConfigError("jobs must be positive");
  if (in_flight == 0) throw ConfigError("in_flight must be positive");
  if (time_slack < 0) throw ConfigError("time_slack must not be negative");
  if (cdr.learning_rate < 0 || cdr.hidden == 0 || cdr.batch_pos == 0 || cdr.batch_neg == 0) {
    throw ConfigError("invalid cdr hyperparameters");
  }
  auto fill = [&](fs::path& p, const char* name) {
    if (p.empty()) p = work_dir / name;
  };
  fill(changes, "changes.jsonl");
  fill(segments, "segments.jsonl");
  fill(store, "store.jsonl");
  fill(model, "model.json");
  fill(reduced_store, "reduced.jsonl");
  fill(scored, "scored.jsonl");
  fill(report, "report.json");
  fill(report_text, "report.txt");
}

RunConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg;
  auto path = [&](const nlohmann::json& v, const std::string& key) {
    fs::path p = get_field<std::string>(v, key);
    return p.empty() || p.is_absolute() ? p : base_dir / p;
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "rib") cfg.rib = path(v, key);
    else if (key == "updates") cfg.updates = path(v, key);
    else if (key == "relationships") cfg.relationships = path(v, key);
    else if (key == "metadata") cfg.metadata = path(v, key);
    else if (key == "roa") cfg.roa = path(v, key);
    else if (key == "reserved_asns") cfg.reserved_asns = path(v, key);
    else if (key == "work_dir") cfg.work_dir = path(v, key);
    else if (key == "changes") cfg.changes = path(v, key);
    else if (key == "segments") cfg.segments = path(v, key);
    else if (key == "store") cfg.store = path(v, key);
    else if (key == "model") cfg.model = path(v, key);
    else if (key == "reduced_store") cfg.reduced_store = path(v, key);
    else if (key == "scored") cfg.scored = path(v, key);
    else if (key == "report") cfg.report = path(v, key);
    else if (key == "report_text") cfg.report_text = path(v, key);
    else if (key == "window_secs") cfg.window_secs = get_field<std::int64_t>(v, key);
    else if (key == "reduced_dim") cfg.cdr.out_dim = get_field<std::size_t>(v, key);
    else if (key == "neighbor_batch_size") cfg.neighbor_batch_size = get_field<std::size_t>(v, key);
    else if (key == "auto_batch") cfg.auto_batch = get_field<bool>(v, key);
    else if (key == "max_segment_chars") cfg.max_segment_chars = get_field<std::size_t>(v, key);
    else if (key == "provider") cfg.provider = get_field<std::string>(v, key);
    else if (key == "mock_dim") cfg.mock_dim = get_field<std::size_t>(v, key);
    else if (key == "endpoint") cfg.endpoint = get_field<std::string>(v, key);
    else if (key == "model_name") cfg.model_name = get_field<std::string>(v, key);
    else if (key == "embed_batch") cfg.embed_batch = get_field<std::size_t>(v, key);
    else if (key == "in_flight") cfg.in_flight = get_field<std::size_t>(v, key);
    else if (key == "seed") cfg.seed = get_field<std::uint64_t>(v, key);
    else if (key == "jobs") cfg.jobs = get_field<std::size_t>(v, key);
    else if (key == "time_slack") cfg.time_slack = get_field<std::int64_t>(v, key);
    else if (key == "train_cdr") cfg.train_cdr = get_field<bool>(v, key);
    else if (key == "fallback_embed") cfg.fallback_embed = get_field<bool>(v, key);
    else if (key == "candidate_mode") cfg.candidate_mode = parse_candidate_mode(get_field<std::string>(v, key));
    else if (key == "cdr") {
      if (!v.is_object()) throw ConfigError("config key 'cdr' must be an object");
      const auto out_dim = cfg.cdr.out_dim;
      try {
        cfg.cdr = hyper_from_json(v, cfg.cdr);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config key 'cdr': ") + e.what());
      }
      if (!v.contains("out_dim")) cfg.cdr.out_dim = out_dim;
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  return cfg;
}

RunConfig load_config(const fs::path& file) {
  auto in = open_input(file);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return config_from_json(j, fs::absolute(file).parent_path());
}

std::unique_ptr<EmbeddingProvider> make_provider(const RunConfig& cfg) {
  if (cfg.provider == "mock") return std::make_unique<MockProvider>(cfg.mock_dim, cfg.seed);
  HttpEndpoint ep;
  if (!cfg.endpoint.empty()) {
    ep.base_url = cfg.endpoint;
    if (const char* key = std::getenv("EMBED_API_KEY"); key && *key) ep.api_key = key;
    if (const char* model = std::getenv("EMBED_MODEL")) ep.model = model;
  } else {
    ep = endpoint_from_env();
  }
  if (!cfg.model_name.empty()) ep.model = cfg.model_name;
  ep.max_batch = cfg.embed_batch;
  return std::make_unique<HttpProvider>(ep);
}

nlohmann::ordered_json run_monitor(const RunConfig& cfg) {
  ParseStats rib_stats;
  ParseStats upd_stats;
  std::vector<RibEntry> rib;
  std::vector<Update> updates;
  {
    auto in = open_input(cfg.rib);
    rib = read_rib(in, rib_stats);
  }
  {
    auto in = open_input(cfg.updates);
    updates = read_updates(in, upd_stats);
  }
  auto trees = build_prefix_trees(rib);
  const std::size_t vantages = trees.size();
  auto changes = extract_route_changes(std::move(trees), updates, cfg.time_slack);
  std::stable_sort(changes.begin(), changes.end(),
                   [](const RouteChange& a, const RouteChange& b) { return a.timestamp < b.timestamp; });
  auto out = open_output(cfg.changes);
  for (const auto& c : changes) out << route_change_to_json(c).dump() << '\n';

  nlohmann::ordered_json s;
  s["rib_entries"] = rib.size();
  s["rib_skipped"] = rib_stats.skipped;
  s["vantages"] = vantages;
  s["updates"] = updates.size();
  s["updates_skipped"] = upd_stats.skipped;
  s["changes"] = changes.size();
  s["output"] = cfg.changes.string();
  return s;
}

nlohmann::ordered_json run_profile(const RunConfig& cfg) {
  auto graph = load_graph(cfg);
  auto meta = load_metadata(cfg);
  std::set<Asn> asns;
  for (Asn a : graph.nodes()) asns.insert(a);
  for (const auto& [a, _] : meta) asns.insert(a);

  auto out = open_output(cfg.segments);
  std::size_t segments = 0;
  const auto opts = describe_options(cfg);
  for (Asn a : asns) {
    auto it = meta.find(a);
    AsMetadata m;
    m.asn = a;
    if (it != meta.end()) m = it->second;
    for (const auto& seg : render_description(a, graph, m, opts)) {
      out << segment_to_json(seg).dump() << '\n';
      ++segments;
    }
  }
  nlohmann::ordered_json s;
  s["ases"] = asns.size();
  s["segments"] = segments;
  s["output"] = cfg.segments.string();
  return s;
}

nlohmann::ordered_json run_embed(const RunConfig& cfg, EmbeddingProvider& provider) {
  std::vector<PromptSegment> segments;
  {
    auto in = open_input(cfg.segments);
    for_each_line(in, [&](const nlohmann::json& j) { segments.push_back(segment_from_json(j)); });
  }
  std::stable_sort(segments.begin(), segments.end(), [](const PromptSegment& a, const PromptSegment& b) {
    return std::tie(a.asn, a.index) < std::tie(b.asn, b.index);
  });
  if (segments.empty()) throw DataError("no segments to embed in " + cfg.segments.string());
  for (const auto& s : segments) {
    if (s.template_version != segments.front().template_version) {
      throw DataError("segments mix template versions");
    }
  }

  std::size_t dim = provider.dim();
  if (dim == 0) {
    // Probe with the first AS to learn the dimension.
    std::size_t n = 0;
    while (n < segments.size() && segments[n].asn == segments.front().asn) ++n;
    dim = embed_as(std::span(segments).subspan(0, n), provider).vec.size();
  }
  EmbeddingStore store(dim, provider.id(), segments.front().template_version);
  auto report = embed_all(segments, provider, store, cfg.in_flight);
  save_store(store, cfg.store);
  nlohmann::ordered_json s;
  s["embedded"] = report.embedded;
  s["failed"] = report.failed;
  s["dim"] = dim;
  s["output"] = cfg.store.string();
  if (!report.failed.empty()) {
    throw ProviderError(ProviderError::Kind::kOther, false,
                        std::to_string(report.failed.size()) + " AS(es) could not be embedded; partial store written");
  }
  return s;
}

nlohmann::ordered_json run_train(const RunConfig& cfg) {
  auto store = load_store(cfg.store);
  auto orgs = org_map_from_metadata(load_metadata(cfg));
  auto result = train(store, orgs, cfg.cdr, cfg.seed);
  auto j = result.model.to_json();
  j["training"] = {{"initial_loss", result.loss_trace.empty() ? 0.0 : result.loss_trace.front()},
                   {"final_loss", result.loss_trace.empty() ? 0.0 : result.loss_trace.back()},
                   {"resamples", result.resamples},
                   {"positives", result.final_pairs.positives.size()},
                   {"negatives", result.final_pairs.negatives.size()}};
  auto out = open_output(cfg.model);
  out << j.dump() << '\n';
  nlohmann::ordered_json s;
  s["iterations"] = cfg.cdr.iterations;
  s["initial_loss"] = j["training"]["initial_loss"];
  s["final_loss"] = j["training"]["final_loss"];
  s["checksum"] = result.model.checksum();
  s["output"] = cfg.model.string();
  return s;
}

nlohmann::ordered_json run_reduce(const RunConfig& cfg) {
  auto model = load_model(cfg.model);
  auto store = load_store(cfg.store);
  auto reduced = reduce(model, store);
  save_store(reduced, cfg.reduced_store);
  nlohmann::ordered_json s;
  s["reduced"] = reduced.size();
  s["dim"] = reduced.dim();
  s["output"] = cfg.reduced_store.string();
  return s;
}

void add_new_as(Asn asn, const AsGraph& graph, const AsMetadata& meta, const DescribeOptions& describe,
                EmbeddingProvider& provider, const ReductionModel& model, EmbeddingStore& reduced) {
  auto segments = render_description(asn, graph, meta, describe);
  auto emb = embed_as(segments, provider);
  reduced.put(asn, model.forward(emb.vec));
}

nlohmann::ordered_json run_detect(const RunConfig& cfg, EmbeddingProvider& provider) {
  auto changes = load_changes(cfg.changes);
  auto reduced = load_store(cfg.reduced_store);

  std::set<Asn> missing;
  for (const auto& c : changes) {
    for (const auto* p : {&c.historical_path, &c.updated_path}) {
      for (Asn a : asns_in(*p)) {
        if (!reduced.contains(a)) missing.insert(a);
      }
    }
  }
  std::size_t fallback = 0;
  if (cfg.fallback_embed && !missing.empty()) {
    auto model = load_model(cfg.model);
    const AsGraph empty;
    for (Asn a : missing) {
      AsMetadata bare;
      bare.asn = a;
      add_new_as(a, empty, bare, describe_options(cfg), provider, model, reduced);
      ++fallback;
    }
  }

  ScoreStats stats;
  auto scored = score_changes(changes, reduced, cfg.jobs, &stats);
  auto windows = detect(scored, cfg.window_secs);
  std::size_t flagged = 0;
  auto out = open_output(cfg.scored);
  for (const auto& s : scored) {
    flagged += s.flagged;
    out << scored_change_to_json(s).dump() << '\n';
  }
  nlohmann::ordered_json s;
  s["changes"] = changes.size();
  s["scored"] = stats.scored;
  s["vantage_mismatch"] = stats.vantage_mismatch;
  s["unresolved"] = stats.unresolved;
  s["fallback_embedded"] = fallback;
  s["windows"] = windows.size();
  s["flagged"] = flagged;
  s["output"] = cfg.scored.string();
  return s;
}

nlohmann::ordered_json run_aggregate(const RunConfig& cfg) {
  std::vector<ScoredChange> scored;
  {
    auto in = open_input(cfg.scored);
    for_each_line(in, [&](const nlohmann::json& j) { scored.push_back(scored_change_from_json(j)); });
  }
  auto graph = load_graph(cfg);
  auto orgs = org_map_from_metadata(load_metadata(cfg));
  std::optional<RoaTable> roas;
  if (!cfg.roa.empty()) {
    auto in = open_input(cfg.roa);
    ParseStats stats;
    roas = read_roas(in, stats);
  }
  AsnRanges reserved = default_reserved_asns();
  if (!cfg.reserved_asns.empty()) {
    auto in = open_input(cfg.reserved_asns);
    ParseStats stats;
    reserved = read_asn_ranges(in, stats);
  }

  auto prefix_events = build_prefix_events(scored, cfg.window_secs, cfg.candidate_mode);
  const std::size_t n_prefix_events = prefix_events.size();
  auto events = link_events(std::move(prefix_events));
  ClassifyContext ctx{&graph, &orgs, roas ? &*roas : nullptr, &reserved};
  for (auto& e : events) classify_event(e, ctx);

  std::size_t flagged = 0;
  for (const auto& s : scored) flagged += s.flagged;
  nlohmann::ordered_json run;
  run["window_secs"] = cfg.window_secs;
  run["candidate_mode"] = cfg.candidate_mode == CandidateMode::kUnion ? "union" : "intersection";
  run["seed"] = cfg.seed;
  run["scored_changes"] = scored.size();
  run["flagged_changes"] = flagged;
  run["prefix_events"] = n_prefix_events;
  run["rpki"] = roas.has_value();
  auto report = emit_report(events, run);
  {
    auto out = open_output(cfg.report);
    out << report.dump(2) << '\n';
  }
  {
    auto out = open_output(cfg.report_text);
    out << render_report_text(report);
  }
  nlohmann::ordered_json s;
  s["events"] = events.size();
  s["output"] = cfg.report.string();
  return s;
}

nlohmann::ordered_json run_all(const RunConfig& cfg, EmbeddingProvider& provider) {
  nlohmann::ordered_json s;
  s["monitor"] = stage("monitor", [&] { return run_monitor(cfg); });
  s["profile"] = stage("profile", [&] { return run_profile(cfg); });
  s["embed"] = stage("embed", [&] { return run_embed(cfg, provider); });
  if (cfg.train_cdr) s["train-cdr"] = stage("train-cdr", [&] { return run_train(cfg); });
  s["reduce"] = stage("reduce", [&] { return run_reduce(cfg); });
  s["detect"] = stage("detect", [&] { return run_detect(cfg, provider); });
  s["aggregate"] = stage("aggregate", [&] { return run_aggregate(cfg); });
  s["report"] = cfg.report.string();
  return s;
}

}  // namespace pathsentry
