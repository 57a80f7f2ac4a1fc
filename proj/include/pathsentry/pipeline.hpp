#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "pathsentry/aggregator.hpp"
#include "pathsentry/cdr.hpp"
#include "pathsentry/embedder.hpp"

namespace pathsentry {

namespace fs = std::filesystem;

// Settings for every pipeline stage. Relative paths in a config file resolve
// against the file's directory; stage outputs default to files in work_dir.
struct RunConfig {
  fs::path rib;
  fs::path updates;
  fs::path relationships;
  fs::path metadata;
  fs::path roa;            // optional
  fs::path reserved_asns;  // optional; the shipped ranges otherwise

  fs::path work_dir = "work";
  fs::path changes;
  fs::path segments;
  fs::path store;
  fs::path model;
  fs::path reduced_store;
  fs::path scored;
  fs::path report;
  fs::path report_text;

  std::int64_t window_secs = 3600;
  std::size_t neighbor_batch_size = 50;
  bool auto_batch = true;
  std::size_t max_segment_chars = 8000;

  std::string provider = "mock";  // mock | http
  std::size_t mock_dim = 64;
  std::string endpoint;           // overrides EMBED_ENDPOINT
  std::string model_name;         // overrides EMBED_MODEL
  std::size_t embed_batch = 16;
  std::size_t in_flight = 4;

  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  std::int64_t time_slack = 0;

  bool train_cdr = true;
  bool fallback_embed = true;
  CandidateMode candidate_mode = CandidateMode::kUnion;
  CdrHyper cdr;

  // Fills unset output paths from work_dir and checks value ranges. Throws ConfigError.
  void finalize();
};

// Throws ConfigError for unknown keys, wrong types or invalid values.
RunConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir);
RunConfig load_config(const fs::path& file);

std::unique_ptr<EmbeddingProvider> make_provider(const RunConfig& cfg);

// Individual stages; each reads its inputs from and writes its output to the
// paths in the config, and returns a short summary for logging.
nlohmann::ordered_json run_monitor(const RunConfig& cfg);
nlohmann::ordered_json run_profile(const RunConfig& cfg);
nlohmann::ordered_json run_embed(const RunConfig& cfg, EmbeddingProvider& provider);
nlohmann::ordered_json run_train(const RunConfig& cfg);
nlohmann::ordered_json run_reduce(const RunConfig& cfg);
nlohmann::ordered_json run_detect(const RunConfig& cfg, EmbeddingProvider& provider);
nlohmann::ordered_json run_aggregate(const RunConfig& cfg);

// monitor -> profile -> embed -> train (if enabled) -> reduce -> detect ->
// aggregate. A failing stage is rethrown with its name prepended.
nlohmann::ordered_json run_all(const RunConfig& cfg, EmbeddingProvider& provider);

// Describes, embeds and reduces one AS on its own and adds it to `reduced`.
// Nothing else in the store changes.
void add_new_as(Asn asn, const AsGraph& graph, const AsMetadata& meta, const DescribeOptions& describe,
                EmbeddingProvider& provider, const ReductionModel& model, EmbeddingStore& reduced);

// Throw ConfigError naming the path when it cannot be opened.
std::ifstream open_input(const fs::path& path);
std::ofstream open_output(const fs::path& path);

}  // namespace pathsentry
