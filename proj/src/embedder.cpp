#include "pathsentry/embedder.hpp"

#include <atomic>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "pathsentry/errors.hpp"

namespace pathsentry {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

EmbeddingStore::EmbeddingStore(std::size_t dim, std::string provider_id, std::string template_version)
    : dim_(dim), provider_id_(std::move(provider_id)), template_version_(std::move(template_version)) {}

void EmbeddingStore::put(Asn asn, Vector vec) {
  if (vec.size() != dim_) {
    throw DataError("embedding for AS" + std::to_string(asn) + " has dimension " + std::to_string(vec.size()) +
                    ", store expects " + std::to_string(dim_));
  }
  for (double v : vec) {
    if (!std::isfinite(v)) throw DataError("embedding for AS" + std::to_string(asn) + " is not finite");
  }
  entries_[asn] = std::move(vec);
}

const Vector* EmbeddingStore::find(Asn asn) const {
  auto it = entries_.find(asn);
  return it == entries_.end() ? nullptr : &it->second;
}

void EmbeddingStore::mark_reduced(std::string model_checksum) {
  reduced_ = true;
  model_checksum_ = std::move(model_checksum);
}

void EmbeddingStore::save(std::ostream& out) const {
  nlohmann::ordered_json header;
  header["dim"] = dim_;
  header["provider_id"] = provider_id_;
  header["template_version"] = template_version_;
  if (reduced_) {
    header["reduced"] = true;
    header["model_checksum"] = model_checksum_;
  }
  out << header.dump() << '\n';
  for (const auto& [asn, vec] : entries_) {
    nlohmann::ordered_json row;
    row["asn"] = asn;
    row["vec"] = vec;
    out << row.dump() << '\n';
  }
}

EmbeddingStore EmbeddingStore::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("embedding store is empty");
  try {
    auto header = nlohmann::json::parse(line);
    EmbeddingStore store(header.at("dim").get<std::size_t>(), header.at("provider_id").get<std::string>(),
                         header.at("template_version").get<std::string>());
    if (header.value("reduced", false)) store.mark_reduced(header.value("model_checksum", std::string()));
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto row = nlohmann::json::parse(line);
      store.put(row.at("asn").get<Asn>(), row.at("vec").get<Vector>());
    }
    return store;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("embedding store: ") + e.what());
  }
}

Vector mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  unsigned char seed_bytes[8];
  for (int i = 0; i < 8; ++i) seed_bytes[i] = static_cast<unsigned char>(seed >> (8 * i));
  h = fnv1a(h, seed_bytes, sizeof(seed_bytes));
  h = fnv1a(h, text.data(), text.size());

  Vector out(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    std::uint64_t r = splitmix64(h + 0x9e3779b97f4a7c15ull * (i + 1));
    double u = static_cast<double>(r >> 11) * 0x1.0p-53;
    out[i] = 2.0 * u - 1.0;
  }
  return out;
}

MockProvider::MockProvider(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw ConfigError("mock provider dimension must be at least 1");
}

std::string MockProvider::id() const { return "mock-d" + std::to_string(dim_) + "-s" + std::to_string(seed_); }

std::vector<Vector> MockProvider::embed(std::span<const std::string> texts) {
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(mock_embed(t, dim_, seed_));
  return out;
}

Embedding embed_as(std::span<const PromptSegment> segments, EmbeddingProvider& provider) {
  if (segments.empty()) throw DataError("no segments to embed");
  const Asn asn = segments.front().asn;
  std::vector<std::string> texts;
  texts.reserve(segments.size());
  for (const auto& s : segments) {
    if (s.asn != asn) throw DataError("segments for AS" + std::to_string(asn) + " and AS" + std::to_string(s.asn) + " mixed");
    texts.push_back(s.text);
  }
  auto vectors = provider.embed(texts);
  if (vectors.size() != texts.size()) {
    throw ProviderError(ProviderError::Kind::kMalformed, false, "provider returned the wrong number of vectors");
  }
  const std::size_t dim = provider.dim() ? provider.dim() : vectors.front().size();
  Vector mean(dim, 0.0);
  for (const auto& v : vectors) {
    if (v.size() != dim) {
      throw ProviderError(ProviderError::Kind::kDimMismatch, false,
                          "segment embedding has dimension " + std::to_string(v.size()) + ", expected " +
                              std::to_string(dim));
    }
    for (std::size_t i = 0; i < dim; ++i) mean[i] += v[i];
  }
  const double m = static_cast<double>(vectors.size());
  for (auto& x : mean) x /= m;
  return {asn, std::move(mean)};
}

EmbedReport embed_all(std::span<const PromptSegment> segments, EmbeddingProvider& provider, EmbeddingStore& store,
                      std::size_t in_flight) {
  // Group contiguous runs; callers pass segments sorted by (asn, index).
  std::vector<std::span<const PromptSegment>> groups;
  for (std::size_t i = 0; i < segments.size();) {
    std::size_t j = i;
    while (j < segments.size() && segments[j].asn == segments[i].asn) ++j;
    groups.push_back(segments.subspan(i, j - i));
    i = j;
  }

  std::vector<std::optional<Embedding>> results(groups.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t g = next++; g < groups.size(); g = next++) {
      try {
        results[g] = embed_as(groups[g], provider);
      } catch (const ProviderError& e) {
        spdlog::error("embedding AS{} failed: {}", groups[g].front().asn, e.what());
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(in_flight, groups.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  EmbedReport report;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (results[g]) {
      store.put(results[g]->asn, std::move(results[g]->vec));
      ++report.embedded;
    } else {
      report.failed.push_back(groups[g].front().asn);
    }
  }
  return report;
}

}  // namespace pathsentry
