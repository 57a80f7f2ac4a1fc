#include "pathsentry/http_provider.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "pathsentry/errors.hpp"

namespace pathsentry {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // "" or "/prefix"
};

SplitUrl split_url(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint '" + url + "' has no scheme");
  auto slash = url.find('/', scheme + 3);
  SplitUrl out;
  out.origin = url.substr(0, slash);
  out.path = slash == std::string::npos ? "" : url.substr(slash);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

std::vector<Vector> post_once(httplib::Client& client, const std::string& path,
                              std::span<const std::string> texts, const HttpEndpoint& ep) {
  nlohmann::json body = {{"model", ep.model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  httplib::Headers headers;
  if (ep.api_key && !ep.api_key->empty()) headers.emplace("Authorization", "Bearer " + *ep.api_key);

  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    auto err = res.error();
    bool timeout = err == httplib::Error::Read || err == httplib::Error::Write ||
                   err == httplib::Error::ConnectionTimeout;
    throw ProviderError(timeout ? ProviderError::Kind::kTimeout : ProviderError::Kind::kTransport, true,
                        "embedding request failed: " + httplib::to_string(err));
  }
  if (res->status != 200) {
    bool retryable = res->status == 429 || res->status >= 500;
    throw ProviderError(ProviderError::Kind::kStatus, retryable,
                        "embedding endpoint returned HTTP " + std::to_string(res->status));
  }

  std::vector<Vector> out(texts.size());
  std::vector<bool> seen(texts.size(), false);
  try {
    auto j = nlohmann::json::parse(res->body);
    const auto& data = j.at("data");
    if (!data.is_array() || data.size() != texts.size()) {
      throw ProviderError(ProviderError::Kind::kMalformed, false, "response `data` has the wrong length");
    }
    for (const auto& item : data) {
      auto index = item.at("index").get<std::size_t>();
      if (index >= texts.size() || seen[index]) {
        throw ProviderError(ProviderError::Kind::kMalformed, false, "response index out of range or repeated");
      }
      seen[index] = true;
      out[index] = item.at("embedding").get<Vector>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(ProviderError::Kind::kMalformed, false, std::string("malformed response: ") + e.what());
  }

  const std::size_t dim = ep.expected_dim ? ep.expected_dim : out.front().size();
  for (const auto& v : out) {
    if (v.size() != dim) {
      throw ProviderError(ProviderError::Kind::kDimMismatch, false,
                          "response dimension " + std::to_string(v.size()) + " does not match expected " +
                              std::to_string(dim));
    }
  }
  return out;
}

}  // namespace

HttpEndpoint endpoint_from_env() {
  HttpEndpoint ep;
  const char* url = std::getenv("EMBED_ENDPOINT");
  if (!url || !*url) throw ConfigError("EMBED_ENDPOINT is not set");
  ep.base_url = url;
  if (const char* model = std::getenv("EMBED_MODEL")) ep.model = model;
  if (const char* key = std::getenv("EMBED_API_KEY"); key && *key) ep.api_key = key;
  return ep;
}

std::vector<Vector> http_embed(std::span<const std::string> texts, const HttpEndpoint& ep, HttpStats* stats) {
  if (ep.max_batch == 0) throw ConfigError("max_batch must be positive");
  auto url = split_url(ep.base_url);
  const std::string path = url.path + "/embeddings";

  std::vector<Vector> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += ep.max_batch) {
    auto chunk = texts.subspan(start, std::min(ep.max_batch, texts.size() - start));
    auto delay = ep.backoff;
    for (int attempt = 0;; ++attempt) {
      httplib::Client client(url.origin);
      auto secs = std::chrono::duration_cast<std::chrono::seconds>(ep.timeout);
      auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(ep.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      try {
        if (stats) ++stats->requests;
        auto vectors = post_once(client, path, chunk, ep);
        if (attempt > 0) spdlog::info("embedding request succeeded after {} retries", attempt);
        for (auto& v : vectors) out.push_back(std::move(v));
        break;
      } catch (const ProviderError& e) {
        if (!e.retryable() || attempt >= ep.max_retries) throw;
        if (stats) ++stats->retries;
        spdlog::warn("embedding request failed ({}), retry {} of {}", e.what(), attempt + 1, ep.max_retries);
        std::this_thread::sleep_for(delay);
        delay *= 2;
      }
    }
  }
  return out;
}

}  // namespace pathsentry
