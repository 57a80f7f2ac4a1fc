#pragma once

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pathsentry/embedder.hpp"

namespace pathsentry {

struct HttpEndpoint {
  std::string base_url;  // e.g. http://127.0.0.1:8080/v1
  std::string model;
  std::optional<std::string> api_key;
  std::size_t max_batch = 16;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  std::chrono::milliseconds backoff{500};  // doubled after every failed attempt
  std::size_t expected_dim = 0;            // 0 accepts whatever the first response returns
};

// Reads EMBED_ENDPOINT, EMBED_MODEL and EMBED_API_KEY. Throws ConfigError when
// the endpoint is unset.
HttpEndpoint endpoint_from_env();

struct HttpStats {
  std::size_t requests = 0;
  std::size_t retries = 0;
};

// POSTs `{"model", "input"}` to <base>/embeddings in chunks of max_batch and
// maps the `data` items back by `index`. Retryable failures (timeouts,
// transport errors, 429 and 5xx) are retried with exponential backoff; other
// statuses, malformed bodies and dimension mismatches are fatal.
std::vector<Vector> http_embed(std::span<const std::string> texts, const HttpEndpoint& endpoint,
                               HttpStats* stats = nullptr);

class HttpProvider : public EmbeddingProvider {
 public:
  explicit HttpProvider(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

  std::string id() const override { return "http:" + endpoint_.model; }
  std::size_t dim() const override { return endpoint_.expected_dim; }
  std::vector<Vector> embed(std::span<const std::string> texts) override {
    return http_embed(texts, endpoint_);
  }

 private:
  HttpEndpoint endpoint_;
};

}  // namespace pathsentry
