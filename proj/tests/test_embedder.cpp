#include <gtest/gtest.h>

#include <atomic>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "pathsentry/embedder.hpp"
#include "pathsentry/errors.hpp"
#include "pathsentry/http_provider.hpp"

using namespace pathsentry;

namespace {

// Returns fixed vectors keyed by segment text.
class TableProvider : public EmbeddingProvider {
 public:
  explicit TableProvider(std::map<std::string, Vector> table) : table_(std::move(table)) {}
  std::string id() const override { return "table"; }
  std::size_t dim() const override { return table_.begin()->second.size(); }
  std::vector<Vector> embed(std::span<const std::string> texts) override {
    std::vector<Vector> out;
    for (const auto& t : texts) {
      if (t == "fail") throw ProviderError(ProviderError::Kind::kOther, false, "refused");
      out.push_back(table_.at(t));
    }
    return out;
  }

 private:
  std::map<std::string, Vector> table_;
};

std::vector<PromptSegment> segments(Asn asn, std::vector<std::string> texts) {
  std::vector<PromptSegment> out;
  for (std::size_t i = 0; i < texts.size(); ++i) out.push_back({asn, i + 1, texts.size(), texts[i], "v"});
  return out;
}

// Local embeddings endpoint whose behaviour is set per test.
class FakeEndpoint {
 public:
  using Handler = std::function<void(int call, const nlohmann::json& body, httplib::Response& res)>;

  explicit FakeEndpoint(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      handler_(calls_++, nlohmann::json::parse(req.body), res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }

  HttpEndpoint endpoint() const {
    HttpEndpoint ep;
    ep.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    ep.model = "test-model";
    ep.backoff = std::chrono::milliseconds(1);
    ep.timeout = std::chrono::milliseconds(2000);
    return ep;
  }
  int calls() const { return calls_; }

 private:
  Handler handler_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> calls_{0};
};

// Vector for input i is (i, i+0.5).
std::string reply_reversed(const nlohmann::json& body, std::size_t dim = 2) {
  nlohmann::json data = nlohmann::json::array();
  const auto n = body.at("input").size();
  for (std::size_t k = n; k-- > 0;) {
    std::vector<double> v(dim, 0.0);
    v[0] = static_cast<double>(k);
    if (dim > 1) v[1] = k + 0.5;
    data.push_back({{"index", k}, {"embedding", v}});
  }
  return nlohmann::json{{"data", data}}.dump();
}

}  // namespace

TEST(MockEmbed, DeterministicAndInRange) {
  auto a = mock_embed("hello", 3, 7);
  EXPECT_EQ(a, mock_embed("hello", 3, 7));
  ASSERT_EQ(a.size(), 3u);
  for (double x : a) {
    EXPECT_GE(x, -1.0);
    EXPECT_LE(x, 1.0);
  }
  EXPECT_NE(a, mock_embed("hello", 3, 8));
}

TEST(MockEmbed, OneByteDifferenceChangesVector) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 1000; ++i) {
    std::string text(1 + rng() % 64, ' ');
    for (auto& c : text) c = static_cast<char>(rng());
    std::string other = text;
    auto pos = rng() % other.size();
    other[pos] = static_cast<char>(other[pos] ^ (1 + rng() % 255));
    ASSERT_NE(mock_embed(text, 16, 1), mock_embed(other, 16, 1)) << i;
  }
}

TEST(EmbedAs, SingleSegmentIsIdentity) {
  TableProvider p({{"a", {0.25, -1.5}}});
  auto e = embed_as(segments(5, {"a"}), p);
  EXPECT_EQ(e.asn, 5u);
  EXPECT_EQ(e.vec, (Vector{0.25, -1.5}));
}

TEST(EmbedAs, MeanOfTwoSegments) {
  TableProvider p({{"a", {0, 0}}, {"b", {2, 2}}});
  EXPECT_EQ(embed_as(segments(5, {"a", "b"}), p).vec, (Vector{1, 1}));
}

TEST(EmbedAs, MeanLinearityWithinTolerance) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t m = 1 + rng() % 8;
    std::map<std::string, Vector> table;
    std::vector<std::string> texts;
    Vector sum(12, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      Vector v(12);
      for (std::size_t d = 0; d < 12; ++d) sum[d] += (v[d] = u(rng));
      texts.push_back("s" + std::to_string(k));
      table[texts.back()] = v;
    }
    TableProvider p(table);
    auto got = embed_as(segments(1, texts), p).vec;
    for (std::size_t d = 0; d < 12; ++d) EXPECT_NEAR(got[d], sum[d] / static_cast<double>(m), 1e-12);
  }
}

TEST(EmbedAs, RejectsEmptyAndMixedSegments) {
  TableProvider p({{"a", {1}}});
  EXPECT_THROW(embed_as({}, p), DataError);
  auto segs = segments(1, {"a"});
  segs.push_back({2, 1, 1, "a", "v"});
  EXPECT_THROW(embed_as(segs, p), DataError);
}

TEST(EmbedAll, FailedAsIsReportedAndNotStored) {
  TableProvider p({{"a", {1, 1}}, {"b", {3, 3}}});
  auto segs = segments(1, {"a", "b"});
  for (auto s : segments(2, {"a", "fail"})) segs.push_back(s);
  EmbeddingStore store(2, p.id(), "v");
  auto report = embed_all(segs, p, store, 2);
  EXPECT_EQ(report.embedded, 1u);
  EXPECT_EQ(report.failed, (std::vector<Asn>{2}));
  EXPECT_TRUE(store.contains(1));
  EXPECT_FALSE(store.contains(2));
  EXPECT_EQ(*store.find(1), (Vector{2, 2}));
}

TEST(EmbedAll, NewAsTouchesNoOtherEntry) {
  MockProvider p(8, 3);
  EmbeddingStore store(8, p.id(), "v");
  std::vector<PromptSegment> segs;
  for (Asn a = 1; a <= 20; ++a) segs.push_back({a, 1, 1, "as " + std::to_string(a), "v"});
  embed_all(segs, p, store);
  auto before = store;
  std::vector<PromptSegment> fresh{{99, 1, 1, "as 99", "v"}};
  embed_all(fresh, p, store);
  EXPECT_EQ(store.size(), before.size() + 1);
  for (const auto& [asn, vec] : before.entries()) EXPECT_EQ(*store.find(asn), vec);
}

TEST(EmbeddingStore, SaveLoadIsBitExact) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  EmbeddingStore store(5, "mock:5:1", "as-desc-v1");
  for (Asn a = 1; a <= 50; ++a) {
    Vector v(5);
    for (auto& x : v) x = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
    store.put(a * 7, v);
  }
  std::stringstream buf;
  store.save(buf);
  auto back = EmbeddingStore::load(buf);
  EXPECT_EQ(back, store);

  store.mark_reduced("abc");
  std::stringstream buf2;
  store.save(buf2);
  auto back2 = EmbeddingStore::load(buf2);
  EXPECT_TRUE(back2.reduced());
  EXPECT_EQ(back2.model_checksum(), "abc");
}

TEST(EmbeddingStore, RejectsWrongDimAndNonFinite) {
  EmbeddingStore store(2, "p", "v");
  EXPECT_THROW(store.put(1, {1, 2, 3}), DataError);
  EXPECT_THROW(store.put(1, {1, std::nan("")}), DataError);
}

TEST(HttpEmbed, MapsItemsByIndex) {
  FakeEndpoint server([](int, const nlohmann::json& body, httplib::Response& res) {
    EXPECT_EQ(body.at("model"), "test-model");
    res.set_content(reply_reversed(body), "application/json");
  });
  std::vector<std::string> texts{"x", "y"};
  auto out = http_embed(texts, server.endpoint());
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], (Vector{0, 0.5}));
  EXPECT_EQ(out[1], (Vector{1, 1.5}));
}

TEST(HttpEmbed, SplitsIntoBatches) {
  FakeEndpoint server([](int, const nlohmann::json& body, httplib::Response& res) {
    EXPECT_LE(body.at("input").size(), 3u);
    res.set_content(reply_reversed(body), "application/json");
  });
  auto ep = server.endpoint();
  ep.max_batch = 3;
  std::vector<std::string> texts(7, "t");
  HttpStats stats;
  auto out = http_embed(texts, ep, &stats);
  EXPECT_EQ(out.size(), 7u);
  EXPECT_EQ(stats.requests, 3u);
  EXPECT_EQ(out[4][0], 1.0);
}

TEST(HttpEmbed, TimeoutThenSuccessOnRetry) {
  FakeEndpoint server([](int call, const nlohmann::json& body, httplib::Response& res) {
    if (call == 0) std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content(reply_reversed(body), "application/json");
  });
  auto ep = server.endpoint();
  ep.timeout = std::chrono::milliseconds(200);
  HttpStats stats;
  std::vector<std::string> texts{"a"};
  auto out = http_embed(texts, ep, &stats);
  EXPECT_EQ(out.size(), 1u);
  EXPECT_EQ(stats.retries, 1u);
  EXPECT_EQ(stats.requests, 2u);
}

TEST(HttpEmbed, ServerErrorsRetryThenFail) {
  FakeEndpoint server([](int, const nlohmann::json&, httplib::Response& res) { res.status = 503; });
  auto ep = server.endpoint();
  ep.max_retries = 2;
  std::vector<std::string> texts{"a"};
  try {
    http_embed(texts, ep);
    FAIL() << "expected ProviderError";
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.kind(), ProviderError::Kind::kStatus);
    EXPECT_TRUE(e.retryable());
  }
  EXPECT_EQ(server.calls(), 3);
}

TEST(HttpEmbed, ClientErrorIsFatalWithoutRetry) {
  FakeEndpoint server([](int, const nlohmann::json&, httplib::Response& res) { res.status = 401; });
  std::vector<std::string> texts{"a"};
  try {
    http_embed(texts, server.endpoint());
    FAIL() << "expected ProviderError";
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.kind(), ProviderError::Kind::kStatus);
    EXPECT_FALSE(e.retryable());
  }
  EXPECT_EQ(server.calls(), 1);
}

TEST(HttpEmbed, DimensionMismatchIsFatal) {
  FakeEndpoint server([](int, const nlohmann::json& body, httplib::Response& res) {
    res.set_content(reply_reversed(body, 1024), "application/json");
  });
  auto ep = server.endpoint();
  ep.expected_dim = 768;
  std::vector<std::string> texts{"a"};
  try {
    http_embed(texts, ep);
    FAIL() << "expected ProviderError";
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.kind(), ProviderError::Kind::kDimMismatch);
    EXPECT_FALSE(e.retryable());
  }
}

TEST(HttpEmbed, MalformedBodyIsFatal) {
  FakeEndpoint server([](int, const nlohmann::json&, httplib::Response& res) {
    res.set_content(R"({"data":[{"index":5,"embedding":[1]}]})", "application/json");
  });
  std::vector<std::string> texts{"a"};
  try {
    http_embed(texts, server.endpoint());
    FAIL() << "expected ProviderError";
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.kind(), ProviderError::Kind::kMalformed);
  }
}

TEST(HttpEmbed, EndpointFromEnv) {
  ::unsetenv("EMBED_ENDPOINT");
  EXPECT_THROW(endpoint_from_env(), ConfigError);
  ::setenv("EMBED_ENDPOINT", "http://localhost:1/v1", 1);
  ::setenv("EMBED_MODEL", "m", 1);
  ::setenv("EMBED_API_KEY", "k", 1);
  auto ep = endpoint_from_env();
  EXPECT_EQ(ep.base_url, "http://localhost:1/v1");
  EXPECT_EQ(ep.model, "m");
  EXPECT_EQ(ep.api_key, "k");
  ::unsetenv("EMBED_ENDPOINT");
  ::unsetenv("EMBED_MODEL");
  ::unsetenv("EMBED_API_KEY");
}
