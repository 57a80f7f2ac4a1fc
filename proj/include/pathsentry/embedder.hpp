#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pathsentry/as_path.hpp"
#include "pathsentry/as_profile.hpp"

namespace pathsentry {

using Vector = std::vector<double>;

struct Embedding {
  Asn asn = 0;
  Vector vec;
};

// ASN -> vector, homogeneous in dimension, provider and template version.
// Reduced stores additionally record the checksum of the model that produced them.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(std::size_t dim, std::string provider_id, std::string template_version);

  // Throws DataError on a dimension mismatch or non-finite component.
  void put(Asn asn, Vector vec);
  const Vector* find(Asn asn) const;
  bool contains(Asn asn) const { return entries_.count(asn) > 0; }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t dim() const { return dim_; }
  const std::string& provider_id() const { return provider_id_; }
  const std::string& template_version() const { return template_version_; }
  const std::map<Asn, Vector>& entries() const { return entries_; }

  bool reduced() const { return reduced_; }
  const std::string& model_checksum() const { return model_checksum_; }
  void mark_reduced(std::string model_checksum);

  // Header line followed by one {"asn","vec"} object per line, ascending ASN.
  void save(std::ostream& out) const;
  static EmbeddingStore load(std::istream& in);

  bool operator==(const EmbeddingStore&) const = default;

 private:
  std::size_t dim_ = 0;
  std::string provider_id_;
  std::string template_version_;
  bool reduced_ = false;
  std::string model_checksum_;
  std::map<Asn, Vector> entries_;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  // Output dimension; 0 when not known before the first call.
  virtual std::size_t dim() const = 0;
  // One vector per text, in input order. Throws ProviderError.
  virtual std::vector<Vector> embed(std::span<const std::string> texts) = 0;
};

// Deterministic stand-in for a real model: a counter-based generator keyed by
// a 64-bit hash of (seed, text) yields `dim` values uniform in [-1, 1].
Vector mock_embed(std::string_view text, std::size_t dim, std::uint64_t seed);

class MockProvider : public EmbeddingProvider {
 public:
  MockProvider(std::size_t dim, std::uint64_t seed);

  std::string id() const override;
  std::size_t dim() const override { return dim_; }
  std::vector<Vector> embed(std::span<const std::string> texts) override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// Mean of the per-segment vectors. All segments must belong to one AS. A
// provider failure propagates; nothing partial is returned.
Embedding embed_as(std::span<const PromptSegment> segments, EmbeddingProvider& provider);

struct EmbedReport {
  std::size_t embedded = 0;
  std::vector<Asn> failed;
};

// Embeds every AS in `segments` (grouped by ASN) into `store`, running up to
// `in_flight` ASes concurrently. Failed ASes are reported and left out.
EmbedReport embed_all(std::span<const PromptSegment> segments, EmbeddingProvider& provider, EmbeddingStore& store,
                      std::size_t in_flight = 4);

}  // namespace pathsentry
