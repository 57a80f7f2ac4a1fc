#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pathsentry/embedder.hpp"

namespace pathsentry {

struct AsPair {
  Asn a = 0;
  Asn b = 0;

  auto operator<=>(const AsPair&) const = default;
};

// Contrastive supervision. Positives share an organization and sit at or
// below the 25th percentile of intra-organization distances; negatives cross
// organizations and sit at or above the 75th percentile. Both lists sorted.
struct PairSet {
  std::vector<AsPair> positives;
  std::vector<AsPair> negatives;
  double q25 = 0.0;
  double q75 = 0.0;
};

struct PairOptions {
  double negative_multiple = 4.0;  // cap on |negatives| relative to |positives|
  std::uint64_t seed = 0;
  // Above this many cross-organization pairs, negatives are rejection-sampled.
  std::size_t max_enumerated = 4'000'000;
};

// Quantile with linear interpolation between order statistics.
double quantile_linear(std::vector<double> values, double q);

double euclidean(std::span<const double> x, std::span<const double> y);

// Throws DataError when fewer than two organizations have two members, or when
// either pair list comes out empty (the message carries a distance histogram).
PairSet construct_pairs(const std::map<Asn, Vector>& vectors, const OrgMap& orgs, const PairOptions& options);

struct CdrHyper {
  std::size_t hidden = 256;
  std::size_t out_dim = 16;
  double learning_rate = 1e-3;
  std::size_t iterations = 1000;
  std::size_t batch_pos = 64;
  std::size_t batch_neg = 64;
  std::size_t resample_every = 25;
  double negative_multiple = 4.0;
  // Use softplus(L_neg - L_pos) exactly as printed instead of softplus(L_pos - L_neg).
  bool literal_sign = false;
};

nlohmann::ordered_json hyper_to_json(const CdrHyper& h);
CdrHyper hyper_from_json(const nlohmann::json& j, CdrHyper defaults = {});

// Two-layer reduction network: tanh(x W1 + b1) W2 + b2.
class ReductionModel {
 public:
  ReductionModel() = default;
  // Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer.
  ReductionModel(std::size_t in_dim, const CdrHyper& hyper, std::uint64_t seed);

  std::size_t in_dim() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t hidden() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(w2.cols()); }

  // Rows are samples.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Vector forward(std::span<const double> x) const;

  // Hex FNV-1a digest over dimensions and weights.
  std::string checksum() const;

  nlohmann::ordered_json to_json() const;
  static ReductionModel from_json(const nlohmann::json& j);

  Eigen::MatrixXd w1;  // in_dim x hidden
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // hidden x out_dim
  Eigen::VectorXd b2;
  CdrHyper hyper;
  std::uint64_t seed = 0;
};

struct Gradients {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
};

double softplus(double x);

struct LossParts {
  double pos = 0.0;  // mean squared distance / d' over positive pairs
  double neg = 0.0;
  double loss = 0.0;
};

// Contrastive loss on already-reduced pairs: rows of pos_a/pos_b form the
// positive pairs, rows of neg_a/neg_b the negative pairs.
LossParts cdr_loss(const Eigen::MatrixXd& pos_a, const Eigen::MatrixXd& pos_b, const Eigen::MatrixXd& neg_a,
                   const Eigen::MatrixXd& neg_b, bool literal_sign = false);

// Loss of a mini-batch of original-space pairs and, if `grad` is non-null,
// its analytic gradient with respect to every model parameter.
double loss_and_gradients(const ReductionModel& model, const Eigen::MatrixXd& pos_a, const Eigen::MatrixXd& pos_b,
                          const Eigen::MatrixXd& neg_a, const Eigen::MatrixXd& neg_b, Gradients* grad);

struct TrainResult {
  ReductionModel model;
  // Loss over the whole current pair set, evaluated before each update.
  std::vector<double> loss_trace;
  std::size_t resamples = 0;
  PairSet final_pairs;
};

// Mini-batch gradient descent; the pair set is rebuilt from reduced-space
// distances every `resample_every` iterations. Deterministic for a seed.
// Throws DataError if the loss becomes non-finite.
TrainResult train(const EmbeddingStore& store, const OrgMap& orgs, const CdrHyper& hyper, std::uint64_t seed);

// Forward pass for every entry. Throws DataError on a dimension mismatch.
EmbeddingStore reduce(const ReductionModel& model, const EmbeddingStore& store);

}  // namespace pathsentry
