#include "pathsentry/cdr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "pathsentry/errors.hpp"
#include "random_util.hpp"

namespace pathsentry {

namespace {

std::string histogram(const std::vector<double>& values) {
  if (values.empty()) return "(no intra-organization pairs)";
  auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  constexpr int kBins = 10;
  std::vector<std::size_t> bins(kBins, 0);
  double width = (*hi - *lo) / kBins;
  for (double v : values) {
    int b = width > 0 ? static_cast<int>((v - *lo) / width) : 0;
    ++bins[std::clamp(b, 0, kBins - 1)];
  }
  std::ostringstream out;
  out << "intra-organization distance histogram [" << *lo << ", " << *hi << "]:";
  for (auto c : bins) out << ' ' << c;
  return out.str();
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

template <typename M>
std::vector<double> row_major(const M& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

Eigen::MatrixXd from_row_major(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  if (v.size() != rows * cols) throw DataError("model weight array has the wrong size");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r * cols + c];
  }
  return m;
}

}  // namespace

double quantile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  double pos = q * static_cast<double>(values.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  auto hi = std::min(lo + 1, values.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double euclidean(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - y[i];
    s += d * d;
  }
  return std::sqrt(s);
}

PairSet construct_pairs(const std::map<Asn, Vector>& vectors, const OrgMap& orgs, const PairOptions& options) {
  std::map<std::string, std::vector<Asn>> members;
  std::vector<std::pair<Asn, const std::string*>> labelled;
  for (const auto& [asn, vec] : vectors) {
    if (auto it = orgs.find(asn); it != orgs.end()) {
      members[it->second].push_back(asn);
      labelled.emplace_back(asn, &it->second);
    }
  }
  std::size_t usable = 0;
  for (const auto& [_, list] : members) usable += list.size() >= 2;
  if (usable < 2) {
    throw DataError("insufficient supervision: need at least two organizations with two or more embedded ASes");
  }

  struct Scored {
    AsPair pair;
    double dist;
  };
  std::vector<Scored> intra;
  for (const auto& [_, list] : members) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      for (std::size_t j = i + 1; j < list.size(); ++j) {
        intra.push_back({{list[i], list[j]}, euclidean(vectors.at(list[i]), vectors.at(list[j]))});
      }
    }
  }
  std::vector<double> dists;
  dists.reserve(intra.size());
  for (const auto& s : intra) dists.push_back(s.dist);

  PairSet out;
  out.q25 = quantile_linear(dists, 0.25);
  out.q75 = quantile_linear(dists, 0.75);
  for (const auto& s : intra) {
    if (s.dist <= out.q25) out.positives.push_back(s.pair);
  }

  const auto cap = static_cast<std::size_t>(std::ceil(options.negative_multiple * out.positives.size()));
  std::vector<AsPair> candidates;
  const std::size_t n = labelled.size();
  std::size_t cross = 0;
  for (const auto& [_, list] : members) cross += list.size() * (n - list.size());
  cross /= 2;

  detail::Rng rng(options.seed ^ 0x5eedba5eull);
  if (cross <= options.max_enumerated) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (*labelled[i].second == *labelled[j].second) continue;
        if (euclidean(vectors.at(labelled[i].first), vectors.at(labelled[j].first)) >= out.q75) {
          candidates.push_back({labelled[i].first, labelled[j].first});
        }
      }
    }
  } else {
    std::set<AsPair> seen;
    const std::size_t budget = 20 * cap + 1000;
    for (std::size_t t = 0; t < budget && candidates.size() < cap; ++t) {
      auto i = detail::uniform_index(rng, n);
      auto j = detail::uniform_index(rng, n);
      if (*labelled[i].second == *labelled[j].second) continue;
      AsPair p{std::min(labelled[i].first, labelled[j].first), std::max(labelled[i].first, labelled[j].first)};
      if (!seen.insert(p).second) continue;
      if (euclidean(vectors.at(p.a), vectors.at(p.b)) >= out.q75) candidates.push_back(p);
    }
  }
  if (candidates.size() > cap) {
    detail::shuffle(candidates, rng);
    candidates.resize(cap);
  }
  out.negatives = std::move(candidates);
  std::sort(out.positives.begin(), out.positives.end());
  std::sort(out.negatives.begin(), out.negatives.end());

  if (out.positives.empty() || out.negatives.empty()) {
    throw DataError("pair construction produced " + std::to_string(out.positives.size()) + " positives and " +
                    std::to_string(out.negatives.size()) + " negatives; " + histogram(dists));
  }
  return out;
}

nlohmann::ordered_json hyper_to_json(const CdrHyper& h) {
  nlohmann::ordered_json j;
  j["hidden"] = h.hidden;
  j["out_dim"] = h.out_dim;
  j["learning_rate"] = h.learning_rate;
  j["iterations"] = h.iterations;
  j["batch_pos"] = h.batch_pos;
  j["batch_neg"] = h.batch_neg;
  j["resample_every"] = h.resample_every;
  j["negative_multiple"] = h.negative_multiple;
  j["literal_sign"] = h.literal_sign;
  return j;
}

CdrHyper hyper_from_json(const nlohmann::json& j, CdrHyper h) {
  h.hidden = j.value("hidden", h.hidden);
  h.out_dim = j.value("out_dim", h.out_dim);
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.iterations = j.value("iterations", h.iterations);
  h.batch_pos = j.value("batch_pos", h.batch_pos);
  h.batch_neg = j.value("batch_neg", h.batch_neg);
  h.resample_every = j.value("resample_every", h.resample_every);
  h.negative_multiple = j.value("negative_multiple", h.negative_multiple);
  h.literal_sign = j.value("literal_sign", h.literal_sign);
  return h;
}

ReductionModel::ReductionModel(std::size_t in_dim, const CdrHyper& h, std::uint64_t s) : hyper(h), seed(s) {
  if (h.out_dim >= in_dim) throw ConfigError("reduced dimension must be smaller than the input dimension");
  if (h.out_dim < 1 || h.hidden < 1) throw ConfigError("network dimensions must be positive");
  detail::Rng rng(seed);
  auto init = [&](Eigen::Index rows, Eigen::Index cols, double bound) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = detail::uniform(rng, -bound, bound);
    }
    return m;
  };
  const auto in = static_cast<Eigen::Index>(in_dim);
  const auto hid = static_cast<Eigen::Index>(h.hidden);
  const auto out = static_cast<Eigen::Index>(h.out_dim);
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(h.hidden));
  w1 = init(in, hid, bound1);
  b1 = init(hid, 1, bound1).col(0);
  w2 = init(hid, out, bound2);
  b2 = init(out, 1, bound2).col(0);
}

Eigen::MatrixXd ReductionModel::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd hidden_act = ((x * w1).rowwise() + b1.transpose()).array().tanh().matrix();
  return (hidden_act * w2).rowwise() + b2.transpose();
}

Vector ReductionModel::forward(std::span<const double> x) const {
  if (x.size() != in_dim()) throw DataError("input dimension does not match the reduction model");
  Eigen::MatrixXd row(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) row(0, static_cast<Eigen::Index>(i)) = x[i];
  Eigen::MatrixXd y = forward(row);
  return Vector(y.data(), y.data() + y.size());
}

std::string ReductionModel::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  std::uint64_t dims[3] = {in_dim(), hidden(), out_dim()};
  h = fnv1a(h, dims, sizeof(dims));
  for (const auto& v : {row_major(w1), row_major(b1), row_major(w2), row_major(b2)}) {
    h = fnv1a(h, v.data(), v.size() * sizeof(double));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::ordered_json ReductionModel::to_json() const {
  nlohmann::ordered_json j;
  j["in_dim"] = in_dim();
  j["hidden"] = hidden();
  j["out_dim"] = out_dim();
  j["seed"] = seed;
  j["hyper"] = hyper_to_json(hyper);
  j["activation"] = "tanh";
  j["w1"] = row_major(w1);
  j["b1"] = row_major(b1);
  j["w2"] = row_major(w2);
  j["b2"] = row_major(b2);
  return j;
}

ReductionModel ReductionModel::from_json(const nlohmann::json& j) {
  try {
    ReductionModel m;
    auto in = j.at("in_dim").get<std::size_t>();
    auto hid = j.at("hidden").get<std::size_t>();
    auto out = j.at("out_dim").get<std::size_t>();
    m.seed = j.value("seed", std::uint64_t{0});
    m.hyper = hyper_from_json(j.value("hyper", nlohmann::json::object()));
    m.w1 = from_row_major(j.at("w1").get<std::vector<double>>(), in, hid);
    m.b1 = from_row_major(j.at("b1").get<std::vector<double>>(), hid, 1).col(0);
    m.w2 = from_row_major(j.at("w2").get<std::vector<double>>(), hid, out);
    m.b2 = from_row_major(j.at("b2").get<std::vector<double>>(), out, 1).col(0);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

LossParts cdr_loss(const Eigen::MatrixXd& pos_a, const Eigen::MatrixXd& pos_b, const Eigen::MatrixXd& neg_a,
                   const Eigen::MatrixXd& neg_b, bool literal_sign) {
  const double dim = static_cast<double>(pos_a.cols());
  LossParts out;
  out.pos = (pos_a - pos_b).squaredNorm() / (static_cast<double>(pos_a.rows()) * dim);
  out.neg = (neg_a - neg_b).squaredNorm() / (static_cast<double>(neg_a.rows()) * dim);
  out.loss = softplus(literal_sign ? out.neg - out.pos : out.pos - out.neg);
  return out;
}

double loss_and_gradients(const ReductionModel& model, const Eigen::MatrixXd& pos_a, const Eigen::MatrixXd& pos_b,
                          const Eigen::MatrixXd& neg_a, const Eigen::MatrixXd& neg_b, Gradients* grad) {
  const Eigen::Index p = pos_a.rows();
  const Eigen::Index n = neg_a.rows();
  Eigen::MatrixXd x(2 * p + 2 * n, pos_a.cols());
  x << pos_a, pos_b, neg_a, neg_b;

  Eigen::MatrixXd h = ((x * model.w1).rowwise() + model.b1.transpose()).array().tanh().matrix();
  Eigen::MatrixXd y = (h * model.w2).rowwise() + model.b2.transpose();

  const double dim = static_cast<double>(model.out_dim());
  Eigen::MatrixXd dp = y.middleRows(0, p) - y.middleRows(p, p);
  Eigen::MatrixXd dn = y.middleRows(2 * p, n) - y.middleRows(2 * p + n, n);
  const double l_pos = dp.squaredNorm() / (static_cast<double>(p) * dim);
  const double l_neg = dn.squaredNorm() / (static_cast<double>(n) * dim);
  const bool literal = model.hyper.literal_sign;
  const double margin = literal ? l_neg - l_pos : l_pos - l_neg;
  const double loss = softplus(margin);
  if (!grad) return loss;

  const double s = sigmoid(margin);
  const double c_pos = (literal ? -s : s) * 2.0 / (static_cast<double>(p) * dim);
  const double c_neg = (literal ? s : -s) * 2.0 / (static_cast<double>(n) * dim);
  Eigen::MatrixXd dy(y.rows(), y.cols());
  dy.middleRows(0, p) = c_pos * dp;
  dy.middleRows(p, p) = -c_pos * dp;
  dy.middleRows(2 * p, n) = c_neg * dn;
  dy.middleRows(2 * p + n, n) = -c_neg * dn;

  grad->w2 = h.transpose() * dy;
  grad->b2 = dy.colwise().sum().transpose();
  Eigen::MatrixXd dpre = ((dy * model.w2.transpose()).array() * (1.0 - h.array().square())).matrix();
  grad->w1 = x.transpose() * dpre;
  grad->b1 = dpre.colwise().sum().transpose();
  return loss;
}

TrainResult train(const EmbeddingStore& store, const OrgMap& orgs, const CdrHyper& hyper, std::uint64_t seed) {
  if (store.empty()) throw DataError("cannot train on an empty embedding store");
  TrainResult result{ReductionModel(store.dim(), hyper, seed), {}, 0, {}};
  ReductionModel& model = result.model;

  std::vector<Asn> asns;
  std::map<Asn, Eigen::Index> row_of;
  Eigen::MatrixXd all(static_cast<Eigen::Index>(store.size()), static_cast<Eigen::Index>(store.dim()));
  for (const auto& [asn, vec] : store.entries()) {
    auto r = static_cast<Eigen::Index>(asns.size());
    row_of[asn] = r;
    asns.push_back(asn);
    for (std::size_t c = 0; c < vec.size(); ++c) all(r, static_cast<Eigen::Index>(c)) = vec[c];
  }

  const PairOptions opts{hyper.negative_multiple, seed, PairOptions{}.max_enumerated};
  PairSet pairs = construct_pairs(store.entries(), orgs, opts);

  auto gather = [&](const Eigen::MatrixXd& source, const std::vector<AsPair>& list, bool first) {
    std::vector<Eigen::Index> idx;
    idx.reserve(list.size());
    for (const auto& pr : list) idx.push_back(row_of.at(first ? pr.a : pr.b));
    return Eigen::MatrixXd(source(idx, Eigen::all));
  };

  detail::Rng rng(seed ^ 0x7a11ed5eedull);
  std::vector<AsPair> batch_pos(hyper.batch_pos);
  std::vector<AsPair> batch_neg(hyper.batch_neg);
  Gradients g;
  result.loss_trace.reserve(hyper.iterations);

  for (std::size_t it = 0; it < hyper.iterations; ++it) {
    Eigen::MatrixXd reduced = model.forward(all);
    if (it > 0 && hyper.resample_every > 0 && it % hyper.resample_every == 0) {
      std::map<Asn, Vector> current;
      for (std::size_t r = 0; r < asns.size(); ++r) {
        auto& v = current[asns[r]];
        v.resize(static_cast<std::size_t>(reduced.cols()));
        for (Eigen::Index c = 0; c < reduced.cols(); ++c) {
          v[static_cast<std::size_t>(c)] = reduced(static_cast<Eigen::Index>(r), c);
        }
      }
      pairs = construct_pairs(current, orgs, opts);
      ++result.resamples;
    }

    auto parts = cdr_loss(gather(reduced, pairs.positives, true), gather(reduced, pairs.positives, false),
                          gather(reduced, pairs.negatives, true), gather(reduced, pairs.negatives, false),
                          hyper.literal_sign);
    if (!std::isfinite(parts.loss)) {
      throw DataError("reduction training diverged at iteration " + std::to_string(it));
    }
    result.loss_trace.push_back(parts.loss);

    for (auto& pr : batch_pos) pr = pairs.positives[detail::uniform_index(rng, pairs.positives.size())];
    for (auto& pr : batch_neg) pr = pairs.negatives[detail::uniform_index(rng, pairs.negatives.size())];
    double batch_loss = loss_and_gradients(model, gather(all, batch_pos, true), gather(all, batch_pos, false),
                                           gather(all, batch_neg, true), gather(all, batch_neg, false), &g);
    if (!std::isfinite(batch_loss)) {
      throw DataError("reduction training diverged at iteration " + std::to_string(it));
    }
    model.w1 -= hyper.learning_rate * g.w1;
    model.b1 -= hyper.learning_rate * g.b1;
    model.w2 -= hyper.learning_rate * g.w2;
    model.b2 -= hyper.learning_rate * g.b2;
  }
  result.final_pairs = std::move(pairs);
  spdlog::debug("reduction training: {} iterations, {} resamples", hyper.iterations, result.resamples);
  return result;
}

EmbeddingStore reduce(const ReductionModel& model, const EmbeddingStore& store) {
  if (store.dim() != model.in_dim()) {
    throw DataError("store dimension " + std::to_string(store.dim()) + " does not match model input dimension " +
                    std::to_string(model.in_dim()));
  }
  EmbeddingStore out(model.out_dim(), store.provider_id(), store.template_version());
  out.mark_reduced(model.checksum());
  if (store.empty()) return out;
  Eigen::MatrixXd all(static_cast<Eigen::Index>(store.size()), static_cast<Eigen::Index>(store.dim()));
  Eigen::Index r = 0;
  for (const auto& [asn, vec] : store.entries()) {
    for (std::size_t c = 0; c < vec.size(); ++c) all(r, static_cast<Eigen::Index>(c)) = vec[c];
    ++r;
  }
  Eigen::MatrixXd y = model.forward(all);
  r = 0;
  for (const auto& [asn, vec] : store.entries()) {
    Vector v(static_cast<std::size_t>(y.cols()));
    for (Eigen::Index c = 0; c < y.cols(); ++c) v[static_cast<std::size_t>(c)] = y(r, c);
    out.put(asn, std::move(v));
    ++r;
  }
  return out;
}

}  // namespace pathsentry
