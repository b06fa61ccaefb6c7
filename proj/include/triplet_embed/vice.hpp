#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "data.hpp"
#include "errors.hpp"
#include "random.hpp"
#include "stats.hpp"

namespace triplet_embed {

// Two-component zero-mean Gaussian mixture: pi * N(0, spike^2) + (1 - pi) * N(0, slab^2).
struct PriorConfig {
  double pi = 0.5;
  double sigma_spike = 0.25;
  double sigma_slab = 1.0;

  // Training requires a proper spike-and-slab; the density functions below
  // also accept the degenerate single-Gaussian case.
  void validate() const {
    if (!(sigma_spike > 0.0 && sigma_slab > 0.0))
      throw DataError("prior scales must be positive");
    if (!(sigma_spike < sigma_slab)) throw DataError("prior requires sigma_spike < sigma_slab");
    if (!(pi > 0.0 && pi < 1.0)) throw DataError("prior mixture weight must lie in (0, 1)");
  }
};

struct TrainConfig {
  std::size_t p_init = 150;
  std::size_t batch_size = 1024;
  std::size_t max_epochs = 1000;
  std::size_t stability_window = 500;
  std::size_t mc_samples = 1;
  double learning_rate = 1e-3;
  std::size_t prune_every = 1;
  double keep_prob_threshold = 0.95;
  std::size_t min_objects = 5;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  // Initial posterior: mu ~ |N(0, init_mu_scale^2)|, sigma = init_sigma.
  double init_mu_scale = 0.5;
  double init_sigma = 0.1;

  void validate() const {
    if (p_init < 1) throw DataError("p_init must be at least 1");
    if (batch_size < 1) throw DataError("batch_size must be at least 1");
    if (mc_samples < 1) throw DataError("mc_samples must be at least 1");
    if (prune_every < 1) throw DataError("prune_every must be at least 1");
    if (!(learning_rate > 0.0)) throw DataError("learning_rate must be positive");
    if (!(keep_prob_threshold > 0.0 && keep_prob_threshold < 1.0))
      throw DataError("keep_prob_threshold must lie in (0, 1)");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
      throw DataError("val_fraction must lie in [0, 1)");
    if (!(init_mu_scale > 0.0 && init_sigma > 0.0))
      throw DataError("initialization scales must be positive");
  }
};

// Mean-field Gaussian posterior over an m x p embedding.
struct VariationalEmbedding {
  Matrix mu;
  Matrix log_sigma;
  std::vector<std::size_t> active_dims;  // descending importance
  PriorConfig prior;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;

  std::size_t n_objects() const { return static_cast<std::size_t>(mu.rows()); }
  std::size_t p_init() const { return static_cast<std::size_t>(mu.cols()); }

  // max(0, mu) over active dimensions, in active_dims order.
  Matrix point_estimate() const {
    Matrix out(mu.rows(), static_cast<Eigen::Index>(active_dims.size()));
    for (std::size_t c = 0; c < active_dims.size(); ++c)
      out.col(static_cast<Eigen::Index>(c)) =
          mu.col(static_cast<Eigen::Index>(active_dims[c])).cwiseMax(0.0);
    return out;
  }

  // max(0, mu) over all p_init columns, pruned columns zeroed.
  Matrix full_point_estimate() const {
    Matrix out = Matrix::Zero(mu.rows(), mu.cols());
    for (const auto d : active_dims)
      out.col(static_cast<Eigen::Index>(d)) =
          mu.col(static_cast<Eigen::Index>(d)).cwiseMax(0.0);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Triplet likelihood

// Softmax over the similarities of the three pairs (chosen, a-odd, b-odd).
struct PairProbabilities {
  double chosen;
  double a_odd;
  double b_odd;
};

inline PairProbabilities pair_probabilities(double s_chosen, double s_a_odd, double s_b_odd) {
  const double top = std::max({s_chosen, s_a_odd, s_b_odd});
  const double e0 = std::exp(s_chosen - top);
  const double e1 = std::exp(s_a_odd - top);
  const double e2 = std::exp(s_b_odd - top);
  const double z = e0 + e1 + e2;
  return {e0 / z, e1 / z, e2 / z};
}

inline double log_softmax_chosen(double s_chosen, double s_a_odd, double s_b_odd) {
  const double top = std::max({s_chosen, s_a_odd, s_b_odd});
  return (s_chosen - top) -
         std::log(std::exp(s_chosen - top) + std::exp(s_a_odd - top) + std::exp(s_b_odd - top));
}

// log p(chosen pair | triplet, W) for a non-negative embedding W.
template <class Derived>
double triplet_log_likelihood(const Eigen::MatrixBase<Derived>& w, const TripletRecord& t) {
  const double s0 = w.row(t.pair_a).dot(w.row(t.pair_b));
  const double s1 = w.row(t.pair_a).dot(w.row(t.odd));
  const double s2 = w.row(t.pair_b).dot(w.row(t.odd));
  return log_softmax_chosen(s0, s1, s2);
}

// ---------------------------------------------------------------------------
// Spike-and-slab prior

namespace detail {
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

inline double log_normal_density(double w, double sigma) {
  const double u = w / sigma;
  return -0.5 * u * u - std::log(sigma) - kLogSqrt2Pi;
}
}  // namespace detail

// Log density and its derivative with the per-component constants hoisted.
class PriorEvaluator {
 public:
  explicit PriorEvaluator(const PriorConfig& prior)
      : const_spike_(std::log(prior.pi) - std::log(prior.sigma_spike) - detail::kLogSqrt2Pi),
        const_slab_(std::log1p(-prior.pi) - std::log(prior.sigma_slab) - detail::kLogSqrt2Pi),
        half_prec_spike_(0.5 / (prior.sigma_spike * prior.sigma_spike)),
        half_prec_slab_(0.5 / (prior.sigma_slab * prior.sigma_slab)) {}

  struct Value {
    double log_density;
    double grad;  // d/dw
  };

  Value operator()(double w) const {
    const double w2 = w * w;
    const double a = const_spike_ - half_prec_spike_ * w2;
    const double b = const_slab_ - half_prec_slab_ * w2;
    // responsibilities via the smaller-over-larger ratio
    const bool spike_top = a >= b;
    const double t = std::exp(spike_top ? b - a : a - b);
    const double r_low = t / (1.0 + t);
    const double r_spike = spike_top ? 1.0 - r_low : r_low;
    const double log_density = (spike_top ? a : b) + std::log1p(t);
    const double grad =
        -2.0 * w * (r_spike * half_prec_spike_ + (1.0 - r_spike) * half_prec_slab_);
    return {log_density, grad};
  }

 private:
  double const_spike_, const_slab_;
  double half_prec_spike_, half_prec_slab_;
};

inline double prior_log_density(double w, const PriorConfig& prior) {
  return PriorEvaluator(prior)(w).log_density;
}

// d/dw log p(w)
inline double prior_log_density_grad(double w, const PriorConfig& prior) {
  return PriorEvaluator(prior)(w).grad;
}

// ---------------------------------------------------------------------------
// Objective

struct ElboTerms {
  double loss = 0.0;
  double complexity = 0.0;           // (E[log q] - E[log p(W)]) / n_total
  double negative_log_likelihood = 0.0;  // batch mean
  Matrix grad_mu;
  Matrix grad_log_sigma;
};

// Which columns take part in the objective. Empty means all.
using ColumnMask = std::vector<char>;

// Objective at fixed standard-normal noise. `noise` holds one m x p draw per
// Monte-Carlo sample; W = mu + exp(log_sigma) * noise is rectified before the
// likelihood. Columns excluded by `mask` contribute nothing and get zero
// gradient.
inline ElboTerms elbo_terms_at(std::span<const TripletRecord> batch, const Matrix& mu,
                               const Matrix& log_sigma, const PriorConfig& prior,
                               std::size_t n_total, std::span<const Matrix> noise,
                               const ColumnMask& mask = {}) {
  const Eigen::Index m = mu.rows();
  const Eigen::Index p = mu.cols();
  const double inv_n = 1.0 / static_cast<double>(n_total);
  const double inv_batch = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
  const double inv_samples = 1.0 / static_cast<double>(noise.size());
  const auto active = [&](Eigen::Index c) { return mask.empty() || mask[c]; };

  ElboTerms out;
  out.grad_mu = Matrix::Zero(m, p);
  out.grad_log_sigma = Matrix::Zero(m, p);

  // Closed-form entropy part: E[log q] = sum(-log sigma - 0.5 log(2 pi e)).
  double expected_log_q = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index c = 0; c < p; ++c)
      if (active(c)) {
        expected_log_q += -log_sigma(i, c) - detail::kLogSqrt2Pi - 0.5;
        out.grad_log_sigma(i, c) -= inv_n;
      }

  const Matrix sigma = log_sigma.array().exp().matrix();
  Matrix w(m, p), rectified(m, p), grad_w(m, p);
  const PriorEvaluator prior_eval(prior);
  double log_prior = 0.0;
  double log_lik = 0.0;

  for (const Matrix& eps : noise) {
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index c = 0; c < p; ++c) {
        const double wv = mu(i, c) + sigma(i, c) * eps(i, c);
        w(i, c) = wv;
        rectified(i, c) = active(c) && wv > 0.0 ? wv : 0.0;
      }

    grad_w.setZero();
    for (const auto& t : batch) {
      const auto ra = rectified.row(t.pair_a);
      const auto rb = rectified.row(t.pair_b);
      const auto ro = rectified.row(t.odd);
      const double s0 = ra.dot(rb);
      const double s1 = ra.dot(ro);
      const double s2 = rb.dot(ro);
      log_lik += log_softmax_chosen(s0, s1, s2);
      const auto pr = pair_probabilities(s0, s1, s2);
      // d(-log p)/ds = softmax - onehot(chosen)
      const double g0 = (pr.chosen - 1.0) * inv_batch;
      const double g1 = pr.a_odd * inv_batch;
      const double g2 = pr.b_odd * inv_batch;
      grad_w.row(t.pair_a) += g0 * rb + g1 * ro;
      grad_w.row(t.pair_b) += g0 * ra + g2 * ro;
      grad_w.row(t.odd) += g1 * ra + g2 * rb;
    }

    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index c = 0; c < p; ++c) {
        if (!active(c)) continue;
        const double wv = w(i, c);
        const auto pv = prior_eval(wv);
        log_prior += pv.log_density;
        double g = wv > 0.0 ? grad_w(i, c) : 0.0;
        g -= inv_n * pv.grad;
        out.grad_mu(i, c) += g * inv_samples;
        out.grad_log_sigma(i, c) += g * sigma(i, c) * eps(i, c) * inv_samples;
      }
  }

  out.complexity = inv_n * (expected_log_q - log_prior * inv_samples);
  out.negative_log_likelihood = -log_lik * inv_batch * inv_samples;
  out.loss = out.complexity + out.negative_log_likelihood;
  return out;
}

inline void draw_noise(Rng& rng, Eigen::Index rows, Eigen::Index cols, std::size_t samples,
                       std::vector<Matrix>& out) {
  StandardNormal normal;
  out.resize(samples);
  for (auto& e : out) {
    e.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index c = 0; c < cols; ++c) e(i, c) = normal(rng);
  }
}

// Monte-Carlo objective with fresh noise from `rng`.
inline ElboTerms elbo_terms(std::span<const TripletRecord> batch, const VariationalEmbedding& params,
                            const PriorConfig& prior, std::size_t n_total, std::size_t mc_samples,
                            Rng& rng) {
  std::vector<Matrix> noise;
  draw_noise(rng, params.mu.rows(), params.mu.cols(), mc_samples, noise);
  return elbo_terms_at(batch, params.mu, params.log_sigma, prior, n_total, noise);
}

// ---------------------------------------------------------------------------
// Pruning

// Column sum of max(0, mu), used to order dimensions.
inline double dimension_importance(const Matrix& mu, std::size_t dim) {
  return mu.col(static_cast<Eigen::Index>(dim)).cwiseMax(0.0).sum();
}

inline void sort_by_importance(const Matrix& mu, std::vector<std::size_t>& dims) {
  std::vector<double> weight(static_cast<std::size_t>(mu.cols()), 0.0);
  for (const auto d : dims) weight[d] = dimension_importance(mu, d);
  std::stable_sort(dims.begin(), dims.end(),
                   [&](std::size_t a, std::size_t b) { return weight[a] > weight[b]; });
}

// Number of objects with Pr(w > 0) = Phi(mu / sigma) >= keep_prob_threshold.
inline std::size_t reliable_object_count(const Matrix& mu, const Matrix& log_sigma,
                                         std::size_t dim, double keep_prob_threshold) {
  std::size_t count = 0;
  const auto c = static_cast<Eigen::Index>(dim);
  for (Eigen::Index i = 0; i < mu.rows(); ++i)
    if (normal_cdf(mu(i, c) / std::exp(log_sigma(i, c))) >= keep_prob_threshold) ++count;
  return count;
}

// Candidates that are reliably positive for at least min_objects objects,
// ordered by descending importance.
inline std::vector<std::size_t> surviving_dimensions(const Matrix& mu, const Matrix& log_sigma,
                                                     std::span<const std::size_t> candidates,
                                                     double keep_prob_threshold,
                                                     std::size_t min_objects) {
  std::vector<std::size_t> kept;
  for (const auto d : candidates)
    if (reliable_object_count(mu, log_sigma, d, keep_prob_threshold) >= min_objects)
      kept.push_back(d);
  sort_by_importance(mu, kept);
  return kept;
}

inline std::vector<std::size_t> prune_dimensions(const VariationalEmbedding& params,
                                                 double keep_prob_threshold = 0.95,
                                                 std::size_t min_objects = 5) {
  std::vector<std::size_t> all(params.p_init());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return surviving_dimensions(params.mu, params.log_sigma, all, keep_prob_threshold, min_objects);
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  std::size_t n_active = 0;
};

struct TrainResult {
  VariationalEmbedding embedding;
  std::vector<EpochRecord> history;
  std::string stop_reason;  // "stable" or "max_epochs"
};

// Fraction of triplets whose recorded pair has the strictly largest dot product.
template <class Derived>
double odd_one_out_accuracy(const Eigen::MatrixBase<Derived>& w, std::span<const TripletRecord> triplets) {
  if (triplets.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& t : triplets) {
    const double s0 = w.row(t.pair_a).dot(w.row(t.pair_b));
    const double s1 = w.row(t.pair_a).dot(w.row(t.odd));
    const double s2 = w.row(t.pair_b).dot(w.row(t.odd));
    if (s0 > s1 && s0 > s2) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(triplets.size());
}

namespace detail {

struct Adam {
  Matrix m1, m2;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t step = 0;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    m1 = Matrix::Zero(rows, cols);
    m2 = Matrix::Zero(rows, cols);
  }

  void update(Matrix& param, const Matrix& grad, double lr, const ColumnMask& mask, double bc1,
              double bc2) {
    const double step_size = lr / bc1;
    const double inv_bc2 = 1.0 / bc2;
    for (Eigen::Index i = 0; i < param.rows(); ++i)
      for (Eigen::Index c = 0; c < param.cols(); ++c) {
        if (!mask[c]) continue;
        const double g = grad(i, c);
        m1(i, c) = beta1 * m1(i, c) + (1.0 - beta1) * g;
        m2(i, c) = beta2 * m2(i, c) + (1.0 - beta2) * g * g;
        param(i, c) -= step_size * m1(i, c) / (std::sqrt(m2(i, c) * inv_bc2) + eps);
      }
  }
};

}  // namespace detail

using EpochCallback = std::function<void(const EpochRecord&)>;

// Fits the embedding by stochastic minimization of the per-triplet negative
// ELBO. Pruned columns are frozen and drop out of the objective. Stops once
// the number of active dimensions has not changed for stability_window
// epochs, or after max_epochs. Deterministic for a fixed cfg.seed.
inline TrainResult train(const TripletDataset& dataset, const TrainConfig& cfg,
                         const PriorConfig& prior, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  prior.validate();
  dataset.validate();
  if (dataset.n_objects < 3) throw DataError("training needs at least 3 objects");
  if (dataset.size() < cfg.batch_size)
    throw DataError("dataset has " + std::to_string(dataset.size()) +
                    " triplets, fewer than batch_size " + std::to_string(cfg.batch_size));

  const auto m = static_cast<Eigen::Index>(dataset.n_objects);
  const auto p = static_cast<Eigen::Index>(cfg.p_init);

  // Held-out split.
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  {
    Rng split_rng = substream(cfg.seed, "split");
    for (std::size_t s = order.size(); s > 1; --s)
      std::swap(order[s - 1], order[uniform_index(split_rng, s)]);
  }
  const auto n_val = static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(dataset.size()));
  std::vector<TripletRecord> val, train_set;
  val.reserve(n_val);
  train_set.reserve(dataset.size() - n_val);
  for (std::size_t s = 0; s < order.size(); ++s)
    (s < n_val ? val : train_set).push_back(dataset.records[order[s]]);
  if (train_set.empty()) throw DataError("no training triplets after the validation split");

  VariationalEmbedding params;
  params.prior = prior;
  params.seed = cfg.seed;
  params.n_train = train_set.size();
  params.mu.resize(m, p);
  {
    Rng init_rng = substream(cfg.seed, "init");
    StandardNormal normal;
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index c = 0; c < p; ++c) params.mu(i, c) = std::abs(normal(init_rng)) * cfg.init_mu_scale;
  }
  params.log_sigma = Matrix::Constant(m, p, std::log(cfg.init_sigma));

  ColumnMask mask(static_cast<std::size_t>(p), 1);
  std::vector<std::size_t> active(static_cast<std::size_t>(p));
  std::iota(active.begin(), active.end(), std::size_t{0});

  detail::Adam adam_mu, adam_sigma;
  adam_mu.resize(m, p);
  adam_sigma.resize(m, p);

  Rng shuffle_rng = substream(cfg.seed, "shuffle");
  Rng mc_rng = substream(cfg.seed, "mc");
  std::vector<Matrix> noise;
  const std::size_t n_total = train_set.size();

  TrainResult result;
  std::size_t last_change = 0;
  result.stop_reason = "max_epochs";

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t s = train_set.size(); s > 1; --s)
      std::swap(train_set[s - 1], train_set[uniform_index(shuffle_rng, s)]);

    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t b = 0; b < train_set.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(train_set.size(), b + cfg.batch_size);
      draw_noise(mc_rng, m, p, cfg.mc_samples, noise);
      const auto terms = elbo_terms_at(std::span(train_set).subspan(b, e - b), params.mu,
                                       params.log_sigma, prior, n_total, noise, mask);
      if (!std::isfinite(terms.loss))
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(n_batches));
      ++adam_mu.step;
      ++adam_sigma.step;
      const double bc1 = 1.0 - std::pow(adam_mu.beta1, static_cast<double>(adam_mu.step));
      const double bc2 = 1.0 - std::pow(adam_mu.beta2, static_cast<double>(adam_mu.step));
      adam_mu.update(params.mu, terms.grad_mu, cfg.learning_rate, mask, bc1, bc2);
      adam_sigma.update(params.log_sigma, terms.grad_log_sigma, cfg.learning_rate, mask, bc1, bc2);
      loss_sum += terms.loss;
      ++n_batches;
    }

    if (epoch % cfg.prune_every == 0) {
      auto kept = surviving_dimensions(params.mu, params.log_sigma, active,
                                       cfg.keep_prob_threshold, cfg.min_objects);
      if (kept.size() != active.size()) {
        std::fill(mask.begin(), mask.end(), 0);
        for (const auto d : kept) mask[d] = 1;
        last_change = epoch;
      }
      active = std::move(kept);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n_batches);
    {
      Matrix w = params.mu.cwiseMax(0.0);
      for (Eigen::Index c = 0; c < p; ++c)
        if (!mask[c]) w.col(c).setZero();
      rec.val_accuracy = odd_one_out_accuracy(w, val);
    }
    rec.n_active = active.size();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (epoch - last_change >= cfg.stability_window) {
      result.stop_reason = "stable";
      break;
    }
  }

  sort_by_importance(params.mu, active);
  params.active_dims = std::move(active);
  result.embedding = std::move(params);
  return result;
}

}  // namespace triplet_embed
