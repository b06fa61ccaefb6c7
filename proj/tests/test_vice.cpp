#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace triplet_embed;

namespace {

double normal_pdf(double w, double s) {
  return std::exp(-0.5 * (w / s) * (w / s)) / (s * std::sqrt(2.0 * std::numbers::pi));
}

// Mixture density written out directly, without the log-space rearrangement.
double naive_prior_log(double w, const PriorConfig& p) {
  return std::log(p.pi * normal_pdf(w, p.sigma_spike) + (1.0 - p.pi) * normal_pdf(w, p.sigma_slab));
}

std::vector<TripletRecord> random_triplets(std::size_t m, std::size_t n, std::uint64_t seed) {
  auto rng = substream(seed, "test-triplets");
  std::vector<TripletRecord> out;
  while (out.size() < n) {
    const auto a = static_cast<ObjectIndex>(uniform_index(rng, m));
    const auto b = static_cast<ObjectIndex>(uniform_index(rng, m));
    const auto c = static_cast<ObjectIndex>(uniform_index(rng, m));
    if (a != b && a != c && b != c) out.push_back({a, b, c});
  }
  return out;
}

TripletDataset structured_dataset(std::size_t n, std::uint64_t seed) {
  const Matrix truth = support::sparse_ground_truth(40, 3, 0.4, seed);
  return sample_triplet_dataset(truth, n, seed);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.p_init = 8;
  cfg.batch_size = 256;
  cfg.max_epochs = 25;
  cfg.stability_window = 1000;
  cfg.min_objects = 3;
  cfg.learning_rate = 0.01;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST(Likelihood, ZeroEmbeddingIsUniform) {
  const Matrix w = Matrix::Zero(4, 3);
  EXPECT_DOUBLE_EQ(triplet_log_likelihood(w, {0, 1, 2}), std::log(1.0 / 3.0));
  const auto p = pair_probabilities(0, 0, 0);
  EXPECT_EQ(p.chosen, 1.0 / 3.0);
  EXPECT_EQ(p.a_odd, 1.0 / 3.0);
  EXPECT_EQ(p.b_odd, 1.0 / 3.0);
}

TEST(Likelihood, SingleDimensionExample) {
  Matrix w(3, 1);
  w << 1, 1, 0;
  EXPECT_NEAR(triplet_log_likelihood(w, {0, 1, 2}), -0.5514447139320511, 1e-12);
  EXPECT_NEAR(triplet_log_likelihood(w, {0, 1, 2}), std::log(std::exp(1.0) / (std::exp(1.0) + 2.0)), 1e-14);
}

TEST(Likelihood, ProbabilitiesSumToOneAndShiftInvariant) {
  auto rng = substream(3, "probs");
  for (int s = 0; s < 1000; ++s) {
    const double a = 50 * uniform_unit(rng), b = 50 * uniform_unit(rng), c = 50 * uniform_unit(rng);
    const auto p = pair_probabilities(a, b, c);
    EXPECT_NEAR(p.chosen + p.a_odd + p.b_odd, 1.0, 1e-12);
    const auto q = pair_probabilities(a + 123.0, b + 123.0, c + 123.0);
    EXPECT_NEAR(p.chosen, q.chosen, 1e-12);
    EXPECT_NEAR(p.a_odd, q.a_odd, 1e-12);
    EXPECT_LE(log_softmax_chosen(a, b, c), 0.0);
  }
}

TEST(Likelihood, StableForHugeSimilarities) {
  EXPECT_NEAR(log_softmax_chosen(1e4, 0, 0), 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(log_softmax_chosen(0, 1e4, 1e4)));
  EXPECT_NEAR(log_softmax_chosen(0, 1e4, 1e4), -1e4 - std::log(2.0), 1e-9);
}

TEST(Prior, MatchesDirectFormula) {
  const PriorConfig p;
  EXPECT_NEAR(prior_log_density(0.0, p), -0.002647801330517642, 1e-14);
  for (const double w : {-2.0, -0.3, 0.0, 0.1, 0.7, 3.0})
    EXPECT_NEAR(prior_log_density(w, p), naive_prior_log(w, p), 1e-12) << w;
}

TEST(Prior, DegenerateSingleGaussian) {
  const PriorConfig p{.pi = 0.5, .sigma_spike = 1.0, .sigma_slab = 1.0};
  EXPECT_NEAR(prior_log_density(0.0, p), -0.9189385332046727, 1e-14);
  const PriorConfig slab_only{.pi = 0.0, .sigma_spike = 0.25, .sigma_slab = 1.0};
  EXPECT_NEAR(prior_log_density(1.5, slab_only), std::log(normal_pdf(1.5, 1.0)), 1e-12);
  EXPECT_NEAR(prior_log_density_grad(1.5, slab_only), -1.5, 1e-12);
}

TEST(Prior, FarTailStaysFinite) {
  const PriorConfig p;
  EXPECT_NEAR(prior_log_density(40.0, p), std::log(0.5) - 800.0 - 0.9189385332046727, 1e-9);
  EXPECT_NEAR(prior_log_density_grad(40.0, p), -40.0, 1e-9);
}

TEST(Prior, GradientMatchesFiniteDifference) {
  const PriorConfig p{.pi = 0.3, .sigma_spike = 0.1, .sigma_slab = 2.0};
  const double h = 1e-6;
  for (const double w : {-1.0, -0.05, 0.0, 0.2, 0.45, 1.3}) {
    const double fd = (naive_prior_log(w + h, p) - naive_prior_log(w - h, p)) / (2 * h);
    EXPECT_NEAR(prior_log_density_grad(w, p), fd, 1e-6) << w;
  }
}

TEST(Prior, Validation) {
  EXPECT_THROW((PriorConfig{.pi = 0.5, .sigma_spike = 1.0, .sigma_slab = 0.5}.validate()), DataError);
  EXPECT_THROW((PriorConfig{.pi = 1.0}.validate()), DataError);
  EXPECT_THROW((PriorConfig{.sigma_spike = 0.0}.validate()), DataError);
  EXPECT_NO_THROW(PriorConfig{}.validate());
}

// Analytic gradients against central differences of the same fixed-noise
// objective. Points keep every sampled weight away from the rectifier kink.
class GradientCheck : public ::testing::TestWithParam<PriorConfig> {};

std::string prior_name(const ::testing::TestParamInfo<PriorConfig>& info) {
  static const char* const names[] = {"Default", "SharpSpike", "SingleGaussian"};
  return names[info.index];
}

TEST_P(GradientCheck, TenRandomPoints) {
  const PriorConfig prior = GetParam();
  const Eigen::Index m = 7, p = 4;
  const auto batch = random_triplets(m, 40, 17);
  const double h = 1e-6;
  auto rng = substream(99, "gradcheck");
  StandardNormal normal;
  for (int point = 0; point < 10; ++point) {
    Matrix mu(m, p), log_sigma(m, p);
    std::vector<Matrix> noise(2, Matrix(m, p));
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index c = 0; c < p; ++c) {
        log_sigma(i, c) = std::log(0.05 + 0.3 * uniform_unit(rng));
        for (auto& e : noise) e(i, c) = normal(rng);
        do {
          mu(i, c) = 1.5 * normal(rng);
        } while (std::abs(mu(i, c) + std::exp(log_sigma(i, c)) * noise[0](i, c)) < 0.05 ||
                 std::abs(mu(i, c) + std::exp(log_sigma(i, c)) * noise[1](i, c)) < 0.05);
      }
    const auto terms = elbo_terms_at(batch, mu, log_sigma, prior, 500, noise);
    const auto loss_at = [&](const Matrix& a, const Matrix& b) {
      return elbo_terms_at(batch, a, b, prior, 500, noise).loss;
    };
    Matrix fd_mu(m, p), fd_ls(m, p);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index c = 0; c < p; ++c) {
        Matrix up = mu, down = mu;
        up(i, c) += h;
        down(i, c) -= h;
        fd_mu(i, c) = (loss_at(up, log_sigma) - loss_at(down, log_sigma)) / (2 * h);
        Matrix lup = log_sigma, ldown = log_sigma;
        lup(i, c) += h;
        ldown(i, c) -= h;
        fd_ls(i, c) = (loss_at(mu, lup) - loss_at(mu, ldown)) / (2 * h);
      }
    EXPECT_LT((terms.grad_mu - fd_mu).norm() / fd_mu.norm(), 1e-4) << "point " << point;
    EXPECT_LT((terms.grad_log_sigma - fd_ls).norm() / fd_ls.norm(), 1e-4) << "point " << point;
  }
}

INSTANTIATE_TEST_SUITE_P(Priors, GradientCheck,
                         ::testing::Values(PriorConfig{},
                                           PriorConfig{.pi = 0.8, .sigma_spike = 0.05, .sigma_slab = 2.0},
                                           PriorConfig{.pi = 0.5, .sigma_spike = 1.0, .sigma_slab = 1.0}),
                         prior_name);

TEST(Objective, MaskedColumnsAreInert) {
  const Eigen::Index m = 6, p = 3;
  const auto batch = random_triplets(m, 20, 4);
  const Matrix mu = support::random_nonneg(m, p, 8);
  const Matrix log_sigma = Matrix::Constant(m, p, std::log(0.1));
  std::vector<Matrix> noise{support::random_normal(m, p, 2)};
  const ColumnMask mask{1, 0, 1};
  const auto terms = elbo_terms_at(batch, mu, log_sigma, PriorConfig{}, 100, noise, mask);
  EXPECT_TRUE(terms.grad_mu.col(1).isZero(0.0));
  EXPECT_TRUE(terms.grad_log_sigma.col(1).isZero(0.0));
  Matrix moved = mu;
  moved.col(1).setConstant(7.0);
  EXPECT_EQ(elbo_terms_at(batch, moved, log_sigma, PriorConfig{}, 100, noise, mask).loss, terms.loss);
}

TEST(Objective, LossDecomposes) {
  const Eigen::Index m = 6, p = 3;
  const auto batch = random_triplets(m, 20, 4);
  const Matrix mu = support::random_nonneg(m, p, 8);
  const Matrix log_sigma = Matrix::Constant(m, p, std::log(0.2));
  std::vector<Matrix> noise{support::random_normal(m, p, 2)};
  const auto terms = elbo_terms_at(batch, mu, log_sigma, PriorConfig{}, 100, noise);
  EXPECT_DOUBLE_EQ(terms.loss, terms.complexity + terms.negative_log_likelihood);

  Matrix w = (mu.array() + log_sigma.array().exp() * noise[0].array()).cwiseMax(0.0).matrix();
  double nll = 0.0;
  for (const auto& t : batch) nll -= triplet_log_likelihood(w, t);
  EXPECT_NEAR(terms.negative_log_likelihood, nll / batch.size(), 1e-12);
}

TEST(Pruning, KeepsReliablyPositiveDimensions) {
  // Column 0: 6 objects far above zero. Column 1: 4 objects. Column 2: noisy.
  Matrix mu = Matrix::Constant(10, 3, -1.0);
  Matrix log_sigma = Matrix::Constant(10, 3, std::log(0.1));
  mu.block(0, 0, 6, 1).setConstant(1.0);
  mu.block(0, 1, 4, 1).setConstant(3.0);
  mu.col(2).setConstant(0.1);
  log_sigma.col(2).setConstant(std::log(1.0));
  EXPECT_EQ(reliable_object_count(mu, log_sigma, 0, 0.95), 6u);
  EXPECT_EQ(reliable_object_count(mu, log_sigma, 1, 0.95), 4u);
  EXPECT_EQ(reliable_object_count(mu, log_sigma, 2, 0.95), 0u);
  const std::vector<std::size_t> all{0, 1, 2};
  EXPECT_EQ(surviving_dimensions(mu, log_sigma, all, 0.95, 5), (std::vector<std::size_t>{0}));
  EXPECT_EQ(surviving_dimensions(mu, log_sigma, all, 0.95, 4), (std::vector<std::size_t>{1, 0}));
}

TEST(Pruning, ThresholdBoundary) {
  // Phi(1.6448536269514722) = 0.95
  Matrix mu = Matrix::Constant(5, 1, 1.65);
  Matrix log_sigma = Matrix::Zero(5, 1);
  EXPECT_EQ(reliable_object_count(mu, log_sigma, 0, 0.95), 5u);
  mu.setConstant(1.64);
  EXPECT_EQ(reliable_object_count(mu, log_sigma, 0, 0.95), 0u);
}

TEST(Pruning, ImportanceOrderIsStableOnTies) {
  // Column sums of max(0, mu): 2, 3, 2, 0.5.
  Matrix mu(2, 4);
  mu << 1, 3, 1, -5, 1, 0, 1, 0.5;
  std::vector<std::size_t> dims{0, 1, 2, 3};
  sort_by_importance(mu, dims);
  EXPECT_EQ(dims, (std::vector<std::size_t>{1, 0, 2, 3}));
}

TEST(Train, ValidatesConfig) {
  const auto ds = structured_dataset(2000, 1);
  TrainConfig cfg = small_config();
  cfg.p_init = 0;
  EXPECT_THROW(train(ds, cfg, PriorConfig{}), DataError);
  cfg = small_config();
  cfg.batch_size = 5000;
  EXPECT_THROW(train(ds, cfg, PriorConfig{}), DataError);
  EXPECT_THROW(train(ds, small_config(), PriorConfig{.pi = 0.5, .sigma_spike = 2.0, .sigma_slab = 1.0}),
               DataError);
}

TEST(Train, LearnsAboveChanceAndIsDeterministic) {
  const auto ds = structured_dataset(8000, 2);
  const auto cfg = small_config();
  const auto a = train(ds, cfg, PriorConfig{});
  const auto b = train(ds, cfg, PriorConfig{});
  EXPECT_EQ(a.embedding.mu, b.embedding.mu);
  EXPECT_EQ(a.embedding.log_sigma, b.embedding.log_sigma);
  EXPECT_GT(a.history.back().val_accuracy, 0.6);
  EXPECT_LT(a.history.back().train_loss, a.history.front().train_loss);

  auto other = cfg;
  other.seed = 6;
  EXPECT_NE(train(ds, other, PriorConfig{}).embedding.mu, a.embedding.mu);
}

TEST(Train, PointEstimateInvariants) {
  const auto ds = structured_dataset(8000, 3);
  auto cfg = small_config();
  cfg.min_objects = 12;
  const auto r = train(ds, cfg, PriorConfig{});
  const auto& e = r.embedding;
  EXPECT_TRUE((e.log_sigma.array().exp() > 0.0).all());
  EXPECT_GE(e.point_estimate().minCoeff(), 0.0);
  EXPECT_EQ(static_cast<std::size_t>(e.point_estimate().cols()), e.active_dims.size());

  for (std::size_t s = 1; s < r.history.size(); ++s)
    EXPECT_LE(r.history[s].n_active, r.history[s - 1].n_active);

  std::vector<char> active(cfg.p_init, 0);
  for (const auto d : e.active_dims) {
    EXPECT_FALSE(active[d]) << "repeated dimension";
    active[d] = 1;
    EXPECT_GE(reliable_object_count(e.mu, e.log_sigma, d, cfg.keep_prob_threshold), cfg.min_objects);
  }
  for (std::size_t d = 0; d < cfg.p_init; ++d)
    if (!active[d])
      EXPECT_LT(reliable_object_count(e.mu, e.log_sigma, d, cfg.keep_prob_threshold), cfg.min_objects);
  for (std::size_t k = 1; k < e.active_dims.size(); ++k)
    EXPECT_GE(dimension_importance(e.mu, e.active_dims[k - 1]), dimension_importance(e.mu, e.active_dims[k]));
}

TEST(Train, PrunedColumnsStayFrozen) {
  const auto ds = structured_dataset(6000, 4);
  auto cfg = small_config();
  cfg.min_objects = 41;  // more than the object count: everything goes at the first check
  cfg.max_epochs = 3;
  std::vector<std::size_t> seen;
  const auto r = train(ds, cfg, PriorConfig{}, [&](const EpochRecord& rec) { seen.push_back(rec.n_active); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 0, 0}));
  EXPECT_TRUE(r.embedding.active_dims.empty());
  EXPECT_NEAR(r.history.back().train_loss, std::log(3.0), 1e-12);
}

TEST(Train, StopsWhenStable) {
  const auto ds = structured_dataset(3000, 5);
  auto cfg = small_config();
  cfg.stability_window = 4;
  cfg.max_epochs = 100;
  const auto r = train(ds, cfg, PriorConfig{});
  EXPECT_EQ(r.stop_reason, "stable");
  EXPECT_LT(r.history.size(), 100u);
}
