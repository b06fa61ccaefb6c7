#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace triplet_embed;

namespace {

// Gauss-Jordan inverse with partial pivoting on plain nested vectors.
std::vector<std::vector<double>> gauss_jordan_inverse(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    std::swap(inv[col], inv[pivot]);
    const double d = a[col][col];
    for (std::size_t c = 0; c < n; ++c) a[col][c] /= d, inv[col][c] /= d;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col];
      for (std::size_t c = 0; c < n; ++c) a[r][c] -= f * a[col][c], inv[r][c] -= f * inv[col][c];
    }
  }
  return inv;
}

// w = (Xc^T Xc + lambda I)^-1 Xc^T yc via the explicit inverse.
RidgeFit dense_inverse_ridge(const Matrix& x, const Vector& y, double lambda) {
  const auto n = static_cast<std::size_t>(x.rows()), d = static_cast<std::size_t>(x.cols());
  std::vector<double> xm(d, 0.0);
  double ym = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ym += y[i];
    for (std::size_t c = 0; c < d; ++c) xm[c] += x(i, c);
  }
  ym /= static_cast<double>(n);
  for (auto& v : xm) v /= static_cast<double>(n);
  std::vector<std::vector<double>> a(d, std::vector<double>(d, 0.0));
  std::vector<double> b(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < d; ++r) {
      b[r] += (x(i, r) - xm[r]) * (y[i] - ym);
      for (std::size_t c = 0; c < d; ++c) a[r][c] += (x(i, r) - xm[r]) * (x(i, c) - xm[c]);
    }
  for (std::size_t r = 0; r < d; ++r) a[r][r] += lambda;
  const auto inv = gauss_jordan_inverse(a);
  RidgeFit fit;
  fit.weights = Vector::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) fit.weights[r] += inv[r][c] * b[c];
  fit.intercept = ym;
  for (std::size_t c = 0; c < d; ++c) fit.intercept -= xm[c] * fit.weights[c];
  return fit;
}

}  // namespace

TEST(Ridge, MatchesDenseInverseOracle) {
  const Matrix x = support::random_normal(50, 10, 1);
  const Vector y = support::random_normal(50, 1, 2).col(0);
  for (const double lambda : {0.0, 1e-3, 0.5, 10.0, 1e3}) {
    const auto fit = fit_ridge(x, y, lambda);
    const auto ref = dense_inverse_ridge(x, y, lambda);
    EXPECT_LT((fit.weights - ref.weights).cwiseAbs().maxCoeff(), 1e-10) << lambda;
    EXPECT_NEAR(fit.intercept, ref.intercept, 1e-10) << lambda;
  }
}

TEST(Ridge, NoiselessRecovery) {
  const Matrix x = support::random_normal(200, 8, 3);
  const Vector w = support::random_normal(8, 1, 4).col(0);
  const Vector y = (x * w).array() + 0.7;
  const auto fit = fit_ridge(x, y, 1e-6);
  const Vector pred = (x * fit.weights).array() + fit.intercept;
  EXPECT_GE(r2_score(std::span(y.data(), 200), std::span(pred.data(), 200)), 0.99);
  EXPECT_LT((fit.weights - w).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(fit.intercept, 0.7, 1e-6);
}

TEST(Ridge, LargeLambdaShrinksToZero) {
  const Matrix x = support::random_normal(60, 5, 5);
  const Vector y = support::random_normal(60, 1, 6).col(0);
  const auto fit = fit_ridge(x, y, 1e12);
  EXPECT_LT(fit.weights.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_NEAR(fit.intercept, y.mean(), 1e-6);
}

TEST(Ridge, Errors) {
  const Matrix x = support::random_normal(5, 10, 1);
  const Vector y = support::random_normal(5, 1, 2).col(0);
  EXPECT_THROW(fit_ridge(x, y, 0.0), NumericalError);
  EXPECT_THROW(fit_ridge(x, y, -1.0), DataError);
  EXPECT_THROW(fit_ridge(x, Vector::Zero(4), 1.0), DataError);
  Matrix collinear(6, 2);
  collinear.col(0) = support::random_normal(6, 1, 3).col(0);
  collinear.col(1) = collinear.col(0);
  EXPECT_THROW(fit_ridge(collinear, Vector::Ones(6), 0.0), NumericalError);
  EXPECT_NO_THROW(fit_ridge(collinear, Vector::Ones(6), 0.1));
}

TEST(R2, KnownValues) {
  const std::vector<double> t{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(r2_score(t, t), 1.0);
  const std::vector<double> mean{2.5, 2.5, 2.5, 2.5};
  EXPECT_DOUBLE_EQ(r2_score(t, mean), 0.0);
  EXPECT_THROW(r2_score(mean, t), DataError);
}

TEST(RidgeCv, FoldGramsMatchDirectFits) {
  const Matrix x = support::random_normal(40, 6, 7);
  Matrix targets(40, 3);
  for (int c = 0; c < 3; ++c)
    targets.col(c) = x * support::random_normal(6, 1, 10 + c).col(0) + 0.3 * support::random_normal(40, 1, 20 + c).col(0);
  RidgeCvConfig cfg;
  cfg.folds = 4;
  cfg.lambdas = {0.01, 1.0, 100.0};
  const auto models = fit_ridge_cv(x, targets, cfg);

  for (Eigen::Index c = 0; c < 3; ++c) {
    // Held-out predictions recomputed fold by fold with fit_ridge.
    const double lambda = models.lambdas[c];
    Vector held(40);
    for (std::size_t f = 0; f < 4; ++f) {
      std::vector<Eigen::Index> tr, te;
      for (Eigen::Index i = 0; i < 40; ++i) (static_cast<std::size_t>(i) % 4 == f ? te : tr).push_back(i);
      Matrix xt(static_cast<Eigen::Index>(tr.size()), 6);
      Vector yt(static_cast<Eigen::Index>(tr.size()));
      for (std::size_t r = 0; r < tr.size(); ++r) xt.row(r) = x.row(tr[r]), yt[r] = targets(tr[r], c);
      const auto fit = fit_ridge(xt, yt, lambda);
      for (const auto i : te) held[i] = x.row(i).dot(fit.weights) + fit.intercept;
    }
    const Vector truth = targets.col(c);
    EXPECT_NEAR(models.r2_held_out[c], r2_score(std::span(truth.data(), 40), std::span(held.data(), 40)), 1e-10);

    const auto full = fit_ridge(x, truth, lambda);
    EXPECT_LT((models.weights.col(c) - full.weights).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(models.intercepts[c], full.intercept, 1e-10);
    EXPECT_GE(models.r2_in_sample[c], models.r2_held_out[c]);
  }
}

TEST(RidgeCv, PredictionsAreRectified) {
  RidgeModelSet models;
  models.weights = Matrix::Identity(2, 2);
  models.intercepts = Vector::Constant(2, -1.0);
  Vector x(2);
  x << 3.0, 0.5;
  const Vector pred = predict_dimensions(models, x);
  EXPECT_DOUBLE_EQ(pred[0], 2.0);
  EXPECT_DOUBLE_EQ(pred[1], 0.0);
  EXPECT_THROW(predict_dimensions(models, Vector::Zero(3)), DataError);
}

TEST(RidgeCv, ConfigErrors) {
  const Matrix x = support::random_normal(10, 2, 1);
  EXPECT_THROW(fit_ridge_cv(x, Matrix::Ones(9, 1)), DataError);
  EXPECT_THROW(fit_ridge_cv(x, Matrix::Ones(10, 1), {.folds = 1}), DataError);
  EXPECT_THROW(fit_ridge_cv(x, Matrix::Ones(10, 1), {.folds = 2, .lambdas = {}}), DataError);
}
