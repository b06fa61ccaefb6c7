#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Cholesky>

#include "errors.hpp"
#include "io.hpp"
#include "parallel.hpp"

namespace triplet_embed {

// Affine map from features to one embedding dimension.
struct RidgeFit {
  Vector weights;
  double intercept = 0.0;
};

namespace detail {

inline constexpr double kSingularRcond = 1e-13;

// Solves (gram + lambda I) W = rhs via Cholesky; throws if the system is
// numerically singular.
inline Matrix solve_regularized(const Matrix& gram, double lambda, const Matrix& rhs) {
  Eigen::MatrixXd a = gram;
  a.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success || !(llt.rcond() > kSingularRcond))
    throw NumericalError("ridge system is singular (lambda = " + format_real(lambda) +
                         "); increase lambda");
  Eigen::MatrixXd sol = llt.solve(Eigen::MatrixXd(rhs));
  return Matrix(sol);
}

}  // namespace detail

// l2-regularized least squares on column-centered data:
//   (Xc^T Xc + lambda I) w = Xc^T yc,  intercept = mean(y) - mean(X) w.
inline RidgeFit fit_ridge(const Matrix& x, const Vector& y, double lambda) {
  if (x.rows() != y.size()) throw DataError("fit_ridge: X and y differ in length");
  if (x.rows() < 2) throw DataError("fit_ridge needs at least 2 samples");
  if (!(lambda >= 0.0)) throw DataError("fit_ridge: lambda must be non-negative");
  if (lambda == 0.0 && x.cols() > x.rows())
    throw NumericalError("fit_ridge: lambda = 0 with more features than samples is singular");

  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Matrix xc = x.rowwise() - x_mean;
  const Vector yc = y.array() - y_mean;
  const Matrix gram = xc.transpose() * xc;
  const Matrix rhs = xc.transpose() * yc;
  const Matrix w = detail::solve_regularized(gram, lambda, rhs);

  RidgeFit fit;
  fit.weights = w.col(0);
  fit.intercept = y_mean - x_mean.dot(fit.weights);
  return fit;
}

inline double r2_score(std::span<const double> y_true, std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size()) throw DataError("r2_score: length mismatch");
  if (y_true.size() < 2) throw DataError("r2_score needs at least 2 values");
  double mean = 0.0;
  for (const double v : y_true) mean += v;
  mean /= static_cast<double>(y_true.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    ss_res += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
  }
  if (ss_tot == 0.0) throw DataError("r2_score: y_true is constant");
  return 1.0 - ss_res / ss_tot;
}

// One ridge model per embedding dimension.
struct RidgeModelSet {
  Matrix weights;  // d x p
  Vector intercepts;
  std::vector<double> lambdas;
  std::vector<double> r2_in_sample;
  std::vector<double> r2_held_out;  // pooled cross-validated predictions

  std::size_t n_features() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t n_dimensions() const { return static_cast<std::size_t>(weights.cols()); }
};

// Affine prediction per dimension, rectified at zero.
inline Vector predict_dimensions(const RidgeModelSet& models, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != models.n_features())
    throw DataError("predict_dimensions: feature vector has " + std::to_string(x.size()) +
                    " entries, models expect " + std::to_string(models.n_features()));
  Vector raw = models.weights.transpose() * x + models.intercepts;
  return raw.cwiseMax(0.0);
}

struct RidgeCvConfig {
  std::size_t folds = 5;
  std::vector<double> lambdas = {1e-3, 1e-2, 1e-1, 1e0, 1e1, 1e2, 1e3, 1e4};
};

// Fits every target column, choosing lambda per column by k-fold
// cross-validation (fold = sample index mod k). The uncentered Gram matrix
// is formed once; each fold's centered training Gram is derived from it.
inline RidgeModelSet fit_ridge_cv(const Matrix& x, const Matrix& targets, const RidgeCvConfig& cfg = {}) {
  const auto n = x.rows();
  const auto d = x.cols();
  const auto p = targets.cols();
  if (targets.rows() != n) throw DataError("features and targets differ in object count");
  if (cfg.folds < 2 || static_cast<Eigen::Index>(cfg.folds) > n)
    throw DataError("cross-validation needs 2 <= folds <= samples");
  if (cfg.lambdas.empty()) throw DataError("empty lambda grid");

  const Matrix full_gram = x.transpose() * x;
  const Matrix full_xty = x.transpose() * targets;
  const Eigen::RowVectorXd x_sum = x.colwise().sum();
  const Eigen::RowVectorXd y_sum = targets.colwise().sum();

  const std::size_t n_lambda = cfg.lambdas.size();
  // sse[l](c): held-out squared error for lambda l, target c
  std::vector<Eigen::RowVectorXd> sse(n_lambda, Eigen::RowVectorXd::Zero(p));
  std::vector<Matrix> cv_pred(n_lambda, Matrix::Zero(n, p));

  for (std::size_t f = 0; f < cfg.folds; ++f) {
    std::vector<Eigen::Index> held;
    for (Eigen::Index i = static_cast<Eigen::Index>(f); i < n; i += static_cast<Eigen::Index>(cfg.folds))
      held.push_back(i);
    Matrix xh(static_cast<Eigen::Index>(held.size()), d);
    Matrix yh(static_cast<Eigen::Index>(held.size()), p);
    for (std::size_t r = 0; r < held.size(); ++r) {
      xh.row(static_cast<Eigen::Index>(r)) = x.row(held[r]);
      yh.row(static_cast<Eigen::Index>(r)) = targets.row(held[r]);
    }
    const double n_train = static_cast<double>(n - static_cast<Eigen::Index>(held.size()));
    const Eigen::RowVectorXd x_mean = (x_sum - xh.colwise().sum()) / n_train;
    const Eigen::RowVectorXd y_mean = (y_sum - yh.colwise().sum()) / n_train;
    const Matrix gram = full_gram - xh.transpose() * xh - n_train * x_mean.transpose() * x_mean;
    const Matrix xty = full_xty - xh.transpose() * yh - n_train * x_mean.transpose() * y_mean;

    std::vector<Matrix> preds(n_lambda);
    parallel_for(n_lambda, 1, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t l = lo; l < hi; ++l) {
        const Matrix w = detail::solve_regularized(gram, cfg.lambdas[l], xty);
        const Eigen::RowVectorXd b = y_mean - x_mean * w;
        preds[l] = (xh * w).rowwise() + b;
      }
    });
    for (std::size_t l = 0; l < n_lambda; ++l) {
      sse[l] += (preds[l] - yh).colwise().squaredNorm();
      for (std::size_t r = 0; r < held.size(); ++r)
        cv_pred[l].row(held[r]) = preds[l].row(static_cast<Eigen::Index>(r));
    }
  }

  RidgeModelSet out;
  out.weights.resize(d, p);
  out.intercepts.resize(p);
  out.lambdas.resize(static_cast<std::size_t>(p));
  out.r2_in_sample.resize(static_cast<std::size_t>(p));
  out.r2_held_out.resize(static_cast<std::size_t>(p));
  std::vector<std::size_t> chosen(static_cast<std::size_t>(p), 0);
  for (Eigen::Index c = 0; c < p; ++c) {
    for (std::size_t l = 1; l < n_lambda; ++l)
      if (sse[l](c) < sse[chosen[c]](c)) chosen[c] = l;
    out.lambdas[c] = cfg.lambdas[chosen[c]];
  }

  const auto r2_or_nan = [](const Vector& t, const Vector& pr) {
    try {
      return r2_score(std::span(t.data(), static_cast<std::size_t>(t.size())),
                      std::span(pr.data(), static_cast<std::size_t>(pr.size())));
    } catch (const DataError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };

  // Final fits on all samples, grouped by lambda.
  const Eigen::RowVectorXd x_mean = x_sum / static_cast<double>(n);
  const Eigen::RowVectorXd y_mean = y_sum / static_cast<double>(n);
  const Matrix gram = full_gram - static_cast<double>(n) * x_mean.transpose() * x_mean;
  const Matrix xty = full_xty - static_cast<double>(n) * x_mean.transpose() * y_mean;
  for (std::size_t l = 0; l < n_lambda; ++l) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index c = 0; c < p; ++c)
      if (chosen[c] == l) cols.push_back(c);
    if (cols.empty()) continue;
    Matrix rhs(d, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) rhs.col(static_cast<Eigen::Index>(k)) = xty.col(cols[k]);
    const Matrix w = detail::solve_regularized(gram, cfg.lambdas[l], rhs);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const Eigen::Index c = cols[k];
      out.weights.col(c) = w.col(static_cast<Eigen::Index>(k));
      out.intercepts(c) = y_mean(c) - x_mean.dot(out.weights.col(c));
    }
  }
  for (Eigen::Index c = 0; c < p; ++c) {
    const Vector truth = targets.col(c);
    const Vector fitted = (x * out.weights.col(c)).array() + out.intercepts(c);
    out.r2_in_sample[c] = r2_or_nan(truth, fitted);
    const Vector held = cv_pred[chosen[c]].col(c);
    out.r2_held_out[c] = r2_or_nan(truth, held);
  }
  return out;
}

}  // namespace triplet_embed
