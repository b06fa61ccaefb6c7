#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "data.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "stats.hpp"

namespace triplet_embed {

struct RunReliability {
  double score = 0.0;  // tanh(mean z) over scored dimensions
  // Even-half correlation of each dimension with its odd-half best match;
  // NaN for dimensions that are constant across all objects (not scored).
  std::vector<double> matched_r;
  std::size_t n_scored = 0;
};

namespace detail {

// Columns restricted to `rows`, centered and scaled to unit norm so that a
// dot product is a Pearson correlation. Constant columns become zero.
inline Matrix standardized_columns(const Matrix& a, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) = a.row(static_cast<Eigen::Index>(rows[r]));
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    auto col = out.col(c);
    col.array() -= col.mean();
    const double norm = col.norm();
    if (norm > 0.0 && std::isfinite(norm))
      col /= norm;
    else
      col.setZero();
  }
  return out;
}

inline bool is_constant_column(const Matrix& a, Eigen::Index c) {
  return a.col(c).maxCoeff() == a.col(c).minCoeff();
}

}  // namespace detail

// Split-half reliability of each run. For every dimension of run r, the best
// matching dimension is picked among all dimensions of all other runs by
// Pearson correlation on odd-indexed objects; the matched pair is then
// correlated on even-indexed objects. The run score is the inverse Fisher
// transform of the mean z over its dimensions.
inline std::vector<RunReliability> split_half_reliability_detail(std::span<const Matrix> runs) {
  if (runs.size() < 2) throw DataError("split-half reliability needs at least 2 runs");
  const auto m = runs.front().rows();
  for (const auto& r : runs)
    if (r.rows() != m) throw DataError("runs must cover the same objects");
  if (m < 4) throw DataError("split-half reliability needs at least 4 objects");

  const auto [even, odd] = split_objects_odd_even(static_cast<std::size_t>(m));
  std::vector<Matrix> odd_std, even_std;
  for (const auto& r : runs) {
    odd_std.push_back(detail::standardized_columns(r, odd));
    even_std.push_back(detail::standardized_columns(r, even));
  }

  std::vector<RunReliability> out(runs.size());
  parallel_for(runs.size(), 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      const auto p = runs[r].cols();
      RunReliability rel;
      rel.matched_r.assign(static_cast<std::size_t>(p), std::nan(""));
      // Best odd-half match per source dimension, scanning runs in order.
      std::vector<double> best_r(static_cast<std::size_t>(p), -2.0);
      std::vector<std::size_t> best_run(static_cast<std::size_t>(p), 0);
      std::vector<Eigen::Index> best_dim(static_cast<std::size_t>(p), 0);
      for (std::size_t o = 0; o < runs.size(); ++o) {
        if (o == r) continue;
        const Matrix corr = odd_std[r].transpose() * odd_std[o];
        for (Eigen::Index d = 0; d < p; ++d)
          for (Eigen::Index c = 0; c < corr.cols(); ++c)
            if (corr(d, c) > best_r[d]) {
              best_r[d] = corr(d, c);
              best_run[d] = o;
              best_dim[d] = c;
            }
      }
      double z_sum = 0.0;
      for (Eigen::Index d = 0; d < p; ++d) {
        if (detail::is_constant_column(runs[r], d) || best_r[d] < -1.5) continue;
        const double even_r = std::clamp(
            even_std[r].col(d).dot(even_std[best_run[d]].col(best_dim[d])), -1.0, 1.0);
        rel.matched_r[d] = even_r;
        z_sum += fisher_z(even_r);
        ++rel.n_scored;
      }
      rel.score = rel.n_scored == 0 ? 0.0 : fisher_z_inverse(z_sum / static_cast<double>(rel.n_scored));
      out[r] = std::move(rel);
    }
  });
  return out;
}

inline std::vector<double> split_half_reliability(std::span<const Matrix> runs) {
  std::vector<double> scores;
  for (const auto& r : split_half_reliability_detail(runs)) scores.push_back(r.score);
  return scores;
}

// Index of the highest score; ties go to the lowest index.
inline std::size_t select_best_run(std::span<const double> scores) {
  if (scores.empty()) throw DataError("select_best_run needs at least one score");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

}  // namespace triplet_embed
