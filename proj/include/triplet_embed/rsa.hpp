#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "stats.hpp"

namespace triplet_embed {

enum class RsmMetric { softmax_choice_prob, dot_product };

inline std::string_view to_string(RsmMetric m) {
  return m == RsmMetric::softmax_choice_prob ? "softmax_choice_prob" : "dot_product";
}

// Symmetric m x m similarity matrix with a unit diagonal.
struct Rsm {
  Matrix values;
  RsmMetric metric = RsmMetric::softmax_choice_prob;

  std::size_t size() const { return static_cast<std::size_t>(values.rows()); }
};

// Context set used per object pair when reconstructing from an embedding.
struct RsmMode {
  bool sampled = false;
  std::size_t contexts = 0;
  std::uint64_t seed = 0;

  static RsmMode exact() { return {}; }
  static RsmMode sampled_contexts(std::size_t contexts, std::uint64_t seed) {
    return {true, contexts, seed};
  }
};

inline constexpr std::size_t kExactRsmLimit = 4096;
inline constexpr std::size_t kDefaultSampledContexts = 1024;

// Exact up to kExactRsmLimit objects, sampled beyond.
inline RsmMode default_rsm_mode(std::size_t n_objects, std::uint64_t seed = 0) {
  if (n_objects <= kExactRsmLimit) return RsmMode::exact();
  return RsmMode::sampled_contexts(kDefaultSampledContexts, seed);
}

namespace detail {

// Counter-based generator for per-pair context draws; cheap to construct.
class SplitMix {
 public:
  explicit SplitMix(std::uint64_t state) : state_(state) {}
  std::uint64_t next() { return splitmix64(state_++); }
  std::uint64_t below(std::uint64_t bound) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    for (;;) {
      const std::uint64_t x = next();
      if (x < limit) return x % bound;
    }
  }

 private:
  std::uint64_t state_;
};

// K distinct draws from [0, n) in ascending order (Floyd's algorithm).
inline void sample_sorted_subset(SplitMix& gen, std::size_t n, std::size_t k,
                                 std::vector<std::uint32_t>& out) {
  out.clear();
  for (std::size_t r = n - k; r < n; ++r) {
    const auto t = static_cast<std::uint32_t>(gen.below(r + 1));
    const auto it = std::lower_bound(out.begin(), out.end(), t);
    if (it != out.end() && *it == t)
      out.insert(std::lower_bound(out.begin(), out.end(), static_cast<std::uint32_t>(r)),
                 static_cast<std::uint32_t>(r));
    else
      out.insert(it, t);
  }
}

// Probability that (i, j) is the chosen pair given context k, max-subtracted.
inline double context_term(double s_ij, double s_ik, double s_jk) {
  const double top = std::max({s_ij, s_ik, s_jk});
  const double e0 = std::exp(s_ij - top);
  return e0 / (e0 + std::exp(s_ik - top) + std::exp(s_jk - top));
}

inline Matrix gram(const Matrix& y) {
  Matrix g = y * y.transpose();
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = i + 1; j < g.cols(); ++j) g(j, i) = g(i, j);
  return g;
}

// Exponentiating the whole Gram matrix against one shift is exact up to
// rounding as long as nothing underflows.
inline constexpr double kSharedShiftRange = 600.0;

}  // namespace detail

// Context-averaged softmax similarity:
//   S_ij = mean over k != i, j of exp(s_ij) / (exp(s_ij) + exp(s_ik) + exp(s_jk))
// with s = y y^T. Each pair's average is accumulated in ascending context
// order, so results do not depend on the worker count.
inline Rsm reconstruct_rsm(const Matrix& y, RsmMode mode = RsmMode::exact()) {
  const auto m = static_cast<std::size_t>(y.rows());
  if (m < 3) throw DataError("reconstruct_rsm needs at least 3 objects");
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index c = 0; c < y.cols(); ++c)
      if (!(y(i, c) >= 0.0) || !std::isfinite(y(i, c)))
        throw DataError("reconstruct_rsm needs a finite non-negative embedding");

  const Matrix g = detail::gram(y);
  const double g_max = g.maxCoeff();
  const double g_min = g.minCoeff();
  const bool shared_shift = (g_max - g_min) <= detail::kSharedShiftRange;
  Matrix e;
  if (shared_shift) e = (g.array() - g_max).exp().matrix();

  const bool use_all = !mode.sampled || mode.contexts >= m - 2;
  if (mode.sampled && mode.contexts == 0) throw DataError("sampled mode needs at least one context");

  Rsm out;
  out.metric = RsmMetric::softmax_choice_prob;
  out.values = Matrix::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));

  parallel_for(m, 1, [&](std::size_t row_begin, std::size_t row_end) {
    std::vector<std::uint32_t> ctx;
    for (std::size_t i = row_begin; i < row_end; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        double sum = 0.0;
        std::size_t count = 0;
        if (use_all) {
          if (shared_shift) {
            const double a = e(i, j);
            const double* ei = e.row(i).data();
            const double* ej = e.row(j).data();
            for (std::size_t k = 0; k < i; ++k) sum += a / (a + ei[k] + ej[k]);
            for (std::size_t k = i + 1; k < j; ++k) sum += a / (a + ei[k] + ej[k]);
            for (std::size_t k = j + 1; k < m; ++k) sum += a / (a + ei[k] + ej[k]);
          } else {
            const double s = g(i, j);
            for (std::size_t k = 0; k < m; ++k)
              if (k != i && k != j) sum += detail::context_term(s, g(i, k), g(j, k));
          }
          count = m - 2;
        } else {
          detail::SplitMix gen(splitmix64(mode.seed ^ stream_tag("contexts")) + i * m + j);
          detail::sample_sorted_subset(gen, m - 2, mode.contexts, ctx);
          for (const auto c : ctx) {
            // Map [0, m-2) onto objects other than i and j.
            std::size_t k = c;
            if (k >= i) ++k;
            if (k >= j) ++k;
            sum += shared_shift ? e(i, j) / (e(i, j) + e(i, k) + e(j, k))
                                : detail::context_term(g(i, j), g(i, k), g(j, k));
          }
          count = ctx.size();
        }
        const double v = sum / static_cast<double>(count);
        out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
        out.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
      }
    }
  });
  return out;
}

// Plain dot-product similarity y y^T. The diagonal keeps the squared norms.
inline Rsm dot_product_rsm(const Matrix& y) {
  return {detail::gram(y), RsmMetric::dot_product};
}

inline std::vector<double> upper_triangle(const Matrix& a) {
  std::vector<double> out;
  const auto n = a.rows();
  out.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) out.push_back(a(i, j));
  return out;
}

// Pearson correlation over the strict upper triangle.
inline double rsm_pearson(const Rsm& a, const Rsm& b) {
  if (a.size() != b.size())
    throw DataError("RSM size mismatch: " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  if (a.size() < 3) throw DataError("RSM correlation needs at least 3 objects");
  const auto ua = upper_triangle(a.values);
  const auto ub = upper_triangle(b.values);
  const auto r = pearson<double>(ua, ub);
  if (!r) throw NumericalError("RSM correlation undefined: zero variance");
  return *r;
}

// Restricts an RSM to the given objects, in the given order.
inline Rsm rsm_subset(const Rsm& rsm, std::span<const std::size_t> objects) {
  Rsm out;
  out.metric = rsm.metric;
  const auto n = static_cast<Eigen::Index>(objects.size());
  out.values.resize(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    if (objects[a] >= rsm.size()) throw DataError("RSM subset index out of range");
    for (Eigen::Index b = 0; b < n; ++b)
      out.values(a, b) = rsm.values(static_cast<Eigen::Index>(objects[a]),
                                    static_cast<Eigen::Index>(objects[b]));
  }
  return out;
}

// Squared upper-triangle Pearson, as a fraction of the noise ceiling when given.
inline double variance_explained_vs_ceiling(const Rsm& predicted, const Rsm& ground_truth,
                                            std::optional<double> noise_ceiling = std::nullopt) {
  if (predicted.size() != ground_truth.size())
    throw DataError("predicted and ground-truth subsets differ in size");
  const double r = rsm_pearson(predicted, ground_truth);
  if (!noise_ceiling) return r * r;
  if (!(*noise_ceiling > 0.0 && *noise_ceiling <= 1.0))
    throw DataError("noise ceiling must lie in (0, 1]");
  return r * r / *noise_ceiling;
}

// ---------------------------------------------------------------------------
// Dimension matching

struct DimensionMatch {
  std::size_t source = 0;
  std::size_t target = 0;
  double r = 0.0;
};

namespace detail {
inline std::vector<std::vector<double>> columns_of(const Matrix& a) {
  std::vector<std::vector<double>> cols(static_cast<std::size_t>(a.cols()));
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    cols[c].resize(static_cast<std::size_t>(a.rows()));
    for (Eigen::Index i = 0; i < a.rows(); ++i) cols[c][i] = a(i, c);
  }
  return cols;
}
}  // namespace detail

// Column-by-column Pearson matrix (source dims x target dims); constant
// columns correlate 0 with everything.
inline Matrix dimension_correlations(const Matrix& source, const Matrix& target) {
  if (source.rows() != target.rows())
    throw DataError("embeddings differ in object count: " + std::to_string(source.rows()) +
                    " vs " + std::to_string(target.rows()));
  const auto sc = detail::columns_of(source);
  const auto tc = detail::columns_of(target);
  Matrix r(source.cols(), target.cols());
  for (std::size_t a = 0; a < sc.size(); ++a)
    for (std::size_t b = 0; b < tc.size(); ++b)
      r(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          pearson_or_zero<double>(sc[a], tc[b]);
  return r;
}

// Pairs each source dimension with a target dimension by correlation. With
// replacement every source takes its best target; without, pairs are
// assigned greedily from the highest available correlation down and each
// target is used once. Sorted by descending r.
inline std::vector<DimensionMatch> match_dimensions(const Matrix& source, const Matrix& target,
                                                    bool with_replacement) {
  const Matrix r = dimension_correlations(source, target);
  const auto ns = static_cast<std::size_t>(r.rows());
  const auto nt = static_cast<std::size_t>(r.cols());
  std::vector<DimensionMatch> out;
  if (nt == 0) {
    if (ns == 0) return out;
    throw DataError("target embedding has no dimensions");
  }
  if (with_replacement) {
    for (std::size_t a = 0; a < ns; ++a) {
      std::size_t best = 0;
      for (std::size_t b = 1; b < nt; ++b)
        if (r(a, b) > r(a, best)) best = b;
      out.push_back({a, best, r(a, best)});
    }
  } else {
    if (nt < ns)
      throw DataError("matching without replacement needs at least as many target dimensions (" +
                      std::to_string(nt) + ") as source dimensions (" + std::to_string(ns) + ")");
    std::vector<DimensionMatch> all;
    all.reserve(ns * nt);
    for (std::size_t a = 0; a < ns; ++a)
      for (std::size_t b = 0; b < nt; ++b) all.push_back({a, b, r(a, b)});
    std::stable_sort(all.begin(), all.end(),
                     [](const DimensionMatch& x, const DimensionMatch& y) { return x.r > y.r; });
    std::vector<char> src_used(ns, 0), tgt_used(nt, 0);
    for (const auto& cand : all) {
      if (src_used[cand.source] || tgt_used[cand.target]) continue;
      src_used[cand.source] = tgt_used[cand.target] = 1;
      out.push_back(cand);
      if (out.size() == ns) break;
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const DimensionMatch& x, const DimensionMatch& y) { return x.r > y.r; });
  return out;
}

// ---------------------------------------------------------------------------
// Cumulative RSA

struct CumulativeRsaPoint {
  std::size_t k = 0;
  std::size_t dimension = 0;  // dimension added at this step
  double r = 0.0;
};

struct CumulativeRsa {
  std::vector<CumulativeRsaPoint> curve;
  double full_r = 0.0;  // all source dimensions
  // Smallest prefix whose r^2 reaches 95% of full_r^2 (with r > 0).
  std::optional<std::size_t> k95;
};

inline Matrix select_columns(const Matrix& a, std::span<const std::size_t> cols) {
  Matrix out(a.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (cols[c] >= static_cast<std::size_t>(a.cols()))
      throw DataError("dimension " + std::to_string(cols[c]) + " out of range");
    out.col(static_cast<Eigen::Index>(c)) = a.col(static_cast<Eigen::Index>(cols[c]));
  }
  return out;
}

inline CumulativeRsa cumulative_rsa(const Rsm& target, const Matrix& source,
                                    std::span<const std::size_t> ranking,
                                    std::optional<RsmMode> mode = std::nullopt,
                                    double fraction = 0.95) {
  if (ranking.empty()) throw DataError("cumulative RSA needs a non-empty ranking");
  if (target.size() != static_cast<std::size_t>(source.rows()))
    throw DataError("target RSM and source embedding differ in object count");
  const RsmMode rm = mode.value_or(default_rsm_mode(target.size()));

  CumulativeRsa out;
  std::vector<std::size_t> prefix;
  for (const auto d : ranking) {
    prefix.push_back(d);
    const Rsm rsm = reconstruct_rsm(select_columns(source, prefix), rm);
    out.curve.push_back({prefix.size(), d, rsm_pearson(target, rsm)});
  }

  const bool ranking_is_full = [&] {
    if (ranking.size() != static_cast<std::size_t>(source.cols())) return false;
    std::vector<std::size_t> s(ranking.begin(), ranking.end());
    std::sort(s.begin(), s.end());
    return std::unique(s.begin(), s.end()) == s.end();
  }();
  out.full_r = ranking_is_full ? out.curve.back().r
                               : rsm_pearson(target, reconstruct_rsm(source, rm));

  const double goal = fraction * out.full_r * out.full_r;
  for (const auto& pt : out.curve)
    if (pt.r > 0.0 && pt.r * pt.r >= goal) {
      out.k95 = pt.k;
      break;
    }
  return out;
}

}  // namespace triplet_embed
