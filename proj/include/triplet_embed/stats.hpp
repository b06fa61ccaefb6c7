#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>

namespace triplet_embed {

inline constexpr double kFisherClamp = 1.0 - 1e-7;

inline double fisher_z(double r) {
  r = std::clamp(r, -kFisherClamp, kFisherClamp);
  return std::atanh(r);
}

inline double fisher_z_inverse(double z) { return std::tanh(z); }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Pearson correlation; nullopt when either input has zero variance.
template <class Real>
std::optional<double> pearson(std::span<const Real> a, std::span<const Real> b) {
  const std::size_t n = a.size();
  if (n != b.size() || n < 2) return std::nullopt;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// Correlation with a constant column is taken as 0.
template <class Real>
double pearson_or_zero(std::span<const Real> a, std::span<const Real> b) {
  return pearson(a, b).value_or(0.0);
}

}  // namespace triplet_embed
