#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "data.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "vice.hpp"

namespace triplet_embed {

inline double triplet_choice_probability(const Matrix& y, const TripletRecord& t) {
  const double s0 = y.row(t.pair_a).dot(y.row(t.pair_b));
  const double s1 = y.row(t.pair_a).dot(y.row(t.odd));
  const double s2 = y.row(t.pair_b).dot(y.row(t.odd));
  return pair_probabilities(s0, s1, s2).chosen;
}

// delta_j = p_full - p_without_j, where p_without_j zeroes column j. Each
// column's contribution is subtracted from the three cached dot products, so
// the whole vector costs O(p).
inline std::vector<double> jackknife_relevance(const Matrix& y, const TripletRecord& t,
                                               double* p_full_out = nullptr) {
  const auto ra = y.row(t.pair_a);
  const auto rb = y.row(t.pair_b);
  const auto ro = y.row(t.odd);
  const double s0 = ra.dot(rb);
  const double s1 = ra.dot(ro);
  const double s2 = rb.dot(ro);
  const double p_full = pair_probabilities(s0, s1, s2).chosen;
  if (p_full_out) *p_full_out = p_full;
  std::vector<double> delta(static_cast<std::size_t>(y.cols()));
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    const double p_without =
        pair_probabilities(s0 - ra[j] * rb[j], s1 - ra[j] * ro[j], s2 - rb[j] * ro[j]).chosen;
    delta[j] = p_full - p_without;
  }
  return delta;
}

struct TripletRelevance {
  std::size_t triplet = 0;
  double p_full = 0.0;
  std::size_t winner = 0;  // argmax signed delta over contributing dimensions
  double winner_delta = 0.0;
  DimensionLabel label = DimensionLabel::unclear;
  std::size_t winner_abs = 0;  // argmax |delta|
  double winner_abs_delta = 0.0;
  DimensionLabel label_abs = DimensionLabel::unclear;
};

struct LabelHistogram {
  std::array<std::size_t, 4> counts{};

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto c : counts) t += c;
    return t;
  }
  double fraction(DimensionLabel l) const {
    const auto t = total();
    return t == 0 ? 0.0 : static_cast<double>(counts[static_cast<std::size_t>(l)]) / static_cast<double>(t);
  }
};

struct RelevanceReport {
  std::vector<TripletRelevance> triplets;
  LabelHistogram signed_histogram;
  LabelHistogram abs_histogram;
};

// Most relevant dimension per triplet and the label histogram over winners.
// Unlabeled winners count as unclear.
inline RelevanceReport aggregate_relevance(const Matrix& y, const TripletDataset& triplets,
                                           const DimensionLabelTable& labels) {
  if (y.cols() < 1) throw DataError("relevance needs at least one embedding dimension");
  if (static_cast<std::size_t>(y.rows()) < triplets.n_objects)
    throw DataError("triplets reference more objects than the embedding has");
  triplets.validate();
  RelevanceReport out;
  out.triplets.resize(triplets.size());
  parallel_for(triplets.size(), 1024, [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) {
      TripletRelevance rel;
      rel.triplet = s;
      const auto& t = triplets.records[s];
      const auto delta = jackknife_relevance(y, t, &rel.p_full);
      // Only dimensions touching at least one of the three pairs compete,
      // so all-zero columns never win.
      const auto contributes = [&](Eigen::Index j) {
        return y(t.pair_a, j) * y(t.pair_b, j) != 0.0 || y(t.pair_a, j) * y(t.odd, j) != 0.0 ||
               y(t.pair_b, j) * y(t.odd, j) != 0.0;
      };
      std::size_t best = 0, best_abs = 0;
      bool found = false;
      for (std::size_t j = 0; j < delta.size(); ++j) {
        if (!contributes(static_cast<Eigen::Index>(j))) continue;
        if (!found || delta[j] > delta[best]) best = j;
        if (!found || std::abs(delta[j]) > std::abs(delta[best_abs])) best_abs = j;
        found = true;
      }
      rel.winner = best;
      rel.winner_delta = delta[best];
      rel.label = labels.at(best);
      rel.winner_abs = best_abs;
      rel.winner_abs_delta = delta[best_abs];
      rel.label_abs = labels.at(best_abs);
      out.triplets[s] = rel;
    }
  });
  for (const auto& r : out.triplets) {
    ++out.signed_histogram.counts[static_cast<std::size_t>(r.label)];
    ++out.abs_histogram.counts[static_cast<std::size_t>(r.label_abs)];
  }
  return out;
}

struct Divergence {
  std::size_t triplet = 0;
  double p_a = 0.0;
  double p_b = 0.0;
  double difference = 0.0;  // p_a - p_b
};

// Triplets ordered by how differently two embeddings predict the recorded
// choice (largest |p_a - p_b| first; ties by triplet index).
inline std::vector<Divergence> rank_by_divergence(const Matrix& a, const Matrix& b,
                                                  const TripletDataset& triplets) {
  if (a.rows() != b.rows()) throw DataError("embeddings differ in object count");
  triplets.validate();
  std::vector<Divergence> out(triplets.size());
  parallel_for(triplets.size(), 4096, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t s = lo; s < hi; ++s) {
      const double pa = triplet_choice_probability(a, triplets.records[s]);
      const double pb = triplet_choice_probability(b, triplets.records[s]);
      out[s] = {s, pa, pb, pa - pb};
    }
  });
  std::stable_sort(out.begin(), out.end(), [](const Divergence& x, const Divergence& y) {
    return std::abs(x.difference) > std::abs(y.difference);
  });
  return out;
}

}  // namespace triplet_embed
