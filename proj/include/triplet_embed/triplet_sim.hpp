#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string_view>
#include <vector>

#include "data.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace triplet_embed {

// How exact dot-product ties between candidate pairs are resolved. Pairs are
// compared as canonical (min index, max index).
enum class TieRule { lowest_pair, highest_pair };

inline std::optional<TieRule> parse_tie_rule(std::string_view s) {
  if (s == "lowest-pair") return TieRule::lowest_pair;
  if (s == "highest-pair") return TieRule::highest_pair;
  return std::nullopt;
}

inline std::string_view to_string(TieRule r) {
  return r == TieRule::lowest_pair ? "lowest-pair" : "highest-pair";
}

// Odd-one-out decision: the pair with the largest dot product is the similar
// pair, the remaining object is odd.
inline TripletRecord choose_odd_one_out(const Matrix& z, ObjectIndex i, ObjectIndex j,
                                        ObjectIndex k, TieRule tie_rule = TieRule::lowest_pair) {
  if (i == j || i == k || j == k) throw DataError("choose_odd_one_out: indices must be distinct");
  const auto n = static_cast<std::size_t>(z.rows());
  if (i >= n || j >= n || k >= n) throw DataError("choose_odd_one_out: index out of range");

  const TripletRecord candidates[3] = {canonicalize({i, j, k}), canonicalize({i, k, j}),
                                       canonicalize({j, k, i})};
  const double sims[3] = {z.row(i).dot(z.row(j)), z.row(i).dot(z.row(k)),
                          z.row(j).dot(z.row(k))};
  int best = 0;
  for (int c = 1; c < 3; ++c) {
    if (sims[c] > sims[best]) {
      best = c;
    } else if (sims[c] == sims[best]) {
      const auto key = [](const TripletRecord& t) { return std::pair{t.pair_a, t.pair_b}; };
      const bool smaller = key(candidates[c]) < key(candidates[best]);
      if ((tie_rule == TieRule::lowest_pair) == smaller) best = c;
    }
  }
  return candidates[best];
}

inline TripletRecord choose_odd_one_out(const FeatureMatrix& features, ObjectIndex i,
                                        ObjectIndex j, ObjectIndex k,
                                        TieRule tie_rule = TieRule::lowest_pair) {
  return choose_odd_one_out(features.values(), i, j, k, tie_rule);
}

inline std::uint64_t n_choose_3(std::uint64_t m) {
  if (m < 3) return 0;
  // exact in 64 bits for m < 2^21
  return m * (m - 1) * (m - 2) / 6;
}

namespace detail {

inline constexpr unsigned kKeyBits = 21;
inline constexpr std::uint64_t kKeyMask = (std::uint64_t{1} << kKeyBits) - 1;

// i < j < k packed into one word.
constexpr std::uint64_t pack_triple(std::uint64_t i, std::uint64_t j, std::uint64_t k) {
  return (i << (2 * kKeyBits)) | (j << kKeyBits) | k;
}

constexpr std::array<ObjectIndex, 3> unpack_triple(std::uint64_t key) {
  return {static_cast<ObjectIndex>(key >> (2 * kKeyBits)),
          static_cast<ObjectIndex>((key >> kKeyBits) & kKeyMask),
          static_cast<ObjectIndex>(key & kKeyMask)};
}

inline std::uint64_t draw_triple(Rng& rng, std::uint64_t m) {
  std::uint64_t a = uniform_index(rng, m);
  std::uint64_t b = uniform_index(rng, m - 1);
  if (b >= a) ++b;
  if (a > b) std::swap(a, b);
  std::uint64_t c = uniform_index(rng, m - 2);
  if (c >= a) ++c;
  if (c >= b) ++c;
  std::uint64_t t[3] = {a, b, c};
  std::sort(t, t + 3);
  return pack_triple(t[0], t[1], t[2]);
}

inline std::vector<std::uint64_t> all_triple_keys(std::uint64_t m) {
  std::vector<std::uint64_t> keys;
  keys.reserve(n_choose_3(m));
  for (std::uint64_t i = 0; i < m; ++i)
    for (std::uint64_t j = i + 1; j < m; ++j)
      for (std::uint64_t k = j + 1; k < m; ++k) keys.push_back(pack_triple(i, j, k));
  return keys;
}

// Drops later repeats of a key, preserving first-occurrence order.
inline void drop_repeats(std::vector<std::uint64_t>& keys) {
  std::vector<std::uint32_t> order(keys.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t x, std::uint32_t y) {
    return keys[x] != keys[y] ? keys[x] < keys[y] : x < y;
  });
  std::vector<char> keep(keys.size(), 1);
  for (std::size_t r = 1; r < order.size(); ++r)
    if (keys[order[r]] == keys[order[r - 1]]) keep[order[r]] = 0;
  std::size_t w = 0;
  for (std::size_t r = 0; r < keys.size(); ++r)
    if (keep[r]) keys[w++] = keys[r];
  keys.resize(w);
}

inline TripletDataset decide_all(const Matrix& z, const std::vector<std::uint64_t>& keys,
                                 TieRule tie_rule) {
  TripletDataset ds;
  ds.n_objects = static_cast<std::size_t>(z.rows());
  ds.provenance = Provenance::simulated;
  ds.records.resize(keys.size());
  parallel_for(keys.size(), 4096, [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) {
      const auto [i, j, k] = unpack_triple(keys[s]);
      ds.records[s] = choose_odd_one_out(z, i, j, k, tie_rule);
    }
  });
  return ds;
}

inline void check_triple_capacity(std::uint64_t m) {
  if (m < 3) throw DataError("need at least 3 objects to form a triplet");
  if (m > kKeyMask + 1) throw DataError("too many objects for triplet sampling");
}

}  // namespace detail

struct SampleOptions {
  TieRule tie_rule = TieRule::lowest_pair;
  bool allow_repeats = false;
};

// Draws n uniformly random triples (distinct unless allow_repeats) and labels
// each with choose_odd_one_out. Index sets come from the "sample" substream
// of `seed` in a fixed sequential order, so output does not depend on the
// worker count.
inline TripletDataset sample_triplet_dataset(const Matrix& z, std::uint64_t n, std::uint64_t seed,
                                             SampleOptions opts = {}) {
  const auto m = static_cast<std::uint64_t>(z.rows());
  detail::check_triple_capacity(m);
  if (n == 0) throw DataError("sample size must be at least 1");
  const std::uint64_t total = n_choose_3(m);
  if (!opts.allow_repeats && n > total)
    throw DataError("requested " + std::to_string(n) + " distinct triplets but only " +
                    std::to_string(total) + " exist for " + std::to_string(m) + " objects");

  Rng rng = substream(seed, "sample");
  std::vector<std::uint64_t> keys;
  if (!opts.allow_repeats && total <= 10 * n) {
    // Dense regime: partial Fisher-Yates over the full enumeration.
    keys = detail::all_triple_keys(m);
    for (std::uint64_t s = 0; s < n; ++s) {
      const std::uint64_t r = s + uniform_index(rng, total - s);
      std::swap(keys[s], keys[r]);
    }
    keys.resize(n);
  } else {
    keys.reserve(n);
    while (keys.size() < n) {
      const std::uint64_t missing = n - keys.size();
      for (std::uint64_t s = 0; s < missing; ++s) keys.push_back(detail::draw_triple(rng, m));
      if (opts.allow_repeats) break;
      detail::drop_repeats(keys);
    }
  }
  return detail::decide_all(z, keys, opts.tie_rule);
}

inline TripletDataset sample_triplet_dataset(const FeatureMatrix& features, std::uint64_t n,
                                             std::uint64_t seed, SampleOptions opts = {}) {
  return sample_triplet_dataset(features.values(), n, seed, opts);
}

inline constexpr std::uint64_t kDefaultEnumerationCap = 50'000'000;

// Every distinct triple once, in lexicographic (i < j < k) order.
inline TripletDataset enumerate_all_triplets(const Matrix& z, TieRule tie_rule = TieRule::lowest_pair,
                                             std::uint64_t cap = kDefaultEnumerationCap) {
  const auto m = static_cast<std::uint64_t>(z.rows());
  detail::check_triple_capacity(m);
  const std::uint64_t total = n_choose_3(m);
  if (total > cap)
    throw DataError("enumerating " + std::to_string(total) + " triplets exceeds cap " +
                    std::to_string(cap));
  return detail::decide_all(z, detail::all_triple_keys(m), tie_rule);
}

inline TripletDataset enumerate_all_triplets(const FeatureMatrix& features,
                                             TieRule tie_rule = TieRule::lowest_pair,
                                             std::uint64_t cap = kDefaultEnumerationCap) {
  return enumerate_all_triplets(features.values(), tie_rule, cap);
}

}  // namespace triplet_embed
