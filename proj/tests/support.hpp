#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <triplet_embed/triplet_embed.hpp>

namespace support {

using triplet_embed::Matrix;

// Uniform [0, 1) entries.
inline Matrix random_nonneg(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  auto rng = triplet_embed::substream(seed, "test-matrix");
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) out(i, c) = triplet_embed::uniform_unit(rng);
  return out;
}

inline Matrix random_normal(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  auto rng = triplet_embed::substream(seed, "test-normal");
  triplet_embed::StandardNormal normal;
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) out(i, c) = normal(rng);
  return out;
}

// Sparse non-negative ground truth: each entry is active with probability
// `density`, active values uniform in [0.5, 2).
inline Matrix sparse_ground_truth(Eigen::Index objects, Eigen::Index dims, double density,
                                  std::uint64_t seed) {
  auto rng = triplet_embed::substream(seed, "truth");
  Matrix w = Matrix::Zero(objects, dims);
  for (Eigen::Index i = 0; i < objects; ++i)
    for (Eigen::Index c = 0; c < dims; ++c)
      if (triplet_embed::uniform_unit(rng) < density) w(i, c) = 0.5 + 1.5 * triplet_embed::uniform_unit(rng);
  return w;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    auto rng = triplet_embed::substream(reinterpret_cast<std::uintptr_t>(this), tag);
    path_ = std::filesystem::temp_directory_path() /
            ("triplet_embed_" + tag + "_" + std::to_string(rng() % 1000000000ULL));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace support
