#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "io.hpp"
#include "vice.hpp"

namespace triplet_embed {

// Embedding directory layout:
//   embedding_pruned.tsv  objects x active dims, header = dimension ids (required)
//   embedding_mu.tsv      objects x p_init posterior means, header = 0..p-1
//   embedding_sigma.tsv   objects x p_init posterior scales
//   train_log.json        prior, config, per-epoch history

inline nlohmann::ordered_json to_json(const PriorConfig& p) {
  return {{"pi", p.pi}, {"sigma_spike", p.sigma_spike}, {"sigma_slab", p.sigma_slab}};
}

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"p_init", c.p_init},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"stability_window", c.stability_window},
          {"mc_samples", c.mc_samples},
          {"learning_rate", c.learning_rate},
          {"prune_every", c.prune_every},
          {"keep_prob_threshold", c.keep_prob_threshold},
          {"min_objects", c.min_objects},
          {"seed", c.seed},
          {"val_fraction", c.val_fraction},
          {"init_mu_scale", c.init_mu_scale},
          {"init_sigma", c.init_sigma}};
}

inline void save_training_output(const fs::path& dir, const TrainResult& result,
                                 const TrainConfig& cfg) {
  const auto& emb = result.embedding;
  std::vector<std::int64_t> all_ids(emb.p_init());
  for (std::size_t c = 0; c < all_ids.size(); ++c) all_ids[c] = static_cast<std::int64_t>(c);
  std::vector<std::int64_t> active_ids(emb.active_dims.begin(), emb.active_dims.end());

  write_file_atomic(dir / "embedding_mu.tsv", matrix_to_tsv(emb.mu, all_ids));
  write_file_atomic(dir / "embedding_sigma.tsv",
                    matrix_to_tsv(emb.log_sigma.array().exp().matrix(), all_ids));
  write_file_atomic(dir / "embedding_pruned.tsv", matrix_to_tsv(emb.point_estimate(), active_ids));

  nlohmann::ordered_json log;
  log["n_objects"] = emb.n_objects();
  log["p_init"] = emb.p_init();
  log["n_train"] = emb.n_train;
  log["seed"] = emb.seed;
  log["prior"] = to_json(emb.prior);
  log["config"] = to_json(cfg);
  log["active_dims"] = emb.active_dims;
  log["stop_reason"] = result.stop_reason;
  log["epochs_run"] = result.history.size();
  auto& epochs = log["epochs"] = nlohmann::ordered_json::array();
  for (const auto& r : result.history)
    epochs.push_back({{"epoch", r.epoch},
                      {"train_loss", r.train_loss},
                      {"val_accuracy", r.val_accuracy},
                      {"n_active", r.n_active}});
  write_file_atomic(dir / "train_log.json", log.dump(2) + "\n");
}

struct EmbeddingDir {
  Matrix pruned;                         // non-negative point estimate
  std::vector<std::int64_t> dimension_ids;  // column ids of `pruned`
  std::optional<Matrix> mu;              // present for trained embeddings
  std::optional<Matrix> sigma;

  // Point estimate over all p_init columns with pruned columns zeroed, when
  // the posterior means are available; otherwise the pruned matrix.
  Matrix full_point_estimate() const {
    if (!mu) return pruned;
    Matrix out = Matrix::Zero(mu->rows(), mu->cols());
    for (const auto id : dimension_ids) {
      if (id < 0 || id >= mu->cols())
        throw DataError("dimension id " + std::to_string(id) + " outside embedding_mu.tsv");
      out.col(id) = mu->col(id).cwiseMax(0.0);
    }
    return out;
  }
};

inline EmbeddingDir load_embedding_dir(const fs::path& dir) {
  const fs::path pruned_path = dir / "embedding_pruned.tsv";
  if (!fs::exists(pruned_path)) throw DataError("missing " + pruned_path.string());
  EmbeddingDir out;
  auto pruned = read_tsv_matrix(pruned_path, true);
  out.pruned = std::move(pruned.values);
  out.dimension_ids = std::move(pruned.column_ids);
  for (Eigen::Index i = 0; i < out.pruned.rows(); ++i)
    for (Eigen::Index c = 0; c < out.pruned.cols(); ++c)
      if (!std::isfinite(out.pruned(i, c)) || out.pruned(i, c) < 0.0)
        throw DataError(pruned_path.string() + ": entries must be finite and non-negative");
  if (fs::exists(dir / "embedding_mu.tsv")) {
    out.mu = read_tsv_matrix(dir / "embedding_mu.tsv", true).values;
    if (out.mu->rows() != out.pruned.rows() && out.pruned.cols() > 0)
      throw DataError(dir.string() + ": embedding_mu.tsv and embedding_pruned.tsv differ in rows");
  }
  if (fs::exists(dir / "embedding_sigma.tsv"))
    out.sigma = read_tsv_matrix(dir / "embedding_sigma.tsv", true).values;
  return out;
}

}  // namespace triplet_embed
