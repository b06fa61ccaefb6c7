#pragma once

// Command-line front end. Every subcommand reads its declared inputs, writes
// outputs atomically and prints a JSON run manifest on stdout.

#include <glob.h>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <triplet_embed/triplet_embed.hpp>

#include "svg.hpp"

namespace triplet_embed::cli {

using json = nlohmann::ordered_json;

enum ExitCode : int { ok = 0, usage_error = 1, data_error = 2, numerical_error = 3 };

namespace detail {

inline std::vector<std::string> expand_glob(const std::string& pattern) {
  glob_t g{};
  std::vector<std::string> out;
  if (::glob(pattern.c_str(), 0, nullptr, &g) == 0)
    for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
  ::globfree(&g);
  std::sort(out.begin(), out.end());
  return out;
}

inline RsmMode parse_rsm_mode(const std::string& s, std::size_t n_objects, std::uint64_t seed) {
  if (s.empty() || s == "auto") return default_rsm_mode(n_objects, seed);
  if (s == "exact") return RsmMode::exact();
  if (s.rfind("sampled:", 0) == 0) {
    const auto k = parse_integer(std::string_view(s).substr(8), "--mode");
    if (k < 1) throw DataError("--mode sampled:K needs K >= 1");
    return RsmMode::sampled_contexts(static_cast<std::size_t>(k), seed);
  }
  throw DataError("unknown --mode '" + s + "' (expected exact, sampled:K or auto)");
}

// A literal fraction, or the path of a file whose first token is one.
inline double read_noise_ceiling(const std::string& arg) {
  if (!fs::exists(arg)) return parse_real(arg, "--noise-ceiling");
  std::istringstream in(read_file(arg));
  std::string token;
  if (!(in >> token)) throw DataError(arg + ": empty noise-ceiling file");
  return parse_real(token, arg);
}

inline json mode_json(const RsmMode& m) {
  if (!m.sampled) return "exact";
  return "sampled:" + std::to_string(m.contexts);
}

inline ColumnOrder column_order_or_throw(const std::string& s) {
  const auto o = parse_column_order(s);
  if (!o) throw DataError("unknown --column-order '" + s + "' (pair-pair-odd or odd-pair-pair)");
  return *o;
}

inline std::string json_text(const json& j) { return j.dump(2) + "\n"; }

// Merges a JSON config file into argv: keys name long flags, and only flags
// absent from the command line are added.
inline std::vector<std::string> apply_config(std::vector<std::string> args) {
  std::optional<std::string> config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (!config_path) return args;
  json cfg;
  try {
    cfg = json::parse(read_file(*config_path));
  } catch (const json::exception& e) {
    throw DataError(*config_path + ": invalid JSON: " + e.what());
  }
  if (!cfg.is_object()) throw DataError(*config_path + ": config must be a JSON object");
  const auto given = [&](const std::string& flag) {
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  for (const auto& [key, value] : cfg.items()) {
    const std::string flag = "--" + key;
    if (key == "config" || given(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        args.push_back(flag);
        args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
      }
    } else {
      args.push_back(flag);
      args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
  }
  return args;
}

}  // namespace detail

struct Options {
  // shared
  std::string features, triplets, labels, out, embedding, embedding_a, embedding_b;
  std::string column_order = "pair-pair-odd";
  std::int64_t n_objects = -1;
  bool allow_raw = false;
  std::uint64_t seed = 0;
  // simulate
  std::uint64_t n = 0;
  std::string tie_rule = "lowest-pair";
  bool allow_repeats = false;
  // train
  TrainConfig train;
  PriorConfig prior;
  bool quiet = false;
  // reliability
  std::vector<std::string> runs;
  // rsa
  std::string mode = "auto";
  std::string features_b, ground_truth, subset;
  std::string noise_ceiling;
  std::string rsm_out;
  // match-dims / cumulative-rsa
  bool with_replacement = false;
  std::string target_embedding, target_features, source_embedding;
  std::string ranking = "match";
  // jackknife
  std::string divergence_other;
  std::int64_t top = 100;
  bool emit_deltas = false;
  // ridge
  std::size_t folds = 5;
  std::vector<double> lambdas;
  // report
  std::string cumulative, jackknife;
  // validate
  std::int64_t dims = -1;
};

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
      args = detail::apply_config(std::move(args));
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << "\n";
      return data_error;
    }

    CLI::App app{"Sparse non-negative embeddings from triplet odd-one-out behavior", "triplet_embed"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    std::size_t threads = 0;
    std::string config;
    app.add_option("--threads", threads, "Worker cap (default: TRIPLET_EMBED_THREADS or all cores)");
    app.add_option("--config", config, "JSON file of flag defaults (command line wins)");
    build(app);

    try {
      std::vector<std::string> reversed(args.rbegin(), args.rend());
      app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
      out_ << app.help();
      return ok;
    } catch (const CLI::CallForAllHelp&) {
      out_ << app.help("", CLI::AppFormatMode::All);
      return ok;
    } catch (const CLI::ParseError& e) {
      err_ << "error: " << e.what() << "\n\n" << app.help();
      return usage_error;
    }
    if (threads > 0) set_max_threads(threads);

    const auto start = std::chrono::steady_clock::now();
    manifest_ = json::object();
    try {
      for (const auto* sub : app.get_subcommands()) {
        manifest_["command"] = sub->get_name();
        dispatch(sub->get_name());
      }
    } catch (const DataError& e) {
      err_ << "data error: " << e.what() << "\n";
      return data_error;
    } catch (const NumericalError& e) {
      err_ << "numerical error: " << e.what() << "\n";
      return numerical_error;
    } catch (const fs::filesystem_error& e) {
      err_ << "data error: " << e.what() << "\n";
      return data_error;
    } catch (const std::exception& e) {
      err_ << "numerical error: " << e.what() << "\n";
      return numerical_error;
    }
    manifest_["version"] = TRIPLET_EMBED_VERSION;
    manifest_["threads"] = max_threads();
    manifest_["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out_ << manifest_.dump(2) << "\n";
    return ok;
  }

 private:
  void build(CLI::App& app) {
    auto& o = opt_;
    {
      auto* s = app.add_subcommand("validate", "Check a feature directory, triplet file or label file");
      s->add_option("--features", o.features, "Feature directory");
      s->add_flag("--allow-raw", o.allow_raw, "Rectify negative features instead of rejecting");
      s->add_option("--triplets", o.triplets, "Triplet TSV");
      s->add_option("--n-objects", o.n_objects, "Object count for triplets");
      s->add_option("--column-order", o.column_order, "pair-pair-odd | odd-pair-pair");
      s->add_option("--labels", o.labels, "labels.tsv");
      s->add_option("--dims", o.dims, "Embedding dimensionality for label checks");
    }
    {
      auto* s = app.add_subcommand("simulate", "Sample odd-one-out choices from a feature matrix");
      s->add_option("--features", o.features, "Feature directory")->required();
      s->add_option("--n", o.n, "Number of triplets")->required();
      s->add_option("--seed", o.seed, "Root seed");
      s->add_option("--out", o.out, "Output triplets.tsv")->required();
      s->add_option("--tie-rule", o.tie_rule, "lowest-pair | highest-pair");
      s->add_flag("--allow-repeats", o.allow_repeats, "Allow the same triple more than once");
      s->add_flag("--allow-raw", o.allow_raw, "Rectify negative features instead of rejecting");
    }
    {
      auto* s = app.add_subcommand("train", "Learn a sparse non-negative embedding from triplets");
      auto& t = o.train;
      auto& p = o.prior;
      s->add_option("--triplets", o.triplets, "Triplet TSV")->required();
      s->add_option("--n-objects", o.n_objects, "Object count (default: max index + 1)");
      s->add_option("--column-order", o.column_order, "pair-pair-odd | odd-pair-pair");
      s->add_option("--out", o.out, "Output directory")->required();
      s->add_option("--seed", t.seed, "Root seed");
      s->add_option("--p-init", t.p_init, "Initial dimensionality");
      s->add_option("--batch-size", t.batch_size);
      s->add_option("--max-epochs", t.max_epochs);
      s->add_option("--stability-window", t.stability_window,
                    "Stop after this many epochs without a dimensionality change");
      s->add_option("--mc-samples", t.mc_samples);
      s->add_option("--learning-rate", t.learning_rate);
      s->add_option("--prune-every", t.prune_every);
      s->add_option("--keep-prob", t.keep_prob_threshold, "Pr(w > 0) threshold for a reliable entry");
      s->add_option("--min-objects", t.min_objects, "Reliable entries needed to keep a dimension");
      s->add_option("--val-fraction", t.val_fraction);
      s->add_option("--init-mu-scale", t.init_mu_scale);
      s->add_option("--init-sigma", t.init_sigma);
      s->add_option("--pi", p.pi, "Spike mixture weight");
      s->add_option("--sigma-spike", p.sigma_spike);
      s->add_option("--sigma-slab", p.sigma_slab);
      s->add_flag("--quiet", o.quiet, "No per-epoch progress on stderr");
    }
    {
      auto* s = app.add_subcommand("reliability", "Split-half reliability across training runs");
      s->add_option("--runs", o.runs, "Run directories or glob patterns")->required();
      s->add_option("--out", o.out, "Output reliability.json")->required();
    }
    {
      auto* s = app.add_subcommand("rsa", "Reconstruct and correlate similarity matrices");
      s->add_option("--embedding-a", o.embedding_a, "Embedding directory")->required();
      s->add_option("--embedding-b", o.embedding_b, "Second embedding directory");
      s->add_option("--features-b", o.features_b, "Feature directory (dot-product RSM)");
      s->add_option("--ground-truth", o.ground_truth, "Square RSM as TSV");
      s->add_option("--subset", o.subset, "Object indices (one per line) to restrict to");
      s->add_option("--noise-ceiling", o.noise_ceiling, "Ceiling in (0, 1], or a file holding it");
      s->add_option("--mode", o.mode, "exact | sampled:K | auto");
      s->add_option("--seed", o.seed, "Seed for sampled contexts");
      s->add_option("--rsm-out", o.rsm_out, "Also write embedding-a's RSM as TSV");
      s->add_option("--out", o.out, "Output rsa.json")->required();
    }
    {
      auto* s = app.add_subcommand("match-dims", "Match dimensions of two embeddings by correlation");
      s->add_option("--embedding-a", o.embedding_a, "Source embedding")->required();
      s->add_option("--embedding-b", o.embedding_b, "Target embedding")->required();
      s->add_flag("--with-replacement", o.with_replacement);
      s->add_option("--out", o.out, "Output TSV")->required();
    }
    {
      auto* s = app.add_subcommand("cumulative-rsa", "RSA of growing source-dimension prefixes");
      s->add_option("--target-embedding", o.target_embedding, "Embedding defining the target RSM");
      s->add_option("--target-features", o.target_features, "Features defining a dot-product target RSM");
      s->add_option("--source-embedding", o.source_embedding, "Embedding whose dimensions are added")
          ->required();
      s->add_option("--ranking", o.ranking, "match | importance");
      s->add_option("--mode", o.mode, "exact | sampled:K | auto");
      s->add_option("--seed", o.seed, "Seed for sampled contexts");
      s->add_option("--out", o.out, "Output curve TSV")->required();
    }
    {
      auto* s = app.add_subcommand("jackknife", "Per-triplet dimension relevance");
      s->add_option("--embedding", o.embedding, "Embedding directory")->required();
      s->add_option("--triplets", o.triplets, "Triplet TSV")->required();
      s->add_option("--column-order", o.column_order, "pair-pair-odd | odd-pair-pair");
      s->add_option("--labels", o.labels, "labels.tsv (column position -> label)");
      s->add_option("--rank-by-divergence", o.divergence_other, "Second embedding directory");
      s->add_option("--top", o.top, "Divergent triplets to keep (-1 = all)");
      s->add_flag("--emit-deltas", o.emit_deltas, "Include full delta vectors per triplet");
      s->add_option("--out", o.out, "Output report.json")->required();
    }
    {
      auto* s = app.add_subcommand("ridge", "Ridge maps from features to embedding dimensions");
      s->add_option("--features", o.features, "Feature directory")->required();
      s->add_option("--embedding", o.embedding, "Embedding directory")->required();
      s->add_option("--folds", o.folds, "Cross-validation folds");
      s->add_option("--lambdas", o.lambdas, "Lambda grid (default 1e-3 .. 1e4)");
      s->add_flag("--allow-raw", o.allow_raw, "Rectify negative features instead of rejecting");
      s->add_option("--out", o.out, "Output directory")->required();
    }
    {
      auto* s = app.add_subcommand("report", "Render summary charts as SVG");
      s->add_option("--cumulative", o.cumulative, "Curve TSV from cumulative-rsa");
      s->add_option("--jackknife", o.jackknife, "report.json from jackknife");
      s->add_option("--out", o.out, "Output directory")->required();
    }
  }

  void dispatch(const std::string& name) {
    if (name == "validate") return validate();
    if (name == "simulate") return simulate();
    if (name == "train") return train_cmd();
    if (name == "reliability") return reliability();
    if (name == "rsa") return rsa();
    if (name == "match-dims") return match_dims();
    if (name == "cumulative-rsa") return cumulative();
    if (name == "jackknife") return jackknife();
    if (name == "ridge") return ridge();
    if (name == "report") return report();
  }

  std::optional<std::size_t> n_objects_opt() const {
    if (opt_.n_objects < 0) return std::nullopt;
    return static_cast<std::size_t>(opt_.n_objects);
  }

  void validate() {
    const auto& o = opt_;
    json checked = json::object();
    if (o.features.empty() && o.triplets.empty() && o.labels.empty())
      throw DataError("validate needs --features, --triplets or --labels");
    if (!o.features.empty()) {
      const auto fm = load_feature_matrix(o.features, {o.allow_raw});
      checked["features"] = {{"path", o.features},
                             {"n_objects", fm.n_objects()},
                             {"n_features", fm.n_features()}};
    }
    if (!o.triplets.empty()) {
      const auto ds = load_triplets(o.triplets, detail::column_order_or_throw(o.column_order),
                                    n_objects_opt());
      checked["triplets"] = {{"path", o.triplets}, {"n_records", ds.size()}, {"n_objects", ds.n_objects}};
    }
    if (!o.labels.empty()) {
      if (o.dims < 0) throw DataError("validating labels needs --dims");
      const auto table = load_labels(o.labels, static_cast<std::size_t>(o.dims));
      checked["labels"] = {{"path", o.labels}, {"n_labeled", table.entries().size()}};
    }
    manifest_["inputs"] = checked;
    manifest_["valid"] = true;
  }

  void simulate() {
    const auto& o = opt_;
    const auto tie = parse_tie_rule(o.tie_rule);
    if (!tie) throw DataError("unknown --tie-rule '" + o.tie_rule + "'");
    const auto fm = load_feature_matrix(o.features, {o.allow_raw});
    const auto ds = sample_triplet_dataset(fm, o.n, o.seed, {*tie, o.allow_repeats});
    save_triplets(o.out, ds);
    manifest_["inputs"] = {{"features", o.features}, {"n_objects", fm.n_objects()}};
    manifest_["seed"] = o.seed;
    manifest_["params"] = {{"n", o.n}, {"tie_rule", o.tie_rule}, {"allow_repeats", o.allow_repeats}};
    manifest_["outputs"] = {o.out};
  }

  void train_cmd() {
    const auto& o = opt_;
    const auto ds = load_triplets(o.triplets, detail::column_order_or_throw(o.column_order),
                                  n_objects_opt());
    const EpochCallback progress = [&](const EpochRecord& r) {
      if (!o.quiet)
        err_ << "epoch " << r.epoch << " loss " << r.train_loss << " val_acc " << r.val_accuracy
             << " dims " << r.n_active << "\n";
    };
    const auto result = train(ds, o.train, o.prior, progress);
    save_training_output(o.out, result, o.train);
    manifest_["inputs"] = {{"triplets", o.triplets}, {"n_records", ds.size()}, {"n_objects", ds.n_objects}};
    manifest_["seed"] = o.train.seed;
    manifest_["params"] = {{"config", to_json(o.train)}, {"prior", to_json(o.prior)}};
    manifest_["result"] = {{"active_dims", result.embedding.active_dims.size()},
                           {"epochs_run", result.history.size()},
                           {"stop_reason", result.stop_reason},
                           {"final_val_accuracy",
                            result.history.empty() ? 0.0 : result.history.back().val_accuracy}};
    manifest_["outputs"] = {(fs::path(o.out) / "embedding_mu.tsv").string(),
                            (fs::path(o.out) / "embedding_sigma.tsv").string(),
                            (fs::path(o.out) / "embedding_pruned.tsv").string(),
                            (fs::path(o.out) / "train_log.json").string()};
  }

  void reliability() {
    const auto& o = opt_;
    std::vector<std::string> dirs;
    for (const auto& pattern : o.runs) {
      const auto hits = detail::expand_glob(pattern);
      if (hits.empty()) throw DataError("no run directories match '" + pattern + "'");
      dirs.insert(dirs.end(), hits.begin(), hits.end());
    }
    std::vector<Matrix> runs;
    for (const auto& d : dirs) runs.push_back(load_embedding_dir(d).full_point_estimate());
    const auto detail_scores = split_half_reliability_detail(runs);
    std::vector<double> scores;
    for (const auto& r : detail_scores) scores.push_back(r.score);
    const auto best = select_best_run(scores);

    json report;
    report["runs"] = json::array();
    for (std::size_t r = 0; r < dirs.size(); ++r) {
      json matched = json::array();
      for (const double v : detail_scores[r].matched_r) matched.push_back(std::isnan(v) ? json(nullptr) : json(v));
      report["runs"].push_back({{"dir", dirs[r]},
                                {"score", scores[r]},
                                {"n_scored_dims", detail_scores[r].n_scored},
                                {"matched_r", matched}});
    }
    report["best_run"] = best;
    report["best_dir"] = dirs[best];
    write_file_atomic(o.out, detail::json_text(report));
    manifest_["inputs"] = {{"runs", dirs}};
    manifest_["result"] = {{"best_run", best}, {"best_score", scores[best]}};
    manifest_["outputs"] = {o.out};
  }

  void rsa() {
    const auto& o = opt_;
    const int sources = !o.embedding_b.empty() + !o.features_b.empty() + !o.ground_truth.empty();
    if (sources != 1)
      throw DataError("rsa needs exactly one of --embedding-b, --features-b, --ground-truth");
    const auto a = load_embedding_dir(o.embedding_a);
    const auto m = static_cast<std::size_t>(a.pruned.rows());
    const RsmMode mode = detail::parse_rsm_mode(o.mode, m, o.seed);

    Rsm rsm_a = reconstruct_rsm(a.pruned, mode);
    Rsm rsm_b;
    json inputs = {{"embedding_a", o.embedding_a}};
    if (!o.embedding_b.empty()) {
      rsm_b = reconstruct_rsm(load_embedding_dir(o.embedding_b).pruned, mode);
      inputs["embedding_b"] = o.embedding_b;
    } else if (!o.features_b.empty()) {
      rsm_b = dot_product_rsm(load_feature_matrix(o.features_b).values());
      inputs["features_b"] = o.features_b;
    } else {
      rsm_b.values = read_tsv_matrix(o.ground_truth, false).values;
      rsm_b.metric = RsmMetric::softmax_choice_prob;
      inputs["ground_truth"] = o.ground_truth;
    }
    if (!o.rsm_out.empty()) write_file_atomic(o.rsm_out, matrix_to_tsv(rsm_a.values, {}));

    if (!o.subset.empty()) {
      const auto idx = read_tsv_matrix(o.subset, false).values;
      std::vector<std::size_t> objects;
      for (Eigen::Index i = 0; i < idx.size(); ++i) {
        const double v = idx.data()[i];
        if (v < 0 || v != std::floor(v)) throw DataError(o.subset + ": indices must be non-negative integers");
        objects.push_back(static_cast<std::size_t>(v));
      }
      rsm_a = rsm_subset(rsm_a, objects);
      if (rsm_b.size() != objects.size()) rsm_b = rsm_subset(rsm_b, objects);
      inputs["subset"] = o.subset;
    }
    const double r = rsm_pearson(rsm_a, rsm_b);
    json report = {{"pearson_r", r},
                   {"r_squared", r * r},
                   {"n_objects", rsm_a.size()},
                   {"mode", detail::mode_json(mode)},
                   {"metric_a", to_string(rsm_a.metric)},
                   {"metric_b", to_string(rsm_b.metric)}};
    if (!o.noise_ceiling.empty()) {
      const double ceiling = detail::read_noise_ceiling(o.noise_ceiling);
      inputs["noise_ceiling"] = o.noise_ceiling;
      report["noise_ceiling"] = ceiling;
      report["variance_explained_vs_ceiling"] = variance_explained_vs_ceiling(rsm_a, rsm_b, ceiling);
    }
    write_file_atomic(o.out, detail::json_text(report));
    manifest_["inputs"] = inputs;
    manifest_["seed"] = o.seed;
    manifest_["result"] = {{"pearson_r", r}};
    manifest_["outputs"] = {o.out};
  }

  void match_dims() {
    const auto& o = opt_;
    const auto a = load_embedding_dir(o.embedding_a);
    const auto b = load_embedding_dir(o.embedding_b);
    const auto matches = match_dimensions(a.pruned, b.pruned, o.with_replacement);
    std::string tsv = "source\ttarget\tsource_id\ttarget_id\tr\n";
    for (const auto& mt : matches) {
      tsv += std::to_string(mt.source) + '\t' + std::to_string(mt.target) + '\t' +
             std::to_string(a.dimension_ids[mt.source]) + '\t' +
             std::to_string(b.dimension_ids[mt.target]) + '\t' + format_real(mt.r) + '\n';
    }
    write_file_atomic(o.out, tsv);
    manifest_["inputs"] = {{"embedding_a", o.embedding_a}, {"embedding_b", o.embedding_b}};
    manifest_["params"] = {{"with_replacement", o.with_replacement}};
    manifest_["result"] = {{"n_matches", matches.size()},
                           {"best_r", matches.empty() ? 0.0 : matches.front().r}};
    manifest_["outputs"] = {o.out};
  }

  void cumulative() {
    const auto& o = opt_;
    if (o.target_embedding.empty() == o.target_features.empty())
      throw DataError("cumulative-rsa needs exactly one of --target-embedding, --target-features");
    const auto source = load_embedding_dir(o.source_embedding);
    const auto m = static_cast<std::size_t>(source.pruned.rows());
    const RsmMode mode = detail::parse_rsm_mode(o.mode, m, o.seed);

    Rsm target;
    std::optional<Matrix> target_embedding;
    if (!o.target_embedding.empty()) {
      target_embedding = load_embedding_dir(o.target_embedding).pruned;
      target = reconstruct_rsm(*target_embedding, mode);
    } else {
      target = dot_product_rsm(load_feature_matrix(o.target_features).values());
    }

    std::vector<std::size_t> ranking;
    if (o.ranking == "importance") {
      for (Eigen::Index c = 0; c < source.pruned.cols(); ++c) ranking.push_back(static_cast<std::size_t>(c));
    } else if (o.ranking == "match") {
      if (!target_embedding)
        throw DataError("--ranking match needs --target-embedding; use --ranking importance");
      // Source dimensions in order of their best unique match to the target.
      const bool unique = source.pruned.cols() <= target_embedding->cols();
      const auto matches = match_dimensions(source.pruned, *target_embedding, !unique);
      for (const auto& mt : matches) ranking.push_back(mt.source);
      for (Eigen::Index c = 0; c < source.pruned.cols(); ++c)
        if (std::find(ranking.begin(), ranking.end(), static_cast<std::size_t>(c)) == ranking.end())
          ranking.push_back(static_cast<std::size_t>(c));
    } else {
      throw DataError("unknown --ranking '" + o.ranking + "' (match or importance)");
    }

    const auto curve = cumulative_rsa(target, source.pruned, ranking, mode);
    std::string tsv = "k\tdimension\tdimension_id\tr\tr2\n";
    for (const auto& pt : curve.curve)
      tsv += std::to_string(pt.k) + '\t' + std::to_string(pt.dimension) + '\t' +
             std::to_string(source.dimension_ids[pt.dimension]) + '\t' + format_real(pt.r) + '\t' +
             format_real(pt.r * pt.r) + '\n';
    write_file_atomic(o.out, tsv);
    manifest_["inputs"] = {{"source_embedding", o.source_embedding},
                           {"target", o.target_embedding.empty() ? o.target_features : o.target_embedding}};
    manifest_["params"] = {{"ranking", o.ranking}, {"mode", detail::mode_json(mode)}};
    manifest_["result"] = {{"full_r", curve.full_r},
                           {"k95", curve.k95 ? json(*curve.k95) : json(nullptr)}};
    manifest_["outputs"] = {o.out};
  }

  void jackknife() {
    const auto& o = opt_;
    const auto emb = load_embedding_dir(o.embedding);
    const auto& y = emb.pruned;
    const auto ds = load_triplets(o.triplets, detail::column_order_or_throw(o.column_order),
                                  static_cast<std::size_t>(y.rows()));
    const auto labels = o.labels.empty() ? DimensionLabelTable{}
                                         : load_labels(o.labels, static_cast<std::size_t>(y.cols()));
    const auto rep = aggregate_relevance(y, ds, labels);

    const auto histogram_json = [](const LabelHistogram& h) {
      json j = json::object();
      for (const auto l : kAllLabels)
        j[std::string(to_string(l))] = {{"count", h.counts[static_cast<std::size_t>(l)]},
                                        {"fraction", h.fraction(l)}};
      return j;
    };
    json report;
    report["n_triplets"] = ds.size();
    report["n_dimensions"] = y.cols();
    report["histogram_signed"] = histogram_json(rep.signed_histogram);
    report["histogram_abs"] = histogram_json(rep.abs_histogram);
    auto& per = report["triplets"] = json::array();
    for (const auto& r : rep.triplets) {
      const auto& t = ds.records[r.triplet];
      json item = {{"triplet", {t.pair_a, t.pair_b, t.odd}},
                   {"p_full", r.p_full},
                   {"winner", r.winner},
                   {"winner_id", emb.dimension_ids[r.winner]},
                   {"winner_delta", r.winner_delta},
                   {"label", to_string(r.label)},
                   {"winner_abs", r.winner_abs},
                   {"winner_abs_delta", r.winner_abs_delta},
                   {"label_abs", to_string(r.label_abs)}};
      if (o.emit_deltas) item["deltas"] = jackknife_relevance(y, t);
      per.push_back(std::move(item));
    }
    json inputs = {{"embedding", o.embedding}, {"triplets", o.triplets}, {"labels", o.labels}};
    if (!o.divergence_other.empty()) {
      const auto other = load_embedding_dir(o.divergence_other);
      const auto ranked = rank_by_divergence(y, other.pruned, ds);
      const std::size_t keep = o.top < 0 ? ranked.size() : std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(o.top));
      auto& div = report["divergence"] = json::array();
      for (std::size_t s = 0; s < keep; ++s) {
        const auto& d = ranked[s];
        const auto& t = ds.records[d.triplet];
        div.push_back({{"index", d.triplet},
                       {"triplet", {t.pair_a, t.pair_b, t.odd}},
                       {"p_this", d.p_a},
                       {"p_other", d.p_b},
                       {"difference", d.difference}});
      }
      inputs["rank_by_divergence"] = o.divergence_other;
    }
    write_file_atomic(o.out, detail::json_text(report));
    manifest_["inputs"] = inputs;
    manifest_["outputs"] = {o.out};
  }

  void ridge() {
    const auto& o = opt_;
    const auto fm = load_feature_matrix(o.features, {o.allow_raw});
    const auto emb = load_embedding_dir(o.embedding);
    if (static_cast<std::size_t>(emb.pruned.rows()) != fm.n_objects())
      throw DataError("features have " + std::to_string(fm.n_objects()) + " objects, embedding has " +
                      std::to_string(emb.pruned.rows()));
    RidgeCvConfig cv;
    cv.folds = o.folds;
    if (!o.lambdas.empty()) cv.lambdas = o.lambdas;
    const auto models = fit_ridge_cv(fm.values(), emb.pruned, cv);

    const fs::path dir = o.out;
    std::string bin;
    for (Eigen::Index f = 0; f < models.weights.rows(); ++f)
      for (Eigen::Index c = 0; c < models.weights.cols(); ++c)
        triplet_embed::detail::store_f32_le(static_cast<float>(models.weights(f, c)), bin);
    write_file_atomic(dir / "ridge_weights.bin", bin);
    json meta;
    meta["n_features"] = models.n_features();
    meta["n_dimensions"] = models.n_dimensions();
    meta["dtype"] = "f32";
    meta["layout"] = "row-major (features x dimensions)";
    meta["dimension_ids"] = emb.dimension_ids;
    meta["intercepts"] = std::vector<double>(models.intercepts.data(), models.intercepts.data() + models.intercepts.size());
    meta["lambdas"] = models.lambdas;
    const auto nan_to_null = [](const std::vector<double>& v) {
      json a = json::array();
      for (const double x : v) a.push_back(std::isnan(x) ? json(nullptr) : json(x));
      return a;
    };
    meta["r2_held_out"] = nan_to_null(models.r2_held_out);
    meta["r2_in_sample"] = nan_to_null(models.r2_in_sample);
    meta["folds"] = cv.folds;
    meta["lambda_grid"] = cv.lambdas;
    write_file_atomic(dir / "ridge_meta.json", detail::json_text(meta));
    manifest_["inputs"] = {{"features", o.features}, {"embedding", o.embedding}};
    manifest_["outputs"] = {(dir / "ridge_weights.bin").string(), (dir / "ridge_meta.json").string()};
  }

  void report() {
    const auto& o = opt_;
    if (o.cumulative.empty() && o.jackknife.empty())
      throw DataError("report needs --cumulative and/or --jackknife");
    const fs::path dir = o.out;
    json outputs = json::array();
    if (!o.cumulative.empty()) {
      const auto text = read_file(o.cumulative);
      std::vector<double> ks, r2;
      std::istringstream in(text);
      std::string line;
      std::getline(in, line);  // header
      while (std::getline(in, line)) {
        const auto f = split_fields(line);
        if (f.size() < 5) continue;
        ks.push_back(parse_real(f[0], o.cumulative));
        r2.push_back(parse_real(f[4], o.cumulative));
      }
      write_file_atomic(dir / "cumulative_rsa.svg",
                        svg::line_chart(ks, r2, "Cumulative RSA", "dimensions", "r squared"));
      outputs.push_back((dir / "cumulative_rsa.svg").string());
    }
    if (!o.jackknife.empty()) {
      json rep;
      try {
        rep = json::parse(read_file(o.jackknife));
      } catch (const json::exception& e) {
        throw DataError(o.jackknife + ": " + e.what());
      }
      std::vector<std::string> names;
      std::vector<double> signed_frac, abs_frac;
      for (const auto l : kAllLabels) {
        const std::string key(to_string(l));
        names.push_back(key);
        signed_frac.push_back(rep.at("histogram_signed").at(key).at("fraction").get<double>());
        abs_frac.push_back(rep.at("histogram_abs").at(key).at("fraction").get<double>());
      }
      write_file_atomic(dir / "label_histogram.svg",
                        svg::bar_chart(names, signed_frac, "Most relevant dimension (signed)", "fraction"));
      write_file_atomic(dir / "label_histogram_abs.svg",
                        svg::bar_chart(names, abs_frac, "Most relevant dimension (absolute)", "fraction"));
      outputs.push_back((dir / "label_histogram.svg").string());
      outputs.push_back((dir / "label_histogram_abs.svg").string());
    }
    manifest_["inputs"] = {{"cumulative", o.cumulative}, {"jackknife", o.jackknife}};
    manifest_["outputs"] = outputs;
  }

  std::ostream& out_;
  std::ostream& err_;
  Options opt_;
  json manifest_;
};

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  return Runner(out, err).run(argc, argv);
}

}  // namespace triplet_embed::cli
