#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "io.hpp"

namespace triplet_embed {

using ObjectIndex = std::uint32_t;

// m objects x d non-negative features, stored in 64-bit.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(Matrix values, std::vector<std::string> object_ids)
      : values_(std::move(values)), object_ids_(std::move(object_ids)) {
    validate();
  }

  // Object ids default to "0", "1", ...
  explicit FeatureMatrix(Matrix values) : values_(std::move(values)) {
    object_ids_.reserve(static_cast<std::size_t>(values_.rows()));
    for (Eigen::Index i = 0; i < values_.rows(); ++i) object_ids_.push_back(std::to_string(i));
    validate();
  }

  std::size_t n_objects() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t n_features() const { return static_cast<std::size_t>(values_.cols()); }
  const Matrix& values() const { return values_; }
  const std::vector<std::string>& object_ids() const { return object_ids_; }

  double dot(ObjectIndex a, ObjectIndex b) const { return values_.row(a).dot(values_.row(b)); }

 private:
  void validate() const {
    if (values_.rows() < 3) throw DataError("feature matrix needs at least 3 objects");
    if (object_ids_.size() != n_objects())
      throw DataError("object_ids length " + std::to_string(object_ids_.size()) +
                      " does not match n_objects " + std::to_string(n_objects()));
    for (Eigen::Index i = 0; i < values_.rows(); ++i)
      for (Eigen::Index j = 0; j < values_.cols(); ++j) {
        const double v = values_(i, j);
        if (!std::isfinite(v))
          throw DataError("non-finite feature value at (" + std::to_string(i) + ", " +
                          std::to_string(j) + ")");
        if (v < 0.0)
          throw DataError("negative feature value " + format_real(v) + " at (" +
                          std::to_string(i) + ", " + std::to_string(j) +
                          "); pass allow_raw to rectify");
      }
    std::set<std::string_view> seen;
    for (const auto& id : object_ids_)
      if (!seen.insert(id).second) throw DataError("duplicate object id '" + id + "'");
  }

  Matrix values_;
  std::vector<std::string> object_ids_;
};

struct TripletRecord {
  ObjectIndex pair_a = 0;
  ObjectIndex pair_b = 0;
  ObjectIndex odd = 0;

  friend bool operator==(const TripletRecord&, const TripletRecord&) = default;
};

// Orders the similar pair so pair_a < pair_b.
constexpr TripletRecord canonicalize(TripletRecord t) {
  if (t.pair_b < t.pair_a) std::swap(t.pair_a, t.pair_b);
  return t;
}

inline void check_record(const TripletRecord& t, std::size_t n_objects) {
  if (t.pair_a == t.pair_b || t.pair_a == t.odd || t.pair_b == t.odd)
    throw DataError("triplet indices must be distinct: " + std::to_string(t.pair_a) + " " +
                    std::to_string(t.pair_b) + " " + std::to_string(t.odd));
  if (t.pair_a >= n_objects || t.pair_b >= n_objects || t.odd >= n_objects)
    throw DataError("triplet index out of range for " + std::to_string(n_objects) + " objects");
}

enum class Provenance { simulated, ingested };

struct TripletDataset {
  std::vector<TripletRecord> records;
  std::size_t n_objects = 0;
  Provenance provenance = Provenance::simulated;

  std::size_t size() const { return records.size(); }

  void validate() const {
    for (const auto& t : records) check_record(t, n_objects);
  }
};

// Where the odd one out sits in a triplet file row.
enum class ColumnOrder {
  pair_pair_odd,  // "a b odd"; also what the writer emits
  odd_pair_pair,  // "odd a b"
};

inline std::optional<ColumnOrder> parse_column_order(std::string_view s) {
  if (s == "pair-pair-odd") return ColumnOrder::pair_pair_odd;
  if (s == "odd-pair-pair") return ColumnOrder::odd_pair_pair;
  return std::nullopt;
}

enum class DimensionLabel { visual, semantic, mixed, unclear };

inline constexpr std::array<DimensionLabel, 4> kAllLabels = {
    DimensionLabel::visual, DimensionLabel::semantic, DimensionLabel::mixed,
    DimensionLabel::unclear};

inline std::string_view to_string(DimensionLabel l) {
  switch (l) {
    case DimensionLabel::visual: return "visual";
    case DimensionLabel::semantic: return "semantic";
    case DimensionLabel::mixed: return "mixed";
    case DimensionLabel::unclear: return "unclear";
  }
  return "unclear";
}

inline std::optional<DimensionLabel> parse_label(std::string_view s) {
  for (const auto l : kAllLabels)
    if (to_string(l) == s) return l;
  return std::nullopt;
}

// Column position in an embedding -> label. Missing entries read as unclear.
class DimensionLabelTable {
 public:
  DimensionLabelTable() = default;
  DimensionLabelTable(std::map<std::size_t, DimensionLabel> labels, std::size_t dimensionality)
      : labels_(std::move(labels)) {
    for (const auto& [dim, _] : labels_)
      if (dim >= dimensionality)
        throw DataError("label for dimension " + std::to_string(dim) +
                        " exceeds embedding dimensionality " + std::to_string(dimensionality));
  }

  DimensionLabel at(std::size_t dim) const {
    const auto it = labels_.find(dim);
    return it == labels_.end() ? DimensionLabel::unclear : it->second;
  }

  const std::map<std::size_t, DimensionLabel>& entries() const { return labels_; }

 private:
  std::map<std::size_t, DimensionLabel> labels_;
};

// ---------------------------------------------------------------------------
// Feature directories: meta.json + features.bin (little-endian f32, row-major)

namespace detail {
inline float load_f32_le(const unsigned char* p) {
  std::uint32_t bits = std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) |
                       (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
  return std::bit_cast<float>(bits);
}

inline void store_f32_le(float v, std::string& out) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int s = 0; s < 32; s += 8) out += static_cast<char>((bits >> s) & 0xffu);
}
}  // namespace detail

struct LoadOptions {
  // Rectify negative values with max(0, x) instead of rejecting them.
  bool allow_raw = false;
};

inline FeatureMatrix load_feature_matrix(const fs::path& dir, LoadOptions opts = {}) {
  const fs::path meta_path = dir / "meta.json";
  const fs::path bin_path = dir / "features.bin";
  if (!fs::exists(meta_path)) throw DataError("missing " + meta_path.string());
  if (!fs::exists(bin_path)) throw DataError("missing " + bin_path.string());

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(meta_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(meta_path.string() + ": invalid JSON: " + e.what());
  }
  std::size_t rows = 0, cols = 0;
  std::vector<std::string> ids;
  try {
    rows = meta.at("n_objects").get<std::size_t>();
    cols = meta.at("n_features").get<std::size_t>();
    if (meta.contains("dtype") && meta["dtype"] != "f32")
      throw DataError(meta_path.string() + ": unsupported dtype " + meta["dtype"].dump());
    if (meta.contains("layout") && meta["layout"] != "row-major")
      throw DataError(meta_path.string() + ": unsupported layout " + meta["layout"].dump());
    ids = meta.at("object_ids").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  if (ids.size() != rows)
    throw DataError(meta_path.string() + ": object_ids has " + std::to_string(ids.size()) +
                    " entries, n_objects is " + std::to_string(rows));

  const std::string bytes = read_file(bin_path);
  const std::size_t expected = rows * cols * 4;
  if (bytes.size() != expected)
    throw DataError("shape mismatch: " + bin_path.string() + " holds " +
                    std::to_string(bytes.size() / 4) + " values, meta declares " +
                    std::to_string(rows) + "x" + std::to_string(cols));

  Matrix values(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j, p += 4) {
      double v = detail::load_f32_le(p);
      if (opts.allow_raw && v < 0.0) v = 0.0;
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  return FeatureMatrix(std::move(values), std::move(ids));
}

// Values are narrowed to f32 on disk.
inline void save_feature_matrix(const fs::path& dir, const FeatureMatrix& fm) {
  nlohmann::ordered_json meta;
  meta["n_objects"] = fm.n_objects();
  meta["n_features"] = fm.n_features();
  meta["dtype"] = "f32";
  meta["layout"] = "row-major";
  meta["object_ids"] = fm.object_ids();
  std::string bin;
  bin.reserve(fm.n_objects() * fm.n_features() * 4);
  for (Eigen::Index i = 0; i < fm.values().rows(); ++i)
    for (Eigen::Index j = 0; j < fm.values().cols(); ++j)
      detail::store_f32_le(static_cast<float>(fm.values()(i, j)), bin);
  write_file_atomic(dir / "features.bin", bin);
  write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Triplet TSV

inline TripletDataset parse_triplets(std::string_view text, ColumnOrder order,
                                     std::optional<std::size_t> n_objects = std::nullopt,
                                     const std::string& source = "triplets") {
  TripletDataset ds;
  ds.provenance = Provenance::ingested;
  std::size_t line_no = 0;
  std::size_t max_index = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (fields.size() != 3)
      throw DataError(where + ": expected 3 columns, got " + std::to_string(fields.size()));
    std::int64_t v[3];
    for (int c = 0; c < 3; ++c) {
      v[c] = parse_integer(fields[c], where);
      if (v[c] < 0) throw DataError(where + ": negative index");
      if (v[c] > std::int64_t{0xffffffff} ||
          (n_objects && static_cast<std::uint64_t>(v[c]) >= *n_objects))
        throw DataError(where + ": index " + std::to_string(v[c]) + " out of range");
    }
    TripletRecord t;
    if (order == ColumnOrder::pair_pair_odd)
      t = {static_cast<ObjectIndex>(v[0]), static_cast<ObjectIndex>(v[1]),
           static_cast<ObjectIndex>(v[2])};
    else
      t = {static_cast<ObjectIndex>(v[1]), static_cast<ObjectIndex>(v[2]),
           static_cast<ObjectIndex>(v[0])};
    if (t.pair_a == t.pair_b || t.pair_a == t.odd || t.pair_b == t.odd)
      throw DataError(where + ": duplicate index within row");
    ds.records.push_back(canonicalize(t));
    max_index = std::max<std::size_t>({max_index, t.pair_a, t.pair_b, t.odd});
  }
  ds.n_objects = n_objects ? *n_objects : (ds.records.empty() ? 0 : max_index + 1);
  return ds;
}

inline TripletDataset load_triplets(const fs::path& path, ColumnOrder order,
                                    std::optional<std::size_t> n_objects = std::nullopt) {
  return parse_triplets(read_file(path), order, n_objects, path.string());
}

inline std::string triplets_to_tsv(const TripletDataset& ds) {
  std::string out;
  out.reserve(ds.size() * 18);
  for (const auto& t : ds.records) {
    out += std::to_string(t.pair_a);
    out += '\t';
    out += std::to_string(t.pair_b);
    out += '\t';
    out += std::to_string(t.odd);
    out += '\n';
  }
  return out;
}

inline void save_triplets(const fs::path& path, const TripletDataset& ds) {
  write_file_atomic(path, triplets_to_tsv(ds));
}

// ---------------------------------------------------------------------------
// labels.tsv: "dimension_index<TAB>label"

inline DimensionLabelTable load_labels(const fs::path& path, std::size_t dimensionality) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  std::map<std::size_t, DimensionLabel> labels;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 2) throw DataError(where + ": expected 'index<TAB>label'");
    const auto idx = parse_integer(fields[0], where);
    if (idx < 0) throw DataError(where + ": negative dimension index");
    const auto label = parse_label(fields[1]);
    if (!label) throw DataError(where + ": unknown label '" + std::string(fields[1]) + "'");
    labels[static_cast<std::size_t>(idx)] = *label;
  }
  return DimensionLabelTable(std::move(labels), dimensionality);
}

inline void save_labels(const fs::path& path, const DimensionLabelTable& table) {
  std::string out;
  for (const auto& [dim, label] : table.entries()) {
    out += std::to_string(dim);
    out += '\t';
    out += to_string(label);
    out += '\n';
  }
  write_file_atomic(path, out);
}

// Even-indexed objects first, odd-indexed second.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_objects_odd_even(
    std::size_t n_objects) {
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  out.first.reserve((n_objects + 1) / 2);
  out.second.reserve(n_objects / 2);
  for (std::size_t i = 0; i < n_objects; ++i) (i % 2 == 0 ? out.first : out.second).push_back(i);
  return out;
}

}  // namespace triplet_embed
