#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"

using namespace triplet_embed;

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

std::string f32_bytes(std::initializer_list<float> values) {
  std::string out;
  for (const float v : values) detail::store_f32_le(v, out);
  return out;
}

const char* kMeta3x2 =
    R"({"n_objects": 3, "n_features": 2, "dtype": "f32", "layout": "row-major", "object_ids": ["a", "b", "c"]})";

}  // namespace

TEST(FeatureMatrix, RejectsTooFewObjects) {
  EXPECT_THROW(FeatureMatrix(Matrix::Ones(2, 4)), DataError);
}

TEST(FeatureMatrix, RejectsNegativeAndNonFinite) {
  Matrix v = Matrix::Ones(3, 2);
  v(1, 1) = -0.5;
  EXPECT_THROW(FeatureMatrix{v}, DataError);
  v(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(FeatureMatrix{v}, DataError);
}

TEST(FeatureMatrix, RejectsDuplicateIds) {
  EXPECT_THROW(FeatureMatrix(Matrix::Ones(3, 2), {"x", "y", "x"}), DataError);
  EXPECT_THROW(FeatureMatrix(Matrix::Ones(3, 2), {"x", "y"}), DataError);
}

TEST(FeatureMatrix, RoundTripsThroughDirectory) {
  support::TempDir dir("fm");
  Matrix v(3, 2);
  v << 0.25, 1.5, 0.0, 2.0, 3.0, 0.125;
  save_feature_matrix(dir.path(), FeatureMatrix(v, {"a", "b", "c"}));
  const auto back = load_feature_matrix(dir.path());
  EXPECT_EQ(back.values(), v);
  EXPECT_EQ(back.object_ids(), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(FeatureMatrix, ShapeMismatchNamesBothShapes) {
  support::TempDir dir("fm_shape");
  write_text(dir / "meta.json", kMeta3x2);
  write_text(dir / "features.bin", f32_bytes({1, 2, 3, 4, 5}));
  try {
    load_feature_matrix(dir.path());
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("shape mismatch"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("3x2"), std::string::npos);
  }
}

TEST(FeatureMatrix, MissingFilesAndBadDtype) {
  support::TempDir dir("fm_missing");
  EXPECT_THROW(load_feature_matrix(dir.path()), DataError);
  write_text(dir / "meta.json",
             R"({"n_objects": 3, "n_features": 2, "dtype": "f64", "object_ids": ["a", "b", "c"]})");
  write_text(dir / "features.bin", f32_bytes({1, 2, 3, 4, 5, 6}));
  EXPECT_THROW(load_feature_matrix(dir.path()), DataError);
}

TEST(FeatureMatrix, NegativeValuesNeedAllowRaw) {
  support::TempDir dir("fm_raw");
  write_text(dir / "meta.json", kMeta3x2);
  write_text(dir / "features.bin", f32_bytes({1, -2, 3, 4, 5, 6}));
  EXPECT_THROW(load_feature_matrix(dir.path()), DataError);
  const auto fm = load_feature_matrix(dir.path(), {.allow_raw = true});
  EXPECT_EQ(fm.values()(0, 1), 0.0);
  EXPECT_EQ(fm.values()(2, 1), 6.0);
}

TEST(Triplets, ParseCanonicalizesPair) {
  const auto ds = parse_triplets("5 2 0\n1\t3\t4\n", ColumnOrder::pair_pair_odd);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.records[0], (TripletRecord{2, 5, 0}));
  EXPECT_EQ(ds.records[1], (TripletRecord{1, 3, 4}));
  EXPECT_EQ(ds.n_objects, 6u);
  EXPECT_EQ(ds.provenance, Provenance::ingested);
}

TEST(Triplets, OddFirstColumnOrder) {
  const auto ds = parse_triplets("0 5 2\n", ColumnOrder::odd_pair_pair);
  EXPECT_EQ(ds.records[0], (TripletRecord{2, 5, 0}));
}

TEST(Triplets, ParseErrors) {
  const auto order = ColumnOrder::pair_pair_odd;
  EXPECT_THROW(parse_triplets("1 1 2\n", order), DataError);
  EXPECT_THROW(parse_triplets("1 2\n", order), DataError);
  EXPECT_THROW(parse_triplets("1 2 x\n", order), DataError);
  EXPECT_THROW(parse_triplets("1 2 3.5\n", order), DataError);
  EXPECT_THROW(parse_triplets("1 2 -3\n", order), DataError);
  EXPECT_THROW(parse_triplets("1 2 99999999999999999999\n", order), DataError);
  EXPECT_THROW(parse_triplets("0 1 7\n", order, 5), DataError);
}

TEST(Triplets, ErrorsCarryLineNumber) {
  try {
    parse_triplets("0 1 2\n\n0 0 2\n", ColumnOrder::pair_pair_odd, std::nullopt, "t.tsv");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("t.tsv:3"), std::string::npos);
  }
}

TEST(Triplets, FileRoundTrip) {
  support::TempDir dir("trip");
  TripletDataset ds;
  ds.records = {{0, 1, 2}, {3, 4, 0}, {1, 4, 2}};
  ds.n_objects = 5;
  save_triplets(dir / "t.tsv", ds);
  const auto back = load_triplets(dir / "t.tsv", ColumnOrder::pair_pair_odd, 5);
  EXPECT_EQ(back.records, ds.records);
  EXPECT_EQ(read_file(dir / "t.tsv"), "0\t1\t2\n3\t4\t0\n1\t4\t2\n");
}

TEST(Labels, RoundTripAndDefaults) {
  support::TempDir dir("labels");
  write_text(dir / "labels.tsv", "0\tvisual\n2\tsemantic\n3 mixed\n");
  const auto table = load_labels(dir / "labels.tsv", 4);
  EXPECT_EQ(table.at(0), DimensionLabel::visual);
  EXPECT_EQ(table.at(1), DimensionLabel::unclear);
  EXPECT_EQ(table.at(2), DimensionLabel::semantic);
  EXPECT_EQ(table.at(3), DimensionLabel::mixed);
  save_labels(dir / "out.tsv", table);
  EXPECT_EQ(read_file(dir / "out.tsv"), "0\tvisual\n2\tsemantic\n3\tmixed\n");
}

TEST(Labels, Errors) {
  support::TempDir dir("labels_bad");
  write_text(dir / "a.tsv", "0\tcolour\n");
  EXPECT_THROW(load_labels(dir / "a.tsv", 4), DataError);
  write_text(dir / "b.tsv", "9\tvisual\n");
  EXPECT_THROW(load_labels(dir / "b.tsv", 4), DataError);
}

TEST(Split, OddEvenPartition) {
  const auto [even, odd] = split_objects_odd_even(7);
  EXPECT_EQ(even, (std::vector<std::size_t>{0, 2, 4, 6}));
  EXPECT_EQ(odd, (std::vector<std::size_t>{1, 3, 5}));
}

TEST(Io, FormatRealRoundTrips) {
  for (const double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, 0.0}) {
    const auto s = format_real(v);
    EXPECT_EQ(parse_real(s, "x"), v) << s;
  }
}

TEST(Io, TsvMatrixRoundTrip) {
  support::TempDir dir("tsv");
  const Matrix m = support::random_nonneg(4, 3, 1);
  write_file_atomic(dir / "m.tsv", matrix_to_tsv(m, {7, 2, 9}));
  const auto back = read_tsv_matrix(dir / "m.tsv", true);
  EXPECT_EQ(back.values, m);
  EXPECT_EQ(back.column_ids, (std::vector<std::int64_t>{7, 2, 9}));
}
