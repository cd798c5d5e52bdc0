#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "ith/dataio.hpp"
#include "test_support.hpp"

namespace ith {
namespace {

using testing::random_matrix;

std::string ithf_bytes(const Matrix& m) {
  std::ostringstream o(std::ios::binary);
  write_ithf(o, m);
  return o.str();
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

TEST(Ithf, RoundTripIsBitIdentical) {
  Matrix m = random_matrix(7, 5, 3, -1e6, 1e6);
  m(0, 0) = std::numeric_limits<double>::denorm_min();
  m(1, 1) = -0.0;
  std::istringstream in(ithf_bytes(m), std::ios::binary);
  const Matrix back = read_ithf(in);
  ASSERT_EQ(back.rows(), 7u);
  ASSERT_EQ(back.cols(), 5u);
  for (std::size_t k = 0; k < m.size(); ++k) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back[k]), std::bit_cast<std::uint64_t>(m[k]));
  }
}

TEST(Ithf, HeaderIsLittleEndianDimThenCount) {
  const std::string s = ithf_bytes(Matrix(3, 2));
  ASSERT_EQ(s.size(), 4u + 4 + 8 + 6 * 8);
  EXPECT_EQ(s.substr(0, 4), "ITHF");
  EXPECT_EQ(s[4], 2);
  EXPECT_EQ(s[8], 3);
}

TEST(Ithf, TruncationNamesExpectedAndActualLength) {
  const std::string s = ithf_bytes(random_matrix(4, 3, 1));
  std::istringstream in(s.substr(0, s.size() - 5), std::ios::binary);
  const std::string msg = error_of([&] { read_ithf(in, "feat.ithf"); });
  EXPECT_NE(msg.find("feat.ithf"), std::string::npos) << msg;
  EXPECT_NE(msg.find("truncated"), std::string::npos) << msg;
  EXPECT_NE(msg.find("expected 8"), std::string::npos) << msg;
  EXPECT_NE(msg.find("got 3"), std::string::npos) << msg;
}

TEST(Ithf, CorruptInputs) {
  std::istringstream bad_magic("ITHX\x01\0\0\0", std::ios::binary);
  EXPECT_THROW(read_ithf(bad_magic), ParseError);

  std::istringstream trailing(ithf_bytes(Matrix(1, 1)) + "z", std::ios::binary);
  EXPECT_THROW(read_ithf(trailing), ParseError);

  Matrix m(2, 2);
  m(1, 0) = std::numeric_limits<double>::quiet_NaN();
  std::istringstream nan(ithf_bytes(m), std::ios::binary);
  const std::string msg = error_of([&] { read_ithf(nan); });
  EXPECT_NE(msg.find("non-finite"), std::string::npos) << msg;
  EXPECT_NE(msg.find("row 1"), std::string::npos) << msg;
}

TEST(Csv, DualEncodingLoadsEqual) {
  const Matrix m = random_matrix(9, 4, 8, -1e3, 1e3);
  std::stringstream csv;
  write_csv_matrix(csv, m);
  std::istringstream bin(ithf_bytes(m), std::ios::binary);
  EXPECT_EQ(read_csv_matrix(csv), read_ithf(bin));
}

TEST(Csv, ErrorsNameLineAndField) {
  std::istringstream bad("a,b\n1,2\n3,x\n");
  std::string msg = error_of([&] { read_csv_matrix(bad, "f.csv"); });
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("field 2"), std::string::npos) << msg;

  std::istringstream short_row("a,b,c\n1,2\n");
  msg = error_of([&] { read_csv_matrix(short_row); });
  EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;

  std::istringstream inf("a\ninf\n");
  EXPECT_THROW(read_csv_matrix(inf), ParseError);
}

TEST(Csv, FileLoaderDetectsFormat) {
  const auto dir = std::filesystem::temp_directory_path() / "ith_dataio_test";
  std::filesystem::create_directories(dir);
  const Matrix m = random_matrix(5, 3, 2);
  save_features(dir / "m.ithf", m);
  save_features(dir / "m.csv", m, FeatureFormat::csv);
  EXPECT_EQ(load_features(dir / "m.ithf"), m);
  EXPECT_EQ(load_features(dir / "m.csv"), m);
  EXPECT_THROW(load_features(dir / "absent.ithf"), IoError);
  std::filesystem::remove_all(dir);
}

TEST(LabelsAndSplit, RoundTripAndErrors) {
  const std::vector<int> y = {0, 4, 4, 2};
  std::stringstream s;
  write_labels(s, y);
  EXPECT_EQ(read_labels(s), y);

  const std::vector<SplitTag> t = {SplitTag::seen_db, SplitTag::unseen_query, SplitTag::unseen_db};
  std::stringstream st;
  write_split(st, t);
  EXPECT_EQ(read_split(st), t);

  std::istringstream bad_label("1\n-3\n");
  EXPECT_NE(error_of([&] { read_labels(bad_label); }).find("line 2"), std::string::npos);
  std::istringstream bad_tag("seen_db\nquery\n");
  EXPECT_NE(error_of([&] { read_split(bad_tag); }).find("line 2"), std::string::npos);
}

TEST(ZeroShotSplit, HalfOfTenClassesAreSeen) {
  std::vector<int> labels;
  for (int c = 0; c < 10; ++c)
    for (int k = 0; k < 20; ++k) labels.push_back(c);
  const auto s = make_zero_shot_split(labels, 0.5, 3);
  EXPECT_EQ(s.seen_classes.size(), 5u);
  EXPECT_EQ(s.unseen_classes.size(), 5u);
}

TEST(ZeroShotSplit, DisjointAndQueryClassesHaveDatabaseItems) {
  std::vector<int> labels;
  for (int c = 0; c < 7; ++c)
    for (int k = 0; k < 3 + c; ++k) labels.push_back(c);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = make_zero_shot_split(labels, 0.4, seed);
    std::set<int> seen(s.seen_classes.begin(), s.seen_classes.end());
    for (int c : s.unseen_classes) ASSERT_FALSE(seen.count(c));
    ASSERT_EQ(s.seen_classes.size() + s.unseen_classes.size(), 7u);
    std::set<int> db_classes, query_classes;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      ASSERT_EQ(seen.count(labels[i]) > 0, s.tags[i] == SplitTag::seen_db);
      if (s.tags[i] == SplitTag::unseen_db) db_classes.insert(labels[i]);
      if (s.tags[i] == SplitTag::unseen_query) query_classes.insert(labels[i]);
    }
    for (int c : query_classes) ASSERT_TRUE(db_classes.count(c));
  }
}

TEST(ZeroShotSplit, DeterministicAndDefaultQueryShare) {
  std::vector<int> labels;
  for (int c = 0; c < 4; ++c)
    for (int k = 0; k < 50; ++k) labels.push_back(c);
  const auto a = make_zero_shot_split(labels, 0.5, 9);
  const auto b = make_zero_shot_split(labels, 0.5, 9);
  EXPECT_EQ(a.tags, b.tags);
  std::size_t q = 0, d = 0;
  for (auto t : a.tags) {
    q += t == SplitTag::unseen_query;
    d += t == SplitTag::unseen_db;
  }
  EXPECT_EQ(q, 40u);
  EXPECT_EQ(d, 60u);
}

TEST(ZeroShotSplit, Rejections) {
  const std::vector<int> one = {3, 3, 3};
  EXPECT_THROW(make_zero_shot_split(one, 0.5, 1), ParameterError);
  const std::vector<int> two = {0, 1};
  EXPECT_THROW(make_zero_shot_split(two, 1.0, 1), ParameterError);
  EXPECT_THROW(make_zero_shot_split(two, 0.0, 1), ParameterError);
}

TEST(Dataset, ValidationCatchesBrokenInvariants) {
  const Matrix f = random_matrix(4, 2, 1);
  using T = SplitTag;
  EXPECT_NO_THROW(assemble_dataset(f, f, {0, 0, 1, 1},
                                   {T::seen_db, T::seen_db, T::unseen_db, T::unseen_query}));
  // Query class 2 has no database instance.
  EXPECT_THROW(assemble_dataset(f, f, {0, 1, 1, 2},
                                {T::seen_db, T::unseen_db, T::unseen_query, T::unseen_query}),
               ContractViolation);
  // Class 0 tagged both seen and unseen.
  EXPECT_THROW(assemble_dataset(f, f, {0, 0, 1, 1},
                                {T::seen_db, T::unseen_db, T::unseen_db, T::unseen_query}),
               ContractViolation);
  EXPECT_THROW(assemble_dataset(f, random_matrix(3, 2, 1), {0, 0, 1, 1},
                                {T::seen_db, T::seen_db, T::unseen_db, T::unseen_query}),
               ContractViolation);
}

TEST(Synthetic, SameSeedSameData) {
  SyntheticSpec spec;
  spec.per_class = 10;
  const auto a = generate_synthetic(spec), b = generate_synthetic(spec);
  EXPECT_EQ(a.dataset.image, b.dataset.image);
  EXPECT_EQ(a.dataset.text, b.dataset.text);
  EXPECT_EQ(a.dataset.split, b.dataset.split);
  spec.seed = 2;
  EXPECT_NE(generate_synthetic(spec).dataset.image, a.dataset.image);
}

TEST(Synthetic, NoiselessRowsRepeatWithinClass) {
  SyntheticSpec spec;
  spec.per_class = 5;
  spec.image_noise = spec.text_noise = 0.0;
  spec.corruption_rate = 0.0;
  const auto ds = generate_synthetic(spec).dataset;
  for (std::size_t i = 1; i < ds.size(); ++i) {
    if (ds.labels[i] != ds.labels[i - 1]) continue;
    for (std::size_t j = 0; j < ds.image.cols(); ++j) ASSERT_EQ(ds.image(i, j), ds.image(i - 1, j));
    for (std::size_t j = 0; j < ds.text.cols(); ++j) ASSERT_EQ(ds.text(i, j), ds.text(i - 1, j));
  }
}

TEST(Synthetic, FullCorruptionGivesChanceAgreement) {
  // Each text row is attributed to the nearest clean text center; under full
  // corruption its agreement with the image label is binomial(n, 1/C).
  SyntheticSpec spec;
  spec.classes = 5;
  spec.per_class = 200;
  spec.text_noise = 0.05;
  spec.center_scale = 3.0;
  spec.corruption_rate = 0.0;
  const auto clean = generate_synthetic(spec).dataset;
  spec.corruption_rate = 1.0;
  const auto ds = generate_synthetic(spec).dataset;

  Matrix centers(5, clean.text.cols());
  std::vector<double> count(5, 0.0);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const auto y = static_cast<std::size_t>(clean.labels[i]);
    count[y] += 1;
    for (std::size_t j = 0; j < clean.text.cols(); ++j) centers(y, j) += clean.text(i, j);
  }
  auto nearest = [&](const Matrix& t, std::size_t i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < 5; ++c) {
      double d = 0;
      for (std::size_t j = 0; j < t.cols(); ++j) {
        const double diff = t(i, j) - centers(c, j) / count[c];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    return static_cast<int>(best);
  };
  std::size_t clean_agree = 0, agree = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    clean_agree += nearest(clean.text, i) == clean.labels[i];
    agree += nearest(ds.text, i) == ds.labels[i];
  }
  const double n = static_cast<double>(ds.size());
  const double p = 1.0 / 5.0;
  EXPECT_EQ(clean_agree, ds.size());
  EXPECT_NEAR(static_cast<double>(agree), n * p, 3.0 * std::sqrt(n * p * (1 - p)));
}

TEST(Synthetic, LowNoiseIsNearestCenterSeparable) {
  SyntheticSpec spec;
  spec.image_noise = 0.1;
  spec.center_scale = 1.0;
  spec.per_class = 50;
  const auto syn = generate_synthetic(spec);
  const auto& ds = syn.dataset;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < syn.image_centers.rows(); ++c) {
      double d = 0;
      for (std::size_t j = 0; j < ds.image.cols(); ++j) {
        const double diff = ds.image(i, j) - syn.image_centers(c, j);
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    correct += static_cast<int>(best) == ds.labels[i];
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(ds.size()), 0.95);
}

TEST(Synthetic, RejectsBadSpecs) {
  SyntheticSpec spec;
  spec.classes = 1;
  EXPECT_THROW(generate_synthetic(spec), ParameterError);
  spec = {};
  spec.image_noise = -1;
  EXPECT_THROW(generate_synthetic(spec), ParameterError);
  spec = {};
  spec.seen_fraction = 1.0;
  EXPECT_THROW(generate_synthetic(spec), ParameterError);
}

}  // namespace
}  // namespace ith
