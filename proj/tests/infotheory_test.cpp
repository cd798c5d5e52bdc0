#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <random>

#include "ith/infotheory.hpp"
#include "test_support.hpp"

namespace ith {
namespace {

using testing::check_gradient;
using testing::random_matrix;

// Independent oracles built on Eigen and plain loops.
Eigen::MatrixXd oracle_gram(const Matrix& s, double bw) {
  const int n = static_cast<int>(s.rows());
  Eigen::MatrixXd k(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double d2 = 0;
      for (std::size_t c = 0; c < s.cols(); ++c) d2 += std::pow(s(i, c) - s(j, c), 2);
      k(i, j) = std::exp(-d2 / (2 * bw * bw));
    }
  }
  return k / k.trace();
}

double oracle_entropy(const Eigen::MatrixXd& a, double order) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  double s = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) {
    s += std::pow(std::max(es.eigenvalues()(i), 0.0), order);
  }
  return std::log2(s) / (1.0 - order);
}

Eigen::MatrixXd oracle_joint(const std::vector<Eigen::MatrixXd>& as) {
  Eigen::MatrixXd j = as.front();
  for (std::size_t k = 1; k < as.size(); ++k) j = j.cwiseProduct(as[k]);
  return j / j.trace();
}

Matrix random_bits(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  Matrix m(n, k);
  for (double& v : m.data()) v = coin(rng) ? 1.0 : -1.0;
  return m;
}

Matrix slice_column(const Matrix& m, std::size_t c) {
  Matrix out(m.rows(), 1);
  for (std::size_t i = 0; i < m.rows(); ++i) out(i, 0) = m(i, c);
  return out;
}

TEST(SimilarityDistribution, TwoRowsGiveUnitOffDiagonal) {
  const auto s = similarity_distribution(Tensor(random_matrix(2, 3, 1))).value();
  EXPECT_DOUBLE_EQ(s(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(s(1, 0), 1.0);
  EXPECT_EQ(s(0, 0), 0.0);
}

TEST(SimilarityDistribution, OrthogonalRowsGiveUniformRows) {
  const auto s = similarity_distribution(Tensor(Matrix::identity(3))).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      if (i != j) {
        EXPECT_NEAR(s(i, j), 0.5, 1e-15);
      }
    }
}

TEST(SimilarityDistribution, MatchesPerEntryOracle) {
  const Matrix x = random_matrix(4, 3, 77);
  const auto s = similarity_distribution(Tensor(x)).value();
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<double> a(4, 0.0);
    for (std::size_t j = 0; j < 4; ++j) {
      if (j == i) continue;
      double dot = 0, ni = 0, nj = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        dot += x(i, c) * x(j, c);
        ni += x(i, c) * x(i, c);
        nj += x(j, c) * x(j, c);
      }
      a[j] = (1.0 + dot / std::sqrt(ni * nj)) / 2.0 + 1e-8;
    }
    const double z = std::accumulate(a.begin(), a.end(), 0.0);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(s(i, j), a[j] / z, 1e-10);
  }
}

TEST(SimilarityDistribution, RowsSumToOneAndScaleInvariant) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Matrix x = random_matrix(7, 5, seed);
    const auto s = similarity_distribution(Tensor(x)).value();
    const auto s2 = similarity_distribution(Tensor(x * 3.7)).value();
    for (std::size_t i = 0; i < 7; ++i) {
      double row = 0;
      for (std::size_t j = 0; j < 7; ++j) {
        if (j != i) {
          EXPECT_GT(s(i, j), 0.0);
        }
        row += s(i, j);
      }
      EXPECT_NEAR(row, 1.0, 1e-8);
    }
    EXPECT_LE(linalg::max_abs_diff(s, s2), 1e-10);
  }
}

TEST(SimilarityDistribution, SingleRowIsDegenerate) {
  EXPECT_THROW(similarity_distribution(Tensor(Matrix(1, 3, 1.0))), DegenerateInputError);
}

TEST(ElementwiseKl, IdenticalDistributionsGiveZero) {
  const auto p = similarity_distribution(Tensor(random_matrix(5, 3, 4)));
  EXPECT_NEAR(elementwise_kl(p, p).item(), 0.0, 1e-12);
}

TEST(ElementwiseKl, HandComputedThreeByThree) {
  // Rows: p = (1/2, 1/2), q = (3/4, 1/4) over the two off-diagonal slots.
  Matrix p(3, 3), q(3, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    std::size_t first = (i + 1) % 3, second = (i + 2) % 3;
    p(i, first) = p(i, second) = 0.5;
    q(i, first) = 0.75;
    q(i, second) = 0.25;
  }
  const double kl = elementwise_kl({Tensor(p)}, {Tensor(q)}).item();
  const double per_row = 0.5 * std::log(2.0 / 3.0) + 0.5 * std::log(2.0);
  EXPECT_NEAR(per_row, 0.14384, 1e-5);
  EXPECT_NEAR(kl, 3.0 * per_row, 1e-12);
  EXPECT_NEAR(kl, 0.43153, 1e-4);
}

TEST(ElementwiseKl, NonNegativeOnRandomPairs) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto p = similarity_distribution(Tensor(random_matrix(6, 4, seed)));
    const auto q = similarity_distribution(Tensor(random_matrix(6, 4, seed + 1000)));
    EXPECT_GE(elementwise_kl(p, q).item(), 0.0);
  }
}

TEST(ElementwiseKl, ShapeMismatchIsContractViolation) {
  const auto p = similarity_distribution(Tensor(random_matrix(3, 2, 1)));
  const auto q = similarity_distribution(Tensor(random_matrix(4, 2, 1)));
  EXPECT_THROW(elementwise_kl(p, q), ContractViolation);
}

TEST(ElementwiseKl, GradientThroughBothSources) {
  const Matrix f = random_matrix(5, 3, 8);
  const Matrix g = random_matrix(5, 3, 9);
  auto rp = check_gradient(g, [&](const Tensor& t) {
    return elementwise_kl(similarity_distribution(t), similarity_distribution(Tensor(f)));
  });
  auto rq = check_gradient(f, [&](const Tensor& t) {
    return elementwise_kl(similarity_distribution(Tensor(g)), similarity_distribution(t));
  });
  EXPECT_LT(rp.max_relative_error, 1e-3);
  EXPECT_LT(rq.max_relative_error, 1e-3);
}

TEST(GramMatrix, IdenticalSamplesSaturate) {
  const auto a = gram_matrix(Tensor(Matrix(4, 2, 0.3)), 2.0, 1.0).value();
  for (double v : a.data()) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(GramMatrix, DistantSamplesApproachScaledIdentity) {
  const Matrix s = Matrix::from_rows({{0}, {100}, {200}});
  const auto a = gram_matrix(Tensor(s), 2.0, 1.0).value();
  EXPECT_LE(linalg::max_abs_diff(a, Matrix::identity(3) * (1.0 / 3.0)), 1e-15);
}

TEST(GramMatrix, PsdWithUnitTrace) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = gram_matrix(Tensor(random_matrix(5, 1, seed)), 2.0, 0.7).value();
    EXPECT_NEAR(linalg::trace(a), 1.0, 1e-12);
    const auto eig = symmetric_eigendecompose(a);
    for (double l : eig.values) EXPECT_GE(l, -1e-10);
  }
}

TEST(GramMatrix, NonPositiveBandwidthIsParameterError) {
  EXPECT_THROW(gram_matrix(Tensor(random_matrix(3, 1, 1)), 2.0, 0.0), ParameterError);
  EXPECT_THROW(gram_matrix(Tensor(random_matrix(3, 1, 1)), 2.0, -1.0), ParameterError);
}

TEST(RenyiEntropy, ScaledIdentityGivesLogN) {
  const GramMatrix a{Tensor(Matrix::identity(8) * 0.125), 2.0, 1.0};
  EXPECT_NEAR(renyi_entropy(a).item(), 3.0, 1e-12);
}

TEST(RenyiEntropy, RankOneGivesZero) {
  for (double order : {2.0, 3.0, 0.5}) {
    const auto a = gram_matrix(Tensor(Matrix(5, 1, 2.0)), order, 1.0);
    EXPECT_NEAR(renyi_entropy(a).item(), 0.0, 1e-10) << order;
  }
}

TEST(RenyiEntropy, OrderOneIsParameterError) {
  const auto a = gram_matrix(Tensor(random_matrix(3, 1, 1)), 1.0, 1.0);
  EXPECT_THROW(renyi_entropy(a), ParameterError);
}

TEST(RenyiEntropy, MatchesIndependentEigensolver) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Matrix s = random_matrix(6, 2, seed);
    for (double order : {2.0, 1.5, 3.0}) {
      const auto a = gram_matrix(Tensor(s), order, 0.8);
      EXPECT_NEAR(renyi_entropy(a).item(), oracle_entropy(oracle_gram(s, 0.8), order), 1e-8)
          << "seed " << seed << " order " << order;
    }
  }
}

TEST(RenyiEntropy, BoundedByLogN) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const double bw = 0.1 + 0.05 * static_cast<double>(seed);
    const auto a = gram_matrix(Tensor(random_matrix(9, 2, seed)), 2.0, bw);
    const double h = renyi_entropy(a).item();
    EXPECT_GE(h, -1e-8);
    EXPECT_LE(h, std::log2(9.0) + 1e-8);
  }
}

TEST(JointEntropy, SingleMatrixIsItsOwnEntropy) {
  const auto a = gram_matrix(Tensor(random_matrix(6, 1, 3)), 2.0, 0.5);
  const GramMatrix list[] = {a};
  EXPECT_NEAR(joint_entropy(list).item(), renyi_entropy(a).item(), 1e-12);
}

TEST(JointEntropy, ConstantVariableAddsNothing) {
  const auto a = gram_matrix(Tensor(random_matrix(6, 1, 3)), 2.0, 0.5);
  const auto c = gram_matrix(Tensor(Matrix(6, 1, 0.0)), 2.0, 0.5);
  const GramMatrix list[] = {a, c};
  EXPECT_NEAR(joint_entropy(list).item(), renyi_entropy(a).item(), 1e-12);
  EXPECT_NEAR(mutual_information(a, c).item(), 0.0, 1e-8);
}

TEST(JointEntropy, EmptyListIsParameterError) {
  EXPECT_THROW(joint_entropy(std::span<const GramMatrix>{}), ParameterError);
}

TEST(JointEntropy, IndependentBitsAreRoughlyAdditive) {
  const Matrix bits = random_bits(64, 2, 2024);
  const Matrix c0 = slice_column(bits, 0), c1 = slice_column(bits, 1);
  const auto a0 = gram_matrix(Tensor(c0), 2.0, 0.1);
  const auto a1 = gram_matrix(Tensor(c1), 2.0, 0.1);
  const GramMatrix list[] = {a0, a1};
  const double joint = joint_entropy(list).item();
  EXPECT_NEAR(joint, oracle_entropy(oracle_joint({oracle_gram(c0, 0.1), oracle_gram(c1, 0.1)}), 2.0),
              1e-8);
  EXPECT_NEAR(joint, renyi_entropy(a0).item() + renyi_entropy(a1).item(), 0.1);
}

TEST(JointEntropy, ManyFactorsDoNotUnderflow) {
  const Matrix code = random_matrix(16, 128, 5, -1.0, 1.0);
  std::vector<GramMatrix> grams;
  std::vector<Eigen::MatrixXd> oracle;
  for (std::size_t c = 0; c < 128; ++c) {
    grams.push_back(gram_matrix(Tensor(slice_column(code, c)), 2.0, 0.3));
  }
  const double h = joint_entropy(grams).item();
  EXPECT_TRUE(std::isfinite(h));
  EXPECT_LE(h, 4.0 + 1e-8);
  EXPECT_GE(h, 0.0);
}

TEST(TotalCorrelation, SingleColumnIsZero) {
  EXPECT_EQ(total_correlation(Tensor(random_matrix(5, 1, 1)), 2.0, 0.5).item(), 0.0);
}

TEST(TotalCorrelation, NoColumnsIsParameterError) {
  EXPECT_THROW(total_correlation(Tensor(Matrix(5, 0)), 2.0, 0.5), ParameterError);
}

TEST(TotalCorrelation, DuplicatedDiscreteColumnEqualsMarginalEntropy) {
  // With ±1 codes and a narrow kernel the Gram has entries in {0, 1/n},
  // so A∘A renormalizes back to A and the duplicate adds no joint entropy.
  Matrix code(16, 2);
  const Matrix bits = random_bits(16, 1, 99);
  for (std::size_t i = 0; i < 16; ++i) code(i, 0) = code(i, 1) = bits(i, 0);
  const auto a1 = oracle_gram(slice_column(code, 0), 0.1);
  const double h1 = oracle_entropy(a1, 2.0);
  const double h_joint = oracle_entropy(oracle_joint({a1, a1}), 2.0);
  EXPECT_NEAR(h_joint, h1, 1e-10);
  EXPECT_NEAR(total_correlation(Tensor(code), 2.0, 0.1).item(), h1, 1e-10);
  EXPECT_GT(h1, 0.5);
}

TEST(TotalCorrelation, DuplicatedContinuousColumnMatchesOracle) {
  Matrix code(16, 2);
  const Matrix col = random_matrix(16, 1, 12, -1.0, 1.0);
  for (std::size_t i = 0; i < 16; ++i) code(i, 0) = code(i, 1) = col(i, 0);
  const auto a1 = oracle_gram(col, 0.4);
  const double expect = 2.0 * oracle_entropy(a1, 2.0) - oracle_entropy(oracle_joint({a1, a1}), 2.0);
  EXPECT_NEAR(total_correlation(Tensor(code), 2.0, 0.4).item(), expect, 1e-10);
  EXPECT_GT(expect, 0.0);
}

TEST(TotalCorrelation, NonNegativeOnRandomCodes) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::size_t k = 4 + seed % 6;
    const Matrix code = random_matrix(12, k, seed, -1.0, 1.0);
    EXPECT_GE(total_correlation_median(Tensor(code), 2.0).item(), -1e-8) << seed;
  }
}

TEST(TotalCorrelation, NonNegativeNearShannonOrderForAnyWidth) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::size_t k = 2 + seed % 6;
    const Matrix code = random_matrix(12, k, seed, -1.0, 1.0);
    EXPECT_GE(total_correlation_median(Tensor(code), 1.01).item(), -1e-8) << seed;
  }
}

// Order 2 is not subadditive under the Hadamard joint: a two-column code
// with weak dependence can score slightly below zero. Value cross-checked
// with an external eigensolver.
TEST(TotalCorrelation, OrderTwoTwoColumnCounterexample) {
  const Matrix code = random_matrix(12, 2, 60, -1.0, 1.0);
  EXPECT_NEAR(total_correlation_median(Tensor(code), 2.0).item(), -0.0452478291920619, 1e-9);
  EXPECT_GT(total_correlation_median(Tensor(code), 1.01).item(), 0.0);
}

TEST(TotalCorrelation, PermutationInvariantOverColumns) {
  const Matrix code = random_matrix(10, 4, 31, -1.0, 1.0);
  Matrix perm(10, 4);
  const std::size_t order[] = {2, 0, 3, 1};
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t c = 0; c < 4; ++c) perm(i, c) = code(i, order[c]);
  EXPECT_NEAR(total_correlation_median(Tensor(code), 2.0).item(),
              total_correlation_median(Tensor(perm), 2.0).item(), 1e-10);
}

TEST(TotalCorrelation, MatchesOracleDecomposition) {
  const Matrix code = random_matrix(10, 3, 41, -1.0, 1.0);
  std::vector<Eigen::MatrixXd> grams;
  double marginal = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    grams.push_back(oracle_gram(slice_column(code, c), 0.5));
    marginal += oracle_entropy(grams.back(), 2.5);
  }
  const double expect = marginal - oracle_entropy(oracle_joint(grams), 2.5);
  EXPECT_NEAR(total_correlation(Tensor(code), 2.5, 0.5).item(), expect, 1e-8);
}

TEST(MutualInformation, SelfInformationEqualsEntropyForDiscreteCodes) {
  const auto a = gram_matrix(Tensor(random_bits(12, 1, 3)), 2.0, 0.1);
  EXPECT_NEAR(mutual_information(a, a).item(), renyi_entropy(a).item(), 1e-10);
}

TEST(MutualInformation, Symmetric) {
  const auto a = gram_matrix(Tensor(random_matrix(8, 1, 1)), 2.0, 0.5);
  const auto b = gram_matrix(Tensor(random_matrix(8, 1, 2)), 2.0, 0.5);
  EXPECT_EQ(mutual_information(a, b).item(), mutual_information(b, a).item());
}

TEST(MedianBandwidth, FloorsAndMedians) {
  const Matrix code = Matrix::from_rows({{0.0, 0.5}, {1.0, 0.5}, {3.0, 0.5}});
  // column 0 distances {1, 3, 2} -> median 2; column 1 all zero -> floor
  const auto bw = median_bandwidths(code);
  EXPECT_DOUBLE_EQ(bw[0], 2.0);
  EXPECT_DOUBLE_EQ(bw[1], kBandwidthFloor);
}

// Estimator gradients on 8×4 inputs.
TEST(EstimatorGradients, MatchFiniteDifferences) {
  const Matrix x = random_matrix(8, 4, 55, -1.0, 1.0);
  const std::vector<double> bw = {0.6, 0.7, 0.8, 0.9};
  for (double order : {2.0, 3.0}) {
    auto tc = check_gradient(x, [&](const Tensor& t) { return total_correlation(t, order, bw); });
    EXPECT_LT(tc.max_relative_error, 1e-3) << "tc order " << order;
    auto h = check_gradient(x, [&](const Tensor& t) { return renyi_entropy(gram_matrix(t, order, 1.1)); });
    EXPECT_LT(h.max_relative_error, 1e-3) << "entropy order " << order;
    auto j = check_gradient(x, [&](const Tensor& t) {
      std::vector<GramMatrix> g;
      for (std::size_t c = 0; c < 4; ++c) g.push_back(gram_matrix(column(t, c), order, bw[c]));
      return joint_entropy(g);
    });
    EXPECT_LT(j.max_relative_error, 1e-3) << "joint order " << order;
  }
  auto kl = check_gradient(x, [&](const Tensor& t) {
    return elementwise_kl(similarity_distribution(t), similarity_distribution(Tensor(random_matrix(8, 4, 56))));
  });
  EXPECT_LT(kl.max_relative_error, 1e-3);
}

}  // namespace
}  // namespace ith
