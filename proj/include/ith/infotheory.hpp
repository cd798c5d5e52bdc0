#ifndef ITH_INFOTHEORY_HPP
#define ITH_INFOTHEORY_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ith/error.hpp"
#include "ith/tensor.hpp"

namespace ith {

inline constexpr double kEpsilonFloor = 1e-8;
inline constexpr double kDefaultEntropyOrder = 2.0;
inline constexpr double kBandwidthFloor = 0.1;
// Eigenvalues of a trace-1 Gram below this are round-off and count as zero.
inline constexpr double kEigenvalueFloor = 1e-12;

// Row-stochastic pairwise-relation matrix over a batch. The diagonal is
// excluded and stored as zero; every off-diagonal entry is positive.
struct SimilarityDistribution {
  Tensor matrix;

  std::size_t n() const { return matrix.rows(); }
  const Matrix& value() const { return matrix.value(); }
};

// Trace-normalized Gaussian Gram matrix feeding the matrix-based Rényi
// entropy estimator.
struct GramMatrix {
  Tensor matrix;
  double entropy_order = kDefaultEntropyOrder;
  double kernel_bandwidth = 1.0;

  std::size_t n() const { return matrix.rows(); }
  const Matrix& value() const { return matrix.value(); }
};

// Maps cosine values c to affinities (1+c)/2 + epsilon_floor off the
// diagonal and normalizes each row over j != i.
inline Tensor offdiag_row_stochastic(const Tensor& cosine) {
  const Matrix& c = cosine.value();
  const std::size_t n = c.rows();
  if (c.cols() != n) {
    throw ContractViolation("offdiag_row_stochastic: matrix not square (" + c.shape_string() +
                            ")");
  }
  Matrix s(n, n);
  std::vector<double> row_sum(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      s(i, j) = 0.5 * (1.0 + c(i, j)) + kEpsilonFloor;
      row_sum[i] += s(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) s(i, j) /= row_sum[i];
  }
  return detail::make_op(s, {&cosine}, [s, row_sum](const auto& in) {
    return [pc = in[0].get(), s, row_sum](const Matrix& g) {
      const std::size_t n = s.rows();
      Matrix d(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g(i, j) * s(i, j);
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          d(i, j) = 0.5 * (g(i, j) - dot) / row_sum[i];
        }
      }
      pc->accumulate(d);
    };
  });
}

inline SimilarityDistribution similarity_distribution(const Tensor& features) {
  if (features.rows() < 2) {
    throw DegenerateInputError("similarity_distribution: batch of " +
                               std::to_string(features.rows()) + " rows, need at least 2");
  }
  return {offdiag_row_stochastic(row_cosine_matrix(features))};
}

// Cross-set distribution: row i relates x_i to every y_j, j != i.
inline SimilarityDistribution cross_similarity_distribution(const Tensor& x, const Tensor& y) {
  if (x.rows() != y.rows()) {
    throw ContractViolation("cross_similarity_distribution: batch sizes differ (" +
                            std::to_string(x.rows()) + " vs " + std::to_string(y.rows()) + ")");
  }
  if (x.rows() < 2) {
    throw DegenerateInputError("cross_similarity_distribution: need at least 2 rows");
  }
  return {offdiag_row_stochastic(cross_cosine_matrix(x, y))};
}

// Σ_i Σ_{j≠i} p_ij log(p_ij / q_ij), natural log.
inline Tensor elementwise_kl(const SimilarityDistribution& p, const SimilarityDistribution& q) {
  const Matrix& pv = p.value();
  const Matrix& qv = q.value();
  if (!pv.same_shape(qv)) {
    throw ContractViolation("elementwise_kl: shape mismatch " + pv.shape_string() + " vs " +
                            qv.shape_string());
  }
  const std::size_t n = pv.rows();
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (!(qv(i, j) > 0.0) || !(pv(i, j) > 0.0)) {
        throw DegenerateInputError("elementwise_kl: non-positive entry at (" +
                                   std::to_string(i) + "," + std::to_string(j) + ")");
      }
      kl += pv(i, j) * std::log(pv(i, j) / qv(i, j));
    }
  }
  return detail::make_op(Matrix(1, 1, kl), {&p.matrix, &q.matrix}, [](const auto& in) {
    return [pp = in[0].get(), pq = in[1].get()](const Matrix& g) {
      const Matrix& pv = pp->value;
      const Matrix& qv = pq->value;
      const std::size_t n = pv.rows();
      if (pp->requires_grad) {
        Matrix d(n, n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            if (j != i) d(i, j) = g[0] * (std::log(pv(i, j) / qv(i, j)) + 1.0);
        pp->accumulate(d);
      }
      if (pq->requires_grad) {
        Matrix d(n, n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            if (j != i) d(i, j) = -g[0] * pv(i, j) / qv(i, j);
        pq->accumulate(d);
      }
    };
  });
}

// K_ij = exp(-|s_i - s_j|² / (2 bandwidth²))
inline Tensor gaussian_kernel(const Tensor& samples, double bandwidth) {
  if (!(bandwidth > 0.0)) {
    throw ParameterError("gaussian_kernel: bandwidth must be positive, got " +
                         std::to_string(bandwidth));
  }
  const Matrix& x = samples.value();
  const std::size_t n = x.rows();
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  Matrix k(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const double diff = x(i, c) - x(j, c);
        d2 += diff * diff;
      }
      k(i, j) = k(j, i) = std::exp(-d2 * inv);
    }
  }
  return detail::make_op(k, {&samples}, [k, bandwidth](const auto& in) {
    return [px = in[0].get(), k, bandwidth](const Matrix& g) {
      const Matrix& x = px->value;
      const std::size_t n = x.rows();
      const double inv_s2 = 1.0 / (bandwidth * bandwidth);
      Matrix d(n, x.cols());
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          const double w = -(g(i, j) + g(j, i)) * k(i, j) * inv_s2;
          for (std::size_t c = 0; c < x.cols(); ++c) d(i, c) += w * (x(i, c) - x(j, c));
        }
      }
      px->accumulate(d);
    };
  });
}

inline GramMatrix gram_matrix(const Tensor& samples, double entropy_order,
                              double kernel_bandwidth) {
  if (samples.rows() < 2) {
    throw DegenerateInputError("gram_matrix: need at least 2 samples");
  }
  if (!(entropy_order > 0.0)) {
    throw ParameterError("gram_matrix: entropy order must be positive");
  }
  Tensor k = gaussian_kernel(samples, kernel_bandwidth);
  // Unit kernel diagonal: trace(K) = n.
  const double n = static_cast<double>(samples.rows());
  return {scalar_multiply(k, 1.0 / n), entropy_order, kernel_bandwidth};
}

// H_α(A) = log₂(Σ λ^α) / (1 − α). Order 2 uses Σλ² = ‖A‖_F² (A symmetric);
// other orders go through the eigendecomposition.
inline Tensor renyi_entropy_of(const Tensor& a, double order) {
  if (!(order > 0.0)) throw ParameterError("renyi_entropy: order must be positive");
  if (order == 1.0) {
    throw ParameterError("renyi_entropy: order 1 is the Shannon limit; use an order near 1");
  }
  Tensor power_sum;
  if (order == 2.0) {
    power_sum = frobenius_norm_squared(a);
  } else {
    power_sum = trace_function(
        a, [order](double l) { return l > kEigenvalueFloor ? std::pow(l, order) : 0.0; },
        [order](double l) { return l > kEigenvalueFloor ? order * std::pow(l, order - 1.0) : 0.0; });
  }
  return scalar_multiply(log_elementwise(power_sum), 1.0 / ((1.0 - order) * std::numbers::ln2));
}

inline Tensor renyi_entropy(const GramMatrix& a) { return renyi_entropy_of(a.matrix, a.entropy_order); }

// Trace-normalized Hadamard product, renormalized after every factor so
// long products do not underflow.
inline Tensor joint_gram(std::span<const GramMatrix> grams) {
  if (grams.empty()) throw ParameterError("joint_entropy: empty Gram list");
  const std::size_t n = grams.front().n();
  const double order = grams.front().entropy_order;
  for (const auto& g : grams) {
    if (g.n() != n) throw ContractViolation("joint_entropy: Gram sizes differ");
    if (g.entropy_order != order) throw ContractViolation("joint_entropy: entropy orders differ");
  }
  Tensor acc = grams.front().matrix;
  for (std::size_t k = 1; k < grams.size(); ++k) {
    acc = trace_normalize(hadamard_product(acc, grams[k].matrix));
  }
  return acc;
}

inline Tensor joint_entropy(std::span<const GramMatrix> grams) {
  Tensor joint = joint_gram(grams);
  return renyi_entropy_of(joint, grams.front().entropy_order);
}

inline Tensor mutual_information(const GramMatrix& a, const GramMatrix& b) {
  const GramMatrix pair[] = {a, b};
  return subtract(add(renyi_entropy(a), renyi_entropy(b)), joint_entropy(pair));
}

// Median pairwise distance of each column, floored.
inline std::vector<double> median_bandwidths(const Matrix& code, double floor = kBandwidthFloor) {
  std::vector<double> out(code.cols(), floor);
  std::vector<double> d;
  for (std::size_t c = 0; c < code.cols(); ++c) {
    d.clear();
    for (std::size_t i = 0; i < code.rows(); ++i)
      for (std::size_t j = i + 1; j < code.rows(); ++j)
        d.push_back(std::abs(code(i, c) - code(j, c)));
    if (d.empty()) continue;
    const std::size_t mid = d.size() / 2;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
    double med = d[mid];
    if (d.size() % 2 == 0) {
      med = 0.5 * (med + *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    out[c] = std::max(med, floor);
  }
  return out;
}

inline Tensor column(const Tensor& x, std::size_t c) {
  Matrix col(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) col(i, 0) = x.value()(i, c);
  return detail::make_op(std::move(col), {&x}, [c](const auto& in) {
    return [px = in[0].get(), c](const Matrix& g) {
      Matrix d(px->value.rows(), px->value.cols());
      for (std::size_t i = 0; i < d.rows(); ++i) d(i, c) = g(i, 0);
      px->accumulate(d);
    };
  });
}

// TC = Σ_k H(A_k) − H(A_1 ∘ ... ∘ A_K), one Gram per code column.
// Bandwidths are constants (no gradient flows through their selection).
inline Tensor total_correlation(const Tensor& code, double entropy_order,
                                std::span<const double> bandwidths) {
  const std::size_t k = code.cols();
  if (k == 0) throw ParameterError("total_correlation: code has no columns");
  if (code.rows() < 2) throw DegenerateInputError("total_correlation: need at least 2 rows");
  if (bandwidths.size() != k) {
    throw ContractViolation("total_correlation: " + std::to_string(bandwidths.size()) +
                            " bandwidths for " + std::to_string(k) + " columns");
  }
  std::vector<GramMatrix> grams;
  grams.reserve(k);
  for (std::size_t c = 0; c < k; ++c) {
    grams.push_back(gram_matrix(column(code, c), entropy_order, bandwidths[c]));
  }
  if (k == 1) return Tensor(Matrix(1, 1, 0.0));
  Tensor marginal = renyi_entropy(grams[0]);
  for (std::size_t c = 1; c < k; ++c) marginal = add(marginal, renyi_entropy(grams[c]));
  return subtract(marginal, joint_entropy(grams));
}

inline Tensor total_correlation(const Tensor& code, double entropy_order, double kernel_bandwidth) {
  const std::vector<double> bw(code.cols(), kernel_bandwidth);
  return total_correlation(code, entropy_order, bw);
}

// Bandwidths from the median heuristic on the current values.
inline Tensor total_correlation_median(const Tensor& code, double entropy_order) {
  const auto bw = median_bandwidths(code.value());
  return total_correlation(code, entropy_order, bw);
}

}  // namespace ith

#endif  // ITH_INFOTHEORY_HPP
