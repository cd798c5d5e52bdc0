#ifndef ITH_TENSOR_HPP
#define ITH_TENSOR_HPP

#include <cmath>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ith/eigen.hpp"
#include "ith/error.hpp"
#include "ith/matrix.hpp"

namespace ith {

class Tape;
class Tensor;

inline constexpr double kEpsilonNorm = 1e-12;

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;  // allocated on first accumulation
  bool requires_grad = false;
  Tape* tape = nullptr;

  void accumulate(const Matrix& g) {
    if (!requires_grad) return;
    if (grad.empty()) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

using NodePtr = std::shared_ptr<Node>;

const NodePtr& node_of(const Tensor& t);

}  // namespace detail

// Handle to a value node. Copies share the node. Constants carry no tape;
// tensors created through a Tape (directly or as op results) do.
class Tensor {
 public:
  Tensor() : node_(std::make_shared<detail::Node>()) {}
  explicit Tensor(Matrix value) : node_(std::make_shared<detail::Node>()) {
    node_->value = std::move(value);
  }

  const Matrix& value() const { return node_->value; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  Tape* tape() const { return node_->tape; }

  // Accumulated cotangent; zeros if nothing flowed into this tensor.
  Matrix grad() const {
    if (node_->grad.empty()) return Matrix(rows(), cols());
    return node_->grad;
  }

  double item() const {
    if (node_->value.size() != 1) {
      throw ContractViolation("Tensor::item on non-scalar " + node_->value.shape_string());
    }
    return node_->value[0];
  }

 private:
  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}
  friend const detail::NodePtr& detail::node_of(const Tensor&);
  friend class Tape;

  detail::NodePtr node_;
};

namespace detail {
inline const NodePtr& node_of(const Tensor& t) { return t.node_; }
}  // namespace detail

// Ordered record of differentiable operations. Records hold their input
// and output nodes alive until clear().
class Tape {
 public:
  using Rule = std::function<void(const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that accumulates a gradient.
  Tensor variable(Matrix value) {
    auto n = std::make_shared<detail::Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    n->tape = this;
    leaves_.push_back(n);
    return Tensor(std::move(n));
  }

  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty() && leaves_.empty(); }

  void clear() {
    records_.clear();
    leaves_.clear();
  }

  void backward(const Tensor& root) {
    const auto& r = detail::node_of(root);
    if (r->value.size() != 1) {
      throw ContractViolation("Tape::backward: root must be scalar, got " +
                              r->value.shape_string());
    }
    if (!r->requires_grad) return;
    if (r->tape != this) throw ContractViolation("Tape::backward: root recorded on another tape");
    r->accumulate(Matrix(1, 1, 1.0));
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (it->output->grad.empty()) continue;
      it->rule(it->output->grad);
    }
  }

  // Used by op implementations. Output requires grad iff some input does.
  Tensor record(Matrix value, std::vector<detail::NodePtr> inputs, Rule rule) {
    auto out = std::make_shared<detail::Node>();
    out->value = std::move(value);
    out->requires_grad = true;
    out->tape = this;
    records_.push_back({std::move(inputs), out, std::move(rule)});
    return Tensor(std::move(out));
  }

 private:
  struct Record {
    std::vector<detail::NodePtr> inputs;
    detail::NodePtr output;
    Rule rule;
  };
  std::vector<Record> records_;
  std::vector<detail::NodePtr> leaves_;
};

namespace detail {

// Finds the tape shared by the gradient-carrying inputs, or nullptr when
// none of them require a gradient.
inline Tape* active_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->requires_grad()) continue;
    if (tape && t->tape() != tape) {
      throw ContractViolation("tensor op: inputs were recorded on different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

// Builds the op result: a constant if no input needs a gradient, otherwise
// a recorded node. `make_rule` receives the raw input nodes and returns the
// backward rule.
template <typename MakeRule>
Tensor make_op(Matrix value, std::initializer_list<const Tensor*> inputs, MakeRule make_rule) {
  Tape* tape = active_tape(inputs);
  if (!tape) return Tensor(std::move(value));
  std::vector<NodePtr> ins;
  ins.reserve(inputs.size());
  for (const Tensor* t : inputs) ins.push_back(node_of(*t));
  return tape->record(std::move(value), ins, make_rule(ins));
}

inline Tensor make_op_n(Matrix value, std::span<const Tensor> inputs,
                        const std::function<Tape::Rule(const std::vector<NodePtr>&)>& make_rule) {
  Tape* tape = nullptr;
  for (const Tensor& t : inputs) {
    if (!t.requires_grad()) continue;
    if (tape && t.tape() != tape) {
      throw ContractViolation("tensor op: inputs were recorded on different tapes");
    }
    tape = t.tape();
  }
  if (!tape) return Tensor(std::move(value));
  std::vector<NodePtr> ins;
  ins.reserve(inputs.size());
  for (const Tensor& t : inputs) ins.push_back(node_of(t));
  return tape->record(std::move(value), ins, make_rule(ins));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Arithmetic

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  Matrix out = linalg::gemm(a.value(), false, b.value(), false);
  return detail::make_op(std::move(out), {&a, &b}, [](const auto& in) {
    return [pa = in[0].get(), pb = in[1].get()](const Matrix& g) {
      if (pa->requires_grad) pa->accumulate(linalg::gemm(g, false, pb->value, true));
      if (pb->requires_grad) pb->accumulate(linalg::gemm(pa->value, true, g, false));
    };
  });
}

inline Tensor transpose(const Tensor& a) {
  return detail::make_op(linalg::transpose(a.value()), {&a}, [](const auto& in) {
    return [pa = in[0].get()](const Matrix& g) { pa->accumulate(linalg::transpose(g)); };
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::make_op(a.value() + b.value(), {&a, &b}, [](const auto& in) {
    return [pa = in[0].get(), pb = in[1].get()](const Matrix& g) {
      pa->accumulate(g);
      pb->accumulate(g);
    };
  });
}

inline Tensor subtract(const Tensor& a, const Tensor& b) {
  return detail::make_op(a.value() - b.value(), {&a, &b}, [](const auto& in) {
    return [pa = in[0].get(), pb = in[1].get()](const Matrix& g) {
      pa->accumulate(g);
      pb->accumulate(g * -1.0);
    };
  });
}

// x (n×d) plus a 1×d row added to every row.
inline Tensor add_row_broadcast(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw ContractViolation("add_row_broadcast: bias " + row.value().shape_string() +
                            " does not fit " + x.value().shape_string());
  }
  Matrix out = x.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += row.value()(0, j);
  return detail::make_op(std::move(out), {&x, &row}, [](const auto& in) {
    return [px = in[0].get(), pr = in[1].get()](const Matrix& g) {
      px->accumulate(g);
      if (pr->requires_grad) {
        Matrix s(1, g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) s(0, j) += g(i, j);
        pr->accumulate(s);
      }
    };
  });
}

inline Tensor scalar_multiply(const Tensor& a, double s) {
  return detail::make_op(a.value() * s, {&a}, [s](const auto& in) {
    return [pa = in[0].get(), s](const Matrix& g) { pa->accumulate(g * s); };
  });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  Matrix out = a.value();
  for (double& v : out.data()) v += s;
  return detail::make_op(std::move(out), {&a}, [](const auto& in) {
    return [pa = in[0].get()](const Matrix& g) { pa->accumulate(g); };
  });
}

inline Tensor hadamard_product(const Tensor& a, const Tensor& b) {
  return detail::make_op(linalg::hadamard(a.value(), b.value()), {&a, &b}, [](const auto& in) {
    return [pa = in[0].get(), pb = in[1].get()](const Matrix& g) {
      if (pa->requires_grad) pa->accumulate(linalg::hadamard(g, pb->value));
      if (pb->requires_grad) pb->accumulate(linalg::hadamard(g, pa->value));
    };
  });
}

inline Tensor concat_columns(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) {
    throw ContractViolation("concat_columns: row counts differ (" + std::to_string(a.rows()) +
                            " vs " + std::to_string(b.rows()) + ")");
  }
  const std::size_t ca = a.cols();
  const std::size_t cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < ca; ++j) out(i, j) = a.value()(i, j);
    for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = b.value()(i, j);
  }
  return detail::make_op(std::move(out), {&a, &b}, [ca, cb](const auto& in) {
    return [pa = in[0].get(), pb = in[1].get(), ca, cb](const Matrix& g) {
      if (pa->requires_grad) {
        Matrix ga(g.rows(), ca);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < ca; ++j) ga(i, j) = g(i, j);
        pa->accumulate(ga);
      }
      if (pb->requires_grad) {
        Matrix gb(g.rows(), cb);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < cb; ++j) gb(i, j) = g(i, ca + j);
        pb->accumulate(gb);
      }
    };
  });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor tanh_elementwise(const Tensor& x) {
  Matrix out = x.value();
  for (double& v : out.data()) v = std::tanh(v);
  return detail::make_op(out, {&x}, [out](const auto& in) {
    return [px = in[0].get(), out](const Matrix& g) {
      Matrix d = g;
      for (std::size_t k = 0; k < d.size(); ++k) d[k] *= 1.0 - out[k] * out[k];
      px->accumulate(d);
    };
  });
}

inline Tensor relu(const Tensor& x) {
  Matrix out = x.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return detail::make_op(out, {&x}, [](const auto& in) {
    return [px = in[0].get()](const Matrix& g) {
      Matrix d = g;
      for (std::size_t k = 0; k < d.size(); ++k)
        if (px->value[k] <= 0.0) d[k] = 0.0;
      px->accumulate(d);
    };
  });
}

inline Tensor log_elementwise(const Tensor& x) {
  Matrix out = x.value();
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (!(out[k] > 0.0)) {
      throw DegenerateInputError("log_elementwise: non-positive entry at flat index " +
                                 std::to_string(k));
    }
    out[k] = std::log(out[k]);
  }
  return detail::make_op(std::move(out), {&x}, [](const auto& in) {
    return [px = in[0].get()](const Matrix& g) {
      Matrix d = g;
      for (std::size_t k = 0; k < d.size(); ++k) d[k] /= px->value[k];
      px->accumulate(d);
    };
  });
}

inline Tensor softmax_rows(const Tensor& x) {
  Matrix out = x.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    double m = -INFINITY;
    for (double v : r) m = std::max(m, v);
    double s = 0.0;
    for (double& v : r) s += (v = std::exp(v - m));
    for (double& v : r) v /= s;
  }
  return detail::make_op(out, {&x}, [out](const auto& in) {
    return [px = in[0].get(), out](const Matrix& g) {
      Matrix d(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < g.cols(); ++j) dot += g(i, j) * out(i, j);
        for (std::size_t j = 0; j < g.cols(); ++j) d(i, j) = out(i, j) * (g(i, j) - dot);
      }
      px->accumulate(d);
    };
  });
}

// ---------------------------------------------------------------------------
// Reductions (all return 1×1)

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return detail::make_op(Matrix(1, 1, s), {&x}, [](const auto& in) {
    return [px = in[0].get()](const Matrix& g) {
      px->accumulate(Matrix(px->value.rows(), px->value.cols(), g[0]));
    };
  });
}

inline Tensor mean(const Tensor& x) {
  if (x.value().empty()) throw DegenerateInputError("mean: empty tensor");
  const double n = static_cast<double>(x.value().size());
  return scalar_multiply(sum(x), 1.0 / n);
}

inline Tensor frobenius_norm_squared(const Tensor& x) {
  return detail::make_op(Matrix(1, 1, linalg::frobenius_norm_squared(x.value())), {&x},
                         [](const auto& in) {
                           return [px = in[0].get()](const Matrix& g) {
                             px->accumulate(px->value * (2.0 * g[0]));
                           };
                         });
}

inline Tensor log_scalar(const Tensor& x) { return log_elementwise(x); }

// ---------------------------------------------------------------------------
// Cosine similarity

namespace detail {

inline std::vector<double> row_norms(const Matrix& x, const char* what) {
  std::vector<double> n(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    n[i] = std::sqrt(s);
    if (n[i] < kEpsilonNorm) {
      throw DegenerateInputError(std::string(what) + ": row " + std::to_string(i) +
                                 " has zero norm");
    }
  }
  return n;
}

// Gradient of C_ij = <x_i,y_j>/(|x_i||y_j|) w.r.t. x given cotangent G:
// dx_i = Σ_j G_ij (y_j/(|x_i||y_j|) − C_ij x_i/|x_i|²)
inline Matrix cosine_grad_lhs(const Matrix& g, const Matrix& c, const Matrix& x,
                              const std::vector<double>& nx, const Matrix& y,
                              const std::vector<double>& ny) {
  Matrix dx(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto di = dx.row(i);
    double weighted = 0.0;
    for (std::size_t j = 0; j < y.rows(); ++j) {
      const double w = g(i, j) / (nx[i] * ny[j]);
      if (w != 0.0) {
        auto yj = y.row(j);
        for (std::size_t k = 0; k < x.cols(); ++k) di[k] += w * yj[k];
      }
      weighted += g(i, j) * c(i, j);
    }
    const double s = weighted / (nx[i] * nx[i]);
    auto xi = x.row(i);
    for (std::size_t k = 0; k < x.cols(); ++k) di[k] -= s * xi[k];
  }
  return dx;
}

inline Matrix cosine_value(const Matrix& x, const std::vector<double>& nx, const Matrix& y,
                           const std::vector<double>& ny) {
  Matrix c = linalg::gemm(x, false, y, true);
  for (std::size_t i = 0; i < c.rows(); ++i)
    for (std::size_t j = 0; j < c.cols(); ++j) c(i, j) /= nx[i] * ny[j];
  return c;
}

}  // namespace detail

// out[i][j] = cos(x_i, y_j) for every row pair across two matrices.
inline Tensor cross_cosine_matrix(const Tensor& x, const Tensor& y) {
  if (x.cols() != y.cols()) {
    throw ContractViolation("cross_cosine_matrix: feature widths differ (" +
                            std::to_string(x.cols()) + " vs " + std::to_string(y.cols()) + ")");
  }
  auto nx = detail::row_norms(x.value(), "cross_cosine_matrix");
  auto ny = detail::row_norms(y.value(), "cross_cosine_matrix");
  Matrix c = detail::cosine_value(x.value(), nx, y.value(), ny);
  return detail::make_op(c, {&x, &y}, [c, nx, ny](const auto& in) {
    return [px = in[0].get(), py = in[1].get(), c, nx, ny](const Matrix& g) {
      if (px->requires_grad)
        px->accumulate(detail::cosine_grad_lhs(g, c, px->value, nx, py->value, ny));
      if (py->requires_grad) {
        const Matrix gt = linalg::transpose(g);
        const Matrix ct = linalg::transpose(c);
        py->accumulate(detail::cosine_grad_lhs(gt, ct, py->value, ny, px->value, nx));
      }
    };
  });
}

// Symmetric cosine matrix of the rows of x; unit diagonal.
inline Tensor row_cosine_matrix(const Tensor& x) {
  auto n = detail::row_norms(x.value(), "row_cosine_matrix");
  Matrix c = detail::cosine_value(x.value(), n, x.value(), n);
  for (std::size_t i = 0; i < c.rows(); ++i) {
    c(i, i) = 1.0;
    for (std::size_t j = i + 1; j < c.cols(); ++j) c(j, i) = c(i, j);
  }
  return detail::make_op(c, {&x}, [c, n](const auto& in) {
    return [px = in[0].get(), c, n](const Matrix& g) {
      // Both argument slots reference x: dx = lhs(G) + lhs(Gᵀ).
      Matrix sym = g + linalg::transpose(g);
      px->accumulate(detail::cosine_grad_lhs(sym, c, px->value, n, px->value, n));
    };
  });
}

// ---------------------------------------------------------------------------
// Spectral

// Tr f(A) for symmetric A, with d/dA Tr f(A) = V f'(Λ) Vᵀ.
inline Tensor trace_function(const Tensor& a, const std::function<double(double)>& f,
                             const std::function<double(double)>& fprime) {
  SymmetricEigen eig = symmetric_eigendecompose(a.value());
  double t = 0.0;
  for (double l : eig.values) t += f(l);
  return detail::make_op(Matrix(1, 1, t), {&a}, [eig, fprime](const auto& in) {
    return [pa = in[0].get(), eig, fprime](const Matrix& g) {
      std::vector<double> d(eig.values.size());
      for (std::size_t k = 0; k < d.size(); ++k) d[k] = g[0] * fprime(eig.values[k]);
      pa->accumulate(spectral_compose(eig.vectors, d));
    };
  });
}

// A / trace(A)
inline Tensor trace_normalize(const Tensor& a) {
  const double t = linalg::trace(a.value());
  if (!(t > 0.0)) throw DegenerateInputError("trace_normalize: non-positive trace");
  Matrix out = a.value() * (1.0 / t);
  return detail::make_op(out, {&a}, [out, t](const auto& in) {
    return [pa = in[0].get(), out, t](const Matrix& g) {
      // d(A/t) = dA/t − A tr(dA)/t²
      double inner = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) inner += g[k] * out[k];
      Matrix d = g * (1.0 / t);
      for (std::size_t i = 0; i < d.rows(); ++i) d(i, i) -= inner / t;
      pa->accumulate(d);
    };
  });
}

}  // namespace ith

#endif  // ITH_TENSOR_HPP
