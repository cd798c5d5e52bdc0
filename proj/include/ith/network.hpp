#ifndef ITH_NETWORK_HPP
#define ITH_NETWORK_HPP

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ith/binio.hpp"
#include "ith/error.hpp"
#include "ith/tensor.hpp"

namespace ith {

enum class Activation : std::uint8_t { relu = 0, tanh = 1, none = 2 };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::none: return "none";
  }
  return "?";
}

// y = act(x·weight + bias); weight is fan_in × fan_out, bias 1 × fan_out.
struct Layer {
  Matrix weight;
  Matrix bias;
  Activation activation = Activation::none;

  std::size_t fan_in() const { return weight.rows(); }
  std::size_t fan_out() const { return weight.cols(); }
  bool operator==(const Layer&) const = default;
};

struct Network {
  std::string name;
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.front().fan_in(); }
  std::size_t output_dim() const { return layers.back().fan_out(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  // Flat view in (weight, bias) per layer order; matches gradient order.
  std::vector<Matrix*> parameters() {
    std::vector<Matrix*> out;
    for (auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }
  std::vector<const Matrix*> parameters() const {
    std::vector<const Matrix*> out;
    for (const auto& l : layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
    return out;
  }

  bool operator==(const Network&) const = default;
};

struct NetworkSpec {
  std::vector<std::size_t> sizes;         // input, hidden..., output
  std::vector<Activation> activations;    // one per layer (sizes.size() - 1)
};

// Glorot-uniform weights, zero biases, deterministic per seed.
inline Network build_network(std::string name, const NetworkSpec& spec, std::uint64_t seed) {
  if (spec.sizes.size() < 2) throw ParameterError("build_network: need at least one layer");
  if (spec.activations.size() != spec.sizes.size() - 1) {
    throw ParameterError("build_network: " + std::to_string(spec.activations.size()) +
                         " activations for " + std::to_string(spec.sizes.size() - 1) + " layers");
  }
  for (auto s : spec.sizes) {
    if (s == 0) throw ParameterError("build_network: layer sizes must be >= 1");
  }
  std::mt19937_64 rng(seed);
  Network net{std::move(name), {}};
  for (std::size_t l = 0; l + 1 < spec.sizes.size(); ++l) {
    const std::size_t in = spec.sizes[l];
    const std::size_t out = spec.sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Layer layer{Matrix(in, out), Matrix(1, out), spec.activations[l]};
    for (double& w : layer.weight.data()) w = dist(rng);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

// Parameters of one network bound as leaves on a tape.
struct BoundParameters {
  std::vector<Tensor> tensors;

  std::vector<Matrix> grads() const {
    std::vector<Matrix> g;
    g.reserve(tensors.size());
    for (const auto& t : tensors) g.push_back(t.grad());
    return g;
  }
};

inline BoundParameters bind(Tape& tape, const Network& net) {
  BoundParameters b;
  for (const Matrix* p : net.parameters()) b.tensors.push_back(tape.variable(*p));
  return b;
}

inline Tensor apply_activation(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::relu: return relu(x);
    case Activation::tanh: return tanh_elementwise(x);
    case Activation::none: return x;
  }
  return x;
}

inline Tensor forward(const Network& net, const Tensor& x, const BoundParameters* bound = nullptr) {
  if (net.layers.empty()) throw ContractViolation("forward: network " + net.name + " has no layers");
  if (x.cols() != net.input_dim()) {
    throw ContractViolation("forward: " + net.name + " expects " +
                            std::to_string(net.input_dim()) + " input columns, got " +
                            std::to_string(x.cols()));
  }
  Tensor h = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const Layer& layer = net.layers[l];
    Tensor w = bound ? bound->tensors[2 * l] : Tensor(layer.weight);
    Tensor b = bound ? bound->tensors[2 * l + 1] : Tensor(layer.bias);
    h = apply_activation(add_row_broadcast(matmul(h, w), b), layer.activation);
  }
  return h;
}

inline Matrix forward(const Network& net, const Matrix& x) { return forward(net, Tensor(x)).value(); }

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(const Network& net, AdamConfig cfg) : config(cfg) {
    for (const Matrix* p : net.parameters()) {
      first_moment.emplace_back(p->rows(), p->cols());
      second_moment.emplace_back(p->rows(), p->cols());
    }
  }
};

inline void adam_step(AdamState& state, std::span<Matrix* const> params,
                      std::span<const Matrix> grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ContractViolation("adam_step: " + std::to_string(params.size()) + " parameters, " +
                            std::to_string(grads.size()) + " gradients, " +
                            std::to_string(state.first_moment.size()) + " moment slots");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    params[k]->require_same_shape(grads[k], "adam_step");
    for (std::size_t e = 0; e < grads[k].size(); ++e) {
      if (!std::isfinite(grads[k][e])) {
        throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(k) +
                           " entry " + std::to_string(e) + " at step " +
                           std::to_string(state.step + 1));
      }
    }
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    Matrix& m = state.first_moment[k];
    Matrix& v = state.second_moment[k];
    const Matrix& g = grads[k];
    for (std::size_t e = 0; e < p.size(); ++e) {
      m[e] = c.beta1 * m[e] + (1.0 - c.beta1) * g[e];
      v[e] = c.beta2 * v[e] + (1.0 - c.beta2) * g[e] * g[e];
      const double mhat = m[e] / bc1;
      const double vhat = v[e] / bc2;
      p[e] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
}

inline void adam_step(AdamState& state, Network& net, std::span<const Matrix> grads) {
  auto params = net.parameters();
  adam_step(state, params, grads);
}

// ---------------------------------------------------------------------------
// Classification loss

// −log softmax(logits)[label] per row, returned as n×1.
inline Tensor cross_entropy_per_sample(const Tensor& logits, std::span<const int> labels) {
  const Matrix& z = logits.value();
  if (labels.size() != z.rows()) {
    throw ContractViolation("cross_entropy_per_sample: " + std::to_string(labels.size()) +
                            " labels for " + std::to_string(z.rows()) + " rows");
  }
  const std::size_t classes = z.cols();
  Matrix prob(z.rows(), classes);
  Matrix out(z.rows(), 1);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ContractViolation("cross_entropy_per_sample: label " + std::to_string(y) +
                              " out of range [0," + std::to_string(classes) + ") at row " +
                              std::to_string(i));
    }
    double m = -INFINITY;
    for (double v : z.row(i)) m = std::max(m, v);
    double s = 0.0;
    for (std::size_t j = 0; j < classes; ++j) s += (prob(i, j) = std::exp(z(i, j) - m));
    for (std::size_t j = 0; j < classes; ++j) prob(i, j) /= s;
    out(i, 0) = -(z(i, static_cast<std::size_t>(y)) - m - std::log(s));
  }
  std::vector<int> ys(labels.begin(), labels.end());
  return detail::make_op(std::move(out), {&logits}, [prob, ys](const auto& in) {
    return [pz = in[0].get(), prob, ys](const Matrix& g) {
      Matrix d = prob;
      for (std::size_t i = 0; i < d.rows(); ++i) {
        d(i, static_cast<std::size_t>(ys[i])) -= 1.0;
        for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) *= g(i, 0);
      }
      pz->accumulate(d);
    };
  });
}

inline double accuracy(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() == 0) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    if (static_cast<int>(best) == labels[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(logits.rows());
}

// ---------------------------------------------------------------------------
// Checkpoint: "ITH1", then per network until EOF:
//   u32 name length, name bytes, u32 layer count,
//   per layer: u32 fan_in, u32 fan_out, u8 activation tag,
//              fan_in·fan_out f64 weights (row-major), fan_out f64 biases.

inline void write_network(std::ostream& out, const Network& net) {
  binio::put_u32(out, static_cast<std::uint32_t>(net.name.size()));
  out.write(net.name.data(), static_cast<std::streamsize>(net.name.size()));
  binio::put_u32(out, static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    binio::put_u32(out, static_cast<std::uint32_t>(l.fan_in()));
    binio::put_u32(out, static_cast<std::uint32_t>(l.fan_out()));
    binio::put_u8(out, static_cast<std::uint8_t>(l.activation));
    for (double w : l.weight.data()) binio::put_f64(out, w);
    for (double b : l.bias.data()) binio::put_f64(out, b);
  }
}

inline void write_checkpoint(std::ostream& out, std::span<const Network* const> nets) {
  binio::put_magic(out, "ITH1");
  for (const Network* n : nets) write_network(out, *n);
  if (!out) throw IoError("write_checkpoint: stream write failed");
}

inline std::vector<Network> read_checkpoint(std::istream& in) {
  binio::Reader r(in, "checkpoint");
  r.expect_magic("ITH1");
  std::vector<Network> nets;
  while (!r.at_eof()) {
    Network net;
    const std::uint32_t name_len = r.u32();
    if (name_len > 4096) r.fail("implausible network name length " + std::to_string(name_len));
    net.name.resize(name_len);
    r.read_bytes(net.name.data(), name_len);
    const std::uint32_t layers = r.u32();
    if (layers == 0) r.fail("network " + net.name + " has no layers");
    for (std::uint32_t l = 0; l < layers; ++l) {
      const std::uint32_t in_dim = r.u32();
      const std::uint32_t out_dim = r.u32();
      const std::uint8_t tag = r.u8();
      if (tag > 2) r.fail("unknown activation tag " + std::to_string(tag));
      if (in_dim == 0 || out_dim == 0) r.fail("zero layer dimension");
      if (!net.layers.empty() && net.layers.back().fan_out() != in_dim) {
        r.fail("layer dimensions do not chain in network " + net.name);
      }
      Layer layer{Matrix(in_dim, out_dim), Matrix(1, out_dim), static_cast<Activation>(tag)};
      for (double& w : layer.weight.data()) w = r.f64();
      for (double& b : layer.bias.data()) b = r.f64();
      if (!layer.weight.all_finite() || !layer.bias.all_finite()) {
        r.fail("non-finite parameter in network " + net.name);
      }
      net.layers.push_back(std::move(layer));
    }
    nets.push_back(std::move(net));
  }
  return nets;
}

}  // namespace ith

#endif  // ITH_NETWORK_HPP
