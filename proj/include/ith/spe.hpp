#ifndef ITH_SPE_HPP
#define ITH_SPE_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ith/aia.hpp"
#include "ith/error.hpp"
#include "ith/infotheory.hpp"
#include "ith/network.hpp"
#include "ith/tensor.hpp"

// Semantic preserving encoding: hash networks trained under inter-modal
// KL, intra-modal Gram alignment and bit-wise total correlation.
namespace ith {

// How the intra-modal Gram term is scaled inside L3. frobenius is the plain
// sum of squared Gram differences; mean_cosine divides it by l²K², i.e. the
// mean squared difference of the K-scaled Gram matrices (code cosines for
// ±1 codes). The raw sum grows as l²K² and swamps the KL term at γ = 1.
enum class IntraScale : std::uint8_t { frobenius, mean_cosine };

inline const char* to_string(IntraScale s) {
  return s == IntraScale::frobenius ? "frobenius" : "mean-cosine";
}

struct SPEConfig {
  double gamma = 1.0;
  double eta = 0.01;
  std::size_t bits = 32;
  std::size_t batch_size = 32;
  int epochs = 200;
  double entropy_order = kDefaultEntropyOrder;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  bool use_intra = true;
  bool use_inter = true;
  bool use_tc = true;
  IntraScale intra_scale = IntraScale::mean_cosine;

  double intra_weight() const { return use_intra ? 1.0 : 0.0; }
  double inter_weight() const { return use_inter ? gamma : 0.0; }
  double tc_weight() const { return use_tc ? eta : 0.0; }

  void validate() const {
    if (gamma < 0.0 || eta < 0.0) throw ParameterError("SPEConfig: gamma and eta must be >= 0");
    if (bits == 0) throw ParameterError("SPEConfig: code length must be >= 1");
    if (batch_size < 2) throw ParameterError("SPEConfig: batch size must be >= 2");
    if (epochs < 0) throw ParameterError("SPEConfig: negative epochs");
    if (!(entropy_order > 0.0) || entropy_order == 1.0) {
      throw ParameterError("SPEConfig: entropy order must be positive and != 1");
    }
    if (!(learning_rate > 0.0)) throw ParameterError("SPEConfig: learning rate must be positive");
  }
};

struct HashNetworks {
  Network image;  // G^v -> hidden -> K, tanh
  Network text;
  Network fused;
};

inline HashNetworks build_hash_networks(std::size_t gdim, std::size_t hidden, std::size_t bits,
                                        std::uint64_t seed) {
  using A = Activation;
  const NetworkSpec spec{{gdim, hidden, bits}, {A::relu, A::tanh}};
  return {build_network("img_hash", spec, seed + 11), build_network("txt_hash", spec, seed + 12),
          build_network("fus_hash", spec, seed + 13)};
}

// Relaxed codes of one batch, entries in (−1, 1).
struct RelaxedCodes {
  Tensor image;
  Tensor text;
  Tensor fused;

  std::size_t code_length() const { return image.cols(); }
  std::array<const Tensor*, 3> all() const { return {&image, &text, &fused}; }

  void validate() const {
    if (image.rows() != text.rows() || image.rows() != fused.rows()) {
      throw ContractViolation("RelaxedCodes: batch sizes differ");
    }
    if (image.cols() != text.cols() || image.cols() != fused.cols() || image.cols() == 0) {
      throw ContractViolation("RelaxedCodes: code lengths differ or are zero");
    }
  }
};

// Σ over the six ordered pairs (m,n), m≠n, of KL(S^{mn} || S^{G^z}).
inline Tensor inter_modal_loss(const RelaxedCodes& codes, const SimilarityDistribution& s_gz) {
  codes.validate();
  if (s_gz.n() != codes.image.rows()) {
    throw ContractViolation("inter_modal_loss: S^{G^z} is " + s_gz.value().shape_string() +
                            " for a batch of " + std::to_string(codes.image.rows()));
  }
  const auto m = codes.all();
  Tensor total;
  bool first = true;
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      if (a == b) continue;
      Tensor kl = elementwise_kl(cross_similarity_distribution(*m[a], *m[b]), s_gz);
      total = first ? kl : add(total, kl);
      first = false;
    }
  }
  return total;
}

// Σ over unordered pairs of ‖B^m B^mᵀ − B^n B^nᵀ‖_F².
inline Tensor intra_modal_loss(const RelaxedCodes& codes) {
  codes.validate();
  const auto m = codes.all();
  std::array<Tensor, 3> gram;
  for (std::size_t k = 0; k < 3; ++k) gram[k] = matmul(*m[k], transpose(*m[k]));
  Tensor total = frobenius_norm_squared(subtract(gram[0], gram[1]));
  total = add(total, frobenius_norm_squared(subtract(gram[0], gram[2])));
  total = add(total, frobenius_norm_squared(subtract(gram[1], gram[2])));
  return total;
}

inline Tensor intra_modal_loss(const RelaxedCodes& codes, IntraScale scale) {
  Tensor raw = intra_modal_loss(codes);
  if (scale == IntraScale::frobenius) return raw;
  const auto l = static_cast<double>(codes.image.rows());
  const auto k = static_cast<double>(codes.image.cols());
  return scalar_multiply(raw, 1.0 / (l * l * k * k));
}

// Per-column kernel bandwidths for each modality's code.
struct TcBandwidths {
  std::vector<double> image;
  std::vector<double> text;
  std::vector<double> fused;

  static TcBandwidths median(const RelaxedCodes& c) {
    return {median_bandwidths(c.image.value()), median_bandwidths(c.text.value()),
            median_bandwidths(c.fused.value())};
  }
  static TcBandwidths constant(std::size_t bits, double bw) {
    std::vector<double> v(bits, bw);
    return {v, v, v};
  }
};

struct TcTerms {
  Tensor total;
  Tensor image;
  Tensor text;
  Tensor fused;
};

inline TcTerms tc_terms(const RelaxedCodes& codes, double entropy_order, const TcBandwidths& bw) {
  codes.validate();
  TcTerms t;
  t.image = total_correlation(codes.image, entropy_order, bw.image);
  t.text = total_correlation(codes.text, entropy_order, bw.text);
  t.fused = total_correlation(codes.fused, entropy_order, bw.fused);
  t.total = add(add(t.image, t.text), t.fused);
  return t;
}

inline Tensor tc_loss(const RelaxedCodes& codes, double entropy_order, const TcBandwidths& bw) {
  return tc_terms(codes, entropy_order, bw).total;
}

inline Tensor tc_loss(const RelaxedCodes& codes, double entropy_order) {
  return tc_loss(codes, entropy_order, TcBandwidths::median(codes));
}

struct SpeTerms {
  Tensor intra;
  Tensor inter;
  TcTerms tc;
  Tensor total;  // w_intra·L_intra + γ·L_inter + η·L_tc
};

inline SpeTerms spe_loss(const RelaxedCodes& codes, const SimilarityDistribution& s_gz,
                         const SPEConfig& cfg, const TcBandwidths& bw) {
  SpeTerms t;
  t.intra = intra_modal_loss(codes, cfg.intra_scale);
  t.inter = inter_modal_loss(codes, s_gz);
  t.tc = tc_terms(codes, cfg.entropy_order, bw);
  t.total = add(add(scalar_multiply(t.intra, cfg.intra_weight()),
                    scalar_multiply(t.inter, cfg.inter_weight())),
                scalar_multiply(t.tc.total, cfg.tc_weight()));
  return t;
}

// sign with sign(0) = +1.
inline Matrix binarize(const Matrix& relaxed) {
  Matrix out(relaxed.rows(), relaxed.cols());
  for (std::size_t k = 0; k < relaxed.size(); ++k) {
    if (std::isnan(relaxed[k])) throw NumericError("binarize: NaN input");
    out[k] = relaxed[k] >= 0.0 ? 1.0 : -1.0;
  }
  return out;
}

struct SpeEpochRecord {
  int epoch = 0;
  double intra = 0.0;
  double inter = 0.0;
  double tc = 0.0;
  double total = 0.0;
  double tc_image = 0.0;
  double tc_text = 0.0;
  double tc_fused = 0.0;
};

using SpeLogFn = std::function<void(const SpeEpochRecord&)>;

// Minimizes L3 over the three hash networks; feature networks are frozen.
inline std::vector<SpeEpochRecord> train_spe(const FeatureDataset& ds, const AiaNetworks& aia,
                                             HashNetworks& hash, const SPEConfig& cfg,
                                             const SpeLogFn& log = {}) {
  cfg.validate();
  require_training_data(ds);
  if (hash.image.output_dim() != cfg.bits) {
    throw ContractViolation("train_spe: hash networks emit " +
                            std::to_string(hash.image.output_dim()) + " bits, config says " +
                            std::to_string(cfg.bits));
  }
  const auto pool = ds.indices(SplitTag::seen_db);
  std::mt19937_64 rng(cfg.seed * 1000003ULL + 33);
  const AdamConfig adam{cfg.learning_rate};
  AdamState st_v(hash.image, adam), st_t(hash.text, adam), st_z(hash.fused, adam);

  // Frozen representations are fixed for the whole stage.
  const Matrix gv_all = forward(aia.image_feature, ds.image);
  const Matrix gt_all = forward(aia.text_feature, ds.text);
  Matrix fz(ds.size(), ds.image.cols() + ds.text.cols());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto dst = fz.row(i);
    std::copy(ds.image.row(i).begin(), ds.image.row(i).end(), dst.begin());
    std::copy(ds.text.row(i).begin(), ds.text.row(i).end(),
              dst.begin() + static_cast<std::ptrdiff_t>(ds.image.cols()));
  }
  const Matrix gz_all = forward(aia.fusion_feature, fz);

  std::vector<SpeEpochRecord> history;
  Tape tape;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    SpeEpochRecord rec{epoch};
    const Batches batches = make_batches(pool, cfg.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      const Tensor gv(gather_rows(gv_all, idx));
      const Tensor gt(gather_rows(gt_all, idx));
      const Tensor gz(gather_rows(gz_all, idx));
      const SimilarityDistribution s_gz = similarity_distribution(gz);

      tape.clear();
      const auto pv = bind(tape, hash.image);
      const auto pt = bind(tape, hash.text);
      const auto pz = bind(tape, hash.fused);
      const RelaxedCodes codes{forward(hash.image, gv, &pv), forward(hash.text, gt, &pt),
                               forward(hash.fused, gz, &pz)};
      const SpeTerms terms = spe_loss(codes, s_gz, cfg, TcBandwidths::median(codes));
      check_finite_loss(terms.total.item(), "spe", epoch, b);
      tape.backward(terms.total);
      adam_step(st_v, hash.image, pv.grads());
      adam_step(st_t, hash.text, pt.grads());
      adam_step(st_z, hash.fused, pz.grads());
      rec.intra += terms.intra.item();
      rec.inter += terms.inter.item();
      rec.tc += terms.tc.total.item();
      rec.total += terms.total.item();
      rec.tc_image += terms.tc.image.item();
      rec.tc_text += terms.tc.text.item();
      rec.tc_fused += terms.tc.fused.item();
    }
    const double nb = static_cast<double>(std::max<std::size_t>(batches.size(), 1));
    for (double* v : {&rec.intra, &rec.inter, &rec.tc, &rec.total, &rec.tc_image, &rec.tc_text,
                      &rec.tc_fused}) {
      *v /= nb;
    }
    history.push_back(rec);
    if (log) log(rec);
  }
  tape.clear();
  return history;
}

}  // namespace ith

#endif  // ITH_SPE_HPP
