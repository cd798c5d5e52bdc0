#ifndef ITH_AIA_HPP
#define ITH_AIA_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ith/dataio.hpp"
#include "ith/error.hpp"
#include "ith/infotheory.hpp"
#include "ith/network.hpp"
#include "ith/tensor.hpp"

// Adaptive information aggregation: the ration stage (per-modality S-PRI
// with a shared classifier) and the fusion stage (score-weighted
// similarity fusion supervising a fused representation).
namespace ith {

struct SPRIConfig {
  double alpha = 100.0;
  double beta = 100.0;
  std::size_t batch_size = 32;
  int ration_epochs = 100;
  int fusion_epochs = 100;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  // Ablation switches.
  bool ration_regularity = true;
  bool ration_descriptive = true;
  bool fusion_regularity = true;
  bool fusion_descriptive = true;
  bool auto_mix = true;

  void validate() const {
    if (alpha < 0.0 || beta < 0.0) throw ParameterError("SPRIConfig: alpha and beta must be >= 0");
    if (batch_size < 2) throw ParameterError("SPRIConfig: batch size must be >= 2");
    if (ration_epochs < 0 || fusion_epochs < 0) throw ParameterError("SPRIConfig: negative epochs");
    if (!(learning_rate > 0.0)) throw ParameterError("SPRIConfig: learning rate must be positive");
  }
};

struct AiaNetworks {
  Network image_feature;   // F^v -> hidden -> G^v
  Network text_feature;    // F^t -> hidden -> G^t
  Network cls0;            // G^{v,t} -> hidden -> seen-class logits
  Network fusion_feature;  // [F^v;F^t] -> hidden -> G^z
  Network cls1;            // G^z -> hidden -> seen-class logits
};

struct ModelShape {
  std::size_t hidden = 64;
  std::size_t gdim = 32;
  std::size_t classifier_hidden = 64;
  bool text_extra_layer = false;
};

inline AiaNetworks build_aia_networks(std::size_t image_dim, std::size_t text_dim,
                                      std::size_t seen_classes, const ModelShape& shape,
                                      std::uint64_t seed) {
  using A = Activation;
  NetworkSpec text_spec{{text_dim, shape.hidden, shape.gdim}, {A::relu, A::none}};
  if (shape.text_extra_layer) {
    text_spec = {{text_dim, shape.hidden, shape.hidden, shape.gdim}, {A::relu, A::relu, A::none}};
  }
  const NetworkSpec cls_spec{{shape.gdim, shape.classifier_hidden, seen_classes},
                             {A::relu, A::none}};
  return {
      build_network("img_fea", {{image_dim, shape.hidden, shape.gdim}, {A::relu, A::none}}, seed + 1),
      build_network("txt_fea", text_spec, seed + 2),
      build_network("cls0", cls_spec, seed + 3),
      build_network("fus_fea", {{image_dim + text_dim, shape.hidden, shape.gdim}, {A::relu, A::none}},
                    seed + 4),
      build_network("cls1", cls_spec, seed + 5),
  };
}

// ---------------------------------------------------------------------------
// Losses

struct SpriTerms {
  Tensor total;        // reg_weight·L_reg + alpha·L_des
  Tensor regularity;   // mean cross-entropy
  Tensor descriptive;  // element-wise KL(S^G || S^F)
  Tensor per_sample;   // l×1 cross-entropy, feeds the semantic scores
};

inline SpriTerms spri_loss(const Tensor& g, const Tensor& f, const Tensor& logits,
                           std::span<const int> labels, double alpha,
                           double regularity_weight = 1.0) {
  if (g.rows() != f.rows() || g.rows() != logits.rows()) {
    throw ContractViolation("spri_loss: batch sizes differ (G " + std::to_string(g.rows()) +
                            ", F " + std::to_string(f.rows()) + ", logits " +
                            std::to_string(logits.rows()) + ")");
  }
  SpriTerms t;
  t.per_sample = cross_entropy_per_sample(logits, labels);
  t.regularity = mean(t.per_sample);
  t.descriptive = elementwise_kl(similarity_distribution(g), similarity_distribution(f));
  t.total = add(scalar_multiply(t.regularity, regularity_weight),
                scalar_multiply(t.descriptive, alpha));
  return t;
}

struct SemanticScores {
  std::vector<double> image;
  std::vector<double> text;
};

inline SemanticScores semantic_scores(std::span<const double> reg_image,
                                      std::span<const double> reg_text) {
  if (reg_image.size() != reg_text.size()) {
    throw ContractViolation("semantic_scores: length mismatch");
  }
  SemanticScores q{std::vector<double>(reg_image.size()), std::vector<double>(reg_image.size())};
  for (std::size_t i = 0; i < reg_image.size(); ++i) {
    if (reg_image[i] < 0.0 || reg_text[i] < 0.0) {
      throw ContractViolation("semantic_scores: negative regularity loss at sample " +
                              std::to_string(i));
    }
    const double s = std::max(reg_image[i] + reg_text[i], 1e-12);
    q.image[i] = 1.0 - reg_image[i] / s;
    q.text[i] = 1.0 - q.image[i];
  }
  return q;
}

inline SemanticScores equal_scores(std::size_t n) {
  return {std::vector<double>(n, 0.5), std::vector<double>(n, 0.5)};
}

// Row i of the result is q.image[i]·S^{F^v}_i + q.text[i]·S^{F^t}_i,
// renormalized. The result is a constant (pretrained-feature side).
inline SimilarityDistribution fused_similarity(const SimilarityDistribution& s_image,
                                               const SimilarityDistribution& s_text,
                                               const SemanticScores& q) {
  const Matrix& a = s_image.value();
  const Matrix& b = s_text.value();
  if (!a.same_shape(b) || q.image.size() != a.rows() || q.text.size() != a.rows()) {
    throw ContractViolation("fused_similarity: batch size mismatch");
  }
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      out(i, j) = q.image[i] * a(i, j) + q.text[i] * b(i, j);
      s += out(i, j);
    }
    for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) /= s;
  }
  return {Tensor(std::move(out))};
}

// ---------------------------------------------------------------------------
// Training

struct AiaEpochRecord {
  int epoch = 0;
  std::string stage;
  double regularity = 0.0;
  double descriptive = 0.0;
  double total = 0.0;
};

using Batches = std::vector<std::vector<std::size_t>>;

// Shuffled minibatches; a trailing batch smaller than 2 is dropped since
// similarity distributions need two rows.
inline Batches make_batches(std::vector<std::size_t> pool, std::size_t batch_size,
                            std::mt19937_64& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  Batches out;
  for (std::size_t s = 0; s < pool.size(); s += batch_size) {
    const std::size_t e = std::min(pool.size(), s + batch_size);
    if (e - s < 2) break;
    out.emplace_back(pool.begin() + static_cast<std::ptrdiff_t>(s),
                     pool.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

inline std::vector<int> dense_labels(const FeatureDataset& ds, std::span<const std::size_t> idx) {
  const auto index = ds.seen_class_index();
  std::vector<int> out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    auto it = index.find(ds.labels[idx[k]]);
    if (it == index.end()) {
      throw ContractViolation("training batch contains unseen class " +
                              std::to_string(ds.labels[idx[k]]));
    }
    out[k] = it->second;
  }
  return out;
}

inline void require_training_data(const FeatureDataset& ds) {
  if (ds.indices(SplitTag::seen_db).size() < 2) {
    throw ParameterError("training needs at least 2 seen-class instances");
  }
  if (ds.seen_classes.empty()) throw ParameterError("training needs at least one seen class");
}

inline void check_finite_loss(double v, const std::string& stage, int epoch, std::size_t batch) {
  if (!std::isfinite(v)) {
    throw NumericError(stage + ": non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(batch));
  }
}

using AiaLogFn = std::function<void(const AiaEpochRecord&)>;

// Minimizes L1 = S-PRI^v + S-PRI^t over ImgFeaNet, TxtFeaNet and the shared
// CLS0.
inline std::vector<AiaEpochRecord> train_ration(const FeatureDataset& ds, AiaNetworks& nets,
                                                const SPRIConfig& cfg,
                                                const AiaLogFn& log = {}) {
  cfg.validate();
  require_training_data(ds);
  const auto pool = ds.indices(SplitTag::seen_db);
  std::mt19937_64 rng(cfg.seed * 1000003ULL + 11);
  const AdamConfig adam{cfg.learning_rate};
  AdamState st_img(nets.image_feature, adam), st_txt(nets.text_feature, adam),
      st_cls(nets.cls0, adam);
  const double alpha = cfg.ration_descriptive ? cfg.alpha : 0.0;
  const double reg_w = cfg.ration_regularity ? 1.0 : 0.0;

  std::vector<AiaEpochRecord> history;
  Tape tape;
  for (int epoch = 1; epoch <= cfg.ration_epochs; ++epoch) {
    AiaEpochRecord rec{epoch, "ration"};
    const Batches batches = make_batches(pool, cfg.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      const auto labels = dense_labels(ds, idx);
      const Tensor fv(gather_rows(ds.image, idx));
      const Tensor ft(gather_rows(ds.text, idx));
      tape.clear();
      const auto p_img = bind(tape, nets.image_feature);
      const auto p_txt = bind(tape, nets.text_feature);
      const auto p_cls = bind(tape, nets.cls0);
      const Tensor gv = forward(nets.image_feature, fv, &p_img);
      const Tensor gt = forward(nets.text_feature, ft, &p_txt);
      const SpriTerms lv = spri_loss(gv, fv, forward(nets.cls0, gv, &p_cls), labels, alpha, reg_w);
      const SpriTerms lt = spri_loss(gt, ft, forward(nets.cls0, gt, &p_cls), labels, alpha, reg_w);
      const Tensor total = add(lv.total, lt.total);
      check_finite_loss(total.item(), "ration", epoch, b);
      tape.backward(total);
      adam_step(st_img, nets.image_feature, p_img.grads());
      adam_step(st_txt, nets.text_feature, p_txt.grads());
      adam_step(st_cls, nets.cls0, p_cls.grads());
      rec.regularity += lv.regularity.item() + lt.regularity.item();
      rec.descriptive += lv.descriptive.item() + lt.descriptive.item();
      rec.total += total.item();
    }
    const double nb = static_cast<double>(std::max<std::size_t>(batches.size(), 1));
    rec.regularity /= nb;
    rec.descriptive /= nb;
    rec.total /= nb;
    history.push_back(rec);
    if (log) log(rec);
  }
  tape.clear();
  return history;
}

// Per-sample scores from the frozen ration networks.
inline SemanticScores ration_scores(const AiaNetworks& nets, const Matrix& fv, const Matrix& ft,
                                    std::span<const int> labels) {
  const Tensor cv = cross_entropy_per_sample(
      forward(nets.cls0, forward(nets.image_feature, Tensor(fv))), labels);
  const Tensor ct = cross_entropy_per_sample(
      forward(nets.cls0, forward(nets.text_feature, Tensor(ft))), labels);
  return semantic_scores(cv.value().data(), ct.value().data());
}

// Minimizes L2 = L_reg^z + beta·KL(S^{G^z} || S^{F^z}) over FusFeaNet and
// CLS1. Ration networks are read-only here.
inline std::vector<AiaEpochRecord> train_fusion(const FeatureDataset& ds, AiaNetworks& nets,
                                                const SPRIConfig& cfg,
                                                const AiaLogFn& log = {}) {
  cfg.validate();
  require_training_data(ds);
  const auto pool = ds.indices(SplitTag::seen_db);
  std::mt19937_64 rng(cfg.seed * 1000003ULL + 22);
  const AdamConfig adam{cfg.learning_rate};
  AdamState st_fus(nets.fusion_feature, adam), st_cls(nets.cls1, adam);
  const double beta = cfg.fusion_descriptive ? cfg.beta : 0.0;
  const double reg_w = cfg.fusion_regularity ? 1.0 : 0.0;
  const AiaNetworks& frozen = nets;

  std::vector<AiaEpochRecord> history;
  Tape tape;
  for (int epoch = 1; epoch <= cfg.fusion_epochs; ++epoch) {
    AiaEpochRecord rec{epoch, "fusion"};
    const Batches batches = make_batches(pool, cfg.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& idx = batches[b];
      const auto labels = dense_labels(ds, idx);
      const Matrix fv_m = gather_rows(ds.image, idx);
      const Matrix ft_m = gather_rows(ds.text, idx);
      const Tensor fv(fv_m), ft(ft_m);
      const SemanticScores q =
          cfg.auto_mix ? ration_scores(frozen, fv_m, ft_m, labels) : equal_scores(idx.size());
      const SimilarityDistribution s_fz =
          fused_similarity(similarity_distribution(fv), similarity_distribution(ft), q);

      tape.clear();
      const auto p_fus = bind(tape, nets.fusion_feature);
      const auto p_cls = bind(tape, nets.cls1);
      const Tensor gz = forward(nets.fusion_feature, concat_columns(fv, ft), &p_fus);
      const Tensor ce = cross_entropy_per_sample(forward(nets.cls1, gz, &p_cls), labels);
      const Tensor reg = mean(ce);
      const Tensor des = elementwise_kl(similarity_distribution(gz), s_fz);
      const Tensor total = add(scalar_multiply(reg, reg_w), scalar_multiply(des, beta));
      check_finite_loss(total.item(), "fusion", epoch, b);
      tape.backward(total);
      adam_step(st_fus, nets.fusion_feature, p_fus.grads());
      adam_step(st_cls, nets.cls1, p_cls.grads());
      rec.regularity += reg.item();
      rec.descriptive += des.item();
      rec.total += total.item();
    }
    const double nb = static_cast<double>(std::max<std::size_t>(batches.size(), 1));
    rec.regularity /= nb;
    rec.descriptive /= nb;
    rec.total /= nb;
    history.push_back(rec);
    if (log) log(rec);
  }
  tape.clear();
  return history;
}

}  // namespace ith

#endif  // ITH_AIA_HPP
