#ifndef ITH_PIPELINE_HPP
#define ITH_PIPELINE_HPP

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ith/aia.hpp"
#include "ith/dataio.hpp"
#include "ith/error.hpp"
#include "ith/network.hpp"
#include "ith/retrieval.hpp"
#include "ith/spe.hpp"

// End-to-end orchestration: configuration, three-stage training, encoding,
// zero-shot evaluation and the CSV artifacts the CLI emits.
namespace ith {

inline const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {"regularity-1", "succession-1", "regularity-2",
                                                 "succession-2", "auto-mix",     "intra",
                                                 "inter",        "tc"};
  return names;
}

struct RunConfig {
  double alpha = 100.0;
  double beta = 100.0;
  double gamma = 1.0;
  double eta = 0.01;
  double learning_rate = 1e-3;
  double entropy_order = kDefaultEntropyOrder;
  IntraScale intra_scale = IntraScale::mean_cosine;
  std::size_t bits = 32;
  std::size_t hidden = 64;
  std::size_t gdim = 32;
  std::size_t classifier_hidden = 64;
  bool text_extra_layer = false;
  int epochs_ration = 100;
  int epochs_fusion = 100;
  int epochs_spe = 200;
  std::size_t batch = 32;
  std::uint64_t seed = 1;
  std::set<std::string> ablate;

  bool ablated(const std::string& name) const { return ablate.count(name) > 0; }

  void validate() const {
    static const std::set<std::size_t> allowed_bits = {16, 32, 64, 128, 256};
    if (!allowed_bits.count(bits)) {
      throw ParameterError("bits must be one of 16, 32, 64, 128, 256 (got " +
                           std::to_string(bits) + ")");
    }
    for (const auto& a : ablate) {
      bool known = false;
      for (const auto& n : ablation_names()) known = known || n == a;
      if (!known) throw ParameterError("unknown ablation \"" + a + "\"");
    }
    if (hidden == 0 || gdim == 0 || classifier_hidden == 0) {
      throw ParameterError("network widths must be >= 1");
    }
    spri().validate();
    spe().validate();
  }

  SPRIConfig spri() const {
    SPRIConfig c;
    c.alpha = alpha;
    c.beta = beta;
    c.batch_size = batch;
    c.ration_epochs = epochs_ration;
    c.fusion_epochs = epochs_fusion;
    c.learning_rate = learning_rate;
    c.seed = seed;
    c.ration_regularity = !ablated("regularity-1");
    c.ration_descriptive = !ablated("succession-1");
    c.fusion_regularity = !ablated("regularity-2");
    c.fusion_descriptive = !ablated("succession-2");
    c.auto_mix = !ablated("auto-mix");
    return c;
  }

  SPEConfig spe() const {
    SPEConfig c;
    c.gamma = gamma;
    c.eta = eta;
    c.bits = bits;
    c.batch_size = batch;
    c.epochs = epochs_spe;
    c.entropy_order = entropy_order;
    c.learning_rate = learning_rate;
    c.seed = seed;
    c.use_intra = !ablated("intra");
    c.use_inter = !ablated("inter");
    c.use_tc = !ablated("tc");
    c.intra_scale = intra_scale;
    return c;
  }

  ModelShape shape() const { return {hidden, gdim, classifier_hidden, text_extra_layer}; }

  // key=value lines, one per effective setting.
  std::string describe() const {
    std::ostringstream o;
    o.precision(17);
    o << "alpha=" << alpha << "\nbeta=" << beta << "\ngamma=" << gamma << "\neta=" << eta
      << "\nlearning-rate=" << learning_rate << "\nentropy-order=" << entropy_order
      << "\nintra-scale=" << to_string(intra_scale)
      << "\nbits=" << bits << "\nhidden=" << hidden << "\ngdim=" << gdim
      << "\nclassifier-hidden=" << classifier_hidden
      << "\ntext-extra-layer=" << (text_extra_layer ? "true" : "false")
      << "\nepochs-ration=" << epochs_ration << "\nepochs-fusion=" << epochs_fusion
      << "\nepochs-spe=" << epochs_spe << "\nbatch=" << batch << "\nseed=" << seed << "\nablate=";
    bool first = true;
    for (const auto& a : ablate) {
      o << (first ? "" : ",") << a;
      first = false;
    }
    o << "\n";
    return o.str();
  }
};

struct IthModel {
  AiaNetworks aia;
  HashNetworks hash;

  std::vector<const Network*> networks() const {
    return {&aia.image_feature, &aia.text_feature, &aia.cls0,  &aia.fusion_feature,
            &aia.cls1,          &hash.image,       &hash.text, &hash.fused};
  }
  std::size_t bits() const { return hash.image.output_dim(); }
};

inline void save_model(std::ostream& out, const IthModel& m) {
  const auto nets = m.networks();
  write_checkpoint(out, nets);
}

inline IthModel load_model(std::istream& in) {
  auto nets = read_checkpoint(in);
  IthModel m;
  std::set<std::string> found;
  for (auto& n : nets) {
    Network* slot = nullptr;
    if (n.name == "img_fea") slot = &m.aia.image_feature;
    else if (n.name == "txt_fea") slot = &m.aia.text_feature;
    else if (n.name == "cls0") slot = &m.aia.cls0;
    else if (n.name == "fus_fea") slot = &m.aia.fusion_feature;
    else if (n.name == "cls1") slot = &m.aia.cls1;
    else if (n.name == "img_hash") slot = &m.hash.image;
    else if (n.name == "txt_hash") slot = &m.hash.text;
    else if (n.name == "fus_hash") slot = &m.hash.fused;
    if (!slot) throw ParseError("checkpoint: unknown network \"" + n.name + "\"");
    found.insert(n.name);
    *slot = std::move(n);
  }
  for (const char* required : {"img_fea", "txt_fea", "img_hash", "txt_hash"}) {
    if (!found.count(required)) {
      throw ParseError(std::string("checkpoint: missing network \"") + required + "\"");
    }
  }
  return m;
}

inline std::string model_bytes(const IthModel& m) {
  std::ostringstream o(std::ios::binary);
  save_model(o, m);
  return o.str();
}

struct TrainResult {
  IthModel model;
  std::vector<AiaEpochRecord> ration;
  std::vector<AiaEpochRecord> fusion;
  std::vector<SpeEpochRecord> spe;
};

struct TrainHooks {
  AiaLogFn on_aia_epoch;
  SpeLogFn on_spe_epoch;
  std::function<void(const std::string&)> on_stage;
};

// Ration -> fusion -> SPE, strictly in that order.
inline TrainResult train_ith(const FeatureDataset& ds, const RunConfig& cfg,
                             const TrainHooks& hooks = {}) {
  cfg.validate();
  ds.validate();
  TrainResult r;
  r.model.aia = build_aia_networks(ds.image.cols(), ds.text.cols(), ds.seen_classes.size(),
                                   cfg.shape(), cfg.seed * 7919ULL);
  r.model.hash = build_hash_networks(cfg.gdim, cfg.hidden, cfg.bits, cfg.seed * 7919ULL);
  const SPRIConfig spri = cfg.spri();
  if (hooks.on_stage) hooks.on_stage("ration");
  r.ration = train_ration(ds, r.model.aia, spri, hooks.on_aia_epoch);
  if (hooks.on_stage) hooks.on_stage("fusion");
  r.fusion = train_fusion(ds, r.model.aia, spri, hooks.on_aia_epoch);
  if (hooks.on_stage) hooks.on_stage("spe");
  r.spe = train_spe(ds, r.model.aia, r.model.hash, cfg.spe(), hooks.on_spe_epoch);
  return r;
}

// Each modality encodes on its own; no paired input is needed.
inline Matrix relaxed_image_codes(const IthModel& m, const Matrix& image_features) {
  return forward(m.hash.image, forward(m.aia.image_feature, image_features));
}
inline Matrix relaxed_text_codes(const IthModel& m, const Matrix& text_features) {
  return forward(m.hash.text, forward(m.aia.text_feature, text_features));
}

inline BinaryCodes encode_image(const IthModel& m, const Matrix& image_features,
                                std::span<const int> labels) {
  return BinaryCodes::pack(binarize(relaxed_image_codes(m, image_features)), labels);
}
inline BinaryCodes encode_text(const IthModel& m, const Matrix& text_features,
                               std::span<const int> labels) {
  return BinaryCodes::pack(binarize(relaxed_text_codes(m, text_features)), labels);
}

struct ZeroShotCodes {
  BinaryCodes image_query, image_db, text_query, text_db;
};

inline std::vector<int> gather_labels(const FeatureDataset& ds, std::span<const std::size_t> idx) {
  std::vector<int> out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out[k] = ds.labels[idx[k]];
  return out;
}

inline ZeroShotCodes encode_unseen(const IthModel& m, const FeatureDataset& ds) {
  ds.validate();
  const auto q = ds.indices(SplitTag::unseen_query);
  const auto d = ds.indices(SplitTag::unseen_db);
  if (q.empty() || d.empty()) {
    throw ParameterError("zero-shot evaluation needs unseen query and database instances");
  }
  const auto lq = gather_labels(ds, q);
  const auto ld = gather_labels(ds, d);
  return {encode_image(m, gather_rows(ds.image, q), lq), encode_image(m, gather_rows(ds.image, d), ld),
          encode_text(m, gather_rows(ds.text, q), lq), encode_text(m, gather_rows(ds.text, d), ld)};
}

inline std::pair<RetrievalResult, RetrievalResult> cross_modal_eval(
    const ZeroShotCodes& c, Relevance rel = Relevance::same_label) {
  return {evaluate_retrieval(c.image_query, c.text_db, Task::image_to_text, rel),
          evaluate_retrieval(c.text_query, c.image_db, Task::text_to_image, rel)};
}

inline std::pair<RetrievalResult, RetrievalResult> zero_shot_eval(
    const IthModel& m, const FeatureDataset& ds, Relevance rel = Relevance::same_label) {
  return cross_modal_eval(encode_unseen(m, ds), rel);
}

// ---------------------------------------------------------------------------
// CSV artifacts. Doubles are written in shortest round-trip form.

inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, static_cast<std::size_t>(res.ptr - buf));
}

inline void write_aia_log_header(std::ostream& o) { o << "epoch,stage,L_reg,L_des,total\n"; }
inline void write_aia_log_row(std::ostream& o, const AiaEpochRecord& r) {
  o << r.epoch << ',' << r.stage << ',' << format_double(r.regularity) << ','
    << format_double(r.descriptive) << ',' << format_double(r.total) << '\n';
}

inline void write_spe_log_header(std::ostream& o) {
  o << "epoch,L_intra,L_inter,L_tc,L3,TC_v,TC_t,TC_z\n";
}
inline void write_spe_log_row(std::ostream& o, const SpeEpochRecord& r) {
  o << r.epoch << ',' << format_double(r.intra) << ',' << format_double(r.inter) << ','
    << format_double(r.tc) << ',' << format_double(r.total) << ',' << format_double(r.tc_image)
    << ',' << format_double(r.tc_text) << ',' << format_double(r.tc_fused) << '\n';
}

inline void write_map_csv(std::ostream& o, std::span<const RetrievalResult> results) {
  o << "task,K,MAP\n";
  for (const auto& r : results) {
    o << to_string(r.task) << ',' << r.bits << ',' << format_double(r.map.map) << '\n';
  }
}

inline void write_pr_csv(std::ostream& o, const RetrievalResult& r) {
  o << "radius,precision,recall\n";
  for (const auto& p : r.pr_curve) {
    o << p.radius << ',' << format_double(p.precision) << ',' << format_double(p.recall) << '\n';
  }
}

}  // namespace ith

#endif  // ITH_PIPELINE_HPP
