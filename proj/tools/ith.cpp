#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ith/ith.hpp"

namespace fs = std::filesystem;
using namespace ith;

namespace {

std::ofstream open_out(const fs::path& p, bool binary = false) {
  std::ofstream out(p, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string());
  }
}

struct SynthArgs {
  SyntheticSpec spec;
  std::string out = "data";
};

struct DataPaths {
  std::string image, text, labels, split;
};

struct TrainArgs {
  RunConfig cfg;
  DataPaths data;
  std::vector<std::string> ablate;
  std::string intra_scale = "mean-cosine";
  std::string out = "run";
};

struct EncodeArgs {
  std::string checkpoint;
  DataPaths data;
  std::string out = "codes";
};

struct EvalArgs {
  std::string codes = "codes";
  std::string out;
};

void add_data_flags(CLI::App* app, DataPaths& d, bool features_required) {
  auto* fi = app->add_option("--features-image", d.image, "image features (ITHF or CSV)");
  auto* ft = app->add_option("--features-text", d.text, "text features (ITHF or CSV)");
  app->add_option("--labels", d.labels, "labels file, one class id per line")->required();
  app->add_option("--split", d.split, "split file (seen_db/unseen_db/unseen_query)");
  if (features_required) {
    fi->required();
    ft->required();
  }
}

void add_model_flags(CLI::App* app, TrainArgs& a) {
  RunConfig& c = a.cfg;
  app->add_option("--bits", c.bits, "code length K")->capture_default_str();
  app->add_option("--alpha", c.alpha, "ration-stage descriptive weight")->capture_default_str();
  app->add_option("--beta", c.beta, "fusion-stage descriptive weight")->capture_default_str();
  app->add_option("--gamma", c.gamma, "inter-modal preservation weight")->capture_default_str();
  app->add_option("--eta", c.eta, "total-correlation weight")->capture_default_str();
  app->add_option("--lr", c.learning_rate, "Adam learning rate")->capture_default_str();
  app->add_option("--entropy-order", c.entropy_order, "Renyi order")->capture_default_str();
  app->add_option("--intra-scale", a.intra_scale, "intra term scaling")
      ->check(CLI::IsMember({"mean-cosine", "frobenius"}))
      ->capture_default_str();
  app->add_option("--hidden", c.hidden, "hidden width")->capture_default_str();
  app->add_option("--gdim", c.gdim, "shared feature dimension")->capture_default_str();
  app->add_option("--classifier-hidden", c.classifier_hidden)->capture_default_str();
  app->add_flag("--text-extra-layer", c.text_extra_layer, "extra hidden layer on text side");
  app->add_option("--epochs-ration", c.epochs_ration)->capture_default_str();
  app->add_option("--epochs-fusion", c.epochs_fusion)->capture_default_str();
  app->add_option("--epochs-spe", c.epochs_spe)->capture_default_str();
  app->add_option("--batch", c.batch, "mini-batch size")->capture_default_str();
  app->add_option("--seed", c.seed)->capture_default_str();
  app->add_option("--ablate", a.ablate, "disable a component (repeatable)")
      ->check(CLI::IsMember(ablation_names()));
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

// Splices a key=value config file into the argument list. A key that also
// appears as a flag is skipped so the command line wins.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  auto it = std::find(args.begin(), args.end(), "--config");
  if (it == args.end()) return args;
  if (it + 1 == args.end()) throw ParameterError("--config needs a file");
  const std::string path = *(it + 1);
  args.erase(it, it + 2);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  std::vector<std::string> extra;
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path + ": expected key=value at line " + std::to_string(line_no));
    }
    const std::string flag = "--" + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (std::find(args.begin(), args.end(), flag) != args.end()) continue;
    if (flag == "--ablate") {
      std::stringstream names(value);
      for (std::string n; std::getline(names, n, ',');) {
        if (!trim(n).empty()) extra.insert(extra.end(), {flag, trim(n)});
      }
    } else if (flag == "--text-extra-layer") {
      if (value == "true" || value == "1") extra.push_back(flag);
    } else {
      extra.insert(extra.end(), {flag, value});
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

std::size_t count(const FeatureDataset& ds, SplitTag t) { return ds.indices(t).size(); }

void print_summary(std::ostream& o, const FeatureDataset& ds) {
  o << "classes  seen " << ds.seen_classes.size() << "  unseen " << ds.unseen_classes.size()
    << "\n"
    << "instances  seen_db " << count(ds, SplitTag::seen_db) << "  unseen_db "
    << count(ds, SplitTag::unseen_db) << "  unseen_query " << count(ds, SplitTag::unseen_query)
    << "\n"
    << "features  image " << ds.image.cols() << "  text " << ds.text.cols() << "\n";
}

int cmd_synth(const SynthArgs& a) {
  const auto syn = generate_synthetic(a.spec);
  const fs::path dir = a.out;
  ensure_dir(dir);
  save_features(dir / "image.ithf", syn.dataset.image);
  save_features(dir / "text.ithf", syn.dataset.text);
  auto lo = open_out(dir / "labels.txt");
  write_labels(lo, syn.dataset.labels);
  auto so = open_out(dir / "split.txt");
  write_split(so, syn.dataset.split);
  if (!lo || !so) throw IoError("write failed in " + dir.string());
  print_summary(std::cout, syn.dataset);
  return 0;
}

int cmd_train(TrainArgs& a) {
  if (a.data.split.empty()) throw ParameterError("train: --split is required");
  a.cfg.ablate.insert(a.ablate.begin(), a.ablate.end());
  a.cfg.intra_scale = a.intra_scale == "frobenius" ? IntraScale::frobenius : IntraScale::mean_cosine;
  a.cfg.validate();
  const auto ds = load_dataset(a.data.image, a.data.text, a.data.labels, a.data.split);
  const fs::path dir = a.out;
  ensure_dir(dir);

  const std::string header = a.cfg.describe();
  auto cfg_out = open_out(dir / "config.txt");
  cfg_out << header;
  auto aia_log = open_out(dir / "aia_log.csv");
  write_aia_log_header(aia_log);
  auto spe_log = open_out(dir / "spe_log.csv");
  write_spe_log_header(spe_log);

  TrainHooks hooks;
  hooks.on_stage = [](const std::string& s) { std::cerr << "stage " << s << "\n"; };
  hooks.on_aia_epoch = [&](const AiaEpochRecord& r) { write_aia_log_row(aia_log, r); };
  hooks.on_spe_epoch = [&](const SpeEpochRecord& r) { write_spe_log_row(spe_log, r); };
  std::cerr << header;
  print_summary(std::cerr, ds);
  const auto result = train_ith(ds, a.cfg, hooks);

  auto ck = open_out(dir / "checkpoint.ith", true);
  save_model(ck, result.model);
  if (!ck || !aia_log || !spe_log) throw IoError("write failed in " + dir.string());
  return 0;
}

void write_codes(const fs::path& p, const BinaryCodes& c) {
  auto o = open_out(p, true);
  write_ithb(o, c);
  if (!o) throw IoError("write failed for " + p.string());
}

// With a split file, only the unseen query/database rows are encoded.
int cmd_encode(const EncodeArgs& a) {
  std::ifstream in(a.checkpoint, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + a.checkpoint);
  const IthModel model = load_model(in);
  if (a.data.image.empty() && a.data.text.empty()) {
    throw ParameterError("encode: give --features-image and/or --features-text");
  }
  const auto labels = load_labels(a.data.labels);
  std::vector<std::pair<std::string, std::vector<std::size_t>>> parts;
  if (a.data.split.empty()) {
    std::vector<std::size_t> all(labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    parts.emplace_back("", all);
  } else {
    const auto split = load_split(a.data.split);
    if (split.size() != labels.size()) {
      throw ContractViolation("encode: " + std::to_string(split.size()) + " split tags for " +
                              std::to_string(labels.size()) + " labels");
    }
    std::vector<std::size_t> q, d;
    for (std::size_t i = 0; i < split.size(); ++i) {
      if (split[i] == SplitTag::unseen_query) q.push_back(i);
      if (split[i] == SplitTag::unseen_db) d.push_back(i);
    }
    parts.emplace_back("_query", q);
    parts.emplace_back("_db", d);
  }

  const fs::path dir = a.out;
  ensure_dir(dir);
  auto run = [&](const std::string& path, const char* stem, bool image) {
    if (path.empty()) return;
    const Matrix f = load_features(path);
    if (f.rows() != labels.size()) {
      throw ContractViolation(path + ": " + std::to_string(f.rows()) + " rows for " +
                              std::to_string(labels.size()) + " labels");
    }
    for (const auto& [suffix, idx] : parts) {
      std::vector<int> y(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) y[k] = labels[idx[k]];
      const Matrix rows = gather_rows(f, idx);
      write_codes(dir / (std::string(stem) + suffix + ".ithb"),
                  image ? encode_image(model, rows, y) : encode_text(model, rows, y));
    }
  };
  run(a.data.image, "image", true);
  run(a.data.text, "text", false);
  return 0;
}

BinaryCodes read_codes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open code file " + p.string());
  return read_ithb(in, p.string());
}

int cmd_eval(const EvalArgs& a) {
  const fs::path dir = a.codes;
  ZeroShotCodes c{read_codes(dir / "image_query.ithb"), read_codes(dir / "image_db.ithb"),
                  read_codes(dir / "text_query.ithb"), read_codes(dir / "text_db.ithb")};
  const auto [i2t, t2i] = cross_modal_eval(c);
  const fs::path out = a.out.empty() ? dir : fs::path(a.out);
  ensure_dir(out);
  const std::vector<RetrievalResult> results = {i2t, t2i};
  auto m = open_out(out / "map.csv");
  write_map_csv(m, results);
  for (const auto& r : results) {
    auto p = open_out(out / (std::string("pr_") + to_string(r.task) + ".csv"));
    write_pr_csv(p, r);
    std::cout << to_string(r.task) << " K=" << r.bits << " MAP=" << format_double(r.map.map)
              << " (" << r.map.evaluated_queries << " queries)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot cross-modal hashing: synthesize, train, encode, evaluate"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "write a synthetic paired dataset");
  SyntheticSpec& s = sa.spec;
  synth->add_option("--classes", s.classes)->capture_default_str();
  synth->add_option("--per-class", s.per_class)->capture_default_str();
  synth->add_option("--seen-fraction", s.seen_fraction)->capture_default_str();
  synth->add_option("--dim-image", s.image_dim)->capture_default_str();
  synth->add_option("--dim-text", s.text_dim)->capture_default_str();
  synth->add_option("--latent", s.latent_dim)->capture_default_str();
  synth->add_option("--center-scale", s.center_scale)->capture_default_str();
  synth->add_option("--noise-image", s.image_noise)->capture_default_str();
  synth->add_option("--noise-text", s.text_noise)->capture_default_str();
  synth->add_option("--corruption", s.corruption_rate)->capture_default_str();
  synth->add_option("--query-fraction", s.query_fraction)->capture_default_str();
  synth->add_option("--seed", s.seed)->capture_default_str();
  synth->add_option("--out", sa.out, "output directory")->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "run ration, fusion and SPE stages");
  std::string config_path;
  train->add_option("--config", config_path, "key=value file; flags override it");
  add_data_flags(train, ta.data, true);
  add_model_flags(train, ta);
  train->add_option("--out", ta.out, "output directory")->capture_default_str();

  EncodeArgs ea;
  auto* encode = app.add_subcommand("encode", "binarize features with a trained checkpoint");
  encode->add_option("--checkpoint", ea.checkpoint)->required();
  add_data_flags(encode, ea.data, false);
  encode->add_option("--out", ea.out, "output directory")->capture_default_str();

  EvalArgs va;
  auto* eval = app.add_subcommand("eval", "MAP and PR curves for I2T and T2I");
  eval->add_option("--codes", va.codes, "directory holding {image,text}_{query,db}.ithb")
      ->capture_default_str();
  eval->add_option("--out", va.out, "output directory (defaults to --codes)");

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_config(std::move(args));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return cmd_synth(sa);
    if (*train) return cmd_train(ta);
    if (*encode) return cmd_encode(ea);
    if (*eval) return cmd_eval(va);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
