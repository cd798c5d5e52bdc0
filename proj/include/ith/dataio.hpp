#ifndef ITH_DATAIO_HPP
#define ITH_DATAIO_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ith/binio.hpp"
#include "ith/error.hpp"
#include "ith/matrix.hpp"

namespace ith {

enum class SplitTag : std::uint8_t { seen_db, unseen_db, unseen_query };

inline const char* to_string(SplitTag t) {
  switch (t) {
    case SplitTag::seen_db: return "seen_db";
    case SplitTag::unseen_db: return "unseen_db";
    case SplitTag::unseen_query: return "unseen_query";
  }
  return "?";
}

inline SplitTag parse_split_tag(std::string_view s) {
  if (s == "seen_db") return SplitTag::seen_db;
  if (s == "unseen_db") return SplitTag::unseen_db;
  if (s == "unseen_query") return SplitTag::unseen_query;
  throw ParseError("unknown split tag \"" + std::string(s) + "\"");
}

// Paired image/text features with class labels and a zero-shot split.
struct FeatureDataset {
  Matrix image;  // N × d_v
  Matrix text;   // N × d_t
  std::vector<int> labels;
  std::vector<int> seen_classes;    // sorted
  std::vector<int> unseen_classes;  // sorted
  std::vector<SplitTag> split;

  std::size_t size() const { return labels.size(); }

  std::vector<std::size_t> indices(SplitTag tag) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
      if (split[i] == tag) out.push_back(i);
    return out;
  }

  // Seen class id -> dense classifier index.
  std::map<int, int> seen_class_index() const {
    std::map<int, int> m;
    for (std::size_t k = 0; k < seen_classes.size(); ++k) m[seen_classes[k]] = static_cast<int>(k);
    return m;
  }

  void validate() const {
    const std::size_t n = labels.size();
    if (image.rows() != n || text.rows() != n || split.size() != n) {
      throw ContractViolation("dataset: row counts disagree (image " +
                              std::to_string(image.rows()) + ", text " +
                              std::to_string(text.rows()) + ", labels " + std::to_string(n) +
                              ", split " + std::to_string(split.size()) + ")");
    }
    if (!image.all_finite() || !text.all_finite()) {
      throw ContractViolation("dataset: non-finite feature value");
    }
    std::set<int> seen(seen_classes.begin(), seen_classes.end());
    std::set<int> unseen(unseen_classes.begin(), unseen_classes.end());
    for (int c : seen) {
      if (unseen.count(c)) {
        throw ContractViolation("dataset: class " + std::to_string(c) +
                                " is both seen and unseen");
      }
    }
    std::set<int> unseen_db_classes;
    for (std::size_t i = 0; i < n; ++i) {
      const int y = labels[i];
      const bool is_seen = seen.count(y) > 0;
      if (!is_seen && !unseen.count(y)) {
        throw ContractViolation("dataset: label " + std::to_string(y) +
                                " is in neither class set");
      }
      if (is_seen != (split[i] == SplitTag::seen_db)) {
        throw ContractViolation("dataset: instance " + std::to_string(i) + " of class " +
                                std::to_string(y) + " has split tag " + to_string(split[i]));
      }
      if (split[i] == SplitTag::unseen_db) unseen_db_classes.insert(y);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (split[i] == SplitTag::unseen_query && !unseen_db_classes.count(labels[i])) {
        throw ContractViolation("dataset: query class " + std::to_string(labels[i]) +
                                " has no unseen database instance");
      }
    }
  }
};

// Derives class sets from labels + split tags, then validates.
inline FeatureDataset assemble_dataset(Matrix image, Matrix text, std::vector<int> labels,
                                       std::vector<SplitTag> split) {
  FeatureDataset ds{std::move(image), std::move(text), std::move(labels), {}, {}, std::move(split)};
  if (ds.split.size() != ds.labels.size()) {
    throw ContractViolation("dataset: " + std::to_string(ds.split.size()) + " split tags for " +
                            std::to_string(ds.labels.size()) + " labels");
  }
  std::set<int> seen, unseen;
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    (ds.split[i] == SplitTag::seen_db ? seen : unseen).insert(ds.labels[i]);
  }
  ds.seen_classes.assign(seen.begin(), seen.end());
  ds.unseen_classes.assign(unseen.begin(), unseen.end());
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Zero-shot split

struct ZeroShotSplit {
  std::vector<SplitTag> tags;
  std::vector<int> seen_classes;
  std::vector<int> unseen_classes;
};

// Seen class count = floor(C · seen_fraction), clamped to [1, C−1]. Unseen
// instances are split per class so every query class keeps database items.
inline ZeroShotSplit make_zero_shot_split(std::span<const int> labels, double seen_fraction,
                                          std::uint64_t seed, double query_fraction = 0.4) {
  if (!(seen_fraction > 0.0 && seen_fraction < 1.0)) {
    throw ParameterError("make_zero_shot_split: seen fraction must lie in (0,1)");
  }
  if (!(query_fraction >= 0.0 && query_fraction < 1.0)) {
    throw ParameterError("make_zero_shot_split: query fraction must lie in [0,1)");
  }
  std::set<int> class_set(labels.begin(), labels.end());
  if (class_set.size() < 2) {
    throw ParameterError("make_zero_shot_split: need at least 2 classes, got " +
                         std::to_string(class_set.size()));
  }
  std::vector<int> classes(class_set.begin(), class_set.end());
  std::mt19937_64 rng(seed);
  std::shuffle(classes.begin(), classes.end(), rng);
  const std::size_t c = classes.size();
  std::size_t n_seen = static_cast<std::size_t>(std::floor(static_cast<double>(c) * seen_fraction));
  n_seen = std::clamp<std::size_t>(n_seen, 1, c - 1);

  ZeroShotSplit out;
  out.seen_classes.assign(classes.begin(), classes.begin() + static_cast<std::ptrdiff_t>(n_seen));
  out.unseen_classes.assign(classes.begin() + static_cast<std::ptrdiff_t>(n_seen), classes.end());
  std::sort(out.seen_classes.begin(), out.seen_classes.end());
  std::sort(out.unseen_classes.begin(), out.unseen_classes.end());

  out.tags.assign(labels.size(), SplitTag::seen_db);
  for (int cls : out.unseen_classes) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    auto n_query = static_cast<std::size_t>(
        std::floor(static_cast<double>(members.size()) * query_fraction));
    if (n_query >= members.size()) n_query = members.size() - 1;
    for (std::size_t k = 0; k < members.size(); ++k) {
      out.tags[members[k]] = k < n_query ? SplitTag::unseen_query : SplitTag::unseen_db;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic paired-modality generator

struct SyntheticSpec {
  int classes = 10;
  double seen_fraction = 0.5;
  int per_class = 100;
  std::size_t image_dim = 64;
  std::size_t text_dim = 64;
  std::size_t latent_dim = 16;
  double center_scale = 1.0;
  double image_noise = 0.5;
  double text_noise = 0.5;
  double corruption_rate = 0.0;  // fraction of texts drawn from a uniformly random class
  double query_fraction = 0.4;
  std::uint64_t seed = 1;

  void validate() const {
    if (classes < 2) throw ParameterError("synthetic: need at least 2 classes");
    if (per_class < 1) throw ParameterError("synthetic: per-class count must be >= 1");
    if (!(seen_fraction > 0.0 && seen_fraction < 1.0)) {
      throw ParameterError("synthetic: seen fraction must lie in (0,1)");
    }
    if (image_dim == 0 || text_dim == 0 || latent_dim == 0) {
      throw ParameterError("synthetic: dimensions must be >= 1");
    }
    if (image_noise < 0.0 || text_noise < 0.0) throw ParameterError("synthetic: negative noise");
    if (!(center_scale > 0.0)) throw ParameterError("synthetic: center scale must be positive");
    if (corruption_rate < 0.0 || corruption_rate > 1.0) {
      throw ParameterError("synthetic: corruption rate must lie in [0,1]");
    }
  }
};

struct SyntheticData {
  FeatureDataset dataset;
  std::vector<int> text_source;  // class whose center produced each text row
  Matrix image_centers;          // C × d_v, projected class centers
};

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto c = static_cast<std::size_t>(spec.classes);
  const std::size_t latent = spec.latent_dim;

  Matrix centers(c, latent);
  for (double& v : centers.data()) v = spec.center_scale * normal(rng);
  auto random_map = [&](std::size_t out_dim) {
    Matrix a(latent, out_dim);
    const double s = 1.0 / std::sqrt(static_cast<double>(latent));
    for (double& v : a.data()) v = s * normal(rng);
    return a;
  };
  const Matrix map_image = random_map(spec.image_dim);
  const Matrix map_text = random_map(spec.text_dim);
  const Matrix image_centers = linalg::matmul(centers, map_image);
  const Matrix text_centers = linalg::matmul(centers, map_text);

  const std::size_t n = c * static_cast<std::size_t>(spec.per_class);
  Matrix image(n, spec.image_dim);
  Matrix text(n, spec.text_dim);
  std::vector<int> labels(n);
  std::vector<int> text_source(n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any_class(0, c - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = i / static_cast<std::size_t>(spec.per_class);
    labels[i] = static_cast<int>(y);
    std::size_t src = y;
    // The redraw may land on y itself, so rate 1 means chance-level agreement.
    if (unit(rng) < spec.corruption_rate) src = any_class(rng);
    text_source[i] = static_cast<int>(src);
    for (std::size_t j = 0; j < spec.image_dim; ++j)
      image(i, j) = image_centers(y, j) + spec.image_noise * normal(rng);
    for (std::size_t j = 0; j < spec.text_dim; ++j)
      text(i, j) = text_centers(src, j) + spec.text_noise * normal(rng);
  }
  const ZeroShotSplit split =
      make_zero_shot_split(labels, spec.seen_fraction, spec.seed ^ 0x9E3779B97F4A7C15ULL,
                           spec.query_fraction);
  SyntheticData out;
  out.dataset = assemble_dataset(std::move(image), std::move(text), std::move(labels), split.tags);
  out.text_source = std::move(text_source);
  out.image_centers = image_centers;
  return out;
}

// ---------------------------------------------------------------------------
// File formats.
// ITHF: "ITHF", u32 d, u64 N, then N·d f64 row-major, all little-endian.

inline void write_ithf(std::ostream& out, const Matrix& m) {
  binio::put_magic(out, "ITHF");
  binio::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  binio::put_u64(out, m.rows());
  for (double v : m.data()) binio::put_f64(out, v);
  if (!out) throw IoError("write_ithf: stream write failed");
}

inline Matrix read_ithf(std::istream& in, const std::string& what = "ITHF") {
  binio::Reader r(in, what);
  r.expect_magic("ITHF");
  const std::uint32_t d = r.u32();
  const std::uint64_t n = r.u64();
  if (d == 0) r.fail("zero feature dimension");
  if (n > (std::uint64_t{1} << 40) / d) r.fail("implausible row count " + std::to_string(n));
  Matrix m(static_cast<std::size_t>(n), d);
  for (std::size_t k = 0; k < m.size(); ++k) {
    const double v = r.f64();
    if (!std::isfinite(v)) {
      throw ParseError(what + ": non-finite value at byte " + std::to_string(r.offset() - 8) +
                       " (row " + std::to_string(k / d) + ")");
    }
    m[k] = v;
  }
  if (!r.at_eof()) r.fail("trailing bytes after " + std::to_string(n) + " rows");
  return m;
}

inline void write_csv_matrix(std::ostream& out, const Matrix& m) {
  for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "," : "") << "f" << j;
  out << "\n";
  char buf[32];
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      auto res = std::to_chars(buf, buf + sizeof(buf), m(i, j));
      out << (j ? "," : "") << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << "\n";
  }
}

inline Matrix read_csv_matrix(std::istream& in, const std::string& what = "CSV") {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(what + ": empty file (line 1)");
  const std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  std::vector<double> data;
  std::size_t row = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t fields = 0;
    std::size_t pos = 0;
    while (true) {
      const std::size_t end = std::min(line.find(',', pos), line.size());
      std::string_view field(line.data() + pos, end - pos);
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
      double v = 0.0;
      auto res = std::from_chars(field.data(), field.data() + field.size(), v);
      if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        throw ParseError(what + ": bad number \"" + std::string(field) + "\" at line " +
                         std::to_string(line_no) + ", field " + std::to_string(fields + 1));
      }
      if (!std::isfinite(v)) {
        throw ParseError(what + ": non-finite value at line " + std::to_string(line_no) +
                         ", field " + std::to_string(fields + 1));
      }
      data.push_back(v);
      ++fields;
      if (end == line.size()) break;
      pos = end + 1;
    }
    if (fields != cols) {
      throw ParseError(what + ": line " + std::to_string(line_no) + " has " +
                       std::to_string(fields) + " fields, header has " + std::to_string(cols));
    }
    ++row;
  }
  return Matrix(row, cols, std::move(data));
}

enum class FeatureFormat { auto_detect, binary, csv };

inline Matrix load_features(const std::filesystem::path& path,
                            FeatureFormat format = FeatureFormat::auto_detect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file " + path.string());
  if (format == FeatureFormat::auto_detect) {
    char magic[4] = {};
    in.read(magic, 4);
    format = (in.gcount() == 4 && std::string_view(magic, 4) == "ITHF") ? FeatureFormat::binary
                                                                          : FeatureFormat::csv;
    in.clear();
    in.seekg(0);
  }
  return format == FeatureFormat::binary ? read_ithf(in, path.string())
                                         : read_csv_matrix(in, path.string());
}

inline void save_features(const std::filesystem::path& path, const Matrix& m,
                          FeatureFormat format = FeatureFormat::binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  if (format == FeatureFormat::csv) {
    write_csv_matrix(out, m);
  } else {
    write_ithf(out, m);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

inline std::vector<int> read_labels(std::istream& in, const std::string& what = "labels") {
  std::vector<int> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    int v = 0;
    auto res = std::from_chars(line.data(), line.data() + line.size(), v);
    if (res.ec != std::errc() || res.ptr != line.data() + line.size() || v < 0) {
      throw ParseError(what + ": bad class id \"" + line + "\" at line " +
                       std::to_string(line_no));
    }
    out.push_back(v);
  }
  return out;
}

inline std::vector<SplitTag> read_split(std::istream& in, const std::string& what = "split") {
  std::vector<SplitTag> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      out.push_back(parse_split_tag(line));
    } catch (const ParseError&) {
      throw ParseError(what + ": unknown tag \"" + line + "\" at line " + std::to_string(line_no));
    }
  }
  return out;
}

inline void write_labels(std::ostream& out, std::span<const int> labels) {
  for (int y : labels) out << y << "\n";
}

inline void write_split(std::ostream& out, std::span<const SplitTag> tags) {
  for (auto t : tags) out << to_string(t) << "\n";
}

inline std::vector<int> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open labels file " + path.string());
  return read_labels(in, path.string());
}

inline std::vector<SplitTag> load_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open split file " + path.string());
  return read_split(in, path.string());
}

inline FeatureDataset load_dataset(const std::filesystem::path& image,
                                   const std::filesystem::path& text,
                                   const std::filesystem::path& labels,
                                   const std::filesystem::path& split) {
  return assemble_dataset(load_features(image), load_features(text), load_labels(labels),
                          load_split(split));
}

// Rows of m selected by idx.
inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto src = m.row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace ith

#endif  // ITH_DATAIO_HPP
