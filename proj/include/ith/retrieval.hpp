#ifndef ITH_RETRIEVAL_HPP
#define ITH_RETRIEVAL_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ith/binio.hpp"
#include "ith/error.hpp"
#include "ith/matrix.hpp"

namespace ith {

// Bit-packed ±1 codes: bit b of a code is set iff entry b is +1. Unused
// high bits of the last word stay zero.
class BinaryCodes {
 public:
  BinaryCodes() = default;
  BinaryCodes(std::size_t bits, std::vector<std::vector<int>> labels)
      : bits_(bits), words_per_code_((bits + 63) / 64), labels_(std::move(labels)),
        words_(labels_.size() * words_per_code_, 0) {
    if (bits == 0) throw ParameterError("BinaryCodes: code length must be >= 1");
  }

  // Packs sign(x) (sign(0) = +1) with one class label per row.
  static BinaryCodes pack(const Matrix& codes, std::span<const int> labels) {
    if (labels.size() != codes.rows()) {
      throw ContractViolation("BinaryCodes::pack: " + std::to_string(labels.size()) +
                              " labels for " + std::to_string(codes.rows()) + " codes");
    }
    std::vector<std::vector<int>> ls;
    ls.reserve(labels.size());
    for (int y : labels) ls.push_back({y});
    return pack(codes, std::move(ls));
  }

  static BinaryCodes pack(const Matrix& codes, std::vector<std::vector<int>> labels) {
    if (labels.size() != codes.rows()) {
      throw ContractViolation("BinaryCodes::pack: label count mismatch");
    }
    BinaryCodes out(codes.cols(), std::move(labels));
    for (std::size_t i = 0; i < codes.rows(); ++i) {
      std::uint64_t* w = out.words_.data() + i * out.words_per_code_;
      for (std::size_t b = 0; b < codes.cols(); ++b) {
        if (codes(i, b) >= 0.0) w[b / 64] |= std::uint64_t{1} << (b % 64);
      }
    }
    return out;
  }

  Matrix unpack() const {
    Matrix m(size(), bits_);
    for (std::size_t i = 0; i < size(); ++i) {
      const auto w = code(i);
      for (std::size_t b = 0; b < bits_; ++b) m(i, b) = (w[b / 64] >> (b % 64)) & 1U ? 1.0 : -1.0;
    }
    return m;
  }

  std::size_t size() const { return labels_.size(); }
  std::size_t bits() const { return bits_; }
  std::size_t words_per_code() const { return words_per_code_; }
  std::span<const std::uint64_t> code(std::size_t i) const {
    return {words_.data() + i * words_per_code_, words_per_code_};
  }
  std::span<std::uint64_t> mutable_code(std::size_t i) {
    return {words_.data() + i * words_per_code_, words_per_code_};
  }
  const std::vector<int>& labels(std::size_t i) const { return labels_[i]; }
  const std::vector<std::vector<int>>& all_labels() const { return labels_; }
  const std::vector<std::uint64_t>& words() const { return words_; }

  bool trailing_bits_clear() const {
    if (bits_ % 64 == 0) return true;
    const std::uint64_t mask = ~((std::uint64_t{1} << (bits_ % 64)) - 1);
    for (std::size_t i = 0; i < size(); ++i)
      if (code(i).back() & mask) return false;
    return true;
  }

  bool operator==(const BinaryCodes&) const = default;

 private:
  std::size_t bits_ = 0;
  std::size_t words_per_code_ = 0;
  std::vector<std::vector<int>> labels_;
  std::vector<std::uint64_t> words_;
};

inline int hamming_distance(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                            std::size_t bits) {
  const std::size_t words = (bits + 63) / 64;
  if (a.size() != words || b.size() != words) {
    throw ContractViolation("hamming_distance: code length mismatch");
  }
  int d = 0;
  for (std::size_t w = 0; w < words; ++w) {
    std::uint64_t x = a[w] ^ b[w];
    if (w + 1 == words && bits % 64 != 0) x &= (std::uint64_t{1} << (bits % 64)) - 1;
    d += std::popcount(x);
  }
  return d;
}

enum class Relevance { same_label, shared_label };

inline bool relevant(const std::vector<int>& a, const std::vector<int>& b, Relevance rel) {
  if (rel == Relevance::same_label) return !a.empty() && !b.empty() && a.front() == b.front();
  for (int x : a)
    for (int y : b)
      if (x == y) return true;
  return false;
}

namespace detail {

inline void require_compatible(const BinaryCodes& q, const BinaryCodes& db) {
  if (db.size() == 0) throw ParameterError("retrieval: empty database");
  if (q.bits() != db.bits()) {
    throw ContractViolation("retrieval: query codes have " + std::to_string(q.bits()) +
                            " bits, database " + std::to_string(db.bits()));
  }
}

// Database indices ordered by (distance, index) via a counting sort.
inline std::vector<std::size_t> hamming_ranking(const BinaryCodes& db,
                                                std::span<const std::uint64_t> query,
                                                std::vector<int>& dist) {
  const std::size_t k = db.bits();
  dist.resize(db.size());
  std::vector<std::size_t> bucket(k + 2, 0);
  for (std::size_t j = 0; j < db.size(); ++j) {
    dist[j] = hamming_distance(query, db.code(j), k);
    ++bucket[static_cast<std::size_t>(dist[j]) + 1];
  }
  for (std::size_t r = 1; r < bucket.size(); ++r) bucket[r] += bucket[r - 1];
  std::vector<std::size_t> order(db.size());
  for (std::size_t j = 0; j < db.size(); ++j) order[bucket[static_cast<std::size_t>(dist[j])]++] = j;
  return order;
}

}  // namespace detail

struct MapResult {
  double map = 0.0;
  std::size_t evaluated_queries = 0;
  std::size_t skipped_queries = 0;  // no relevant database item
};

inline MapResult mean_average_precision(const BinaryCodes& queries, const BinaryCodes& database,
                                        Relevance rel = Relevance::same_label) {
  detail::require_compatible(queries, database);
  MapResult out;
  double ap_sum = 0.0;
  std::vector<int> dist;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto order = detail::hamming_ranking(database, queries.code(q), dist);
    std::size_t hits = 0;
    double precision_sum = 0.0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      if (relevant(queries.labels(q), database.labels(order[rank]), rel)) {
        ++hits;
        precision_sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
      }
    }
    if (hits == 0) {
      ++out.skipped_queries;
      continue;
    }
    ap_sum += precision_sum / static_cast<double>(hits);
    ++out.evaluated_queries;
  }
  out.map = out.evaluated_queries ? ap_sum / static_cast<double>(out.evaluated_queries) : 0.0;
  return out;
}

struct PrPoint {
  int radius = 0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t empty_queries = 0;  // queries with nothing returned; precision counted as 1
};

// Hash lookup at every radius 0..K: returned set = distance <= radius.
inline std::vector<PrPoint> precision_recall_curve(const BinaryCodes& queries,
                                                   const BinaryCodes& database,
                                                   Relevance rel = Relevance::same_label) {
  detail::require_compatible(queries, database);
  const std::size_t k = database.bits();
  std::vector<PrPoint> curve(k + 1);
  for (std::size_t r = 0; r <= k; ++r) curve[r].radius = static_cast<int>(r);
  std::size_t evaluated = 0;
  std::vector<std::size_t> returned_at(k + 1), relevant_at(k + 1);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::fill(returned_at.begin(), returned_at.end(), 0);
    std::fill(relevant_at.begin(), relevant_at.end(), 0);
    std::size_t total_relevant = 0;
    for (std::size_t j = 0; j < database.size(); ++j) {
      const auto d = static_cast<std::size_t>(hamming_distance(queries.code(q), database.code(j), k));
      ++returned_at[d];
      if (relevant(queries.labels(q), database.labels(j), rel)) {
        ++relevant_at[d];
        ++total_relevant;
      }
    }
    if (total_relevant == 0) continue;
    ++evaluated;
    std::size_t ret = 0, hit = 0;
    for (std::size_t r = 0; r <= k; ++r) {
      ret += returned_at[r];
      hit += relevant_at[r];
      if (ret == 0) {
        curve[r].precision += 1.0;
        ++curve[r].empty_queries;
      } else {
        curve[r].precision += static_cast<double>(hit) / static_cast<double>(ret);
      }
      curve[r].recall += static_cast<double>(hit) / static_cast<double>(total_relevant);
    }
  }
  if (evaluated) {
    for (auto& p : curve) {
      p.precision /= static_cast<double>(evaluated);
      p.recall /= static_cast<double>(evaluated);
    }
  }
  return curve;
}

enum class Task { image_to_text, text_to_image };

inline const char* to_string(Task t) { return t == Task::image_to_text ? "I2T" : "T2I"; }

struct RetrievalResult {
  Task task = Task::image_to_text;
  std::size_t bits = 0;
  MapResult map;
  std::vector<PrPoint> pr_curve;
};

inline RetrievalResult evaluate_retrieval(const BinaryCodes& queries, const BinaryCodes& database,
                                          Task task, Relevance rel = Relevance::same_label) {
  return {task, queries.bits(), mean_average_precision(queries, database, rel),
          precision_recall_curve(queries, database, rel)};
}

// Uniformly random codes carrying the given labels (chance baseline).
inline BinaryCodes random_codes(std::size_t bits, std::span<const int> labels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  Matrix m(labels.size(), bits);
  for (double& v : m.data()) v = coin(rng) ? 1.0 : -1.0;
  return BinaryCodes::pack(m, labels);
}

// ---------------------------------------------------------------------------
// ITHB: "ITHB", u32 K, u64 n, n·⌈K/64⌉ u64 words, then per code
// u32 label count followed by u32 class ids. All little-endian.

inline void write_ithb(std::ostream& out, const BinaryCodes& codes) {
  binio::put_magic(out, "ITHB");
  binio::put_u32(out, static_cast<std::uint32_t>(codes.bits()));
  binio::put_u64(out, codes.size());
  for (std::uint64_t w : codes.words()) binio::put_u64(out, w);
  for (const auto& ls : codes.all_labels()) {
    binio::put_u32(out, static_cast<std::uint32_t>(ls.size()));
    for (int y : ls) binio::put_u32(out, static_cast<std::uint32_t>(y));
  }
  if (!out) throw IoError("write_ithb: stream write failed");
}

inline BinaryCodes read_ithb(std::istream& in, const std::string& what = "ITHB") {
  binio::Reader r(in, what);
  r.expect_magic("ITHB");
  const std::uint32_t k = r.u32();
  const std::uint64_t n = r.u64();
  if (k == 0) r.fail("zero code length");
  if (n > (std::uint64_t{1} << 36)) r.fail("implausible code count " + std::to_string(n));
  const std::size_t wpc = (k + 63) / 64;
  std::vector<std::uint64_t> words(static_cast<std::size_t>(n) * wpc);
  for (auto& w : words) w = r.u64();
  std::vector<std::vector<int>> labels(static_cast<std::size_t>(n));
  for (auto& ls : labels) {
    const std::uint32_t c = r.u32();
    if (c > 1u << 16) r.fail("implausible label count " + std::to_string(c));
    ls.resize(c);
    for (auto& y : ls) y = static_cast<int>(r.u32());
  }
  if (!r.at_eof()) r.fail("trailing bytes");
  BinaryCodes codes(k, std::move(labels));
  for (std::size_t i = 0; i < codes.size(); ++i) {
    auto dst = codes.mutable_code(i);
    for (std::size_t w = 0; w < wpc; ++w) dst[w] = words[i * wpc + w];
  }
  if (!codes.trailing_bits_clear()) r.fail("nonzero padding bits in code words");
  return codes;
}

}  // namespace ith

#endif  // ITH_RETRIEVAL_HPP
