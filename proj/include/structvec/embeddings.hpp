#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace structvec {

struct EmbeddingFormatError : std::runtime_error {
  enum class Kind { MalformedLine, InconsistentDim };
  EmbeddingFormatError(Kind kind, std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        kind(kind), line(line) {}
  Kind kind;
  std::size_t line;
};

struct EmptySentenceError : std::runtime_error {
  EmptySentenceError() : std::runtime_error("bag-of-vectors over an empty sentence") {}
};

enum class OovPolicy { kSkip, kZeroVector };

// token -> fixed-dimension vector map, stored as a dense row matrix.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t duplicates_dropped() const { return duplicates_; }

  bool contains(const std::string& token) const {
    return index_.count(token) > 0;
  }

  const double* row(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? nullptr
                              : data_.data() + it->second * dim_;
  }

  const double* row_at(std::size_t i) const { return data_.data() + i * dim_; }

  // First occurrence wins on duplicates; the drop is counted, not fatal.
  void add(const std::string& token, const std::vector<double>& values) {
    if (values.size() != dim_) {
      throw std::invalid_argument("embedding row dimension mismatch");
    }
    if (index_.count(token)) {
      ++duplicates_;
      return;
    }
    index_.emplace(token, tokens_.size());
    tokens_.push_back(token);
    data_.insert(data_.end(), values.begin(), values.end());
  }

  // Text format: optional header "<count> <dim>", then one
  // "<token> <v1> ... <vdim>" per line, 6 significant digits on save.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write embeddings to " + path);
    out << tokens_.size() << " " << dim_ << "\n";
    char buf[64];
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      out << tokens_[i];
      const double* r = row_at(i);
      for (std::size_t j = 0; j < dim_; ++j) {
        std::snprintf(buf, sizeof(buf), " %.6g", r[j]);
        out << buf;
      }
      out << "\n";
    }
  }

  static EmbeddingTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read embeddings from " + path);
    std::string line;
    std::size_t lineno = 0;
    EmbeddingTable table;
    bool dim_known = false;

    // Header detection: exactly two integer fields on the first line.
    if (std::getline(in, line)) {
      ++lineno;
      std::istringstream iss(line);
      std::string a, b, rest;
      if ((iss >> a >> b) && !(iss >> rest) && is_count(a) && is_count(b)) {
        table.dim_ = static_cast<std::size_t>(std::stoull(b));
        dim_known = true;
      } else {
        parse_row(table, line, lineno, dim_known);
      }
    }
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      parse_row(table, line, lineno, dim_known);
    }
    return table;
  }

 private:
  static bool is_count(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s) {
      if (c < '0' || c > '9') return false;
    }
    return true;
  }

  static void parse_row(EmbeddingTable& table, const std::string& line,
                        std::size_t lineno, bool& dim_known) {
    std::istringstream iss(line);
    std::string token;
    if (!(iss >> token)) {
      throw EmbeddingFormatError(EmbeddingFormatError::Kind::MalformedLine,
                                 lineno, "missing token");
    }
    std::vector<double> values;
    double v;
    while (iss >> v) values.push_back(v);
    if (!iss.eof()) {
      throw EmbeddingFormatError(EmbeddingFormatError::Kind::MalformedLine,
                                 lineno, "non-numeric value");
    }
    if (values.empty()) {
      throw EmbeddingFormatError(EmbeddingFormatError::Kind::MalformedLine,
                                 lineno, "no values");
    }
    if (!dim_known) {
      table.dim_ = values.size();
      dim_known = true;
    }
    if (values.size() != table.dim_) {
      throw EmbeddingFormatError(EmbeddingFormatError::Kind::InconsistentDim,
                                 lineno,
                                 "expected " + std::to_string(table.dim_) +
                                     " values, got " +
                                     std::to_string(values.size()));
    }
    table.add(token, values);
  }

  std::size_t dim_ = 0;
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<double> data_;
  std::size_t duplicates_ = 0;
};

struct BovResult {
  std::vector<double> vec;
  bool all_oov = false;
};

// Bag of Vectors: arithmetic mean of the in-vocabulary token vectors.
// Under kSkip, OOV tokens are dropped from the mean; under kZeroVector they
// contribute zero vectors (and count toward the denominator).
inline BovResult bov(const std::vector<std::string>& tokens,
                     const EmbeddingTable& table,
                     OovPolicy policy = OovPolicy::kSkip) {
  if (tokens.empty()) throw EmptySentenceError();
  BovResult out;
  out.vec.assign(table.dim(), 0.0);
  std::size_t counted = 0;
  std::size_t hits = 0;
  for (const auto& tok : tokens) {
    const double* r = table.row(tok);
    if (r) {
      for (std::size_t j = 0; j < table.dim(); ++j) out.vec[j] += r[j];
      ++hits;
      ++counted;
    } else if (policy == OovPolicy::kZeroVector) {
      ++counted;
    }
  }
  if (hits == 0) {
    out.all_oov = true;
    std::fill(out.vec.begin(), out.vec.end(), 0.0);
    return out;
  }
  for (auto& x : out.vec) x /= static_cast<double>(counted);
  return out;
}

// Union of token sets; dim = dim_a + dim_b. Tokens missing on one side get
// zeros in that side's slice.
inline EmbeddingTable concat_tables(const EmbeddingTable& a,
                                    const EmbeddingTable& b) {
  EmbeddingTable out(a.dim() + b.dim());
  std::vector<double> row(a.dim() + b.dim());
  auto emit = [&](const std::string& tok) {
    if (out.contains(tok)) return;
    std::fill(row.begin(), row.end(), 0.0);
    if (const double* ra = a.row(tok)) {
      std::copy(ra, ra + a.dim(), row.begin());
    }
    if (const double* rb = b.row(tok)) {
      std::copy(rb, rb + b.dim(), row.begin() + static_cast<std::ptrdiff_t>(a.dim()));
    }
    out.add(tok, row);
  };
  for (const auto& tok : a.tokens()) emit(tok);
  for (const auto& tok : b.tokens()) emit(tok);
  return out;
}

inline double cosine(const double* a, const double* b, std::size_t n) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace structvec
