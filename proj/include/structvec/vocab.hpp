#pragma once

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace structvec {

struct EmptyCorpusError : std::runtime_error {
  EmptyCorpusError() : std::runtime_error("vocabulary built from empty corpus") {}
};

// Token <-> dense id bijection with two reserved ids. Real tokens start at
// id 2; unseen tokens map to the unknown id on lookup.
class Vocab {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;

  Vocab() = default;
  explicit Vocab(std::vector<std::string> tokens) { reset(std::move(tokens)); }

  // Keeps the `cap` most frequent tokens with count >= min_count; ties are
  // broken lexicographically.
  static Vocab from_counts(const std::unordered_map<std::string, std::size_t>& counts,
                           std::size_t cap, std::size_t min_count = 1) {
    if (counts.empty()) throw EmptyCorpusError();
    std::vector<std::pair<std::string, std::size_t>> items;
    items.reserve(counts.size());
    for (const auto& kv : counts) {
      if (kv.second >= min_count) items.push_back(kv);
    }
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (items.size() > cap) items.resize(cap);
    std::vector<std::string> tokens;
    tokens.reserve(items.size());
    for (auto& it : items) tokens.push_back(std::move(it.first));
    return Vocab(std::move(tokens));
  }

  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
  }

  bool contains(const std::string& token) const {
    return index_.count(token) > 0;
  }

  // Valid for real ids only (>= 2).
  const std::string& token(int id) const {
    return tokens_.at(static_cast<std::size_t>(id) - 2);
  }

  std::size_t size() const { return tokens_.size() + 2; }
  std::size_t token_count() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const std::vector<std::string>& toks) const {
    std::vector<int> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(id(t));
    return ids;
  }

  // One token per line; line number gives the id after the two reserved ids.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write vocab to " + path);
    for (const auto& t : tokens_) out << t << "\n";
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read vocab from " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) tokens.push_back(line);
    }
    return Vocab(std::move(tokens));
  }

 private:
  void reset(std::vector<std::string> tokens) {
    tokens_ = std::move(tokens);
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      index_.emplace(tokens_[i], static_cast<int>(i) + 2);
    }
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace structvec
