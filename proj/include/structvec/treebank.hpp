#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "structvec/vocab.hpp"

namespace structvec {

struct TreeParseError : std::runtime_error {
  enum class Kind { UnbalancedBrackets, EmptyConstituent, TrailingInput };

  TreeParseError(Kind kind, std::size_t position)
      : std::runtime_error(describe(kind) + " at position " +
                           std::to_string(position)),
        kind(kind), position(position) {}

  static std::string describe(Kind k) {
    switch (k) {
      case Kind::UnbalancedBrackets: return "unbalanced brackets";
      case Kind::EmptyConstituent: return "empty constituent";
      case Kind::TrailingInput: return "trailing input";
    }
    return "parse error";
  }

  Kind kind;
  std::size_t position;
};

struct EmptyLabelError : std::runtime_error {
  EmptyLabelError() : std::runtime_error("empty constituent label") {}
};

// Rooted labeled ordered tree. Terminals hold the surface word in `token`
// (and mirror it in `label`); every other node carries a constituent or POS
// label and at least one child.
struct ParseTree {
  std::string label;
  std::string token;
  std::vector<ParseTree> children;

  bool is_terminal() const { return children.empty(); }
  bool is_preterminal() const {
    return children.size() == 1 && children[0].is_terminal();
  }
};

// Strips functional/index suffixes: everything from the first '-', '=' or
// '|' onward. Labels that would strip to nothing (-LRB-, -NONE-, ...) are
// kept verbatim.
inline std::string normalize_label(const std::string& raw) {
  if (raw.empty()) throw EmptyLabelError();
  const std::size_t pos = raw.find_first_of("-=|");
  if (pos == 0) return raw;
  if (pos == std::string::npos) return raw;
  return raw.substr(0, pos);
}

namespace detail {

inline void skip_ws(const std::string& s, std::size_t& i) {
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\n' ||
                          s[i] == '\r')) {
    ++i;
  }
}

inline std::string read_atom(const std::string& s, std::size_t& i) {
  const std::size_t start = i;
  while (i < s.size() && s[i] != '(' && s[i] != ')' && s[i] != ' ' &&
         s[i] != '\t' && s[i] != '\n' && s[i] != '\r') {
    ++i;
  }
  return s.substr(start, i - start);
}

inline ParseTree parse_node(const std::string& s, std::size_t& i) {
  // caller consumed the opening '('
  const std::size_t open_pos = i - 1;
  skip_ws(s, i);
  std::string raw_label = read_atom(s, i);
  if (raw_label.empty()) throw TreeParseError(TreeParseError::Kind::EmptyConstituent, open_pos);
  ParseTree node;
  node.label = normalize_label(raw_label);

  while (true) {
    skip_ws(s, i);
    if (i >= s.size()) {
      throw TreeParseError(TreeParseError::Kind::UnbalancedBrackets, open_pos);
    }
    if (s[i] == ')') {
      ++i;
      break;
    }
    if (s[i] == '(') {
      ++i;
      node.children.push_back(parse_node(s, i));
    } else {
      std::string word = read_atom(s, i);
      ParseTree leaf;
      leaf.label = word;
      leaf.token = word;
      node.children.push_back(std::move(leaf));
    }
  }
  if (node.children.empty()) {
    throw TreeParseError(TreeParseError::Kind::EmptyConstituent, open_pos);
  }
  return node;
}

}  // namespace detail

// Parses a single bracketed constituency tree (Penn-Treebank style).
// Labels are normalized; whitespace between items is insignificant.
inline ParseTree parse_bracketed(const std::string& text) {
  std::size_t i = 0;
  detail::skip_ws(text, i);
  if (i >= text.size() || text[i] != '(') {
    throw TreeParseError(TreeParseError::Kind::TrailingInput, i);
  }
  ++i;
  ParseTree tree = detail::parse_node(text, i);
  detail::skip_ws(text, i);
  if (i < text.size()) {
    throw TreeParseError(TreeParseError::Kind::TrailingInput, i);
  }
  return tree;
}

// Debug serializer; parse_bracketed(render(t)) == t on normalized trees.
inline void render(const ParseTree& t, std::string& out) {
  if (t.is_terminal()) {
    out += t.token;
    return;
  }
  out += '(';
  out += t.label;
  for (const auto& c : t.children) {
    out += ' ';
    render(c, out);
  }
  out += ')';
}

inline std::string render(const ParseTree& t) {
  std::string out;
  render(t, out);
  return out;
}

// Pre-order sequence of internal and preterminal labels; terminal words are
// not emitted, nor are closing markers.
inline void linearize(const ParseTree& t, std::vector<std::string>& out) {
  if (t.is_terminal()) return;
  out.push_back(t.label);
  for (const auto& c : t.children) linearize(c, out);
}

inline std::vector<std::string> linearize(const ParseTree& t) {
  std::vector<std::string> out;
  linearize(t, out);
  return out;
}

// Number of edges on the longest root-to-terminal path.
inline std::size_t tree_depth(const ParseTree& t) {
  if (t.is_terminal()) return 0;
  std::size_t best = 0;
  for (const auto& c : t.children) best = std::max(best, tree_depth(c));
  return best + 1;
}

// Ordered labels of the root's non-terminal children.
inline std::vector<std::string> top_constituents(const ParseTree& t) {
  std::vector<std::string> out;
  for (const auto& c : t.children) {
    if (!c.is_terminal()) out.push_back(c.label);
  }
  return out;
}

inline void collect_tokens(const ParseTree& t, std::vector<std::string>& out) {
  if (t.is_terminal()) {
    out.push_back(t.token);
    return;
  }
  for (const auto& c : t.children) collect_tokens(c, out);
}

inline std::vector<std::string> tree_tokens(const ParseTree& t) {
  std::vector<std::string> out;
  collect_tokens(t, out);
  return out;
}

inline std::size_t count_nodes(const ParseTree& t) {
  std::size_t n = 1;
  for (const auto& c : t.children) n += count_nodes(c);
  return n;
}

inline std::size_t count_terminals(const ParseTree& t) {
  if (t.is_terminal()) return 1;
  std::size_t n = 0;
  for (const auto& c : t.children) n += count_terminals(c);
  return n;
}

// Vocabulary of the `cap` most frequent structural labels plus the two
// reserved ids; ties break lexicographically.
template <typename TreeRange>
Vocab build_label_vocab(const TreeRange& trees, std::size_t cap) {
  if (cap < 1) throw std::invalid_argument("label vocab cap must be >= 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& t : trees) {
    for (const auto& lab : linearize(t)) ++counts[lab];
  }
  return Vocab::from_counts(counts, cap);
}

}  // namespace structvec
