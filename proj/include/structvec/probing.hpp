#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "structvec/corpus.hpp"
#include "structvec/embeddings.hpp"
#include "structvec/optim.hpp"
#include "structvec/rng.hpp"
#include "structvec/treebank.hpp"

namespace structvec {

struct DegenerateBinsError : std::runtime_error {
  DegenerateBinsError() : std::runtime_error("sentence-length bins are degenerate") {}
};

struct InsufficientTargetsError : std::runtime_error {
  InsufficientTargetsError() : std::runtime_error("not enough target words in the corpus") {}
};

struct AllOovSentencesError : std::runtime_error {
  explicit AllOovSentencesError(std::size_t count)
      : std::runtime_error(std::to_string(count) +
                           " sentences have no in-vocabulary token"),
        count(count) {}
  std::size_t count;
};

enum class Split { kTrain, kVal, kTest };

inline const char* split_tag(Split s) {
  switch (s) {
    case Split::kTrain: return "tr";
    case Split::kVal: return "va";
    default: return "te";
  }
}

inline std::optional<Split> split_from_tag(const std::string& tag) {
  if (tag == "tr") return Split::kTrain;
  if (tag == "va") return Split::kVal;
  if (tag == "te") return Split::kTest;
  return std::nullopt;
}

struct ProbingExample {
  Split split;
  std::string label;
  std::vector<std::string> tokens;
};

// Labelled sentence dataset for one probe, in SentEval-style TSV.
struct ProbingTask {
  std::string name;
  std::vector<ProbingExample> examples;

  std::vector<std::string> labels() const {
    std::set<std::string> s;
    for (const auto& e : examples) s.insert(e.label);
    return {s.begin(), s.end()};
  }

  std::size_t split_size(Split sp) const {
    std::size_t n = 0;
    for (const auto& e : examples) {
      if (e.split == sp) ++n;
    }
    return n;
  }

  // `<split>\t<label>\t<token1 token2 ...>` per line.
  void save_tsv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write task file " + path);
    for (const auto& e : examples) {
      out << split_tag(e.split) << "\t" << e.label << "\t";
      for (std::size_t i = 0; i < e.tokens.size(); ++i) {
        if (i) out << " ";
        out << e.tokens[i];
      }
      out << "\n";
    }
  }

  static ProbingTask load_tsv(const std::string& path, std::string name) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read task file " + path);
    ProbingTask task;
    task.name = std::move(name);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const std::size_t t1 = line.find('\t');
      const std::size_t t2 = t1 == std::string::npos ? std::string::npos
                                                     : line.find('\t', t1 + 1);
      if (t2 == std::string::npos) {
        throw MalformedLineError(path, lineno, "expected 3 tab-separated fields");
      }
      auto split = split_from_tag(line.substr(0, t1));
      if (!split) {
        throw MalformedLineError(path, lineno, "unknown split tag");
      }
      ProbingExample ex;
      ex.split = *split;
      ex.label = line.substr(t1 + 1, t2 - t1 - 1);
      std::istringstream toks(line.substr(t2 + 1));
      std::string tok;
      while (toks >> tok) ex.tokens.push_back(tok);
      task.examples.push_back(std::move(ex));
    }
    return task;
  }
};

namespace probing_detail {

inline std::uint64_t fnv1a(const std::vector<std::string>& tokens) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : tokens) {
    for (char c : t) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    h ^= 0x1f;
    h *= 1099511628211ULL;
  }
  return h;
}

// Split is a pure function of sentence identity, so one sentence can never
// land in two splits (80/10/10).
inline Split assign_split(const std::vector<std::string>& tokens,
                          std::uint64_t seed) {
  const double u = static_cast<double>(mix_seed(fnv1a(tokens), seed) >> 11) *
                   0x1.0p-53;
  if (u < 0.8) return Split::kTrain;
  if (u < 0.9) return Split::kVal;
  return Split::kTest;
}

}  // namespace probing_detail

// ---- generators ----

// Explicit inclusive length ranges; label = bin index.
inline ProbingTask gen_sentlen(const std::vector<SentenceRecord>& corpus,
                               const std::vector<std::pair<std::size_t, std::size_t>>& bins,
                               std::uint64_t seed) {
  if (bins.size() < 2) throw DegenerateBinsError();
  ProbingTask task;
  task.name = "sentlen";
  std::vector<std::size_t> bin_counts(bins.size(), 0);
  for (const auto& rec : corpus) {
    const std::size_t n = rec.tokens.size();
    if (n == 0) continue;
    int label = -1;
    for (std::size_t b = 0; b < bins.size(); ++b) {
      if (n >= bins[b].first && n <= bins[b].second) {
        label = static_cast<int>(b);
        break;
      }
    }
    if (label < 0) continue;
    ++bin_counts[static_cast<std::size_t>(label)];
    task.examples.push_back({probing_detail::assign_split(rec.tokens, seed),
                             std::to_string(label), rec.tokens});
  }
  for (std::size_t c : bin_counts) {
    if (c == 0) throw DegenerateBinsError();
  }
  return task;
}

// Equal-frequency bin boundaries computed from the corpus length histogram.
inline std::vector<std::pair<std::size_t, std::size_t>> equal_frequency_bins(
    const std::vector<SentenceRecord>& corpus, std::size_t k) {
  std::vector<std::size_t> lengths;
  lengths.reserve(corpus.size());
  for (const auto& rec : corpus) {
    if (!rec.tokens.empty()) lengths.push_back(rec.tokens.size());
  }
  if (lengths.empty()) throw DegenerateBinsError();
  std::sort(lengths.begin(), lengths.end());
  std::vector<std::size_t> uppers;  // inclusive upper bound per bin
  for (std::size_t b = 1; b <= k; ++b) {
    const std::size_t idx =
        std::min(lengths.size() - 1, b * lengths.size() / k - (b == k ? 0 : 1));
    const std::size_t upper = lengths[idx];
    if (uppers.empty() || upper > uppers.back()) uppers.push_back(upper);
  }
  uppers.back() = lengths.back();
  if (uppers.size() < 2) throw DegenerateBinsError();
  std::vector<std::pair<std::size_t, std::size_t>> bins;
  std::size_t lo = lengths.front();
  for (std::size_t upper : uppers) {
    bins.emplace_back(lo, upper);
    lo = upper + 1;
  }
  return bins;
}

inline ProbingTask gen_sentlen(const std::vector<SentenceRecord>& corpus,
                               std::size_t k, std::uint64_t seed) {
  return gen_sentlen(corpus, equal_frequency_bins(corpus, k), seed);
}

// Word-content probe: k mid-frequency target words; keeps sentences with
// exactly one target occurrence, labelled by the target.
inline ProbingTask gen_wc(const std::vector<SentenceRecord>& corpus,
                          std::size_t k, std::uint64_t seed) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& rec : corpus) {
    for (const auto& t : rec.tokens) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() < k) throw InsufficientTargetsError();
  // Frequency ranks 500..500+k when the vocabulary is that deep, otherwise a
  // mid-frequency band.
  const std::size_t start =
      ranked.size() >= 500 + k ? 500 : (ranked.size() - k) / 2;
  std::set<std::string> targets;
  for (std::size_t i = start; i < start + k; ++i) {
    targets.insert(ranked[i].first);
  }

  ProbingTask task;
  task.name = "wc";
  for (const auto& rec : corpus) {
    std::string hit;
    std::size_t occurrences = 0;
    for (const auto& t : rec.tokens) {
      if (targets.count(t)) {
        ++occurrences;
        hit = t;
      }
    }
    if (occurrences != 1) continue;
    task.examples.push_back(
        {probing_detail::assign_split(rec.tokens, seed), hit, rec.tokens});
  }
  if (task.examples.empty()) throw InsufficientTargetsError();
  return task;
}

// Bigram-shift probe: with probability 1/2 one random adjacent pair is
// swapped, excluding the first and last positions. Sentences shorter than 4
// tokens are skipped.
inline ProbingTask gen_bshift(const std::vector<SentenceRecord>& corpus,
                              std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xb5));
  ProbingTask task;
  task.name = "bshift";
  for (const auto& rec : corpus) {
    const std::size_t n = rec.tokens.size();
    if (n < 4) continue;
    const Split split = probing_detail::assign_split(rec.tokens, seed);
    if (rng.uniform() < 0.5) {
      std::vector<std::string> swapped = rec.tokens;
      const std::size_t i = 1 + rng.below(n - 3);
      std::swap(swapped[i], swapped[i + 1]);
      task.examples.push_back({split, "inverted", std::move(swapped)});
    } else {
      task.examples.push_back({split, "intact", rec.tokens});
    }
  }
  return task;
}

// Tree-depth probe; depths outside [min_depth, max_depth] are discarded.
inline ProbingTask gen_treedepth(const std::vector<SentenceRecord>& corpus,
                                 std::uint64_t seed, std::size_t min_depth = 3,
                                 std::size_t max_depth = 9) {
  ProbingTask task;
  task.name = "treedepth";
  for (const auto& rec : corpus) {
    const std::size_t depth = tree_depth(parse_bracketed(rec.tree_text));
    if (depth < min_depth || depth > max_depth) continue;
    task.examples.push_back({probing_detail::assign_split(rec.tokens, seed),
                             std::to_string(depth), rec.tokens});
  }
  return task;
}

// Top-constituent probe: the k-1 most frequent sequences keep their own
// label, everything else becomes OTHER.
inline ProbingTask gen_topconst(const std::vector<SentenceRecord>& corpus,
                                std::size_t k, std::uint64_t seed) {
  auto sequence_of = [](const SentenceRecord& rec) {
    const auto tops = top_constituents(parse_bracketed(rec.tree_text));
    std::string s;
    for (std::size_t i = 0; i < tops.size(); ++i) {
      if (i) s += " ";
      s += tops[i];
    }
    return s;
  };
  std::map<std::string, std::size_t> counts;
  for (const auto& rec : corpus) ++counts[sequence_of(rec)];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::set<std::string> kept;
  for (std::size_t i = 0; i + 1 < k && i < ranked.size(); ++i) {
    kept.insert(ranked[i].first);
  }
  ProbingTask task;
  task.name = "topconst";
  for (const auto& rec : corpus) {
    std::string seq = sequence_of(rec);
    if (!kept.count(seq)) seq = "OTHER";
    task.examples.push_back(
        {probing_detail::assign_split(rec.tokens, seed), seq, rec.tokens});
  }
  return task;
}

namespace probing_detail {

inline const ParseTree* find_main_clause(const ParseTree& root) {
  // Highest node labelled S, breadth-first.
  std::vector<const ParseTree*> frontier{&root};
  while (!frontier.empty()) {
    std::vector<const ParseTree*> next;
    for (const auto* node : frontier) {
      if (node->label == "S") return node;
      for (const auto& c : node->children) {
        if (!c.is_terminal()) next.push_back(&c);
      }
    }
    frontier = std::move(next);
  }
  return nullptr;
}

inline const ParseTree* first_preorder(const ParseTree& node,
                                       const std::set<std::string>& labels) {
  if (!node.is_terminal() && labels.count(node.label) && node.is_preterminal()) {
    return &node;
  }
  for (const auto& c : node.children) {
    if (c.is_terminal()) continue;
    if (const ParseTree* hit = first_preorder(c, labels)) return hit;
  }
  return nullptr;
}

inline void noun_preterminals(const ParseTree& node,
                              std::vector<const ParseTree*>& out) {
  static const std::set<std::string> noun_tags = {"NN", "NNP", "NNS", "NNPS"};
  if (node.is_preterminal() && noun_tags.count(node.label)) {
    out.push_back(&node);
    return;
  }
  for (const auto& c : node.children) {
    if (!c.is_terminal()) noun_preterminals(c, out);
  }
}

inline const ParseTree* first_np(const ParseTree& node, bool skip_self) {
  if (!skip_self && node.label == "NP") return &node;
  for (const auto& c : node.children) {
    if (c.is_terminal()) continue;
    if (const ParseTree* hit = first_np(c, false)) return hit;
  }
  return nullptr;
}

// singular/plural from the last noun preterminal under the NP, or nullopt.
inline std::optional<std::string> np_number(const ParseTree& np) {
  std::vector<const ParseTree*> nouns;
  noun_preterminals(np, nouns);
  if (nouns.empty()) return std::nullopt;
  const std::string& tag = nouns.back()->label;
  if (tag == "NN" || tag == "NNP") return "singular";
  return "plural";
}

struct MainClauseParts {
  const ParseTree* clause = nullptr;
  const ParseTree* vp = nullptr;
  const ParseTree* subject_np = nullptr;  // last NP before the VP
};

inline std::optional<MainClauseParts> main_clause_parts(const ParseTree& root) {
  MainClauseParts parts;
  parts.clause = find_main_clause(root);
  if (!parts.clause) return std::nullopt;
  for (const auto& c : parts.clause->children) {
    if (c.is_terminal()) continue;
    if (c.label == "VP" && !parts.vp) {
      parts.vp = &c;
    } else if (c.label == "NP" && !parts.vp) {
      parts.subject_np = &c;
    }
  }
  if (!parts.vp) return std::nullopt;
  return parts;
}

}  // namespace probing_detail

// Main-clause tense from the VP head verb POS: VBD/VBN past, VBP/VBZ present.
inline ProbingTask gen_tense(const std::vector<SentenceRecord>& corpus,
                             std::uint64_t seed) {
  ProbingTask task;
  task.name = "tense";
  static const std::set<std::string> verb_tags = {"VBD", "VBN", "VBP", "VBZ"};
  for (const auto& rec : corpus) {
    const ParseTree tree = parse_bracketed(rec.tree_text);
    auto parts = probing_detail::main_clause_parts(tree);
    if (!parts) continue;
    const ParseTree* verb = probing_detail::first_preorder(*parts->vp, verb_tags);
    if (!verb) continue;
    const std::string label =
        (verb->label == "VBD" || verb->label == "VBN") ? "past" : "present";
    task.examples.push_back(
        {probing_detail::assign_split(rec.tokens, seed), label, rec.tokens});
  }
  return task;
}

// Number of the main-clause subject: NN/NNP singular, NNS/NNPS plural.
inline ProbingTask gen_subjnum(const std::vector<SentenceRecord>& corpus,
                               std::uint64_t seed) {
  ProbingTask task;
  task.name = "subjnum";
  for (const auto& rec : corpus) {
    const ParseTree tree = parse_bracketed(rec.tree_text);
    auto parts = probing_detail::main_clause_parts(tree);
    if (!parts || !parts->subject_np) continue;
    auto number = probing_detail::np_number(*parts->subject_np);
    if (!number) continue;
    task.examples.push_back(
        {probing_detail::assign_split(rec.tokens, seed), *number, rec.tokens});
  }
  return task;
}

// Number of the first NP inside the main-clause VP.
inline ProbingTask gen_objnum(const std::vector<SentenceRecord>& corpus,
                              std::uint64_t seed) {
  ProbingTask task;
  task.name = "objnum";
  for (const auto& rec : corpus) {
    const ParseTree tree = parse_bracketed(rec.tree_text);
    auto parts = probing_detail::main_clause_parts(tree);
    if (!parts) continue;
    const ParseTree* obj = probing_detail::first_np(*parts->vp, true);
    if (!obj) continue;
    auto number = probing_detail::np_number(*obj);
    if (!number) continue;
    task.examples.push_back(
        {probing_detail::assign_split(rec.tokens, seed), *number, rec.tokens});
  }
  return task;
}

// ---- evaluation ----

struct ProbeHyper {
  double l2 = 1e-4;
  double lr = 0.1;
  std::size_t max_epochs = 200;
  OovPolicy oov = OovPolicy::kSkip;
};

struct ProbeResult {
  std::string task;
  std::string embedding;
  double test_accuracy = 0.0;
  double majority_accuracy = 0.0;
  std::size_t classes = 0;
  std::size_t train_size = 0, val_size = 0, test_size = 0;
};

// Multinomial logistic regression (softmax + cross-entropy, L2 on weights,
// full-batch Adam, early stop on validation accuracy).
inline ProbeResult eval_probe(const ProbingTask& task,
                              const EmbeddingTable& table,
                              const ProbeHyper& hyper = {}) {
  const std::vector<std::string> classes = task.labels();
  std::unordered_map<std::string, std::size_t> class_id;
  for (std::size_t i = 0; i < classes.size(); ++i) class_id[classes[i]] = i;
  const std::size_t c = classes.size();
  const std::size_t d = table.dim();

  struct Row {
    std::vector<double> x;
    std::size_t y;
    Split split;
  };
  std::vector<Row> rows;
  std::size_t all_oov = 0;
  for (const auto& ex : task.examples) {
    BovResult b = bov(ex.tokens, table, hyper.oov);
    if (b.all_oov) ++all_oov;
    rows.push_back({std::move(b.vec), class_id.at(ex.label), ex.split});
  }
  if (all_oov * 2 > rows.size()) throw AllOovSentencesError(all_oov);

  std::vector<const Row*> tr, va, te;
  for (const auto& r : rows) {
    (r.split == Split::kTrain ? tr : r.split == Split::kVal ? va : te)
        .push_back(&r);
  }

  ProbeResult result;
  result.task = task.name;
  result.classes = c;
  result.train_size = tr.size();
  result.val_size = va.size();
  result.test_size = te.size();

  // Majority baseline from the training split, ties lexicographic.
  std::map<std::string, std::size_t> label_counts;
  for (const auto* r : tr) ++label_counts[classes[r->y]];
  std::string majority;
  std::size_t best_count = 0;
  for (const auto& [lab, count] : label_counts) {
    if (count > best_count) {
      best_count = count;
      majority = lab;
    }
  }
  std::size_t majority_hits = 0;
  for (const auto* r : te) {
    if (classes[r->y] == majority) ++majority_hits;
  }
  result.majority_accuracy =
      te.empty() ? 0.0
                 : static_cast<double>(majority_hits) / static_cast<double>(te.size());

  if (tr.empty() || te.empty() || c < 2) {
    result.test_accuracy = result.majority_accuracy;
    return result;
  }

  Param<double> w("probe.w", Tensor<double>::zeros({c, d}));
  Param<double> b("probe.b", Tensor<double>::zeros({c}));
  Adam<double> opt({&w, &b}, {.lr = hyper.lr});

  std::vector<double> logits(c), probs(c);
  auto forward_example = [&](const Row& r) {
    for (std::size_t k = 0; k < c; ++k) {
      double acc = b.value.data[k];
      const double* wr = w.value.row_ptr(k);
      for (std::size_t j = 0; j < d; ++j) acc += wr[j] * r.x[j];
      logits[k] = acc;
    }
    double mx = logits[0];
    for (std::size_t k = 1; k < c; ++k) mx = std::max(mx, logits[k]);
    double z = 0;
    for (std::size_t k = 0; k < c; ++k) {
      probs[k] = std::exp(logits[k] - mx);
      z += probs[k];
    }
    for (std::size_t k = 0; k < c; ++k) probs[k] /= z;
  };
  auto accuracy_on = [&](const std::vector<const Row*>& split) {
    if (split.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto* r : split) {
      forward_example(*r);
      std::size_t arg = 0;
      for (std::size_t k = 1; k < c; ++k) {
        if (probs[k] > probs[arg]) arg = k;
      }
      if (arg == r->y) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(split.size());
  };

  double best_va = -1.0;
  Tensor<double> best_w = w.value, best_b = b.value;
  for (std::size_t epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    const double inv_n = 1.0 / static_cast<double>(tr.size());
    for (const auto* r : tr) {
      forward_example(*r);
      for (std::size_t k = 0; k < c; ++k) {
        const double delta = (probs[k] - (k == r->y ? 1.0 : 0.0)) * inv_n;
        double* gw = w.grad.row_ptr(k);
        for (std::size_t j = 0; j < d; ++j) gw[j] += delta * r->x[j];
        b.grad.data[k] += delta;
      }
    }
    for (std::size_t i = 0; i < w.value.numel(); ++i) {
      w.grad.data[i] += hyper.l2 * w.value.data[i];
    }
    opt.step();
    const double va_acc = va.empty() ? accuracy_on(tr) : accuracy_on(va);
    if (va_acc > best_va) {
      best_va = va_acc;
      best_w = w.value;
      best_b = b.value;
    }
  }
  w.value = best_w;
  b.value = best_b;
  result.test_accuracy = accuracy_on(te);
  return result;
}

// Lexical control embeddings: symmetric-window co-occurrence counts over the
// corpus, log-scaled and L2-normalized, one context column per vocabulary
// word.
inline EmbeddingTable build_cooccurrence_table(
    const std::vector<std::vector<std::string>>& sentences,
    std::size_t window = 2) {
  std::set<std::string> vocab_set;
  for (const auto& s : sentences) {
    for (const auto& t : s) vocab_set.insert(t);
  }
  std::vector<std::string> vocab(vocab_set.begin(), vocab_set.end());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < vocab.size(); ++i) index[vocab[i]] = i;

  const std::size_t d = vocab.size();
  std::vector<double> counts(d * d, 0.0);
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      const std::size_t wi = index[s[i]];
      const std::size_t hi = std::min(s.size(), i + window + 1);
      for (std::size_t j = i + 1; j < hi; ++j) {
        const std::size_t wj = index[s[j]];
        counts[wi * d + wj] += 1.0;
        counts[wj * d + wi] += 1.0;
      }
    }
  }
  EmbeddingTable table(d);
  std::vector<double> row(d);
  for (std::size_t i = 0; i < d; ++i) {
    double norm = 0;
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = std::log1p(counts[i * d + j]);
      norm += row[j] * row[j];
    }
    if (norm > 0) {
      const double inv = 1.0 / std::sqrt(norm);
      for (auto& x : row) x *= inv;
    }
    table.add(vocab[i], row);
  }
  return table;
}

}  // namespace structvec
