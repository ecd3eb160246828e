#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "structvec/checkpoint.hpp"
#include "structvec/corpus.hpp"
#include "structvec/embeddings.hpp"
#include "structvec/encoder.hpp"
#include "structvec/optim.hpp"
#include "structvec/rng.hpp"
#include "structvec/tape.hpp"
#include "structvec/treebank.hpp"
#include "structvec/vocab.hpp"

namespace structvec {

struct BatchTooSmallError : std::runtime_error {
  BatchTooSmallError() : std::runtime_error("pair construction needs a batch of >= 2") {}
};

struct DimMismatchError : std::runtime_error {
  DimMismatchError() : std::runtime_error("pair vectors have different dimensions") {}
};

struct TrainAbortError : std::runtime_error {
  TrainAbortError(std::int64_t step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what),
        step(step) {}
  std::int64_t step;
};

// Encoded training sentence: word ids and linearized-tree label ids, both
// already truncated to their caps.
struct TrainItem {
  std::vector<int> word_ids;
  std::vector<int> label_ids;
};

// y = 1 for a genuine (sentence, own tree) pair, 0 for a false pair.
struct SentencePair {
  std::vector<int> word_ids;
  std::vector<int> label_ids;
  int y = 1;
};

// Word types seen fewer than min_freq times fall back to the unknown id.
inline Vocab build_word_vocab(const std::vector<SentenceRecord>& corpus,
                              std::size_t min_freq = 2) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& r : corpus) {
    for (const auto& t : r.tokens) ++counts[t];
  }
  return Vocab::from_counts(counts, static_cast<std::size_t>(-1), min_freq);
}

inline TrainItem encode_item(const SentenceRecord& rec, const Vocab& words,
                             const Vocab& labels, std::size_t lex_cap,
                             std::size_t syn_cap) {
  TrainItem item;
  item.word_ids = truncate(words.encode(rec.tokens), lex_cap);
  item.label_ids =
      truncate(labels.encode(linearize(parse_bracketed(rec.tree_text))), syn_cap);
  return item;
}

inline std::vector<TrainItem> encode_corpus(
    const std::vector<SentenceRecord>& corpus, const Vocab& words,
    const Vocab& labels, std::size_t lex_cap, std::size_t syn_cap) {
  std::vector<TrainItem> items;
  items.reserve(corpus.size());
  for (const auto& rec : corpus) {
    items.push_back(encode_item(rec, words, labels, lex_cap, syn_cap));
  }
  return items;
}

// Each batch item contributes its genuine pair and one false pair whose tree
// comes from a random derangement of the batch, so no item meets its own
// tree twice. Output size is 2 * batch.
inline std::vector<SentencePair> make_pairs(std::span<const TrainItem> batch,
                                            Rng& rng) {
  const std::size_t n = batch.size();
  if (n < 2) throw BatchTooSmallError();
  std::vector<std::size_t> partner(n);
  for (std::size_t i = 0; i < n; ++i) partner[i] = i;
  bool deranged = false;
  while (!deranged) {
    rng.shuffle(partner);
    deranged = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (partner[i] == i) {
        deranged = false;
        break;
      }
    }
  }
  std::vector<SentencePair> pairs;
  pairs.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    pairs.push_back({batch[i].word_ids, batch[i].label_ids, 1});
    pairs.push_back({batch[i].word_ids, batch[partner[i]].label_ids, 0});
  }
  return pairs;
}

// Per-pair contrastive term: d^2 for genuine pairs, max(margin - d, 0)^2 for
// false pairs, with d = ||v_lex - v_str||_2. The caller applies the batch
// mean and the 1/2 factor.
template <typename T>
std::pair<typename Tape<T>::Var, typename Tape<T>::Var> contrastive_loss(
    Tape<T>& tape, typename Tape<T>::Var v_lex, typename Tape<T>::Var v_str,
    int y, T margin) {
  using Var = typename Tape<T>::Var;
  if (tape.value(v_lex).shape != tape.value(v_str).shape) {
    throw DimMismatchError();
  }
  Var d = tape.l2_norm_diff(v_lex, v_str);
  Var term;
  if (y == 1) {
    term = tape.mul(d, d);
  } else {
    Var hinge = tape.max_with_scalar(tape.add_scalar(tape.scale(d, T(-1)), margin), T(0));
    term = tape.mul(hinge, hinge);
  }
  return {term, d};
}

struct EpochStats {
  double mean_loss = 0.0;
  double pair_accuracy = 0.0;
  std::size_t pairs = 0;
};

template <typename T>
struct SiameseConfig {
  T margin = T(1);
  std::size_t batch_size = 400;
  typename Adam<T>::Config adam;  // lr 5e-4 by default
};

// Co-trained lexical and syntactic encoders plus optimizer state. The
// optimizer keeps pointers into the encoders, so the state is pinned in
// place once initialized.
template <typename T>
struct TrainState {
  EncoderParams<T> lexical;
  EncoderParams<T> syntactic;
  Adam<T> opt;
  SiameseConfig<T> cfg;
  std::uint64_t seed = 0;
  std::int64_t epoch = 0;
  std::int64_t step = 0;

  TrainState() = default;
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  void init(const EncoderConfig& lex_cfg, const EncoderConfig& syn_cfg,
            const SiameseConfig<T>& c, std::uint64_t s) {
    cfg = c;
    seed = s;
    Rng rng(mix_seed(s, 0x5eed));
    lexical.init("lex", lex_cfg, rng);
    syntactic.init("syn", syn_cfg, rng);
    opt = Adam<T>(all_params(), c.adam);
    epoch = 0;
    step = 0;
  }

  std::vector<Param<T>*> all_params() {
    std::vector<Param<T>*> out = lexical.params();
    for (auto* p : syntactic.params()) out.push_back(p);
    return out;
  }
};

namespace detail {

template <typename T>
struct PairForward {
  typename Tape<T>::Var term;
  double distance = 0.0;
  int y = 1;
};

template <typename T>
PairForward<T> forward_pair(Tape<T>& tape, const SeqEncoderVars<T>& lex_vars,
                            const SeqEncoderVars<T>& syn_vars,
                            TrainState<T>& st, const SentencePair& pair) {
  auto v_lex = encode(tape, lex_vars, st.lexical,
                      std::span<const int>(pair.word_ids));
  auto v_str = encode(tape, syn_vars, st.syntactic,
                      std::span<const int>(pair.label_ids));
  auto [term, d] = contrastive_loss(tape, v_lex, v_str, pair.y, st.cfg.margin);
  return {term, static_cast<double>(tape.value(d).data[0]), pair.y};
}

// Classification rule: d < margin/2 predicts a genuine pair.
template <typename T>
bool pair_correct(double d, int y, T margin) {
  const bool predicted_genuine = d < static_cast<double>(margin) / 2.0;
  return predicted_genuine == (y == 1);
}

}  // namespace detail

// One full pass: shuffle, pair, forward both encoders, contrastive loss,
// backward, Adam step. A trailing batch of size 1 cannot be paired and is
// carried over implicitly by the next epoch's shuffle.
template <typename T>
EpochStats train_epoch(TrainState<T>& st, std::span<const TrainItem> corpus,
                       std::size_t batch_size, Rng& rng) {
  if (batch_size < 2) throw BatchTooSmallError();
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  EpochStats stats;
  double term_sum = 0.0;
  std::size_t correct = 0;
  Tape<T> tape;
  std::vector<TrainItem> batch;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    if (end - start < 2) break;
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(corpus[order[i]]);

    std::vector<SentencePair> pairs = make_pairs(batch, rng);
    tape.clear();
    auto lex_vars = SeqEncoderVars<T>::bind(tape, st.lexical.seq);
    auto syn_vars = SeqEncoderVars<T>::bind(tape, st.syntactic.seq);
    std::vector<typename Tape<T>::Var> terms;
    terms.reserve(pairs.size());
    try {
      for (const auto& pair : pairs) {
        auto pf = detail::forward_pair(tape, lex_vars, syn_vars, st, pair);
        terms.push_back(pf.term);
        term_sum += static_cast<double>(tape.value(pf.term).data[0]);
        if (detail::pair_correct(pf.distance, pf.y, st.cfg.margin)) ++correct;
      }
      // E = 1/(2N) * sum of per-pair terms.
      auto total = tape.scale(
          tape.sum(tape.concat(std::span<const typename Tape<T>::Var>(terms))),
          T(1) / (T(2) * static_cast<T>(pairs.size())));
      tape.backward(total);
      st.opt.step();
    } catch (const NonFiniteError& e) {
      throw TrainAbortError(st.step, e.what());
    }
    ++st.step;
    stats.pairs += pairs.size();
  }
  ++st.epoch;
  if (stats.pairs > 0) {
    stats.mean_loss = term_sum / (2.0 * static_cast<double>(stats.pairs));
    stats.pair_accuracy = static_cast<double>(correct) /
                          static_cast<double>(stats.pairs);
  }
  return stats;
}

// Loss and threshold accuracy on fixed pairs; no parameter updates.
template <typename T>
EpochStats evaluate_pairs(TrainState<T>& st, std::span<const SentencePair> pairs) {
  EpochStats stats;
  if (pairs.empty()) return stats;
  Tape<T> tape;
  double term_sum = 0.0;
  std::size_t correct = 0;
  auto lex_vars = SeqEncoderVars<T>::bind(tape, st.lexical.seq);
  auto syn_vars = SeqEncoderVars<T>::bind(tape, st.syntactic.seq);
  for (const auto& pair : pairs) {
    auto pf = detail::forward_pair(tape, lex_vars, syn_vars, st, pair);
    term_sum += static_cast<double>(tape.value(pf.term).data[0]);
    if (detail::pair_correct(pf.distance, pf.y, st.cfg.margin)) ++correct;
  }
  stats.pairs = pairs.size();
  stats.mean_loss = term_sum / (2.0 * static_cast<double>(pairs.size()));
  stats.pair_accuracy = static_cast<double>(correct) /
                        static_cast<double>(pairs.size());
  return stats;
}

// Builds a fixed evaluation pairing from a held-out corpus.
inline std::vector<SentencePair> build_eval_pairs(std::span<const TrainItem> dev,
                                                  std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xe7a1));
  return make_pairs(dev, rng);
}

// The lexical encoder's input embedding table keyed by the word vocabulary;
// this is the artifact the training run exists to produce. Reserved ids are
// not exported.
template <typename T>
EmbeddingTable export_structural_embeddings(const TrainState<T>& st,
                                            const Vocab& words) {
  const Tensor<T>& table = st.lexical.embedding.value;
  EmbeddingTable out(table.cols());
  std::vector<double> row(table.cols());
  for (std::size_t i = 0; i < words.token_count(); ++i) {
    const int id = static_cast<int>(i) + 2;
    const T* src = table.row_ptr(static_cast<std::size_t>(id));
    for (std::size_t j = 0; j < table.cols(); ++j) {
      row[j] = static_cast<double>(src[j]);
    }
    out.add(words.token(id), row);
  }
  return out;
}

template <typename T>
void save_train_state(const std::string& path, TrainState<T>& st,
                      nlohmann::json meta = nlohmann::json::object()) {
  std::vector<NamedTensor<T>> tensors;
  std::vector<Param<T>*> params = st.all_params();
  for (auto* p : params) tensors.push_back({p->name, &p->value});
  for (std::size_t i = 0; i < st.opt.param_count(); ++i) {
    tensors.push_back({"adam.m." + st.opt.param(i).name, &st.opt.moment1(i)});
    tensors.push_back({"adam.v." + st.opt.param(i).name, &st.opt.moment2(i)});
  }
  meta["epoch"] = st.epoch;
  meta["step"] = st.step;
  meta["seed"] = st.seed;
  meta["margin"] = static_cast<double>(st.cfg.margin);
  meta["adam_t"] = st.opt.step_count();
  save_checkpoint(path, tensors, meta);
}

// st must already be initialized with matching configurations.
template <typename T>
nlohmann::json load_train_state(const std::string& path, TrainState<T>& st) {
  Checkpoint<T> ck = load_checkpoint<T>(path);
  restore_params(ck, st.all_params());
  for (std::size_t i = 0; i < st.opt.param_count(); ++i) {
    const std::string name = st.opt.param(i).name;
    if (const Tensor<T>* m = ck.find("adam.m." + name)) st.opt.moment1(i) = *m;
    if (const Tensor<T>* v = ck.find("adam.v." + name)) st.opt.moment2(i) = *v;
  }
  st.epoch = ck.meta.value("epoch", std::int64_t{0});
  st.step = ck.meta.value("step", std::int64_t{0});
  st.seed = ck.meta.value("seed", std::uint64_t{0});
  st.cfg.margin = static_cast<T>(ck.meta.value("margin", 1.0));
  st.opt.set_step_count(ck.meta.value("adam_t", std::int64_t{0}));
  return ck.meta;
}

}  // namespace structvec
