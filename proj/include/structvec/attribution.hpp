#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
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

namespace structvec {

struct EmptyDocumentError : std::runtime_error {
  EmptyDocumentError() : std::runtime_error("document has no usable sentence") {}
};

struct SingleClassCorpusError : std::runtime_error {
  SingleClassCorpusError() : std::runtime_error("attribution corpus has fewer than 2 authors") {}
};

struct UnknownLabelError : std::runtime_error {
  explicit UnknownLabelError(const std::string& label)
      : std::runtime_error("label not present at training time: " + label),
        label(label) {}
  std::string label;
};

enum class EmbeddingMode { kStructural, kLexical, kStructuralLexical };

inline const char* embedding_mode_name(EmbeddingMode m) {
  switch (m) {
    case EmbeddingMode::kStructural: return "structural";
    case EmbeddingMode::kLexical: return "lexical";
    default: return "structural+lexical";
  }
}

// Frozen input embeddings for the document encoder. Tokens missing from a
// table contribute zeros in that table's slice.
struct EmbeddingSet {
  EmbeddingMode mode = EmbeddingMode::kStructural;
  const EmbeddingTable* structural = nullptr;
  const EmbeddingTable* lexical = nullptr;

  std::size_t dim() const {
    switch (mode) {
      case EmbeddingMode::kStructural: return structural->dim();
      case EmbeddingMode::kLexical: return lexical->dim();
      default: return structural->dim() + lexical->dim();
    }
  }

  void fill_row(const std::string& token, double* dst) const {
    std::size_t offset = 0;
    if (mode != EmbeddingMode::kLexical) {
      const double* r = structural->row(token);
      for (std::size_t j = 0; j < structural->dim(); ++j) {
        dst[j] = r ? r[j] : 0.0;
      }
      offset = structural->dim();
    }
    if (mode != EmbeddingMode::kStructural) {
      const double* r = lexical->row(token);
      for (std::size_t j = 0; j < lexical->dim(); ++j) {
        dst[offset + j] = r ? r[j] : 0.0;
      }
    }
  }
};

struct HanConfig {
  EmbeddingMode mode = EmbeddingMode::kStructural;
  // word level
  std::size_t word_hidden = 32;       // u_w
  std::size_t word_attn_hidden = 16;  // d_a at word level
  std::size_t word_attn_hops = 2;
  std::size_t word_mlp_hidden = 64;
  std::size_t sentence_vec_dim = 48;  // word-level output
  // sentence level
  std::size_t sent_hidden = 32;       // u_s; document vector is 2*u_s
  std::size_t sent_attn_hidden = 16;
  std::size_t sent_attn_hops = 2;
  // caps
  std::size_t max_sentences = 30;
  std::size_t max_tokens = 40;
  // training
  double lr = 5e-4;
  std::size_t batch_docs = 8;
  std::size_t max_epochs = 40;
  std::size_t patience = 5;
};

// Word-level encoder over frozen embeddings, sentence-level BiLSTM plus
// attention, then a softmax classifier over the hop-averaged document
// vector (dimension 2 * sent_hidden).
template <typename T>
struct HanModel {
  HanConfig cfg;
  std::size_t input_dim = 0;
  std::vector<std::string> classes;

  SeqEncoderParams<T> word;
  LstmParams<T> sent_fwd, sent_bwd;
  Param<T> sent_attn_w1, sent_attn_w2;
  Param<T> cls_w, cls_b;
  Adam<T> opt;

  HanModel() = default;
  HanModel(const HanModel&) = delete;
  HanModel& operator=(const HanModel&) = delete;

  void init(const HanConfig& c, std::size_t in_dim,
            std::vector<std::string> class_labels, std::uint64_t seed) {
    cfg = c;
    input_dim = in_dim;
    classes = std::move(class_labels);
    Rng rng(mix_seed(seed, 0x4a11));
    word.init("han.word", in_dim, c.word_hidden, c.word_attn_hidden,
              c.word_attn_hops, c.word_mlp_hidden, c.sentence_vec_dim, rng);
    sent_fwd.init("han.sent.fwd", c.sentence_vec_dim, c.sent_hidden, rng);
    sent_bwd.init("han.sent.bwd", c.sentence_vec_dim, c.sent_hidden, rng);
    sent_attn_w1 = Param<T>("han.sent.attn_w1",
                            xavier_uniform<T>({c.sent_attn_hidden, 2 * c.sent_hidden},
                                              2 * c.sent_hidden,
                                              c.sent_attn_hidden, rng));
    sent_attn_w2 = Param<T>("han.sent.attn_w2",
                            xavier_uniform<T>({c.sent_attn_hops, c.sent_attn_hidden},
                                              c.sent_attn_hidden,
                                              c.sent_attn_hops, rng));
    cls_w = Param<T>("han.cls_w",
                     xavier_uniform<T>({classes.size(), 2 * c.sent_hidden},
                                       2 * c.sent_hidden, classes.size(), rng));
    cls_b = Param<T>("han.cls_b", Tensor<T>::zeros({classes.size()}));
    opt = Adam<T>(params(), {.lr = static_cast<T>(c.lr)});
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out = word.params();
    sent_fwd.collect(out);
    sent_bwd.collect(out);
    out.push_back(&sent_attn_w1);
    out.push_back(&sent_attn_w2);
    out.push_back(&cls_w);
    out.push_back(&cls_b);
    return out;
  }

  std::size_t class_id(const std::string& label) const {
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i] == label) return i;
    }
    throw UnknownLabelError(label);
  }
};

template <typename T>
struct HanVars {
  using Var = typename Tape<T>::Var;
  SeqEncoderVars<T> word;
  Var sf_in, sf_rec, sf_b, sb_in, sb_rec, sb_b;
  Var s_aw1, s_aw2;
  Var cw, cb;

  static HanVars bind(Tape<T>& tape, HanModel<T>& m) {
    HanVars v;
    v.word = SeqEncoderVars<T>::bind(tape, m.word);
    v.sf_in = tape.param(m.sent_fwd.w_in);
    v.sf_rec = tape.param(m.sent_fwd.w_rec);
    v.sf_b = tape.param(m.sent_fwd.bias);
    v.sb_in = tape.param(m.sent_bwd.w_in);
    v.sb_rec = tape.param(m.sent_bwd.w_rec);
    v.sb_b = tape.param(m.sent_bwd.bias);
    v.s_aw1 = tape.param(m.sent_attn_w1);
    v.s_aw2 = tape.param(m.sent_attn_w2);
    v.cw = tape.param(m.cls_w);
    v.cb = tape.param(m.cls_b);
    return v;
  }
};

namespace han_detail {

// Frozen input matrix for one sentence, truncated to the token cap.
template <typename T>
Tensor<T> sentence_input(const std::vector<std::string>& tokens,
                         const EmbeddingSet& tables, std::size_t max_tokens) {
  const std::size_t n = std::min(tokens.size(), max_tokens);
  const std::size_t d = tables.dim();
  Tensor<T> x = Tensor<T>::zeros({n, d});
  std::vector<double> row(d);
  for (std::size_t i = 0; i < n; ++i) {
    tables.fill_row(tokens[i], row.data());
    for (std::size_t j = 0; j < d; ++j) x.at(i, j) = static_cast<T>(row[j]);
  }
  return x;
}

}  // namespace han_detail

// Document vector: word-level encoder per sentence, sentence-level BiLSTM +
// attention, attention hops averaged. Output dimension is 2 * sent_hidden.
template <typename T>
typename Tape<T>::Var encode_document(Tape<T>& tape, const HanVars<T>& v,
                                      HanModel<T>& m,
                                      const std::vector<std::vector<std::string>>& sentences,
                                      const EmbeddingSet& tables) {
  using Var = typename Tape<T>::Var;
  std::vector<Var> sent_vecs;
  const std::size_t limit = std::min(sentences.size(), m.cfg.max_sentences);
  for (std::size_t s = 0; s < limit; ++s) {
    if (sentences[s].empty()) continue;
    Var x = tape.leaf(han_detail::sentence_input<T>(sentences[s], tables,
                                                    m.cfg.max_tokens));
    sent_vecs.push_back(encode_seq(tape, v.word, m.cfg.word_hidden, x));
  }
  if (sent_vecs.empty()) throw EmptyDocumentError();

  Var s_rows = tape.concat_rows(std::span<const Var>(sent_vecs));
  // sentence-level BiLSTM
  const std::size_t n = sent_vecs.size();
  std::vector<std::size_t> fwd_order(n), bwd_order(n);
  for (std::size_t t = 0; t < n; ++t) {
    fwd_order[t] = t;
    bwd_order[t] = n - 1 - t;
  }
  auto hf = detail::lstm_direction<T>(tape, v.sf_in, v.sf_rec, v.sf_b,
                                      m.cfg.sent_hidden, s_rows, fwd_order);
  auto hb = detail::lstm_direction<T>(tape, v.sb_in, v.sb_rec, v.sb_b,
                                      m.cfg.sent_hidden, s_rows, bwd_order);
  std::vector<Var> h_rows(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Var both[2] = {hf[t], hb[t]};
    h_rows[t] = tape.concat(std::span<const Var>(both, 2));
  }
  Var hs = tape.concat_rows(std::span<const Var>(h_rows));
  Var scores = tape.matmul(v.s_aw2, tape.tanh_(tape.matmul(v.s_aw1, tape.transpose(hs))));
  Var attn = tape.softmax_rows(scores);
  Var ms = tape.matmul(attn, hs);  // [hops x 2u_s]
  const std::size_t hops = m.cfg.sent_attn_hops;
  Var hop_mean = tape.leaf(
      Tensor<T>::full({hops}, T(1) / static_cast<T>(hops)));
  return tape.matmul(hop_mean, ms);
}

template <typename T>
typename Tape<T>::Var document_logits(Tape<T>& tape, const HanVars<T>& v,
                                      HanModel<T>& m,
                                      const std::vector<std::vector<std::string>>& sentences,
                                      const EmbeddingSet& tables) {
  return tape.add(tape.matmul(v.cw, encode_document(tape, v, m, sentences, tables)),
                  v.cb);
}

// -log softmax(logits)[target]
template <typename T>
typename Tape<T>::Var cross_entropy(Tape<T>& tape, typename Tape<T>::Var logits,
                                    std::size_t target) {
  auto probs = tape.softmax_rows(tape.as_row(logits));
  auto p = tape.slice(tape.flatten(probs), target, 1);
  return tape.scale(tape.log_(p), T(-1));
}

struct EvalReport {
  double accuracy = 0.0;
  std::vector<std::string> classes;
  std::vector<double> per_class_accuracy;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
};

template <typename T>
std::size_t predict_document(HanModel<T>& m, const DocumentRecord& doc,
                             const EmbeddingSet& tables) {
  Tape<T> tape;
  auto vars = HanVars<T>::bind(tape, m);
  auto logits = document_logits(tape, vars, m, doc.sentences, tables);
  const auto& lv = tape.value(logits);
  std::size_t arg = 0;
  for (std::size_t k = 1; k < lv.numel(); ++k) {
    if (lv.data[k] > lv.data[arg]) arg = k;
  }
  return arg;
}

template <typename T>
EvalReport evaluate(HanModel<T>& m, const std::vector<DocumentRecord>& docs,
                    const EmbeddingSet& tables) {
  EvalReport report;
  report.classes = m.classes;
  const std::size_t c = m.classes.size();
  report.confusion.assign(c, std::vector<std::size_t>(c, 0));
  std::size_t hits = 0;
  for (const auto& doc : docs) {
    const std::size_t truth = m.class_id(doc.author);
    const std::size_t pred = predict_document(m, doc, tables);
    ++report.confusion[truth][pred];
    if (pred == truth) ++hits;
  }
  report.accuracy = docs.empty() ? 0.0
                                 : static_cast<double>(hits) /
                                       static_cast<double>(docs.size());
  report.per_class_accuracy.assign(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t row_total = 0;
    for (std::size_t j = 0; j < c; ++j) row_total += report.confusion[k][j];
    if (row_total > 0) {
      report.per_class_accuracy[k] =
          static_cast<double>(report.confusion[k][k]) /
          static_cast<double>(row_total);
    }
  }
  return report;
}

struct TrainCurvePoint {
  std::size_t epoch;
  double train_loss;
  double dev_accuracy;
};

// Cross-entropy training with Adam and early stopping on dev accuracy.
// Returns the per-epoch curve; the model is left at its best-dev weights.
template <typename T>
std::vector<TrainCurvePoint> train_classifier(
    HanModel<T>& m, const std::vector<DocumentRecord>& train,
    const std::vector<DocumentRecord>& dev, const EmbeddingSet& tables,
    std::uint64_t seed) {
  {
    std::set<std::string> authors;
    for (const auto& d : train) authors.insert(d.author);
    if (authors.size() < 2) throw SingleClassCorpusError();
  }
  std::vector<TrainCurvePoint> curve;
  std::vector<Tensor<T>> best;
  double best_dev = -1.0;
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  Tape<T> tape;
  for (std::size_t epoch = 0; epoch < m.cfg.max_epochs; ++epoch) {
    Rng rng(mix_seed(seed, 0xbead + epoch));
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size();
         start += m.cfg.batch_docs) {
      const std::size_t end =
          std::min(order.size(), start + m.cfg.batch_docs);
      tape.clear();
      auto vars = HanVars<T>::bind(tape, m);
      std::vector<typename Tape<T>::Var> losses;
      for (std::size_t i = start; i < end; ++i) {
        const auto& doc = train[order[i]];
        auto logits = document_logits(tape, vars, m, doc.sentences, tables);
        losses.push_back(cross_entropy(tape, logits, m.class_id(doc.author)));
      }
      auto batch_loss = tape.mean(
          tape.concat(std::span<const typename Tape<T>::Var>(losses)));
      loss_sum += static_cast<double>(tape.value(batch_loss).data[0]) *
                  static_cast<double>(losses.size());
      seen += losses.size();
      tape.backward(batch_loss);
      m.opt.step();
    }
    const double dev_acc = evaluate(m, dev, tables).accuracy;
    curve.push_back({epoch, loss_sum / static_cast<double>(seen), dev_acc});
    if (dev_acc > best_dev) {
      best_dev = dev_acc;
      best.clear();
      for (auto* p : m.params()) best.push_back(p->value);
      since_best = 0;
    } else if (++since_best >= m.cfg.patience) {
      break;
    }
  }
  if (!best.empty()) {
    std::size_t i = 0;
    for (auto* p : m.params()) p->value = best[i++];
  }
  return curve;
}

inline std::vector<std::string> author_labels(
    const std::vector<DocumentRecord>& docs) {
  std::set<std::string> s;
  for (const auto& d : docs) s.insert(d.author);
  return {s.begin(), s.end()};
}

template <typename T>
void save_han(const std::string& path, HanModel<T>& m,
              nlohmann::json meta = nlohmann::json::object()) {
  std::vector<NamedTensor<T>> tensors;
  for (auto* p : m.params()) tensors.push_back({p->name, &p->value});
  meta["classes"] = m.classes;
  meta["mode"] = embedding_mode_name(m.cfg.mode);
  meta["input_dim"] = m.input_dim;
  save_checkpoint(path, tensors, meta);
}

template <typename T>
nlohmann::json load_han(const std::string& path, HanModel<T>& m) {
  Checkpoint<T> ck = load_checkpoint<T>(path);
  restore_params(ck, m.params());
  return ck.meta;
}

}  // namespace structvec
