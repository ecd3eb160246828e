#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <span>
#include <vector>

#include "structvec/siamese.hpp"
#include "structvec/synth.hpp"

#include "gradcheck.hpp"

using namespace structvec;
using structvec::testing::gradcheck;

namespace {

using DTape = Tape<double>;
using DVar = DTape::Var;

TrainItem item(std::vector<int> w, std::vector<int> l) {
  return TrainItem{std::move(w), std::move(l)};
}

EncoderConfig small_encoder(std::size_t vocab, std::size_t embed,
                            std::size_t max_len) {
  EncoderConfig cfg;
  cfg.vocab_size = vocab;
  cfg.embed_dim = embed;
  cfg.lstm_hidden = 4;
  cfg.attn_hidden = 5;
  cfg.attn_hops = 2;
  cfg.mlp_hidden = 8;
  cfg.output_dim = 6;
  cfg.max_len = max_len;
  return cfg;
}

// Capacity that reliably escapes the constant-distance plateau at the
// paper's learning rate on a 120-sentence corpus.
EncoderConfig convergence_encoder(std::size_t vocab, std::size_t embed,
                                  std::size_t max_len) {
  EncoderConfig cfg;
  cfg.vocab_size = vocab;
  cfg.embed_dim = embed;
  cfg.lstm_hidden = 24;
  cfg.attn_hidden = 16;
  cfg.attn_hops = 2;
  cfg.mlp_hidden = 48;
  cfg.output_dim = 24;
  cfg.max_len = max_len;
  return cfg;
}

double direct_contrastive(double d, int y, double margin) {
  if (y == 1) return d * d;
  const double h = std::max(margin - d, 0.0);
  return h * h;
}

// Tape route for a pair with an exact prescribed distance.
double tape_contrastive(double d, int y, double margin) {
  DTape tape;
  DVar a = tape.leaf(Tensor<double>::from_vector({d}));
  DVar b = tape.leaf(Tensor<double>::from_vector({0.0}));
  auto [term, dist] = contrastive_loss(tape, a, b, y, margin);
  (void)dist;
  return tape.value(term).data[0];
}

struct SmallRun {
  Vocab words{};
  Vocab labels{};
  std::vector<TrainItem> train, dev;
};

SmallRun prepare_small_corpus(std::size_t n_train, std::size_t n_dev,
                              std::uint64_t seed) {
  SynthStyle style;
  auto train_recs = synth_corpus(n_train, style, seed);
  auto dev_recs = synth_corpus(n_dev, style, seed + 1000);
  SmallRun run;
  run.words = build_word_vocab(train_recs, 1);
  std::vector<ParseTree> trees;
  for (const auto& r : train_recs) trees.push_back(parse_bracketed(r.tree_text));
  run.labels = build_label_vocab(trees, 77);
  run.train = encode_corpus(train_recs, run.words, run.labels, 40, 80);
  run.dev = encode_corpus(dev_recs, run.words, run.labels, 40, 80);
  return run;
}

}  // namespace

TEST_CASE("make_pairs on a batch of two forces the swap") {
  std::vector<TrainItem> batch = {item({2}, {2}), item({3}, {3})};
  Rng rng(1);
  auto pairs = make_pairs(batch, rng);
  REQUIRE(pairs.size() == 4);
  CHECK(pairs[0].y == 1);
  CHECK(pairs[0].word_ids == std::vector<int>{2});
  CHECK(pairs[0].label_ids == std::vector<int>{2});
  CHECK(pairs[1].y == 0);
  CHECK(pairs[1].word_ids == std::vector<int>{2});
  CHECK(pairs[1].label_ids == std::vector<int>{3});
  CHECK(pairs[3].y == 0);
  CHECK(pairs[3].label_ids == std::vector<int>{2});
}

TEST_CASE("make_pairs rejects undersized batches") {
  std::vector<TrainItem> batch = {item({2}, {2})};
  Rng rng(1);
  CHECK_THROWS_AS(make_pairs(batch, rng), BatchTooSmallError);
}

TEST_CASE("make_pairs emits a derangement, never a self pair") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TrainItem> batch;
    const std::size_t n = 2 + rng.below(9);
    for (std::size_t i = 0; i < n; ++i) {
      batch.push_back(item({static_cast<int>(i)}, {static_cast<int>(i)}));
    }
    auto pairs = make_pairs(batch, rng);
    REQUIRE(pairs.size() == 2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& false_pair = pairs[2 * i + 1];
      CHECK(false_pair.y == 0);
      CHECK(false_pair.word_ids != false_pair.label_ids);
    }
  }
}

TEST_CASE("false partner slots are uniform (chi-square)") {
  const std::size_t n = 5;
  std::vector<TrainItem> batch;
  for (std::size_t i = 0; i < n; ++i) {
    batch.push_back(item({static_cast<int>(i)}, {static_cast<int>(i)}));
  }
  Rng rng(3);
  const int draws = 10000;
  std::vector<std::vector<int>> counts(n, std::vector<int>(n, 0));
  for (int d = 0; d < draws; ++d) {
    auto pairs = make_pairs(batch, rng);
    for (std::size_t i = 0; i < n; ++i) {
      const int partner = pairs[2 * i + 1].label_ids[0];
      ++counts[i][static_cast<std::size_t>(partner)];
    }
  }
  // Each row: n-1 allowed slots, expected draws/(n-1) each.
  const double expected = static_cast<double>(draws) / (n - 1);
  double chi2 = 0.0;
  int cells = 0;
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(counts[i][i] == 0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double diff = counts[i][j] - expected;
      chi2 += diff * diff / expected;
      ++cells;
    }
  }
  // 20 cells, 5 constrained rows -> ~15 dof; 99.9th percentile ~ 37.7.
  CHECK(chi2 < 45.0);
  (void)cells;
}

TEST_CASE("contrastive loss identities") {
  DTape tape;
  DVar a = tape.leaf(Tensor<double>::from_vector({0.3, -0.7}));
  auto [same, d0] = contrastive_loss(tape, a, a, 1, 1.0);
  CHECK(tape.value(same).data[0] == 0.0);
  CHECK(tape.value(d0).data[0] == 0.0);

  CHECK(tape_contrastive(1.5, 0, 1.0) == 0.0);  // hinge saturated
  CHECK(tape_contrastive(0.4, 0, 1.0) == doctest::Approx(0.36).epsilon(1e-12));
}

TEST_CASE("contrastive loss matches the direct formula on random triples") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double d = rng.uniform(0.0, 2.0);
    const double margin = rng.uniform(0.1, 2.0);
    const int y = rng.below(2) == 0 ? 0 : 1;
    const double via_tape = tape_contrastive(d, y, margin);
    const double direct = direct_contrastive(d, y, margin);
    CHECK(std::abs(via_tape - direct) <= 1e-12);
  }
}

TEST_CASE("contrastive loss rejects dimension mismatches") {
  DTape tape;
  DVar a = tape.leaf(Tensor<double>::zeros({3}));
  DVar b = tape.leaf(Tensor<double>::zeros({4}));
  CHECK_THROWS_AS(contrastive_loss(tape, a, b, 1, 1.0), DimMismatchError);
}

TEST_CASE("full siamese loss gradient matches finite differences") {
  TrainState<double> st;
  EncoderConfig lex = small_encoder(11, 4, 9);
  lex.lstm_hidden = 3;
  lex.attn_hidden = 5;
  lex.mlp_hidden = 7;
  EncoderConfig syn = small_encoder(9, 3, 12);
  syn.lstm_hidden = 3;
  syn.attn_hidden = 5;
  syn.mlp_hidden = 7;
  st.init(lex, syn, {}, 42);

  const std::vector<SentencePair> pairs = {
      {{1, 4, 7}, {2, 5, 5, 3}, 1},
      {{1, 4, 7}, {6, 2, 8}, 0},
  };
  auto run = [&](bool do_backward) {
    DTape tape;
    auto lex_vars = SeqEncoderVars<double>::bind(tape, st.lexical.seq);
    auto syn_vars = SeqEncoderVars<double>::bind(tape, st.syntactic.seq);
    std::vector<DVar> terms;
    for (const auto& p : pairs) {
      DVar v_lex = encode(tape, lex_vars, st.lexical,
                          std::span<const int>(p.word_ids));
      DVar v_str = encode(tape, syn_vars, st.syntactic,
                          std::span<const int>(p.label_ids));
      auto [term, d] = contrastive_loss(tape, v_lex, v_str, p.y, 1.0);
      (void)d;
      terms.push_back(term);
    }
    DVar loss = tape.scale(tape.sum(tape.concat(std::span<const DVar>(terms))),
                           1.0 / (2.0 * static_cast<double>(pairs.size())));
    if (do_backward) tape.backward(loss);
    return tape.value(loss).data[0];
  };
  auto res = gradcheck(st.all_params(), run);
  CAPTURE(res.worst_where);
  CAPTURE(res.worst_abs_err);
  CHECK(res.ok);
}

TEST_CASE("evaluate_pairs never mutates parameters") {
  TrainState<double> st;
  st.init(small_encoder(12, 4, 10), small_encoder(10, 3, 14), {}, 5);
  const std::vector<SentencePair> dev = {
      {{2, 3}, {2, 4, 5}, 1},
      {{4, 5, 6}, {3, 3}, 0},
  };
  std::vector<std::vector<double>> before;
  for (auto* p : st.all_params()) before.push_back(p->value.data);
  auto stats = evaluate_pairs(st, std::span<const SentencePair>(dev));
  CHECK(stats.pairs == 2);
  std::size_t i = 0;
  for (auto* p : st.all_params()) {
    CHECK(p->value.data == before[i]);
    ++i;
  }
}

TEST_CASE("perfectly aligned encoders classify genuine-only dev at 1.0") {
  TrainState<double> st;
  st.init(small_encoder(12, 4, 10), small_encoder(10, 3, 14), {}, 6);
  // Zero MLP output layers force identical (zero) sentence vectors.
  st.lexical.seq.mlp_w2.value.fill(0.0);
  st.lexical.seq.mlp_b2.value.fill(0.0);
  st.syntactic.seq.mlp_w2.value.fill(0.0);
  st.syntactic.seq.mlp_b2.value.fill(0.0);
  const std::vector<SentencePair> dev = {
      {{2, 3}, {2, 4, 5}, 1},
      {{4, 5}, {6, 7}, 1},
  };
  auto stats = evaluate_pairs(st, std::span<const SentencePair>(dev));
  CHECK(stats.pair_accuracy == 1.0);
  CHECK(stats.mean_loss == 0.0);
}

TEST_CASE("training on a small synthetic corpus converges") {
  SmallRun run = prepare_small_corpus(120, 40, 11);
  TrainState<double> st;
  st.init(convergence_encoder(run.words.size(), 32, 40),
          convergence_encoder(run.labels.size(), 16, 80), {}, 21);

  auto dev_pairs = build_eval_pairs(run.dev, 99);
  EpochStats first{};
  EpochStats last{};
  for (int epoch = 0; epoch < 50; ++epoch) {
    Rng rng(mix_seed(21, static_cast<std::uint64_t>(epoch)));
    auto stats = train_epoch(st, std::span<const TrainItem>(run.train), 16, rng);
    CHECK(std::isfinite(stats.mean_loss));
    CHECK(stats.mean_loss > 0.0);
    if (epoch == 0) first = stats;
    last = stats;
  }
  CHECK(last.mean_loss < first.mean_loss);
  CHECK(last.pair_accuracy > 0.8);
  // 120 train sentences overfit, but held-out pairs must stay well above
  // chance once the structural signal is learned.
  auto dev_stats = evaluate_pairs(st, std::span<const SentencePair>(dev_pairs));
  CHECK(dev_stats.pair_accuracy > 0.55);
}

TEST_CASE("same seed reproduces per-epoch losses bit-for-bit") {
  SmallRun run = prepare_small_corpus(60, 10, 13);
  auto train_once = [&run]() {
    std::vector<double> losses;
    TrainState<double> st;
    st.init(small_encoder(run.words.size(), 8, 40),
            small_encoder(run.labels.size(), 6, 80), {}, 33);
    for (int epoch = 0; epoch < 3; ++epoch) {
      Rng rng(mix_seed(33, static_cast<std::uint64_t>(epoch)));
      auto stats = train_epoch(st, std::span<const TrainItem>(run.train), 8, rng);
      losses.push_back(stats.mean_loss);
    }
    return losses;
  };
  CHECK(train_once() == train_once());
}

TEST_CASE("export keeps one row per real vocabulary token") {
  SmallRun run = prepare_small_corpus(40, 5, 17);
  TrainState<double> st;
  st.init(small_encoder(run.words.size(), 8, 40),
          small_encoder(run.labels.size(), 6, 80), {}, 3);
  EmbeddingTable table = export_structural_embeddings(st, run.words);
  CHECK(table.size() == run.words.token_count());
  CHECK(table.dim() == 8);
  const std::string tok = run.words.tokens().front();
  REQUIRE(table.row(tok) != nullptr);
  const double* row = table.row(tok);
  const double* src = st.lexical.embedding.value.row_ptr(2);
  for (std::size_t j = 0; j < 8; ++j) CHECK(row[j] == src[j]);
}

TEST_CASE("train state checkpoints round trip bit-exactly") {
  SmallRun run = prepare_small_corpus(40, 5, 19);
  TrainState<double> st;
  st.init(small_encoder(run.words.size(), 8, 40),
          small_encoder(run.labels.size(), 6, 80), {}, 7);
  Rng rng(mix_seed(7, 0));
  train_epoch(st, std::span<const TrainItem>(run.train), 8, rng);

  const std::string p1 = "siamese_ck1.ssrl1";
  const std::string p2 = "siamese_ck2.ssrl1";
  save_train_state(p1, st);

  TrainState<double> st2;
  st2.init(small_encoder(run.words.size(), 8, 40),
           small_encoder(run.labels.size(), 6, 80), {}, 99);
  load_train_state(p1, st2);
  CHECK(st2.epoch == st.epoch);
  CHECK(st2.step == st.step);
  save_train_state(p2, st2);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  CHECK(!s1.empty());
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("resumed training continues identically") {
  SmallRun run = prepare_small_corpus(40, 5, 23);
  auto mk = [&run](std::uint64_t seed) {
    auto st = std::make_unique<TrainState<double>>();
    st->init(small_encoder(run.words.size(), 8, 40),
             small_encoder(run.labels.size(), 6, 80), {}, seed);
    return st;
  };
  auto a = mk(55);
  for (int e = 0; e < 2; ++e) {
    Rng rng(mix_seed(55, static_cast<std::uint64_t>(e)));
    train_epoch(*a, std::span<const TrainItem>(run.train), 8, rng);
  }
  const std::string path = "siamese_resume.ssrl1";
  save_train_state(path, *a);
  Rng rng3(mix_seed(55, 2));
  auto stats_direct = train_epoch(*a, std::span<const TrainItem>(run.train), 8, rng3);

  auto b = mk(55);
  load_train_state(path, *b);
  Rng rng3b(mix_seed(55, 2));
  auto stats_resumed = train_epoch(*b, std::span<const TrainItem>(run.train), 8, rng3b);
  CHECK(stats_direct.mean_loss == stats_resumed.mean_loss);
  CHECK(stats_direct.pair_accuracy == stats_resumed.pair_accuracy);
  std::remove(path.c_str());
}
