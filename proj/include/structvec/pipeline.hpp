#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "structvec/attribution.hpp"
#include "structvec/config.hpp"
#include "structvec/corpus.hpp"
#include "structvec/embeddings.hpp"
#include "structvec/probing.hpp"
#include "structvec/siamese.hpp"
#include "structvec/synth.hpp"
#include "structvec/treebank.hpp"
#include "structvec/vocab.hpp"

namespace structvec::pipeline {

namespace fs = std::filesystem;

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

inline void ensure_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---- encoder configuration ----

inline EncoderConfig encoder_config(const KvConfig& cfg, const std::string& section,
                                    std::size_t vocab_size, std::size_t embed_dim,
                                    std::size_t max_len) {
  EncoderConfig e;
  e.vocab_size = vocab_size;
  e.embed_dim = cfg.get_u64(section + ".embed_dim", embed_dim);
  e.lstm_hidden = cfg.get_u64(section + ".lstm_hidden", 64);
  e.attn_hidden = cfg.get_u64(section + ".attn_hidden", 64);
  e.attn_hops = cfg.get_u64(section + ".attn_hops", 4);
  e.mlp_hidden = cfg.get_u64(section + ".mlp_hidden", 256);
  e.output_dim = cfg.get_u64(section + ".output_dim", 128);
  e.max_len = cfg.get_u64(section + ".max_len", max_len);
  return e;
}

inline EncoderConfig lexical_config(const KvConfig& cfg, std::size_t vocab) {
  return encoder_config(cfg, "encoder.lexical", vocab, 300, 40);
}

inline EncoderConfig syntactic_config(const KvConfig& cfg, std::size_t vocab) {
  return encoder_config(cfg, "encoder.syntactic", vocab, 100, 80);
}

// ---- synth ----

inline std::vector<std::string> run_synth(const KvConfig& cfg) {
  SynthConfig sc;
  sc.seed = cfg.get_u64("main.seed", 1);
  sc.train_sentences = cfg.get_u64("synth.train_sentences", 3000);
  sc.dev_sentences = cfg.get_u64("synth.dev_sentences", 300);
  sc.p_adjective = cfg.get_double("synth.p_adjective", 0.4);
  sc.p_preposition = cfg.get_double("synth.p_preposition", 0.35);
  sc.train_docs_per_author = cfg.get_u64("synth.train_docs", 60);
  sc.dev_docs_per_author = cfg.get_u64("synth.dev_docs", 15);
  sc.test_docs_per_author = cfg.get_u64("synth.test_docs", 15);
  sc.sentences_per_doc = cfg.get_u64("synth.sentences_per_doc", 12);
  const std::string out_dir = cfg.require("synth.out_dir");
  ensure_dir(out_dir);

  SynthStyle style;
  style.p_adjective = sc.p_adjective;
  style.p_preposition = sc.p_preposition;
  auto train = synth_corpus(sc.train_sentences, style, sc.seed);
  auto dev = synth_corpus(sc.dev_sentences, style, mix_seed(sc.seed, 0xdee));
  auto attr = synth_attribution(sc);

  std::vector<std::string> outputs;
  auto emit_corpus = [&](const std::string& name,
                         const std::vector<SentenceRecord>& recs) {
    const std::string path = join_path(out_dir, name);
    write_sentence_corpus(path, recs);
    outputs.push_back(path);
  };
  auto emit_docs = [&](const std::string& name,
                       const std::vector<DocumentRecord>& docs) {
    const std::string path = join_path(out_dir, name);
    write_document_corpus(path, docs);
    outputs.push_back(path);
  };
  emit_corpus("train.jsonl", train);
  emit_corpus("dev.jsonl", dev);
  emit_docs("attr_train.jsonl", attr.train);
  emit_docs("attr_dev.jsonl", attr.dev);
  emit_docs("attr_test.jsonl", attr.test);

  const std::string pos_path = join_path(out_dir, "vocab_pos.tsv");
  {
    std::ofstream out(pos_path, std::ios::trunc);
    for (const auto& [w, p] : SynthVocabulary::instance().word_pos()) {
      out << w << "\t" << p << "\n";
    }
  }
  outputs.push_back(pos_path);
  write_manifest(join_path(out_dir, "synth.manifest.json"), "synth", cfg,
                 sc.seed, outputs);
  return outputs;
}

// ---- linearize ----

inline void run_linearize(const KvConfig& cfg, const std::string& in_path,
                          const std::string& out_path, std::ostream& log) {
  auto trees = read_treebank_lines(in_path);
  std::map<std::string, std::size_t> histogram;
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + out_path);
  for (const auto& tree : trees) {
    auto labels = linearize(tree);
    for (const auto& lab : labels) ++histogram[lab];
    nlohmann::json j;
    j["tokens"] = tree_tokens(tree);
    j["labels"] = labels;
    out << j.dump() << "\n";
  }
  log << "linearized " << trees.size() << " trees, "
      << histogram.size() << " distinct labels\n";
  std::vector<std::pair<std::string, std::size_t>> ranked(histogram.begin(),
                                                          histogram.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (std::size_t i = 0; i < ranked.size() && i < 20; ++i) {
    log << "  " << ranked[i].first << "\t" << ranked[i].second << "\n";
  }
  write_manifest(out_path + ".manifest.json", "linearize", cfg,
                 cfg.get_u64("main.seed", 1), {out_path});
}

// ---- vocabularies ----

inline void run_build_vocab(const KvConfig& cfg, const std::string& corpus_path,
                            const std::string& labels_out,
                            const std::string& words_out, std::ostream& log) {
  auto corpus = read_sentence_corpus(corpus_path);
  std::vector<ParseTree> trees;
  trees.reserve(corpus.size());
  for (const auto& rec : corpus) trees.push_back(parse_bracketed(rec.tree_text));
  Vocab labels = build_label_vocab(trees, cfg.get_u64("vocab.label_cap", 77));
  Vocab words = build_word_vocab(corpus, cfg.get_u64("vocab.word_min_freq", 2));
  labels.save(labels_out);
  words.save(words_out);
  log << "labels: " << labels.token_count() << " kept\n";
  log << "words: " << words.token_count() << " kept\n";
  write_manifest(labels_out + ".manifest.json", "build-vocab", cfg,
                 cfg.get_u64("main.seed", 1), {labels_out, words_out});
}

// ---- training ----

struct TrainOutcome {
  double best_dev_accuracy = 0.0;
  double final_dev_loss = 0.0;
  std::string best_checkpoint;
  std::string csv_path;
};

template <typename T>
TrainOutcome run_train_impl(const KvConfig& cfg, std::ostream& log) {
  const std::uint64_t seed = cfg.get_u64("main.seed", 1);
  const std::string out_dir = cfg.require("train.out_dir");
  ensure_dir(out_dir);
  auto train_recs = read_sentence_corpus(cfg.require("train.corpus"));
  auto dev_recs = read_sentence_corpus(cfg.require("train.dev"));

  std::vector<ParseTree> trees;
  trees.reserve(train_recs.size());
  for (const auto& rec : train_recs) trees.push_back(parse_bracketed(rec.tree_text));
  Vocab labels = build_label_vocab(trees, cfg.get_u64("vocab.label_cap", 77));
  Vocab words = build_word_vocab(train_recs, cfg.get_u64("vocab.word_min_freq", 2));
  words.save(join_path(out_dir, "words.txt"));
  labels.save(join_path(out_dir, "labels.txt"));

  EncoderConfig lex_cfg = lexical_config(cfg, words.size());
  EncoderConfig syn_cfg = syntactic_config(cfg, labels.size());
  auto train_items =
      encode_corpus(train_recs, words, labels, lex_cfg.max_len, syn_cfg.max_len);
  auto dev_items =
      encode_corpus(dev_recs, words, labels, lex_cfg.max_len, syn_cfg.max_len);
  auto dev_pairs = build_eval_pairs(std::span<const TrainItem>(dev_items),
                                    mix_seed(seed, 0xde7));

  SiameseConfig<T> scfg;
  scfg.margin = static_cast<T>(cfg.get_double("train.margin", 1.0));
  scfg.batch_size = cfg.get_u64("train.batch_size", 400);
  scfg.adam.lr = static_cast<T>(cfg.get_double("train.lr", 5e-4));
  const std::size_t epochs = cfg.get_u64("train.epochs", 30);
  const std::size_t checkpoint_every = cfg.get_u64("train.checkpoint_every", 5);

  auto st = std::make_unique<TrainState<T>>();
  st->init(lex_cfg, syn_cfg, scfg, seed);

  nlohmann::json meta;
  meta["words"] = words.tokens();
  meta["labels"] = labels.tokens();
  meta["lexical"] = {{"embed_dim", lex_cfg.embed_dim},
                     {"lstm_hidden", lex_cfg.lstm_hidden},
                     {"attn_hidden", lex_cfg.attn_hidden},
                     {"attn_hops", lex_cfg.attn_hops},
                     {"mlp_hidden", lex_cfg.mlp_hidden},
                     {"output_dim", lex_cfg.output_dim},
                     {"max_len", lex_cfg.max_len}};
  meta["syntactic"] = {{"embed_dim", syn_cfg.embed_dim},
                       {"lstm_hidden", syn_cfg.lstm_hidden},
                       {"attn_hidden", syn_cfg.attn_hidden},
                       {"attn_hops", syn_cfg.attn_hops},
                       {"mlp_hidden", syn_cfg.mlp_hidden},
                       {"output_dim", syn_cfg.output_dim},
                       {"max_len", syn_cfg.max_len}};

  const std::string csv_path = join_path(out_dir, "loss.csv");
  std::ofstream csv(csv_path, std::ios::trunc);
  csv << "epoch,train_loss,train_accuracy,dev_loss,dev_accuracy\n";

  TrainOutcome outcome;
  outcome.csv_path = csv_path;
  outcome.best_checkpoint = join_path(out_dir, "best.ssrl1");
  double best_dev = -1.0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Rng rng(mix_seed(seed, epoch));
    EpochStats tr = train_epoch(*st, std::span<const TrainItem>(train_items),
                                scfg.batch_size, rng);
    EpochStats dv = evaluate_pairs(*st, std::span<const SentencePair>(dev_pairs));
    csv << epoch << "," << fmt_double(tr.mean_loss) << ","
        << fmt_double(tr.pair_accuracy) << "," << fmt_double(dv.mean_loss)
        << "," << fmt_double(dv.pair_accuracy) << "\n";
    csv.flush();
    log << "epoch " << epoch << " train_loss " << tr.mean_loss
        << " train_acc " << tr.pair_accuracy << " dev_loss " << dv.mean_loss
        << " dev_acc " << dv.pair_accuracy << "\n";
    if (dv.pair_accuracy > best_dev) {
      best_dev = dv.pair_accuracy;
      save_train_state(outcome.best_checkpoint, *st, meta);
    }
    if (checkpoint_every > 0 && (epoch + 1) % checkpoint_every == 0) {
      save_train_state(join_path(out_dir, "epoch_" + std::to_string(epoch) +
                                              ".ssrl1"),
                       *st, meta);
    }
    outcome.final_dev_loss = dv.mean_loss;
  }
  outcome.best_dev_accuracy = best_dev;
  save_train_state(join_path(out_dir, "last.ssrl1"), *st, meta);
  write_manifest(join_path(out_dir, "train.manifest.json"), "train", cfg, seed,
                 {csv_path, outcome.best_checkpoint,
                  join_path(out_dir, "last.ssrl1")});
  return outcome;
}

inline TrainOutcome run_train(const KvConfig& cfg, std::ostream& log) {
  const std::string precision = cfg.get("main.precision", "f64");
  if (precision == "f32") return run_train_impl<float>(cfg, log);
  if (precision == "f64") return run_train_impl<double>(cfg, log);
  throw ConfigError("main.precision must be f32 or f64");
}

// ---- export ----

// Reads the lexical embedding table straight out of a checkpoint; the word
// list travels in the checkpoint meta, so no other inputs are needed.
inline void run_export_embeddings(const KvConfig& cfg,
                                  const std::string& checkpoint_path,
                                  const std::string& out_path) {
  const std::string precision = cfg.get("main.precision", "f64");
  nlohmann::json meta;
  EmbeddingTable table(0);
  auto build = [&](auto tag) {
    using T = decltype(tag);
    Checkpoint<T> ck = load_checkpoint<T>(checkpoint_path);
    const Tensor<T>* emb = ck.find("lex.embedding");
    if (!emb) throw CheckpointError("checkpoint has no lex.embedding tensor");
    const auto words =
        ck.meta.at("words").template get<std::vector<std::string>>();
    EmbeddingTable t(emb->cols());
    std::vector<double> row(emb->cols());
    for (std::size_t i = 0; i < words.size(); ++i) {
      const T* src = emb->row_ptr(i + 2);  // skip the two reserved rows
      for (std::size_t j = 0; j < emb->cols(); ++j) {
        row[j] = static_cast<double>(src[j]);
      }
      t.add(words[i], row);
    }
    table = std::move(t);
    meta = ck.meta;
  };
  if (precision == "f32") {
    build(float{});
  } else {
    build(double{});
  }
  table.save(out_path);
  write_manifest(out_path + ".manifest.json", "export-embeddings", cfg,
                 cfg.get_u64("main.seed", 1), {out_path});
}

// ---- probes ----

inline std::vector<std::string> run_probe_gen(const KvConfig& cfg,
                                              std::ostream& log) {
  const std::uint64_t seed = cfg.get_u64("main.seed", 1);
  auto corpus = read_sentence_corpus(cfg.require("probe.corpus"));
  const std::string dir = cfg.require("probe.tasks_dir");
  ensure_dir(dir);

  std::vector<ProbingTask> tasks;
  tasks.push_back(gen_sentlen(corpus, cfg.get_u64("probe.sentlen_bins", 6), seed));
  tasks.push_back(gen_wc(corpus, cfg.get_u64("probe.wc_targets", 10), seed));
  tasks.push_back(gen_bshift(corpus, seed));
  tasks.push_back(gen_treedepth(corpus, seed,
                                cfg.get_u64("probe.treedepth_min", 3),
                                cfg.get_u64("probe.treedepth_max", 9)));
  tasks.push_back(gen_topconst(corpus, cfg.get_u64("probe.topconst_k", 20), seed));
  tasks.push_back(gen_tense(corpus, seed));
  tasks.push_back(gen_subjnum(corpus, seed));
  tasks.push_back(gen_objnum(corpus, seed));

  std::vector<std::string> outputs;
  for (const auto& task : tasks) {
    const std::string path = join_path(dir, task.name + ".tsv");
    task.save_tsv(path);
    outputs.push_back(path);
    log << task.name << ": " << task.examples.size() << " examples, "
        << task.labels().size() << " classes (tr "
        << task.split_size(Split::kTrain) << ", va "
        << task.split_size(Split::kVal) << ", te "
        << task.split_size(Split::kTest) << ")\n";
  }
  write_manifest(join_path(dir, "probe_gen.manifest.json"), "probe-gen", cfg,
                 seed, outputs);
  return outputs;
}

inline std::string stem_of(const std::string& path) {
  return fs::path(path).stem().string();
}

inline std::vector<ProbeResult> run_probe_eval(
    const KvConfig& cfg, const std::string& tasks_dir,
    const std::vector<std::string>& embedding_paths,
    const std::string& report_prefix, std::ostream& log) {
  std::vector<std::string> task_files;
  for (const auto& entry : fs::directory_iterator(tasks_dir)) {
    if (entry.path().extension() == ".tsv") {
      task_files.push_back(entry.path().string());
    }
  }
  std::sort(task_files.begin(), task_files.end());
  if (task_files.empty()) throw ConfigError("no .tsv tasks in " + tasks_dir);

  ProbeHyper hyper;
  hyper.l2 = cfg.get_double("probe.l2", 1e-4);
  hyper.lr = cfg.get_double("probe.lr", 0.1);
  hyper.max_epochs = cfg.get_u64("probe.epochs", 200);

  std::vector<ProbeResult> results;
  for (const auto& emb_path : embedding_paths) {
    EmbeddingTable table = EmbeddingTable::load(emb_path);
    for (const auto& task_file : task_files) {
      ProbingTask task = ProbingTask::load_tsv(task_file, stem_of(task_file));
      ProbeResult r = eval_probe(task, table, hyper);
      r.embedding = stem_of(emb_path);
      log << r.task << " / " << r.embedding << ": acc "
          << r.test_accuracy << " (majority " << r.majority_accuracy << ")\n";
      results.push_back(std::move(r));
    }
  }

  // text report, one row per (task, embedding-set)
  const std::string txt_path = report_prefix + ".txt";
  {
    std::ofstream out(txt_path, std::ios::trunc);
    out << "task            embedding                 accuracy   majority\n";
    char buf[160];
    for (const auto& r : results) {
      std::snprintf(buf, sizeof(buf), "%-15s %-25s %8.4f %10.4f\n",
                    r.task.c_str(), r.embedding.c_str(), r.test_accuracy,
                    r.majority_accuracy);
      out << buf;
    }
  }
  const std::string json_path = report_prefix + ".json";
  {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : results) {
      j.push_back({{"task", r.task},
                   {"embedding", r.embedding},
                   {"test_accuracy", r.test_accuracy},
                   {"majority_accuracy", r.majority_accuracy},
                   {"classes", r.classes},
                   {"train_size", r.train_size},
                   {"val_size", r.val_size},
                   {"test_size", r.test_size}});
    }
    std::ofstream out(json_path, std::ios::trunc);
    out << j.dump(2) << "\n";
  }
  write_manifest(report_prefix + ".manifest.json", "probe-eval", cfg,
                 cfg.get_u64("main.seed", 1), {txt_path, json_path});
  return results;
}

// ---- co-occurrence control embeddings ----

inline void run_cooc(const KvConfig& cfg, const std::string& corpus_path,
                     const std::string& out_path) {
  auto corpus = read_sentence_corpus(corpus_path);
  std::vector<std::vector<std::string>> sentences;
  sentences.reserve(corpus.size());
  for (const auto& rec : corpus) sentences.push_back(rec.tokens);
  EmbeddingTable table =
      build_cooccurrence_table(sentences, cfg.get_u64("probe.cooc_window", 2));
  table.save(out_path);
  write_manifest(out_path + ".manifest.json", "cooc", cfg,
                 cfg.get_u64("main.seed", 1), {out_path});
}

// ---- attribution ----

inline EmbeddingMode parse_mode(const std::string& name) {
  if (name == "structural") return EmbeddingMode::kStructural;
  if (name == "lexical") return EmbeddingMode::kLexical;
  if (name == "structural+lexical" || name == "structural_lexical") {
    return EmbeddingMode::kStructuralLexical;
  }
  throw ConfigError("unknown embedding mode " + name);
}

inline HanConfig han_config(const KvConfig& cfg) {
  HanConfig h;
  h.mode = parse_mode(cfg.get("attr.mode", "structural"));
  h.word_hidden = cfg.get_u64("attr.word_hidden", 32);
  h.word_attn_hidden = cfg.get_u64("attr.word_attn_hidden", 16);
  h.word_attn_hops = cfg.get_u64("attr.word_attn_hops", 2);
  h.word_mlp_hidden = cfg.get_u64("attr.word_mlp_hidden", 64);
  h.sentence_vec_dim = cfg.get_u64("attr.sentence_vec_dim", 48);
  h.sent_hidden = cfg.get_u64("attr.sent_hidden", 32);
  h.sent_attn_hidden = cfg.get_u64("attr.sent_attn_hidden", 16);
  h.sent_attn_hops = cfg.get_u64("attr.sent_attn_hops", 2);
  h.max_sentences = cfg.get_u64("attr.max_sentences", 30);
  h.max_tokens = cfg.get_u64("attr.max_tokens", 40);
  h.lr = cfg.get_double("attr.lr", 5e-4);
  h.batch_docs = cfg.get_u64("attr.batch_docs", 8);
  h.max_epochs = cfg.get_u64("attr.epochs", 40);
  h.patience = cfg.get_u64("attr.patience", 5);
  return h;
}

struct LoadedTables {
  std::unique_ptr<EmbeddingTable> structural;
  std::unique_ptr<EmbeddingTable> lexical;
  EmbeddingSet set;
};

inline LoadedTables load_tables(const KvConfig& cfg, EmbeddingMode mode) {
  LoadedTables t;
  t.set.mode = mode;
  if (mode != EmbeddingMode::kLexical) {
    t.structural = std::make_unique<EmbeddingTable>(
        EmbeddingTable::load(cfg.require("attr.structural")));
    t.set.structural = t.structural.get();
  }
  if (mode != EmbeddingMode::kStructural) {
    t.lexical = std::make_unique<EmbeddingTable>(
        EmbeddingTable::load(cfg.require("attr.lexical")));
    t.set.lexical = t.lexical.get();
  }
  return t;
}

struct AttrTrainOutcome {
  double best_dev_accuracy = 0.0;
  std::string model_path;
};

inline AttrTrainOutcome run_attr_train(const KvConfig& cfg, std::ostream& log) {
  const std::uint64_t seed = cfg.get_u64("main.seed", 1);
  const std::string out_dir = cfg.require("attr.out_dir");
  ensure_dir(out_dir);
  auto train = read_document_corpus(cfg.require("attr.train"));
  auto dev = read_document_corpus(cfg.require("attr.dev"));
  HanConfig hcfg = han_config(cfg);
  LoadedTables tables = load_tables(cfg, hcfg.mode);

  auto model = std::make_unique<HanModel<double>>();
  model->init(hcfg, tables.set.dim(), author_labels(train), seed);
  auto curve = train_classifier(*model, train, dev, tables.set, seed);

  const std::string curve_path = join_path(out_dir, "attr_curve.csv");
  {
    std::ofstream csv(curve_path, std::ios::trunc);
    csv << "epoch,train_loss,dev_accuracy\n";
    for (const auto& p : curve) {
      csv << p.epoch << "," << fmt_double(p.train_loss) << ","
          << fmt_double(p.dev_accuracy) << "\n";
    }
  }
  AttrTrainOutcome outcome;
  for (const auto& p : curve) {
    outcome.best_dev_accuracy = std::max(outcome.best_dev_accuracy,
                                         p.dev_accuracy);
  }
  outcome.model_path = join_path(out_dir, "han.ssrl1");
  nlohmann::json meta;
  meta["word_hidden"] = hcfg.word_hidden;
  meta["word_attn_hidden"] = hcfg.word_attn_hidden;
  meta["word_attn_hops"] = hcfg.word_attn_hops;
  meta["word_mlp_hidden"] = hcfg.word_mlp_hidden;
  meta["sentence_vec_dim"] = hcfg.sentence_vec_dim;
  meta["sent_hidden"] = hcfg.sent_hidden;
  meta["sent_attn_hidden"] = hcfg.sent_attn_hidden;
  meta["sent_attn_hops"] = hcfg.sent_attn_hops;
  meta["max_sentences"] = hcfg.max_sentences;
  meta["max_tokens"] = hcfg.max_tokens;
  save_han(outcome.model_path, *model, meta);
  log << "best dev accuracy " << outcome.best_dev_accuracy << "\n";
  write_manifest(join_path(out_dir, "attr_train.manifest.json"), "attr-train",
                 cfg, seed, {curve_path, outcome.model_path});
  return outcome;
}

inline EvalReport run_attr_eval(const KvConfig& cfg, std::ostream& log) {
  auto test = read_document_corpus(cfg.require("attr.test"));
  const std::string model_path = cfg.require("attr.model");
  const std::string report_prefix = cfg.require("attr.report");
  HanConfig hcfg = han_config(cfg);

  Checkpoint<double> ck = load_checkpoint<double>(model_path);
  hcfg.mode = parse_mode(ck.meta.at("mode").get<std::string>());
  hcfg.word_hidden = ck.meta.value("word_hidden", hcfg.word_hidden);
  hcfg.word_attn_hidden = ck.meta.value("word_attn_hidden", hcfg.word_attn_hidden);
  hcfg.word_attn_hops = ck.meta.value("word_attn_hops", hcfg.word_attn_hops);
  hcfg.word_mlp_hidden = ck.meta.value("word_mlp_hidden", hcfg.word_mlp_hidden);
  hcfg.sentence_vec_dim = ck.meta.value("sentence_vec_dim", hcfg.sentence_vec_dim);
  hcfg.sent_hidden = ck.meta.value("sent_hidden", hcfg.sent_hidden);
  hcfg.sent_attn_hidden = ck.meta.value("sent_attn_hidden", hcfg.sent_attn_hidden);
  hcfg.sent_attn_hops = ck.meta.value("sent_attn_hops", hcfg.sent_attn_hops);
  hcfg.max_sentences = ck.meta.value("max_sentences", hcfg.max_sentences);
  hcfg.max_tokens = ck.meta.value("max_tokens", hcfg.max_tokens);
  LoadedTables tables = load_tables(cfg, hcfg.mode);
  auto model = std::make_unique<HanModel<double>>();
  model->init(hcfg, ck.meta.at("input_dim").get<std::size_t>(),
              ck.meta.at("classes").get<std::vector<std::string>>(), 0);
  restore_params(ck, model->params());

  EvalReport report = evaluate(*model, test, tables.set);
  log << "test accuracy " << report.accuracy << "\n";

  const std::string json_path = report_prefix + ".json";
  {
    nlohmann::json j;
    j["accuracy"] = report.accuracy;
    j["mode"] = embedding_mode_name(hcfg.mode);
    j["classes"] = report.classes;
    j["per_class_accuracy"] = report.per_class_accuracy;
    j["confusion"] = report.confusion;
    std::ofstream out(json_path, std::ios::trunc);
    out << j.dump(2) << "\n";
  }
  const std::string txt_path = report_prefix + ".txt";
  {
    std::ofstream out(txt_path, std::ios::trunc);
    out << "test accuracy: " << fmt_double(report.accuracy) << "\n\n";
    out << "confusion matrix (rows = true author, cols = predicted)\n";
    out << "                ";
    for (const auto& c : report.classes) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%12s", c.c_str());
      out << buf;
    }
    out << "\n";
    for (std::size_t i = 0; i < report.classes.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%-16s", report.classes[i].c_str());
      out << buf;
      for (std::size_t j = 0; j < report.classes.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "%12zu", report.confusion[i][j]);
        out << buf;
      }
      out << "\n";
    }
  }
  write_manifest(report_prefix + ".manifest.json", "attr-eval", cfg,
                 cfg.get_u64("main.seed", 1), {json_path, txt_path});
  return report;
}

}  // namespace structvec::pipeline
