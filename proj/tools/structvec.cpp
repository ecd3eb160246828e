#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "structvec/pipeline.hpp"

using namespace structvec;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;  // section.key=value
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "key = value config file");
  cmd->add_option("--set", opts.overrides,
                  "override a config value (section.key=value), repeatable");
  cmd->add_option("--seed", opts.seed, "override main.seed")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
}

KvConfig resolve_config(const CommonOpts& opts) {
  KvConfig cfg;
  if (!opts.config_path.empty()) cfg = KvConfig::parse_file(opts.config_path);
  for (const auto& kv : opts.overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects section.key=value, got " + kv);
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.seed_set) cfg.set("main.seed", std::to_string(opts.seed));
  return cfg;
}

// exit 1: the inputs or configuration are at fault; exit 2: runtime failure.
int classify_and_report(const std::exception& e) {
  const auto* user = dynamic_cast<const std::runtime_error*>(&e);
  const bool validation =
      dynamic_cast<const ConfigError*>(&e) ||
      dynamic_cast<const TreeParseError*>(&e) ||
      dynamic_cast<const EmptyLabelError*>(&e) ||
      dynamic_cast<const MalformedLineError*>(&e) ||
      dynamic_cast<const EmbeddingFormatError*>(&e) ||
      dynamic_cast<const EmptyCorpusError*>(&e) ||
      dynamic_cast<const DegenerateBinsError*>(&e) ||
      dynamic_cast<const InsufficientTargetsError*>(&e) ||
      dynamic_cast<const AllOovSentencesError*>(&e) ||
      dynamic_cast<const UnknownLabelError*>(&e) ||
      dynamic_cast<const SingleClassCorpusError*>(&e) ||
      dynamic_cast<const EmptyDocumentError*>(&e) ||
      dynamic_cast<const EmptySentenceError*>(&e) ||
      dynamic_cast<const BatchTooSmallError*>(&e) ||
      dynamic_cast<const DimMismatchError*>(&e) ||
      dynamic_cast<const CheckpointError*>(&e);
  std::cerr << "error: " << e.what() << "\n";
  (void)user;
  return validation ? 1 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structural sentence-embedding trainer and evaluators"};
  app.require_subcommand(1);

  CommonOpts synth_opts;
  CLI::App* synth = app.add_subcommand(
      "synth", "generate the synthetic template corpus and author documents");
  add_common(synth, synth_opts);

  CommonOpts lin_opts;
  std::string lin_in, lin_out;
  CLI::App* lin = app.add_subcommand(
      "linearize", "parse a treebank-lines file and emit label sequences");
  lin->add_option("input", lin_in, "treebank-lines file")->required();
  lin->add_option("output", lin_out, "JSONL output")->required();
  add_common(lin, lin_opts);

  CommonOpts vocab_opts;
  std::string vocab_in, vocab_labels_out, vocab_words_out;
  CLI::App* vocab = app.add_subcommand(
      "build-vocab", "build label and word vocabularies from a JSONL corpus");
  vocab->add_option("input", vocab_in, "corpus JSONL")->required();
  vocab->add_option("--labels-out", vocab_labels_out)->required();
  vocab->add_option("--words-out", vocab_words_out)->required();
  add_common(vocab, vocab_opts);

  CommonOpts train_opts;
  CLI::App* train = app.add_subcommand(
      "train", "co-train the lexical and syntactic encoders");
  add_common(train, train_opts);

  CommonOpts export_opts;
  std::string export_ck, export_out;
  CLI::App* exp = app.add_subcommand(
      "export-embeddings", "write the structural embedding text file");
  exp->add_option("checkpoint", export_ck)->required();
  exp->add_option("output", export_out)->required();
  add_common(exp, export_opts);

  CommonOpts pgen_opts;
  CLI::App* pgen = app.add_subcommand(
      "probe-gen", "emit the generatable probing task TSVs");
  add_common(pgen, pgen_opts);

  CommonOpts peval_opts;
  std::string peval_tasks, peval_report;
  std::vector<std::string> peval_embeddings;
  CLI::App* peval = app.add_subcommand(
      "probe-eval", "evaluate embedding files on every task in a directory");
  peval->add_option("--tasks", peval_tasks, "task directory")->required();
  peval->add_option("--embeddings", peval_embeddings, "embedding text files")
      ->required()
      ->expected(-1);
  peval->add_option("--report", peval_report, "report path prefix")->required();
  add_common(peval, peval_opts);

  CommonOpts cooc_opts;
  std::string cooc_in, cooc_out;
  CLI::App* cooc = app.add_subcommand(
      "cooc", "build co-occurrence control embeddings from a JSONL corpus");
  cooc->add_option("input", cooc_in)->required();
  cooc->add_option("output", cooc_out)->required();
  add_common(cooc, cooc_opts);

  CommonOpts atrain_opts;
  CLI::App* atrain = app.add_subcommand(
      "attr-train", "train the hierarchical attention attribution classifier");
  add_common(atrain, atrain_opts);

  CommonOpts aeval_opts;
  CLI::App* aeval = app.add_subcommand(
      "attr-eval", "evaluate a trained attribution model");
  add_common(aeval, aeval_opts);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      pipeline::run_synth(resolve_config(synth_opts));
    } else if (lin->parsed()) {
      pipeline::run_linearize(resolve_config(lin_opts), lin_in, lin_out,
                              std::cout);
    } else if (vocab->parsed()) {
      pipeline::run_build_vocab(resolve_config(vocab_opts), vocab_in,
                                vocab_labels_out, vocab_words_out, std::cout);
    } else if (train->parsed()) {
      pipeline::run_train(resolve_config(train_opts), std::cout);
    } else if (exp->parsed()) {
      pipeline::run_export_embeddings(resolve_config(export_opts), export_ck,
                                      export_out);
    } else if (pgen->parsed()) {
      pipeline::run_probe_gen(resolve_config(pgen_opts), std::cout);
    } else if (peval->parsed()) {
      pipeline::run_probe_eval(resolve_config(peval_opts), peval_tasks,
                               peval_embeddings, peval_report, std::cout);
    } else if (cooc->parsed()) {
      pipeline::run_cooc(resolve_config(cooc_opts), cooc_in, cooc_out);
    } else if (atrain->parsed()) {
      pipeline::run_attr_train(resolve_config(atrain_opts), std::cout);
    } else if (aeval->parsed()) {
      pipeline::run_attr_eval(resolve_config(aeval_opts), std::cout);
    }
  } catch (const std::exception& e) {
    return classify_and_report(e);
  }
  return 0;
}
