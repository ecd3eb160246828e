#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "structvec/corpus.hpp"
#include "structvec/rng.hpp"

namespace structvec {

// Template-generated corpus with trees emitted directly from the templates,
// a ~300-word vocabulary partitioned by POS, and four synthetic authors
// defined by distinct template mixtures. Used for desk-scale training and
// the acceptance runs.

struct SynthConfig {
  std::size_t train_sentences = 3000;
  std::size_t dev_sentences = 300;
  std::uint64_t seed = 1;
  double p_adjective = 0.4;
  double p_preposition = 0.35;
  // attribution corpus
  std::size_t train_docs_per_author = 60;
  std::size_t dev_docs_per_author = 15;
  std::size_t test_docs_per_author = 15;
  std::size_t sentences_per_doc = 12;
};

class SynthVocabulary {
 public:
  static const SynthVocabulary& instance() {
    static SynthVocabulary v;
    return v;
  }

  const std::vector<std::string>& noun_stems() const { return noun_stems_; }
  const std::vector<std::string>& verb_stems() const { return verb_stems_; }
  const std::vector<std::string>& adjectives() const { return adjectives_; }
  const std::vector<std::string>& prepositions() const { return preps_; }

  // word -> POS tag for every surface form that can occur.
  const std::vector<std::pair<std::string, std::string>>& word_pos() const {
    return word_pos_;
  }

  std::size_t word_count() const { return word_pos_.size(); }

 private:
  SynthVocabulary() {
    // CVCV pseudo-words; the initial consonant set separates the classes so
    // all surface forms stay distinct.
    noun_stems_ = make_stems({"b", "d", "g", "k"}, 50);
    verb_stems_ = make_stems({"f", "l", "m", "n"}, 45);
    adjectives_ = make_stems({"p", "r", "s", "t"}, 40);
    preps_ = {"in", "on", "near", "with"};

    for (const auto& n : noun_stems_) {
      word_pos_.emplace_back(n, "NN");
      word_pos_.emplace_back(n + "s", "NNS");
    }
    for (const auto& v : verb_stems_) {
      word_pos_.emplace_back(v + "s", "VBZ");
      word_pos_.emplace_back(v, "VBP");
      word_pos_.emplace_back(v + "ed", "VBD");
    }
    for (const auto& a : adjectives_) word_pos_.emplace_back(a, "JJ");
    for (const auto& p : preps_) word_pos_.emplace_back(p, "IN");
    const std::vector<std::pair<std::string, std::string>> function_words = {
        {"the", "DT"},   {"a", "DT"},   {"and", "CC"},  {"because", "IN"},
        {"is", "VBZ"},   {"are", "VBP"}, {"was", "VBD"}, {"were", "VBD"},
        {"does", "VBZ"}, {"do", "VBP"}, {"did", "VBD"}, {".", "."},
        {",", ","},      {"?", "."}};
    for (const auto& fw : function_words) word_pos_.push_back(fw);

    std::set<std::string> seen;
    for (const auto& [w, p] : word_pos_) seen.insert(w);
    if (seen.size() != word_pos_.size()) {
      throw std::logic_error("synthetic vocabulary has colliding forms");
    }
  }

  static std::vector<std::string> make_stems(
      const std::vector<std::string>& onsets, std::size_t count) {
    static const std::vector<std::string> vowels = {"a", "e", "i", "o", "u"};
    static const std::vector<std::string> codas = {"l", "m", "n", "r", "t",
                                                   "v", "z"};
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (std::size_t i = 0; out.size() < count; ++i) {
      const auto& on = onsets[i % onsets.size()];
      const auto& v1 = vowels[(i / onsets.size()) % vowels.size()];
      const auto& c = codas[(i / (onsets.size() * vowels.size())) % codas.size()];
      const auto& v2 = vowels[(i / 7) % vowels.size()];
      std::string w = on + v1 + c + v2;
      if (seen.insert(w).second) out.push_back(std::move(w));
    }
    return out;
  }

  std::vector<std::string> noun_stems_, verb_stems_, adjectives_, preps_;
  std::vector<std::pair<std::string, std::string>> word_pos_;
};

// Per-draw style knobs; authors bend these, the plain corpus keeps defaults.
struct SynthStyle {
  std::vector<double> template_weights = {1, 1, 1, 1, 1, 1};
  double p_adjective = 0.4;
  double p_preposition = 0.35;
  // optional lexical preference: stem indices drawn with extra weight
  std::vector<std::size_t> preferred_nouns;
  std::vector<std::size_t> preferred_verbs;
};

namespace synth_detail {

inline std::size_t weighted_pick(const std::vector<double>& w, Rng& rng) {
  double total = 0;
  for (double x : w) total += x;
  double r = rng.uniform() * total;
  for (std::size_t i = 0; i < w.size(); ++i) {
    r -= w[i];
    if (r < 0) return i;
  }
  return w.size() - 1;
}

inline std::size_t pick_preferred(std::size_t n,
                                  const std::vector<std::size_t>& preferred,
                                  Rng& rng) {
  if (preferred.empty() || rng.uniform() < 0.4) return rng.below(n);
  return preferred[rng.below(preferred.size())];
}

struct Fragment {
  std::string tree;
  std::vector<std::string> tokens;

  void append(const Fragment& other) {
    tree += other.tree;
    tokens.insert(tokens.end(), other.tokens.begin(), other.tokens.end());
  }
};

inline Fragment noun_phrase(const SynthStyle& style, bool plural,
                            bool allow_pp, Rng& rng) {
  const auto& voc = SynthVocabulary::instance();
  Fragment f;
  const bool use_a = !plural && rng.uniform() < 0.3;
  const std::string det = use_a ? "a" : "the";
  const std::size_t ni =
      pick_preferred(voc.noun_stems().size(), style.preferred_nouns, rng);
  const std::string noun =
      plural ? voc.noun_stems()[ni] + "s" : voc.noun_stems()[ni];
  const std::string ntag = plural ? "NNS" : "NN";

  f.tree = "(NP (DT " + det + ")";
  f.tokens.push_back(det);
  if (rng.uniform() < style.p_adjective) {
    const std::string adj = voc.adjectives()[rng.below(voc.adjectives().size())];
    f.tree += " (JJ " + adj + ")";
    f.tokens.push_back(adj);
  }
  f.tree += " (" + ntag + " " + noun + ")";
  f.tokens.push_back(noun);
  if (allow_pp && rng.uniform() < style.p_preposition) {
    const std::string prep =
        voc.prepositions()[rng.below(voc.prepositions().size())];
    const std::string pnoun =
        voc.noun_stems()[rng.below(voc.noun_stems().size())];
    f.tree += " (PP (IN " + prep + ") (NP (DT the) (NN " + pnoun + ")))";
    f.tokens.push_back(prep);
    f.tokens.push_back("the");
    f.tokens.push_back(pnoun);
  }
  f.tree += ")";
  return f;
}

struct VerbForm {
  std::string word;
  std::string tag;
};

inline VerbForm verb_form(const SynthStyle& style, bool plural, bool past,
                          Rng& rng) {
  const auto& voc = SynthVocabulary::instance();
  const std::size_t vi =
      pick_preferred(voc.verb_stems().size(), style.preferred_verbs, rng);
  const std::string& stem = voc.verb_stems()[vi];
  if (past) return {stem + "ed", "VBD"};
  if (plural) return {stem, "VBP"};
  return {stem + "s", "VBZ"};
}

// A clause "(S NP (VP V [NP]))" without final punctuation.
inline Fragment clause(const SynthStyle& style, bool transitive, Rng& rng) {
  const bool plural = rng.uniform() < 0.5;
  const bool past = rng.uniform() < 0.5;
  Fragment subj = noun_phrase(style, plural, true, rng);
  VerbForm v = verb_form(style, plural, past, rng);
  Fragment f;
  f.tree = "(S " + subj.tree + " (VP (" + v.tag + " " + v.word + ")";
  f.tokens = subj.tokens;
  f.tokens.push_back(v.word);
  if (transitive) {
    Fragment obj = noun_phrase(style, rng.uniform() < 0.5, true, rng);
    f.tree += " " + obj.tree;
    f.tokens.insert(f.tokens.end(), obj.tokens.begin(), obj.tokens.end());
  }
  f.tree += "))";
  return f;
}

}  // namespace synth_detail

// Draws one sentence from the six structure templates:
//   0 intransitive, 1 transitive, 2 compound (S CC S), 3 fronted subordinate
//   clause, 4 auxiliary question inversion, 5 copular predicate.
inline SentenceRecord synth_sentence(const SynthStyle& style, Rng& rng) {
  using namespace synth_detail;
  const auto& voc = SynthVocabulary::instance();
  const std::size_t tmpl = weighted_pick(style.template_weights, rng);
  const bool plural = rng.uniform() < 0.5;
  const bool past = rng.uniform() < 0.5;
  Fragment f;
  switch (tmpl) {
    case 0: {
      Fragment subj = noun_phrase(style, plural, true, rng);
      VerbForm v = verb_form(style, plural, past, rng);
      f.tree = "(S " + subj.tree + " (VP (" + v.tag + " " + v.word + ")) (. .))";
      f.tokens = subj.tokens;
      f.tokens.push_back(v.word);
      f.tokens.push_back(".");
      break;
    }
    case 1: {
      Fragment subj = noun_phrase(style, plural, true, rng);
      VerbForm v = verb_form(style, plural, past, rng);
      Fragment obj = noun_phrase(style, rng.uniform() < 0.5, true, rng);
      f.tree = "(S " + subj.tree + " (VP (" + v.tag + " " + v.word + ") " +
               obj.tree + ") (. .))";
      f.tokens = subj.tokens;
      f.tokens.push_back(v.word);
      f.tokens.insert(f.tokens.end(), obj.tokens.begin(), obj.tokens.end());
      f.tokens.push_back(".");
      break;
    }
    case 2: {
      Fragment left = clause(style, false, rng);
      Fragment right = clause(style, true, rng);
      f.tree = "(S " + left.tree + " (CC and) " + right.tree + " (. .))";
      f.tokens = left.tokens;
      f.tokens.push_back("and");
      f.tokens.insert(f.tokens.end(), right.tokens.begin(), right.tokens.end());
      f.tokens.push_back(".");
      break;
    }
    case 3: {
      Fragment sub = clause(style, false, rng);
      Fragment main_subj = noun_phrase(style, plural, true, rng);
      VerbForm v = verb_form(style, plural, past, rng);
      f.tree = "(S (SBAR (IN because) " + sub.tree + ") (, ,) " +
               main_subj.tree + " (VP (" + v.tag + " " + v.word + ")) (. .))";
      f.tokens.push_back("because");
      f.tokens.insert(f.tokens.end(), sub.tokens.begin(), sub.tokens.end());
      f.tokens.push_back(",");
      f.tokens.insert(f.tokens.end(), main_subj.tokens.begin(),
                      main_subj.tokens.end());
      f.tokens.push_back(v.word);
      f.tokens.push_back(".");
      break;
    }
    case 4: {
      const std::string aux = past ? "did" : (plural ? "do" : "does");
      const std::string aux_tag = past ? "VBD" : (plural ? "VBP" : "VBZ");
      Fragment subj = noun_phrase(style, plural, false, rng);
      const std::string& stem = voc.verb_stems()[synth_detail::pick_preferred(
          voc.verb_stems().size(), style.preferred_verbs, rng)];
      Fragment obj = noun_phrase(style, rng.uniform() < 0.5, true, rng);
      f.tree = "(SQ (" + aux_tag + " " + aux + ") " + subj.tree +
               " (VP (VB " + stem + ") " + obj.tree + ") (. ?))";
      f.tokens.push_back(aux);
      f.tokens.insert(f.tokens.end(), subj.tokens.begin(), subj.tokens.end());
      f.tokens.push_back(stem);
      f.tokens.insert(f.tokens.end(), obj.tokens.begin(), obj.tokens.end());
      f.tokens.push_back("?");
      break;
    }
    default: {
      Fragment subj = noun_phrase(style, plural, true, rng);
      const std::string cop =
          past ? (plural ? "were" : "was") : (plural ? "are" : "is");
      const std::string cop_tag = past ? "VBD" : (plural ? "VBP" : "VBZ");
      const std::string adj =
          voc.adjectives()[rng.below(voc.adjectives().size())];
      f.tree = "(S " + subj.tree + " (VP (" + cop_tag + " " + cop +
               ") (ADJP (JJ " + adj + "))) (. .))";
      f.tokens = subj.tokens;
      f.tokens.push_back(cop);
      f.tokens.push_back(adj);
      f.tokens.push_back(".");
      break;
    }
  }
  return SentenceRecord{std::move(f.tokens), std::move(f.tree)};
}

inline std::vector<SentenceRecord> synth_corpus(std::size_t n,
                                                const SynthStyle& style,
                                                std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xc0de));
  std::vector<SentenceRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(synth_sentence(style, rng));
  return out;
}

// Four authors with distinct template mixtures, modifier rates, and mild
// lexical preferences.
inline std::vector<SynthStyle> synth_author_styles() {
  const auto& voc = SynthVocabulary::instance();
  auto band = [&](std::size_t lo, std::size_t hi) {
    std::vector<std::size_t> ids;
    for (std::size_t i = lo; i < hi; ++i) ids.push_back(i);
    return ids;
  };
  std::vector<SynthStyle> styles(4);
  styles[0].template_weights = {0.40, 0.30, 0.08, 0.07, 0.07, 0.08};
  styles[0].p_adjective = 0.15;
  styles[0].p_preposition = 0.10;
  styles[0].preferred_nouns = band(0, 12);
  styles[0].preferred_verbs = band(0, 11);

  styles[1].template_weights = {0.06, 0.08, 0.42, 0.28, 0.08, 0.08};
  styles[1].p_adjective = 0.55;
  styles[1].p_preposition = 0.50;
  styles[1].preferred_nouns = band(12, 24);
  styles[1].preferred_verbs = band(11, 22);

  styles[2].template_weights = {0.08, 0.08, 0.08, 0.10, 0.52, 0.14};
  styles[2].p_adjective = 0.30;
  styles[2].p_preposition = 0.20;
  styles[2].preferred_nouns = band(24, 36);
  styles[2].preferred_verbs = band(22, 33);

  styles[3].template_weights = {0.10, 0.08, 0.08, 0.08, 0.12, 0.54};
  styles[3].p_adjective = 0.60;
  styles[3].p_preposition = 0.15;
  styles[3].preferred_nouns = band(36, 50);
  styles[3].preferred_verbs = band(33, 45);
  return styles;
}

struct SynthAttribution {
  std::vector<DocumentRecord> train, dev, test;
};

inline SynthAttribution synth_attribution(const SynthConfig& cfg) {
  SynthAttribution out;
  const std::vector<SynthStyle> styles = synth_author_styles();
  const std::vector<std::string> names = {"author_a", "author_b", "author_c",
                                          "author_d"};
  Rng rng(mix_seed(cfg.seed, 0xa77));
  auto emit = [&](std::vector<DocumentRecord>& dst, std::size_t count) {
    for (std::size_t a = 0; a < styles.size(); ++a) {
      for (std::size_t d = 0; d < count; ++d) {
        DocumentRecord doc;
        doc.author = names[a];
        for (std::size_t s = 0; s < cfg.sentences_per_doc; ++s) {
          doc.sentences.push_back(synth_sentence(styles[a], rng).tokens);
        }
        dst.push_back(std::move(doc));
      }
    }
  };
  emit(out.train, cfg.train_docs_per_author);
  emit(out.dev, cfg.dev_docs_per_author);
  emit(out.test, cfg.test_docs_per_author);
  return out;
}

}  // namespace structvec
