#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "structvec/treebank.hpp"

namespace structvec {

struct MalformedLineError : std::runtime_error {
  MalformedLineError(const std::string& path, std::size_t line,
                     const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
        line(line) {}
  std::size_t line;
};

// One tokenized sentence with its bracketed parse.
struct SentenceRecord {
  std::vector<std::string> tokens;
  std::string tree_text;
};

// One attribution document.
struct DocumentRecord {
  std::string author;
  std::vector<std::vector<std::string>> sentences;
};

// UTF-8, one bracketed tree per line; blank lines skipped.
inline std::vector<ParseTree> read_treebank_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open treebank file " + path);
  std::vector<ParseTree> trees;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool blank = true;
    for (char c : line) {
      if (c != ' ' && c != '\t' && c != '\r') {
        blank = false;
        break;
      }
    }
    if (blank) continue;
    try {
      trees.push_back(parse_bracketed(line));
    } catch (const TreeParseError& e) {
      throw MalformedLineError(path, lineno, e.what());
    }
  }
  return trees;
}

// JSON-lines: {"tokens": [...], "tree": "<bracketed>"} per line.
inline std::vector<SentenceRecord> read_sentence_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file " + path);
  std::vector<SentenceRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("tokens") || !j.contains("tree")) {
      throw MalformedLineError(path, lineno, "expected {\"tokens\", \"tree\"}");
    }
    SentenceRecord rec;
    rec.tokens = j["tokens"].get<std::vector<std::string>>();
    rec.tree_text = j["tree"].get<std::string>();
    records.push_back(std::move(rec));
  }
  return records;
}

inline void write_sentence_corpus(const std::string& path,
                                  const std::vector<SentenceRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write corpus file " + path);
  for (const auto& rec : records) {
    nlohmann::json j;
    j["tokens"] = rec.tokens;
    j["tree"] = rec.tree_text;
    out << j.dump() << "\n";
  }
}

// JSON-lines: {"author": "...", "sentences": [[tok, ...], ...]} per line.
inline std::vector<DocumentRecord> read_document_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open document corpus " + path);
  std::vector<DocumentRecord> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("author") || !j.contains("sentences")) {
      throw MalformedLineError(path, lineno,
                               "expected {\"author\", \"sentences\"}");
    }
    DocumentRecord doc;
    doc.author = j["author"].get<std::string>();
    doc.sentences = j["sentences"].get<std::vector<std::vector<std::string>>>();
    docs.push_back(std::move(doc));
  }
  return docs;
}

inline void write_document_corpus(const std::string& path,
                                  const std::vector<DocumentRecord>& docs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write document corpus " + path);
  for (const auto& doc : docs) {
    nlohmann::json j;
    j["author"] = doc.author;
    j["sentences"] = doc.sentences;
    out << j.dump() << "\n";
  }
}

}  // namespace structvec
