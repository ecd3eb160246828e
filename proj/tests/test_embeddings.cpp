#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "structvec/embeddings.hpp"
#include "structvec/rng.hpp"

using namespace structvec;

namespace {

EmbeddingTable small_table() {
  EmbeddingTable t(3);
  t.add("cat", {1.0, 2.0, 3.0});
  t.add("dog", {-1.0, 0.5, 0.25});
  return t;
}

}  // namespace

TEST_CASE("load reads a headered file") {
  const std::string path = "emb_header.txt";
  {
    std::ofstream out(path);
    out << "2 3\n";
    out << "cat 1 2 3\n";
    out << "dog -1 0.5 0.25\n";
  }
  EmbeddingTable t = EmbeddingTable::load(path);
  CHECK(t.size() == 2);
  CHECK(t.dim() == 3);
  REQUIRE(t.row("cat") != nullptr);
  CHECK(t.row("cat")[1] == 2.0);
  std::remove(path.c_str());
}

TEST_CASE("load infers the dimension of a headerless file") {
  const std::string path = "emb_headerless.txt";
  {
    std::ofstream out(path);
    out << "cat 1 2 3 4\n";
    out << "dog 4 3 2 1\n";
  }
  EmbeddingTable t = EmbeddingTable::load(path);
  CHECK(t.size() == 2);
  CHECK(t.dim() == 4);
  std::remove(path.c_str());
}

TEST_CASE("load rejects inconsistent dimensions") {
  const std::string path = "emb_bad_dim.txt";
  {
    std::ofstream out(path);
    out << "2 3\n";
    out << "cat 1 2 3\n";
    out << "dog 1 2\n";
  }
  try {
    EmbeddingTable::load(path);
    FAIL("expected throw");
  } catch (const EmbeddingFormatError& e) {
    CHECK(e.kind == EmbeddingFormatError::Kind::InconsistentDim);
    CHECK(e.line == 3);
  }
  std::remove(path.c_str());
}

TEST_CASE("load rejects malformed lines") {
  const std::string path = "emb_malformed.txt";
  {
    std::ofstream out(path);
    out << "cat 1 2 x\n";
  }
  try {
    EmbeddingTable::load(path);
    FAIL("expected throw");
  } catch (const EmbeddingFormatError& e) {
    CHECK(e.kind == EmbeddingFormatError::Kind::MalformedLine);
  }
  std::remove(path.c_str());
}

TEST_CASE("duplicate tokens keep the first occurrence") {
  const std::string path = "emb_dup.txt";
  {
    std::ofstream out(path);
    out << "cat 1 2\n";
    out << "cat 9 9\n";
  }
  EmbeddingTable t = EmbeddingTable::load(path);
  CHECK(t.size() == 1);
  CHECK(t.row("cat")[0] == 1.0);
  CHECK(t.duplicates_dropped() == 1);
  std::remove(path.c_str());
}

TEST_CASE("save/load round trip preserves six significant digits") {
  Rng rng(5);
  EmbeddingTable t(7);
  std::vector<double> row(7);
  for (int i = 0; i < 20; ++i) {
    for (auto& x : row) x = rng.uniform(-2, 2);
    t.add("tok" + std::to_string(i), row);
  }
  const std::string path = "emb_roundtrip.txt";
  t.save(path);
  EmbeddingTable u = EmbeddingTable::load(path);
  REQUIRE(u.size() == t.size());
  REQUIRE(u.dim() == t.dim());
  for (const auto& tok : t.tokens()) {
    const double* a = t.row(tok);
    const double* b = u.row(tok);
    for (std::size_t j = 0; j < t.dim(); ++j) {
      CHECK(b[j] == doctest::Approx(a[j]).epsilon(1e-5));
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("bov of a single in-vocab token is its vector") {
  EmbeddingTable t = small_table();
  BovResult r = bov({"cat"}, t);
  CHECK_FALSE(r.all_oov);
  CHECK(r.vec == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("bov of opposite vectors is zero") {
  EmbeddingTable t(2);
  t.add("plus", {1.0, -2.0});
  t.add("minus", {-1.0, 2.0});
  BovResult r = bov({"plus", "minus"}, t);
  CHECK(r.vec[0] == 0.0);
  CHECK(r.vec[1] == 0.0);
}

TEST_CASE("bov matches a brute-force mean on random sentences") {
  Rng rng(9);
  EmbeddingTable t(5);
  std::vector<double> row(5);
  std::vector<std::string> vocab;
  for (int i = 0; i < 30; ++i) {
    for (auto& x : row) x = rng.uniform(-1, 1);
    vocab.push_back("w" + std::to_string(i));
    t.add(vocab.back(), row);
  }
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::string> sent;
    const std::size_t n = 1 + rng.below(12);
    for (std::size_t i = 0; i < n; ++i) {
      sent.push_back(vocab[rng.below(vocab.size())]);
    }
    BovResult r = bov(sent, t);
    std::vector<double> ref(5, 0.0);
    for (const auto& tok : sent) {
      const double* rr = t.row(tok);
      for (std::size_t j = 0; j < 5; ++j) ref[j] += rr[j];
    }
    for (auto& x : ref) x /= static_cast<double>(n);
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(std::abs(r.vec[j] - ref[j]) < 1e-6);
    }
  }
}

TEST_CASE("bov is permutation invariant") {
  EmbeddingTable t = small_table();
  BovResult a = bov({"cat", "dog", "cat"}, t);
  BovResult b = bov({"dog", "cat", "cat"}, t);
  for (std::size_t j = 0; j < t.dim(); ++j) {
    CHECK(a.vec[j] == doctest::Approx(b.vec[j]).epsilon(1e-12));
  }
}

TEST_CASE("bov flags an all-OOV sentence under skip policy") {
  EmbeddingTable t = small_table();
  BovResult r = bov({"xyzzy", "quux"}, t, OovPolicy::kSkip);
  CHECK(r.all_oov);
  for (double v : r.vec) CHECK(v == 0.0);
}

TEST_CASE("bov zero-vector policy counts OOV toward the mean") {
  EmbeddingTable t = small_table();
  BovResult skip = bov({"cat", "xyzzy"}, t, OovPolicy::kSkip);
  BovResult zero = bov({"cat", "xyzzy"}, t, OovPolicy::kZeroVector);
  CHECK(skip.vec[0] == doctest::Approx(1.0));
  CHECK(zero.vec[0] == doctest::Approx(0.5));
}

TEST_CASE("bov rejects an empty sentence") {
  EmbeddingTable t = small_table();
  CHECK_THROWS_AS(bov({}, t), EmptySentenceError);
}

TEST_CASE("concat_tables unions tokens with zero fill") {
  EmbeddingTable a(2);
  a.add("cat", {1.0, 2.0});
  a.add("dog", {3.0, 4.0});
  EmbeddingTable b(3);
  b.add("cat", {5.0, 6.0, 7.0});
  b.add("emu", {8.0, 9.0, 10.0});
  EmbeddingTable c = concat_tables(a, b);
  CHECK(c.dim() == 5);
  CHECK(c.size() == 3);
  const double* cat = c.row("cat");
  CHECK(cat[0] == 1.0);
  CHECK(cat[4] == 7.0);
  const double* dog = c.row("dog");
  CHECK(dog[1] == 4.0);
  CHECK(dog[2] == 0.0);
  CHECK(dog[4] == 0.0);
  const double* emu = c.row("emu");
  CHECK(emu[0] == 0.0);
  CHECK(emu[2] == 8.0);
}

TEST_CASE("concat slices recover the originals exactly") {
  Rng rng(31);
  EmbeddingTable a(4), b(3);
  std::vector<double> ra(4), rb(3);
  for (int i = 0; i < 10; ++i) {
    for (auto& x : ra) x = rng.uniform(-1, 1);
    for (auto& x : rb) x = rng.uniform(-1, 1);
    a.add("w" + std::to_string(i), ra);
    b.add("w" + std::to_string(i), rb);
  }
  EmbeddingTable c = concat_tables(a, b);
  for (int i = 0; i < 10; ++i) {
    const std::string tok = "w" + std::to_string(i);
    const double* full = c.row(tok);
    for (std::size_t j = 0; j < 4; ++j) CHECK(full[j] == a.row(tok)[j]);
    for (std::size_t j = 0; j < 3; ++j) CHECK(full[4 + j] == b.row(tok)[j]);
  }
}
