#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>

#include "structvec/checkpoint.hpp"
#include "structvec/optim.hpp"
#include "structvec/rng.hpp"
#include "structvec/tape.hpp"

#include "gradcheck.hpp"

using namespace structvec;
using structvec::testing::gradcheck;

namespace {

using DTape = Tape<double>;
using DVar = DTape::Var;

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0,
                             double hi = 1.0) {
  Tensor<double> t = Tensor<double>::zeros(std::move(shape));
  for (auto& x : t.data) x = rng.uniform(lo, hi);
  return t;
}

// Scalarizes an op output with fixed random weights so every output element
// influences the loss differently.
DVar weighted_sum(DTape& tape, DVar v, Rng& rng) {
  Tensor<double> w = random_tensor(tape.value(v).shape, rng);
  return tape.sum(tape.mul(v, tape.leaf(std::move(w))));
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("tanh of zero tensor is zero") {
  DTape tape;
  DVar v = tape.tanh_(tape.leaf(Tensor<double>::zeros({4})));
  for (double x : tape.value(v).data) CHECK(x == 0.0);
}

TEST_CASE("softmax of a constant row is uniform and sums to one") {
  DTape tape;
  DVar v = tape.softmax_rows(tape.leaf(Tensor<double>::full({2, 5}, 3.25)));
  const auto& out = tape.value(v);
  for (std::size_t i = 0; i < 2; ++i) {
    double sum = 0;
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(out.at(i, j) == doctest::Approx(0.2));
      CHECK(out.at(i, j) >= 0.0);
      sum += out.at(i, j);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("softmax rows sum to one on random input") {
  Rng rng(7);
  DTape tape;
  DVar v = tape.softmax_rows(tape.leaf(random_tensor({6, 9}, rng, -8, 8)));
  const auto& out = tape.value(v);
  for (std::size_t i = 0; i < 6; ++i) {
    double sum = 0;
    for (std::size_t j = 0; j < 9; ++j) sum += out.at(i, j);
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("backward on sum gives ones") {
  DTape tape;
  Param<double> x("x", Tensor<double>::from_vector({1.0, -2.0, 3.5}));
  DVar loss = tape.sum(tape.param(x));
  tape.backward(loss);
  for (double g : x.grad.data) CHECK(g == 1.0);
}

TEST_CASE("backward on mean of squares") {
  DTape tape;
  Param<double> x("x", Tensor<double>::from_vector({1.0, 2.0}));
  DVar xv = tape.param(x);
  tape.backward(tape.mean(tape.mul(xv, xv)));
  CHECK(x.grad.data[0] == doctest::Approx(1.0));
  CHECK(x.grad.data[1] == doctest::Approx(2.0));
}

TEST_CASE("repeated backward accumulates into parameter gradients") {
  DTape tape;
  Param<double> x("x", Tensor<double>::from_vector({1.0, 2.0, 3.0}));
  DVar loss = tape.sum(tape.param(x));
  tape.backward(loss);
  tape.backward(loss);
  for (double g : x.grad.data) CHECK(g == 2.0);
}

TEST_CASE("backward twice with grad reset is deterministic") {
  Rng rng(11);
  Param<double> x("x", random_tensor({4, 3}, rng));
  Param<double> w("w", random_tensor({3, 4}, rng));
  DTape tape;
  DVar loss = tape.sum(tape.tanh_(tape.matmul(tape.param(x), tape.param(w))));
  tape.backward(loss);
  auto gx = x.grad.data;
  auto gw = w.grad.data;
  x.zero_grad();
  w.zero_grad();
  tape.backward(loss);
  CHECK(x.grad.data == gx);
  CHECK(w.grad.data == gw);
}

TEST_CASE("backward rejects non-scalar loss") {
  DTape tape;
  DVar v = tape.leaf(Tensor<double>::zeros({3}));
  CHECK_THROWS_AS(tape.backward(v), NotScalarLossError);
}

TEST_CASE("backward rejects detached variables") {
  DTape tape;
  DVar bogus;
  CHECK_THROWS_AS(tape.backward(bogus), DetachedTensorError);
  CHECK_THROWS_AS(tape.value(bogus), DetachedTensorError);
}

TEST_CASE("non-finite forward values raise") {
  DTape tape;
  DVar neg = tape.leaf(Tensor<double>::from_vector({-1.0}));
  CHECK_THROWS_AS(tape.log_(neg), NonFiniteError);
}

TEST_CASE("shape mismatch raises with op name") {
  DTape tape;
  DVar a = tape.leaf(Tensor<double>::zeros({3}));
  DVar b = tape.leaf(Tensor<double>::zeros({4}));
  try {
    tape.add(a, b);
    FAIL("expected ShapeMismatchError");
  } catch (const ShapeMismatchError& e) {
    CHECK(e.op == "add");
  }
}

TEST_CASE("matmul matches naive triple loop on random inputs") {
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t m = 1 + rng.below(64);
    const std::size_t k = 1 + rng.below(64);
    const std::size_t n = 1 + rng.below(64);
    Tensor<double> a = random_tensor({m, k}, rng);
    Tensor<double> b = random_tensor({k, n}, rng);
    DTape tape;
    const auto& out = tape.value(tape.matmul(tape.leaf(a), tape.leaf(b)));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double ref = 0;
        for (std::size_t p = 0; p < k; ++p) ref += a.at(i, p) * b.at(p, j);
        CHECK(out.at(i, j) == doctest::Approx(ref).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("finite differences validate every op gradient") {
  Rng rng(101);

  auto check_unary = [&](const char* name, auto&& build, Shape shape,
                         double lo = -1.0, double hi = 1.0) {
    CAPTURE(name);
    Param<double> x("x", random_tensor(shape, rng, lo, hi));
    auto run = [&](bool do_backward) {
      DTape tape;
      Rng local(42);
      DVar out = build(tape, tape.param(x));
      Tensor<double> w = tape.value(out);
      for (auto& v : w.data) v = local.uniform(-1, 1);
      DVar loss = tape.sum(tape.mul(out, tape.leaf(std::move(w))));
      if (do_backward) tape.backward(loss);
      return tape.value(loss).data[0];
    };
    auto res = gradcheck({&x}, run);
    CAPTURE(res.worst_where);
    CHECK(res.ok);
  };

  check_unary("tanh", [](DTape& t, DVar v) { return t.tanh_(v); }, {3, 4});
  check_unary("sigmoid", [](DTape& t, DVar v) { return t.sigmoid_(v); }, {7});
  check_unary("log", [](DTape& t, DVar v) { return t.log_(v); }, {5}, 0.2, 2.0);
  check_unary("softmax_rows",
              [](DTape& t, DVar v) { return t.softmax_rows(v); }, {3, 5});
  check_unary("sum", [](DTape& t, DVar v) { return t.sum(v); }, {4, 2});
  check_unary("mean", [](DTape& t, DVar v) { return t.mean(v); }, {6});
  check_unary("scale", [](DTape& t, DVar v) { return t.scale(v, -2.5); }, {5});
  check_unary("add_scalar",
              [](DTape& t, DVar v) { return t.add_scalar(v, 0.75); }, {5});
  check_unary("max_with_scalar",
              [](DTape& t, DVar v) { return t.max_with_scalar(v, 0.1); }, {9});
  check_unary("slice", [](DTape& t, DVar v) { return t.slice(v, 2, 4); }, {9});
  check_unary("slice_rows",
              [](DTape& t, DVar v) { return t.slice_rows(v, 1, 2); }, {4, 3});
  check_unary("row", [](DTape& t, DVar v) { return t.row(v, 2); }, {4, 3});
  check_unary("transpose", [](DTape& t, DVar v) { return t.transpose(v); },
              {3, 5});
  check_unary("flatten", [](DTape& t, DVar v) { return t.flatten(v); }, {3, 4});
  check_unary("as_row", [](DTape& t, DVar v) { return t.as_row(v); }, {6});

  auto check_binary = [&](const char* name, auto&& build, Shape sa, Shape sb) {
    CAPTURE(name);
    Param<double> a("a", random_tensor(sa, rng));
    Param<double> b("b", random_tensor(sb, rng));
    auto run = [&](bool do_backward) {
      DTape tape;
      Rng local(43);
      DVar out = build(tape, tape.param(a), tape.param(b));
      Tensor<double> w = tape.value(out);
      for (auto& v : w.data) v = local.uniform(-1, 1);
      DVar loss = tape.sum(tape.mul(out, tape.leaf(std::move(w))));
      if (do_backward) tape.backward(loss);
      return tape.value(loss).data[0];
    };
    auto res = gradcheck({&a, &b}, run);
    CAPTURE(res.worst_where);
    CHECK(res.ok);
  };

  check_binary("add", [](DTape& t, DVar a, DVar b) { return t.add(a, b); },
               {3, 4}, {3, 4});
  check_binary("mul", [](DTape& t, DVar a, DVar b) { return t.mul(a, b); },
               {5}, {5});
  check_binary("matmul_mm",
               [](DTape& t, DVar a, DVar b) { return t.matmul(a, b); }, {3, 4},
               {4, 5});
  check_binary("matmul_mv",
               [](DTape& t, DVar a, DVar b) { return t.matmul(a, b); }, {3, 4},
               {4});
  check_binary("matmul_vm",
               [](DTape& t, DVar a, DVar b) { return t.matmul(a, b); }, {4},
               {4, 3});
  check_binary("l2_norm_diff",
               [](DTape& t, DVar a, DVar b) { return t.l2_norm_diff(a, b); },
               {6}, {6});
  check_binary("concat",
               [](DTape& t, DVar a, DVar b) {
                 const DVar parts[2] = {a, b};
                 return t.concat(std::span<const DVar>(parts, 2));
               },
               {3}, {4});
  check_binary("concat_rows",
               [](DTape& t, DVar a, DVar b) {
                 const DVar parts[2] = {a, b};
                 return t.concat_rows(std::span<const DVar>(parts, 2));
               },
               {2, 3}, {3});
}

TEST_CASE("gather_rows gradients flow only to looked-up rows") {
  Rng rng(5);
  Param<double> table("table", random_tensor({6, 3}, rng));
  const std::vector<int> ids = {4, 1, 4};
  auto run = [&](bool do_backward) {
    DTape tape;
    DVar out = tape.gather_rows(table, ids);
    DVar loss = tape.sum(tape.mul(out, out));
    if (do_backward) tape.backward(loss);
    return tape.value(loss).data[0];
  };
  auto res = gradcheck({&table}, run);
  CAPTURE(res.worst_where);
  CHECK(res.ok);

  table.zero_grad();
  run(true);
  for (std::size_t r = 0; r < 6; ++r) {
    const bool touched = (r == 1 || r == 4);
    for (std::size_t c = 0; c < 3; ++c) {
      if (!touched) CHECK(table.grad.at(r, c) == 0.0);
    }
  }
  bool any_nonzero = false;
  for (std::size_t c = 0; c < 3; ++c) {
    if (table.grad.at(4, c) != 0.0) any_nonzero = true;
  }
  CHECK(any_nonzero);
}

TEST_CASE("gather_rows rejects out-of-range ids") {
  Param<double> table("table", Tensor<double>::zeros({3, 2}));
  DTape tape;
  const std::vector<int> bad = {0, 3};
  CHECK_THROWS_AS(tape.gather_rows(table, bad), IdOutOfRangeError);
}

TEST_CASE("random three-layer composition passes finite differences") {
  Rng rng(77);
  Param<double> w1("w1", random_tensor({5, 4}, rng));
  Param<double> w2("w2", random_tensor({3, 5}, rng));
  Param<double> x("x", random_tensor({4}, rng));
  auto run = [&](bool do_backward) {
    DTape tape;
    DVar h1 = tape.tanh_(tape.matmul(tape.param(w1), tape.param(x)));
    DVar h2 = tape.sigmoid_(tape.matmul(tape.param(w2), h1));
    DVar loss = tape.mean(tape.mul(h2, h2));
    if (do_backward) tape.backward(loss);
    return tape.value(loss).data[0];
  };
  auto res = gradcheck({&w1, &w2, &x}, run);
  CAPTURE(res.worst_where);
  CHECK(res.ok);
}

TEST_CASE("adam single step on scalar matches hand evaluation") {
  Param<double> p("p", Tensor<double>::scalar(0.0));
  Adam<double> opt({&p}, {.lr = 0.1});
  p.grad.data[0] = 1.0;
  opt.step();
  // m_hat = 1, v_hat = 1 after bias correction: p = -lr / (1 + eps).
  CHECK(p.value.data[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p.grad.data[0] == 0.0);  // grads zeroed by the step
}

TEST_CASE("adam leaves parameters unchanged on zero gradient") {
  Param<double> p("p", Tensor<double>::from_vector({1.5, -2.5}));
  Adam<double> opt({&p}, {});
  opt.step();
  CHECK(p.value.data[0] == 1.5);
  CHECK(p.value.data[1] == -2.5);
}

TEST_CASE("adam decreases a convex quadratic monotonically") {
  Param<double> p("p", Tensor<double>::scalar(1.0));
  Adam<double> opt({&p}, {.lr = 0.05});
  double prev_loss = 1.0;  // f(p) = p^2 at p=1
  for (int i = 0; i < 2; ++i) {
    p.grad.data[0] = 2.0 * p.value.data[0];
    opt.step();
    const double loss = p.value.data[0] * p.value.data[0];
    CHECK(loss < prev_loss);
    prev_loss = loss;
  }
}

TEST_CASE("adam reports missing gradients") {
  Param<double> p("p", Tensor<double>::scalar(0.0));
  Adam<double> opt({&p}, {});
  p.grad = Tensor<double>::zeros({2});  // corrupt the buffer
  CHECK_THROWS_AS(opt.step(), MissingGradError);
}

TEST_CASE("xavier uniform bound and determinism") {
  Rng rng1(9);
  Tensor<double> t1 = xavier_uniform<double>({3, 3}, 3, 3, rng1);
  for (double v : t1.data) {
    CHECK(v <= 1.0);
    CHECK(v >= -1.0);
  }
  Rng rng2(9);
  Tensor<double> t2 = xavier_uniform<double>({3, 3}, 3, 3, rng2);
  CHECK(t1.data == t2.data);
}

TEST_CASE("xavier sample mean is near zero") {
  Rng rng(13);
  const std::size_t n = 100000;
  Tensor<double> t = xavier_uniform<double>({n}, 3, 3, rng);
  double mean = 0;
  for (double v : t.data) mean += v;
  mean /= static_cast<double>(n);
  const double sigma_mean = (1.0 / std::sqrt(3.0)) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean) < 3.0 * sigma_mean);
}

TEST_CASE("checkpoint round trips bit-exactly") {
  Rng rng(31);
  Tensor<double> a = random_tensor({4, 3}, rng);
  Tensor<double> b = random_tensor({7}, rng);
  nlohmann::json meta;
  meta["epoch"] = 3;
  const std::string p1 = "ck_test_a.ssrl1";
  const std::string p2 = "ck_test_b.ssrl1";
  save_checkpoint<double>(p1, {{"a", &a}, {"b", &b}}, meta);

  Checkpoint<double> ck = load_checkpoint<double>(p1);
  CHECK(ck.meta["epoch"] == 3);
  REQUIRE(ck.find("a") != nullptr);
  CHECK(ck.find("a")->data == a.data);
  CHECK(ck.find("b")->data == b.data);

  save_checkpoint<double>(p2, {{"a", ck.find("a")}, {"b", ck.find("b")}}, ck.meta);
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("checkpoint restores parameters by name") {
  Rng rng(37);
  Param<double> p("weights", random_tensor({2, 2}, rng));
  const std::string path = "ck_test_restore.ssrl1";
  save_checkpoint<double>(path, {{"weights", &p.value}},
                          nlohmann::json::object());
  Param<double> q("weights", Tensor<double>::zeros({2, 2}));
  Checkpoint<double> ck = load_checkpoint<double>(path);
  restore_params(ck, {&q});
  CHECK(q.value.data == p.value.data);

  Param<double> wrong("weights", Tensor<double>::zeros({3, 2}));
  CHECK_THROWS_AS(restore_params(ck, {&wrong}), CheckpointError);
  std::remove(path.c_str());
}
