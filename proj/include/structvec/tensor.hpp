#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace structvec {

// Dense row-major tensor of rank 1 or 2. Scalars are represented as shape [1].
using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

struct ShapeMismatchError : std::runtime_error {
  ShapeMismatchError(const std::string& op, const std::string& got,
                     const std::string& expected)
      : std::runtime_error("shape mismatch in " + op + ": got " + got +
                           ", expected " + expected),
        op(op), got(got), expected(expected) {}
  std::string op, got, expected;
};

struct NonFiniteError : std::runtime_error {
  explicit NonFiniteError(const std::string& op)
      : std::runtime_error("non-finite value produced by " + op), op(op) {}
  std::string op;
};

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    assert(data.size() == numel_of(shape));
  }

  static std::size_t numel_of(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  static Tensor zeros(Shape s) {
    std::size_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<T>(n, T(0)));
  }
  static Tensor full(Shape s, T v) {
    std::size_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<T>(n, v));
  }
  static Tensor scalar(T v) { return Tensor({1}, {v}); }
  static Tensor from_vector(std::vector<T> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const {
    assert(rank() == 2);
    return shape[0];
  }
  std::size_t cols() const {
    assert(rank() == 2);
    return shape[1];
  }

  T& at(std::size_t i) { return data[i]; }
  T at(std::size_t i) const { return data[i]; }
  T& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  T at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  T* row_ptr(std::size_t r) { return data.data() + r * shape[1]; }
  const T* row_ptr(std::size_t r) const { return data.data() + r * shape[1]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
};

// Persistent trainable buffer. Gradients accumulate across tapes until the
// optimizer (or zero_grad) clears them.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)),
        grad(Tensor<T>::zeros(value.shape)) {}

  void zero_grad() { grad.fill(T(0)); }
};

}  // namespace structvec
