#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "structvec/tensor.hpp"

namespace structvec {

struct NotScalarLossError : std::runtime_error {
  NotScalarLossError() : std::runtime_error("backward: loss is not scalar") {}
};

struct DetachedTensorError : std::runtime_error {
  DetachedTensorError() : std::runtime_error("variable is not on this tape") {}
};

struct IdOutOfRangeError : std::runtime_error {
  IdOutOfRangeError(int id, std::size_t rows)
      : std::runtime_error("row id " + std::to_string(id) +
                           " out of range [0, " + std::to_string(rows) + ")"),
        id(id), rows(rows) {}
  int id;
  std::size_t rows;
};

// Reverse-mode tape. Nodes are appended in execution order, which is a
// topological order by construction; backward() walks indices in exact
// reverse. Node-local gradients are reset on every backward() call, while
// gradients of Param buffers accumulate until explicitly zeroed.
template <typename T>
class Tape {
 public:
  struct Var {
    std::uint32_t idx = UINT32_MAX;
    bool valid() const { return idx != UINT32_MAX; }
  };

  const Tensor<T>& value(Var v) const { return nodes_[check(v)].value; }
  const Tensor<T>& grad(Var v) const { return nodes_[check(v)].grad; }
  std::size_t size() const { return nodes_.size(); }

  void set_finite_checks(bool on) { check_finite_ = on; }

  // Drops all nodes but keeps allocated capacity for reuse across batches.
  void clear() { nodes_.clear(); }

  // ---- leaves ----

  Var leaf(Tensor<T> v) { return push("leaf", std::move(v), {}); }

  // Tracked leaf: the value is copied onto the tape, backward accumulates
  // into p.grad.
  Var param(Param<T>& p) {
    Param<T>* pp = &p;
    Var out = push("param", p.value, {});
    std::uint32_t oi = out.idx;
    nodes_[oi].back = [oi, pp](Tape& t) {
      const auto& g = t.nodes_[oi].grad;
      for (std::size_t i = 0; i < g.numel(); ++i) pp->grad.data[i] += g.data[i];
    };
    return out;
  }

  // Embedding lookup: rows of `table` selected by ids, without copying the
  // whole table onto the tape. Backward scatters into table.grad.
  Var gather_rows(Param<T>& table, std::span<const int> ids) {
    if (table.value.rank() != 2) {
      throw ShapeMismatchError("gather_rows", shape_str(table.value.shape),
                               "[rows x dim]");
    }
    const std::size_t rows = table.value.rows();
    const std::size_t dim = table.value.cols();
    Tensor<T> out = Tensor<T>::zeros({ids.size(), dim});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
        throw IdOutOfRangeError(ids[i], rows);
      }
      const T* src = table.value.row_ptr(static_cast<std::size_t>(ids[i]));
      std::copy(src, src + dim, out.row_ptr(i));
    }
    Param<T>* tp = &table;
    std::vector<int> idv(ids.begin(), ids.end());
    Var o = push("gather_rows", std::move(out), {});
    std::uint32_t oi = o.idx;
    nodes_[oi].back = [oi, tp, idv = std::move(idv), dim](Tape& t) {
      const auto& g = t.nodes_[oi].grad;
      for (std::size_t i = 0; i < idv.size(); ++i) {
        T* dst = tp->grad.row_ptr(static_cast<std::size_t>(idv[i]));
        const T* src = g.row_ptr(i);
        for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
      }
    };
    return o;
  }

  // ---- elementwise ----

  Var add(Var a, Var b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    require_same(av, bv, "add");
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += bv.data[i];
    return push2("add", std::move(out), a, b, [](Tape& t, const Tensor<T>& g,
                                                 Node& na, Node& nb) {
      for (std::size_t i = 0; i < g.numel(); ++i) {
        na.grad.data[i] += g.data[i];
        nb.grad.data[i] += g.data[i];
      }
      (void)t;
    });
  }

  Var mul(Var a, Var b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    require_same(av, bv, "mul");
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= bv.data[i];
    return push2("mul", std::move(out), a, b, [](Tape& t, const Tensor<T>& g,
                                                 Node& na, Node& nb) {
      for (std::size_t i = 0; i < g.numel(); ++i) {
        na.grad.data[i] += g.data[i] * nb.value.data[i];
        nb.grad.data[i] += g.data[i] * na.value.data[i];
      }
      (void)t;
    });
  }

  Var scale(Var a, T c) {
    Tensor<T> out = value(a);
    for (auto& x : out.data) x *= c;
    return push1("scale", std::move(out), a,
                 [c](Tape&, const Tensor<T>& g, Node& na) {
                   for (std::size_t i = 0; i < g.numel(); ++i) {
                     na.grad.data[i] += c * g.data[i];
                   }
                 });
  }

  Var add_scalar(Var a, T c) {
    Tensor<T> out = value(a);
    for (auto& x : out.data) x += c;
    return push1("add_scalar", std::move(out), a,
                 [](Tape&, const Tensor<T>& g, Node& na) {
                   for (std::size_t i = 0; i < g.numel(); ++i) {
                     na.grad.data[i] += g.data[i];
                   }
                 });
  }

  Var tanh_(Var a) {
    Tensor<T> out = value(a);
    for (auto& x : out.data) x = std::tanh(x);
    Var o = push1_deferred("tanh", std::move(out), a);
    attach_unary(o, a, [o](Tape& t, const Tensor<T>& g, Node& na) {
      const auto& y = t.nodes_[o.idx].value;
      for (std::size_t i = 0; i < g.numel(); ++i) {
        na.grad.data[i] += g.data[i] * (T(1) - y.data[i] * y.data[i]);
      }
    });
    return o;
  }

  Var sigmoid_(Var a) {
    Tensor<T> out = value(a);
    for (auto& x : out.data) x = T(1) / (T(1) + std::exp(-x));
    Var o = push1_deferred("sigmoid", std::move(out), a);
    attach_unary(o, a, [o](Tape& t, const Tensor<T>& g, Node& na) {
      const auto& y = t.nodes_[o.idx].value;
      for (std::size_t i = 0; i < g.numel(); ++i) {
        na.grad.data[i] += g.data[i] * y.data[i] * (T(1) - y.data[i]);
      }
    });
    return o;
  }

  Var log_(Var a) {
    Tensor<T> out = value(a);
    for (auto& x : out.data) x = std::log(x);
    return push1("log", std::move(out), a,
                 [](Tape&, const Tensor<T>& g, Node& na) {
                   for (std::size_t i = 0; i < g.numel(); ++i) {
                     na.grad.data[i] += g.data[i] / na.value.data[i];
                   }
                 });
  }

  Var max_with_scalar(Var a, T c) {
    Tensor<T> out = value(a);
    for (auto& x : out.data) x = std::max(x, c);
    return push1("max_with_scalar", std::move(out), a,
                 [c](Tape&, const Tensor<T>& g, Node& na) {
                   for (std::size_t i = 0; i < g.numel(); ++i) {
                     if (na.value.data[i] > c) na.grad.data[i] += g.data[i];
                   }
                 });
  }

  // ---- matrix ops ----

  // (m x k)*(k x n) -> (m x n); (m x k)*[k] -> [m]; [k]*(k x n) -> [n].
  Var matmul(Var a, Var b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    if (av.rank() == 2 && bv.rank() == 2) {
      if (av.cols() != bv.rows()) {
        throw ShapeMismatchError("matmul", shape_str(bv.shape),
                                 "[" + std::to_string(av.cols()) + " x n]");
      }
      const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
      Tensor<T> out = Tensor<T>::zeros({m, n});
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = av.at(i, p);
          const T* brow = bv.row_ptr(p);
          T* orow = out.row_ptr(i);
          for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
      }
      return push2("matmul", std::move(out), a, b,
                   [m, k, n](Tape&, const Tensor<T>& g, Node& na, Node& nb) {
                     // dA += g * B^T; dB += A^T * g
                     for (std::size_t i = 0; i < m; ++i) {
                       for (std::size_t p = 0; p < k; ++p) {
                         T acc = T(0);
                         const T* grow = g.row_ptr(i);
                         const T* brow = nb.value.row_ptr(p);
                         for (std::size_t j = 0; j < n; ++j) {
                           acc += grow[j] * brow[j];
                         }
                         na.grad.at(i, p) += acc;
                       }
                     }
                     for (std::size_t p = 0; p < k; ++p) {
                       for (std::size_t i = 0; i < m; ++i) {
                         const T aip = na.value.at(i, p);
                         const T* grow = g.row_ptr(i);
                         T* brow = nb.grad.row_ptr(p);
                         for (std::size_t j = 0; j < n; ++j) {
                           brow[j] += aip * grow[j];
                         }
                       }
                     }
                   });
    }
    if (av.rank() == 2 && bv.rank() == 1) {
      if (av.cols() != bv.numel()) {
        throw ShapeMismatchError("matmul", shape_str(bv.shape),
                                 "[" + std::to_string(av.cols()) + "]");
      }
      const std::size_t m = av.rows(), k = av.cols();
      Tensor<T> out = Tensor<T>::zeros({m});
      for (std::size_t i = 0; i < m; ++i) {
        const T* arow = av.row_ptr(i);
        T acc = T(0);
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * bv.data[p];
        out.data[i] = acc;
      }
      return push2("matmul", std::move(out), a, b,
                   [m, k](Tape&, const Tensor<T>& g, Node& na, Node& nb) {
                     for (std::size_t i = 0; i < m; ++i) {
                       const T gi = g.data[i];
                       T* arow = na.grad.row_ptr(i);
                       const T* avrow = na.value.row_ptr(i);
                       for (std::size_t p = 0; p < k; ++p) {
                         arow[p] += gi * nb.value.data[p];
                         nb.grad.data[p] += gi * avrow[p];
                       }
                     }
                   });
    }
    if (av.rank() == 1 && bv.rank() == 2) {
      if (av.numel() != bv.rows()) {
        throw ShapeMismatchError("matmul", shape_str(bv.shape),
                                 "[" + std::to_string(av.numel()) + " x n]");
      }
      const std::size_t k = av.numel(), n = bv.cols();
      Tensor<T> out = Tensor<T>::zeros({n});
      for (std::size_t p = 0; p < k; ++p) {
        const T ap = av.data[p];
        const T* brow = bv.row_ptr(p);
        for (std::size_t j = 0; j < n; ++j) out.data[j] += ap * brow[j];
      }
      return push2("matmul", std::move(out), a, b,
                   [k, n](Tape&, const Tensor<T>& g, Node& na, Node& nb) {
                     for (std::size_t p = 0; p < k; ++p) {
                       const T* brow = nb.value.row_ptr(p);
                       T* bgrow = nb.grad.row_ptr(p);
                       T acc = T(0);
                       const T ap = na.value.data[p];
                       for (std::size_t j = 0; j < n; ++j) {
                         acc += g.data[j] * brow[j];
                         bgrow[j] += ap * g.data[j];
                       }
                       na.grad.data[p] += acc;
                     }
                   });
    }
    throw ShapeMismatchError("matmul", shape_str(av.shape) + "*" +
                                           shape_str(bv.shape),
                             "rank-1/2 operands");
  }

  Var transpose(Var a) {
    const auto& av = value(a);
    if (av.rank() != 2) {
      throw ShapeMismatchError("transpose", shape_str(av.shape), "[r x c]");
    }
    const std::size_t r = av.rows(), c = av.cols();
    Tensor<T> out = Tensor<T>::zeros({c, r});
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out.at(j, i) = av.at(i, j);
    }
    return push1("transpose", std::move(out), a,
                 [r, c](Tape&, const Tensor<T>& g, Node& na) {
                   for (std::size_t i = 0; i < r; ++i) {
                     for (std::size_t j = 0; j < c; ++j) {
                       na.grad.at(i, j) += g.at(j, i);
                     }
                   }
                 });
  }

  // ---- shape ops ----

  Var slice(Var a, std::size_t start, std::size_t len) {
    const auto& av = value(a);
    if (av.rank() != 1 || start + len > av.numel()) {
      throw ShapeMismatchError("slice", shape_str(av.shape),
                               "[>= " + std::to_string(start + len) + "]");
    }
    Tensor<T> out({len}, std::vector<T>(av.data.begin() + start,
                                        av.data.begin() + start + len));
    return push1("slice", std::move(out), a,
                 [start, len](Tape&, const Tensor<T>& g, Node& na) {
                   for (std::size_t i = 0; i < len; ++i) {
                     na.grad.data[start + i] += g.data[i];
                   }
                 });
  }

  Var slice_rows(Var a, std::size_t r0, std::size_t n) {
    const auto& av = value(a);
    if (av.rank() != 2 || r0 + n > av.rows()) {
      throw ShapeMismatchError("slice_rows", shape_str(av.shape),
                               "[>= " + std::to_string(r0 + n) + " rows]");
    }
    const std::size_t c = av.cols();
    Tensor<T> out({n, c}, std::vector<T>(av.data.begin() + r0 * c,
                                         av.data.begin() + (r0 + n) * c));
    return push1("slice_rows", std::move(out), a,
                 [r0, n, c](Tape&, const Tensor<T>& g, Node& na) {
                   for (std::size_t i = 0; i < n * c; ++i) {
                     na.grad.data[r0 * c + i] += g.data[i];
                   }
                 });
  }

  Var row(Var a, std::size_t i) {
    const auto& av = value(a);
    if (av.rank() != 2 || i >= av.rows()) {
      throw ShapeMismatchError("row", shape_str(av.shape),
                               "[> " + std::to_string(i) + " rows]");
    }
    const std::size_t c = av.cols();
    Tensor<T> out({c}, std::vector<T>(av.row_ptr(i), av.row_ptr(i) + c));
    return push1("row", std::move(out), a,
                 [i, c](Tape&, const Tensor<T>& g, Node& na) {
                   for (std::size_t j = 0; j < c; ++j) {
                     na.grad.data[i * c + j] += g.data[j];
                   }
                 });
  }

  // Concatenation of rank-1 tensors into one rank-1 tensor.
  Var concat(std::span<const Var> parts) {
    std::vector<T> data;
    std::vector<std::pair<std::uint32_t, std::size_t>> spans;
    for (Var p : parts) {
      const auto& pv = value(p);
      if (pv.rank() != 1) {
        throw ShapeMismatchError("concat", shape_str(pv.shape), "[n]");
      }
      spans.emplace_back(p.idx, pv.numel());
      data.insert(data.end(), pv.data.begin(), pv.data.end());
    }
    Tensor<T> out = Tensor<T>::from_vector(std::move(data));
    Var o = push("concat", std::move(out), {});
    std::uint32_t oi = o.idx;
    nodes_[oi].back = [oi, spans = std::move(spans)](Tape& t) {
      const auto& g = t.nodes_[oi].grad;
      std::size_t off = 0;
      for (auto [idx, n] : spans) {
        auto& tg = t.nodes_[idx].grad;
        for (std::size_t i = 0; i < n; ++i) tg.data[i] += g.data[off + i];
        off += n;
      }
    };
    return o;
  }

  // Stacks parts as rows of a rank-2 tensor. Rank-1 parts contribute one row,
  // rank-2 parts contribute their rows; all must share the column count.
  Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) {
      throw ShapeMismatchError("concat_rows", "[]", ">= 1 part");
    }
    const auto& first = value(parts.front());
    const std::size_t c = first.rank() == 1 ? first.numel() : first.cols();
    std::vector<T> data;
    std::vector<std::pair<std::uint32_t, std::size_t>> spans;  // idx, numel
    std::size_t rows = 0;
    for (Var p : parts) {
      const auto& pv = value(p);
      const std::size_t pc = pv.rank() == 1 ? pv.numel() : pv.cols();
      if (pc != c || pv.rank() > 2) {
        throw ShapeMismatchError("concat_rows", shape_str(pv.shape),
                                 "[* x " + std::to_string(c) + "]");
      }
      rows += pv.rank() == 1 ? 1 : pv.rows();
      spans.emplace_back(p.idx, pv.numel());
      data.insert(data.end(), pv.data.begin(), pv.data.end());
    }
    Tensor<T> out({rows, c}, std::move(data));
    Var o = push("concat_rows", std::move(out), {});
    std::uint32_t oi = o.idx;
    nodes_[oi].back = [oi, spans = std::move(spans)](Tape& t) {
      const auto& g = t.nodes_[oi].grad;
      std::size_t off = 0;
      for (auto [idx, n] : spans) {
        auto& tg = t.nodes_[idx].grad;
        for (std::size_t i = 0; i < n; ++i) tg.data[i] += g.data[off + i];
        off += n;
      }
    };
    return o;
  }

  // Row-major reshape to rank-1.
  Var flatten(Var a) {
    Tensor<T> out = Tensor<T>::from_vector(value(a).data);
    return push1("flatten", std::move(out), a,
                 [](Tape&, const Tensor<T>& g, Node& na) {
                   for (std::size_t i = 0; i < g.numel(); ++i) {
                     na.grad.data[i] += g.data[i];
                   }
                 });
  }

  Var as_row(Var a) {
    const auto& av = value(a);
    if (av.rank() != 1) {
      throw ShapeMismatchError("as_row", shape_str(av.shape), "[n]");
    }
    Tensor<T> out({1, av.numel()}, av.data);
    return push1("as_row", std::move(out), a,
                 [](Tape&, const Tensor<T>& g, Node& na) {
                   for (std::size_t i = 0; i < g.numel(); ++i) {
                     na.grad.data[i] += g.data[i];
                   }
                 });
  }

  // ---- reductions & friends ----

  Var sum(Var a) {
    const auto& av = value(a);
    T acc = T(0);
    for (T x : av.data) acc += x;
    return push1("sum", Tensor<T>::scalar(acc), a,
                 [](Tape&, const Tensor<T>& g, Node& na) {
                   for (auto& x : na.grad.data) x += g.data[0];
                 });
  }

  Var mean(Var a) {
    const auto& av = value(a);
    T acc = T(0);
    for (T x : av.data) acc += x;
    const T n = static_cast<T>(av.numel());
    return push1("mean", Tensor<T>::scalar(acc / n), a,
                 [n](Tape&, const Tensor<T>& g, Node& na) {
                   const T s = g.data[0] / n;
                   for (auto& x : na.grad.data) x += s;
                 });
  }

  // Row-wise softmax over the last axis of a rank-2 tensor.
  Var softmax_rows(Var a) {
    const auto& av = value(a);
    if (av.rank() != 2) {
      throw ShapeMismatchError("softmax_rows", shape_str(av.shape), "[r x c]");
    }
    const std::size_t r = av.rows(), c = av.cols();
    Tensor<T> out = Tensor<T>::zeros({r, c});
    for (std::size_t i = 0; i < r; ++i) {
      const T* in = av.row_ptr(i);
      T* o = out.row_ptr(i);
      T mx = in[0];
      for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
      T z = T(0);
      for (std::size_t j = 0; j < c; ++j) {
        o[j] = std::exp(in[j] - mx);
        z += o[j];
      }
      for (std::size_t j = 0; j < c; ++j) o[j] /= z;
    }
    Var o = push1_deferred("softmax_rows", std::move(out), a);
    attach_unary(o, a, [o, r, c](Tape& t, const Tensor<T>& g, Node& na) {
      const auto& y = t.nodes_[o.idx].value;
      for (std::size_t i = 0; i < r; ++i) {
        const T* yrow = y.row_ptr(i);
        const T* grow = g.row_ptr(i);
        T dot = T(0);
        for (std::size_t j = 0; j < c; ++j) dot += grow[j] * yrow[j];
        T* arow = na.grad.row_ptr(i);
        for (std::size_t j = 0; j < c; ++j) {
          arow[j] += yrow[j] * (grow[j] - dot);
        }
      }
    });
    return o;
  }

  // Euclidean distance ||a - b||_2 of two equal-shape rank-1 tensors.
  // At d == 0 the subgradient 0 is used, which matches the gradient of d^2.
  Var l2_norm_diff(Var a, Var b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    require_same(av, bv, "l2_norm_diff");
    T acc = T(0);
    for (std::size_t i = 0; i < av.numel(); ++i) {
      const T d = av.data[i] - bv.data[i];
      acc += d * d;
    }
    const T dist = std::sqrt(acc);
    return push2("l2_norm_diff", Tensor<T>::scalar(dist), a, b,
                 [dist](Tape&, const Tensor<T>& g, Node& na, Node& nb) {
                   if (dist <= T(0)) return;
                   const T s = g.data[0] / dist;
                   for (std::size_t i = 0; i < na.value.numel(); ++i) {
                     const T d = na.value.data[i] - nb.value.data[i];
                     na.grad.data[i] += s * d;
                     nb.grad.data[i] -= s * d;
                   }
                 });
  }

  // ---- backward ----

  void backward(Var loss) {
    const std::uint32_t li = check(loss);
    if (nodes_[li].value.numel() != 1) throw NotScalarLossError();
    for (auto& n : nodes_) n.grad.fill(T(0));
    nodes_[li].grad.data[0] = T(1);
    for (std::uint32_t i = li;; --i) {
      if (nodes_[i].back) nodes_[i].back(*this);
      if (i == 0) break;
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Tape&)> back;
  };

  std::vector<Node> nodes_;
  bool check_finite_ = true;

  std::uint32_t check(Var v) const {
    if (!v.valid() || v.idx >= nodes_.size()) throw DetachedTensorError();
    return v.idx;
  }

  Var push(const char* op, Tensor<T> value, std::function<void(Tape&)> back) {
    if (check_finite_ && !value.all_finite()) throw NonFiniteError(op);
    Node n;
    n.grad = Tensor<T>::zeros(value.shape);
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Var push1_deferred(const char* op, Tensor<T> value, Var a) {
    (void)a;
    return push(op, std::move(value), {});
  }

  template <typename F>
  void attach_unary(Var out, Var a, F f) {
    std::uint32_t oi = out.idx, ai = a.idx;
    nodes_[oi].back = [oi, ai, f](Tape& t) {
      f(t, t.nodes_[oi].grad, t.nodes_[ai]);
    };
  }

  template <typename F>
  Var push1(const char* op, Tensor<T> value, Var a, F f) {
    std::uint32_t ai = check(a);
    Var out = push(op, std::move(value), {});
    std::uint32_t oi = out.idx;
    nodes_[oi].back = [oi, ai, f](Tape& t) {
      f(t, t.nodes_[oi].grad, t.nodes_[ai]);
    };
    return out;
  }

  template <typename F>
  Var push2(const char* op, Tensor<T> value, Var a, Var b, F f) {
    std::uint32_t ai = check(a), bi = check(b);
    Var out = push(op, std::move(value), {});
    std::uint32_t oi = out.idx;
    nodes_[oi].back = [oi, ai, bi, f](Tape& t) {
      f(t, t.nodes_[oi].grad, t.nodes_[ai], t.nodes_[bi]);
    };
    return out;
  }

  void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!a.same_shape(b)) {
      throw ShapeMismatchError(op, shape_str(b.shape), shape_str(a.shape));
    }
  }
};

}  // namespace structvec
