#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "structvec/optim.hpp"
#include "structvec/tape.hpp"
#include "structvec/tensor.hpp"

namespace structvec {

struct EmptySequenceError : std::runtime_error {
  EmptySequenceError() : std::runtime_error("encoder input is empty") {}
};

// Sub-network dimensions. Defaults follow the lexical side; the syntactic
// side overrides embed_dim/max_len (100 / 80).
struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 300;
  std::size_t lstm_hidden = 64;
  std::size_t attn_hidden = 64;   // d_a
  std::size_t attn_hops = 4;      // r
  std::size_t mlp_hidden = 256;
  std::size_t output_dim = 128;
  std::size_t max_len = 40;
};

template <typename T>
struct LstmParams {
  // Gate order along the 4u axis: input, forget, candidate, output.
  Param<T> w_in;   // [4u x input_dim]
  Param<T> w_rec;  // [4u x u]
  Param<T> bias;   // [4u]

  void init(const std::string& prefix, std::size_t input_dim, std::size_t u,
            Rng& rng) {
    w_in = Param<T>(prefix + ".w_in",
                    xavier_uniform<T>({4 * u, input_dim}, input_dim, 4 * u, rng));
    w_rec = Param<T>(prefix + ".w_rec",
                     xavier_uniform<T>({4 * u, u}, u, 4 * u, rng));
    bias = Param<T>(prefix + ".bias", Tensor<T>::zeros({4 * u}));
  }

  void collect(std::vector<Param<T>*>& out) {
    out.push_back(&w_in);
    out.push_back(&w_rec);
    out.push_back(&bias);
  }
};

// BiLSTM + structured self-attention + MLP head, independent of the input
// embedding (the lexical/syntactic encoders own a table, the attribution
// network feeds frozen vectors).
template <typename T>
struct SeqEncoderParams {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;       // u
  std::size_t attn_hidden = 0;  // d_a
  std::size_t attn_hops = 0;    // r
  std::size_t mlp_hidden = 0;
  std::size_t output_dim = 0;

  LstmParams<T> fwd, bwd;
  Param<T> attn_w1;  // [d_a x 2u]
  Param<T> attn_w2;  // [r x d_a]
  Param<T> mlp_w1;   // [mlp_hidden x r*2u]
  Param<T> mlp_b1;   // [mlp_hidden]
  Param<T> mlp_w2;   // [output_dim x mlp_hidden]
  Param<T> mlp_b2;   // [output_dim]

  void init(const std::string& prefix, std::size_t in_dim, std::size_t u,
            std::size_t d_a, std::size_t r, std::size_t mlp, std::size_t out,
            Rng& rng) {
    input_dim = in_dim;
    hidden = u;
    attn_hidden = d_a;
    attn_hops = r;
    mlp_hidden = mlp;
    output_dim = out;
    fwd.init(prefix + ".fwd", in_dim, u, rng);
    bwd.init(prefix + ".bwd", in_dim, u, rng);
    attn_w1 = Param<T>(prefix + ".attn_w1",
                       xavier_uniform<T>({d_a, 2 * u}, 2 * u, d_a, rng));
    attn_w2 = Param<T>(prefix + ".attn_w2",
                       xavier_uniform<T>({r, d_a}, d_a, r, rng));
    mlp_w1 = Param<T>(prefix + ".mlp_w1",
                      xavier_uniform<T>({mlp, r * 2 * u}, r * 2 * u, mlp, rng));
    mlp_b1 = Param<T>(prefix + ".mlp_b1", Tensor<T>::zeros({mlp}));
    mlp_w2 = Param<T>(prefix + ".mlp_w2",
                      xavier_uniform<T>({out, mlp}, mlp, out, rng));
    mlp_b2 = Param<T>(prefix + ".mlp_b2", Tensor<T>::zeros({out}));
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    fwd.collect(out);
    bwd.collect(out);
    out.push_back(&attn_w1);
    out.push_back(&attn_w2);
    out.push_back(&mlp_w1);
    out.push_back(&mlp_b1);
    out.push_back(&mlp_w2);
    out.push_back(&mlp_b2);
    return out;
  }
};

// One sub-network: trainable embedding table + sequence encoder.
template <typename T>
struct EncoderParams {
  EncoderConfig cfg;
  Param<T> embedding;  // [vocab_size x embed_dim]
  SeqEncoderParams<T> seq;

  void init(const std::string& prefix, const EncoderConfig& c, Rng& rng) {
    cfg = c;
    // Embeddings start from U[-0.1, 0.1]; the rest is Xavier.
    embedding = Param<T>(prefix + ".embedding",
                         uniform_init<T>({c.vocab_size, c.embed_dim}, -0.1, 0.1, rng));
    seq.init(prefix + ".seq", c.embed_dim, c.lstm_hidden, c.attn_hidden,
             c.attn_hops, c.mlp_hidden, c.output_dim, rng);
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out = seq.params();
    out.insert(out.begin(), &embedding);
    return out;
  }
};

// Weight leaves bound to one tape; create once per tape and reuse across
// every sequence encoded on it.
template <typename T>
struct SeqEncoderVars {
  using Var = typename Tape<T>::Var;
  Var wf_in, wf_rec, bf;
  Var wb_in, wb_rec, bb;
  Var aw1, aw2;
  Var mw1, mb1, mw2, mb2;

  static SeqEncoderVars bind(Tape<T>& tape, SeqEncoderParams<T>& p) {
    SeqEncoderVars v;
    v.wf_in = tape.param(p.fwd.w_in);
    v.wf_rec = tape.param(p.fwd.w_rec);
    v.bf = tape.param(p.fwd.bias);
    v.wb_in = tape.param(p.bwd.w_in);
    v.wb_rec = tape.param(p.bwd.w_rec);
    v.bb = tape.param(p.bwd.bias);
    v.aw1 = tape.param(p.attn_w1);
    v.aw2 = tape.param(p.attn_w2);
    v.mw1 = tape.param(p.mlp_w1);
    v.mb1 = tape.param(p.mlp_b1);
    v.mw2 = tape.param(p.mlp_w2);
    v.mb2 = tape.param(p.mlp_b2);
    return v;
  }
};

inline std::vector<int> truncate(std::vector<int> ids, std::size_t max_len) {
  if (ids.size() > max_len) ids.resize(max_len);
  return ids;
}

// Embedding lookup: row i of the result is the table row for ids[i].
template <typename T>
typename Tape<T>::Var embed(Tape<T>& tape, EncoderParams<T>& enc,
                            std::span<const int> ids) {
  if (ids.empty()) throw EmptySequenceError();
  return tape.gather_rows(enc.embedding, ids);
}

namespace detail {

// One LSTM direction over the rows of X in the given time order.
// Returns the hidden state h_t per step, indexed by position (not by time).
template <typename T>
std::vector<typename Tape<T>::Var> lstm_direction(
    Tape<T>& tape, typename Tape<T>::Var w_in, typename Tape<T>::Var w_rec,
    typename Tape<T>::Var bias, std::size_t u, typename Tape<T>::Var x_rows,
    const std::vector<std::size_t>& order) {
  using Var = typename Tape<T>::Var;
  std::vector<Var> states(order.size());
  Var h = tape.leaf(Tensor<T>::zeros({u}));
  Var c = tape.leaf(Tensor<T>::zeros({u}));
  for (std::size_t pos : order) {
    Var x = tape.row(x_rows, pos);
    Var z = tape.add(tape.add(tape.matmul(w_in, x), tape.matmul(w_rec, h)), bias);
    Var i_g = tape.sigmoid_(tape.slice(z, 0, u));
    Var f_g = tape.sigmoid_(tape.slice(z, u, u));
    Var g_g = tape.tanh_(tape.slice(z, 2 * u, u));
    Var o_g = tape.sigmoid_(tape.slice(z, 3 * u, u));
    c = tape.add(tape.mul(f_g, c), tape.mul(i_g, g_g));
    h = tape.mul(o_g, tape.tanh_(c));
    states[pos] = h;
  }
  return states;
}

}  // namespace detail

// H row t = concat(forward h_t, backward h_t); zero initial states.
template <typename T>
typename Tape<T>::Var bilstm(Tape<T>& tape, const SeqEncoderVars<T>& v,
                             std::size_t u, typename Tape<T>::Var x_rows) {
  using Var = typename Tape<T>::Var;
  const std::size_t n = tape.value(x_rows).rows();
  std::vector<std::size_t> fwd_order(n), bwd_order(n);
  for (std::size_t t = 0; t < n; ++t) {
    fwd_order[t] = t;
    bwd_order[t] = n - 1 - t;
  }
  std::vector<Var> hf = detail::lstm_direction<T>(tape, v.wf_in, v.wf_rec,
                                                  v.bf, u, x_rows, fwd_order);
  std::vector<Var> hb = detail::lstm_direction<T>(tape, v.wb_in, v.wb_rec,
                                                  v.bb, u, x_rows, bwd_order);
  std::vector<Var> rows(n);
  for (std::size_t t = 0; t < n; ++t) {
    const Var both[2] = {hf[t], hb[t]};
    rows[t] = tape.concat(std::span<const Var>(both, 2));
  }
  return tape.concat_rows(std::span<const Var>(rows.data(), rows.size()));
}

// A = softmax(W_s2 tanh(W_s1 H^T)), M = A H.
template <typename T>
std::pair<typename Tape<T>::Var, typename Tape<T>::Var> self_attention(
    Tape<T>& tape, const SeqEncoderVars<T>& v, typename Tape<T>::Var h_rows) {
  using Var = typename Tape<T>::Var;
  Var ht = tape.transpose(h_rows);                       // [2u x n]
  Var scores = tape.matmul(v.aw2, tape.tanh_(tape.matmul(v.aw1, ht)));
  Var a = tape.softmax_rows(scores);                     // [r x n]
  Var m = tape.matmul(a, h_rows);                        // [r x 2u]
  return {m, a};
}

// V = W2 tanh(W1 flatten(M) + b1) + b2.
template <typename T>
typename Tape<T>::Var mlp_head(Tape<T>& tape, const SeqEncoderVars<T>& v,
                               typename Tape<T>::Var m) {
  using Var = typename Tape<T>::Var;
  Var flat = tape.flatten(m);
  Var hidden = tape.tanh_(tape.add(tape.matmul(v.mw1, flat), v.mb1));
  return tape.add(tape.matmul(v.mw2, hidden), v.mb2);
}

template <typename T>
typename Tape<T>::Var encode_seq(Tape<T>& tape, const SeqEncoderVars<T>& v,
                                 std::size_t u, typename Tape<T>::Var x_rows) {
  auto [m, a] = self_attention(tape, v, bilstm(tape, v, u, x_rows));
  (void)a;
  return mlp_head(tape, v, m);
}

// Full sub-network forward with pre-bound weights.
template <typename T>
typename Tape<T>::Var encode(Tape<T>& tape, const SeqEncoderVars<T>& v,
                             EncoderParams<T>& enc, std::span<const int> ids) {
  return encode_seq(tape, v, enc.cfg.lstm_hidden, embed(tape, enc, ids));
}

// Standalone forward; binds the weights onto the tape first.
template <typename T>
typename Tape<T>::Var encode(Tape<T>& tape, EncoderParams<T>& enc,
                             std::span<const int> ids) {
  SeqEncoderVars<T> v = SeqEncoderVars<T>::bind(tape, enc.seq);
  return encode(tape, v, enc, ids);
}

}  // namespace structvec
