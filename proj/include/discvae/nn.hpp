#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/QR>

#include "discvae/distributions.hpp"
#include "discvae/rng.hpp"
#include "discvae/tape.hpp"
#include "discvae/types.hpp"

namespace discvae {

// Network building blocks. Parameters live in plain Eigen matrices owned by
// the model structs; a Binder lifts each matrix onto a tape exactly once per
// forward pass so that repeated use (an LSTM cell stepped T times) routes all
// gradient contributions to a single node. Biases are stored 1 x n so every
// parameter is uniformly a matrix.

template <typename S>
class Binder {
 public:
  explicit Binder(Tape<S>& tape) : tape_(&tape) {}

  Var<S> operator()(MatX<S>& p) {
    auto it = ids_.find(&p);
    if (it != ids_.end()) return Var<S>{tape_, it->second};
    Var<S> v = tape_->input(p);
    ids_.emplace(&p, v.id);
    entries_.push_back({&p, v.id});
    return v;
  }

  // (parameter, tape node) pairs in bind order; the optimizer walks these.
  const std::vector<std::pair<MatX<S>*, int>>& entries() const {
    return entries_;
  }

  Tape<S>& tape() { return *tape_; }

 private:
  Tape<S>* tape_;
  std::unordered_map<const MatX<S>*, int> ids_;
  std::vector<std::pair<MatX<S>*, int>> entries_;
};

// Random orthogonal matrix via QR of a Gaussian draw, sign-corrected so the
// distribution is Haar-uniform rather than biased by the factorization.
template <typename S>
MatX<S> orthogonal_matrix(Eigen::Index n, Rng& rng) {
  MatXd a = rng.normal_matrix<double>(n, n);
  Eigen::HouseholderQR<MatXd> qr(a);
  MatXd q = qr.householderQ() * MatXd::Identity(n, n);
  VecXd d = qr.matrixQR().diagonal();
  for (Eigen::Index j = 0; j < n; ++j)
    if (d(j) < 0.0) q.col(j) = -q.col(j);
  return q.cast<S>();
}

// ---------------------------------------------------------------------------
// dense layers

template <typename S>
struct Dense {
  MatX<S> w;  // in x out
  MatX<S> b;  // 1 x out

  template <typename F>
  void visit(const std::string& prefix, F&& fn) {
    fn(prefix + ".w", w);
    fn(prefix + ".b", b);
  }
};

template <typename S>
Dense<S> make_dense(Eigen::Index in, Eigen::Index out, Rng& rng) {
  S bound = std::sqrt(S(1) / static_cast<S>(in));
  return Dense<S>{rng.uniform_matrix<S>(in, out, -bound, bound),
                  MatX<S>::Zero(1, out)};
}

template <typename S>
Var<S> affine(Binder<S>& bn, Dense<S>& d, Var<S> x) {
  return add_rowwise(matmul(x, bn(d.w)), bn(d.b));
}

// Single hidden layer with rectified-linear activation.
template <typename S>
struct DenseBlock {
  Dense<S> hidden;
  Dense<S> out;

  Var<S> forward(Binder<S>& bn, Var<S> x) {
    return affine(bn, out, relu(affine(bn, hidden, x)));
  }

  template <typename F>
  void visit(const std::string& prefix, F&& fn) {
    hidden.visit(prefix + ".hidden", fn);
    out.visit(prefix + ".out", fn);
  }
};

template <typename S>
DenseBlock<S> make_dense_block(Eigen::Index in, Eigen::Index hidden,
                               Eigen::Index out, Rng& rng) {
  return DenseBlock<S>{make_dense<S>(in, hidden, rng),
                       make_dense<S>(hidden, out, rng)};
}

// Hidden layer feeding separate mean and log-variance heads; log_var is
// clamped to keep exp() finite everywhere downstream.
template <typename S>
struct GaussianBlock {
  Dense<S> hidden;
  Dense<S> mean_head;
  Dense<S> logvar_head;

  struct Out {
    Var<S> mean;
    Var<S> log_var;
  };

  Out forward(Binder<S>& bn, Var<S> x) {
    Var<S> h = relu(affine(bn, hidden, x));
    return Out{affine(bn, mean_head, h),
               clamp(affine(bn, logvar_head, h), static_cast<S>(kLogVarMin),
                     static_cast<S>(kLogVarMax))};
  }

  template <typename F>
  void visit(const std::string& prefix, F&& fn) {
    hidden.visit(prefix + ".hidden", fn);
    mean_head.visit(prefix + ".mean", fn);
    logvar_head.visit(prefix + ".logvar", fn);
  }
};

template <typename S>
GaussianBlock<S> make_gaussian_block(Eigen::Index in, Eigen::Index hidden,
                                     Eigen::Index out, Rng& rng) {
  return GaussianBlock<S>{make_dense<S>(in, hidden, rng),
                          make_dense<S>(hidden, out, rng),
                          make_dense<S>(hidden, out, rng)};
}

// ---------------------------------------------------------------------------
// recurrence

// Gated long short-term memory cell. One fused weight matrix maps [x, h] to
// the four gate pre-activations in order (input, forget, output, candidate).
// Input rows get fan-in-scaled uniform init, recurrent rows get one
// orthogonal block per gate, biases start at zero.
template <typename S>
struct LstmCell {
  Eigen::Index d_in = 0;
  Eigen::Index d_h = 0;
  MatX<S> w;  // (d_in + d_h) x 4 d_h
  MatX<S> b;  // 1 x 4 d_h

  struct State {
    Var<S> h;
    Var<S> c;
  };

  State zero_state(Tape<S>& tape, Eigen::Index batch) {
    return State{tape.zeros(batch, d_h), tape.zeros(batch, d_h)};
  }

  State step(Binder<S>& bn, Var<S> x, State s) {
    Var<S> z = add_rowwise(matmul(concat_cols(x, s.h), bn(w)), bn(b));
    Var<S> i = sigmoid(slice_cols(z, 0, d_h));
    Var<S> f = sigmoid(slice_cols(z, d_h, d_h));
    Var<S> o = sigmoid(slice_cols(z, 2 * d_h, d_h));
    Var<S> g = tanh_v(slice_cols(z, 3 * d_h, d_h));
    Var<S> c = hadamard(f, s.c) + hadamard(i, g);
    return State{hadamard(o, tanh_v(c)), c};
  }

  template <typename F>
  void visit(const std::string& prefix, F&& fn) {
    fn(prefix + ".w", w);
    fn(prefix + ".b", b);
  }
};

// ---------------------------------------------------------------------------
// plain (gradient-free) forwards for evaluation and rollout

template <typename S>
MatX<S> dense_plain(const Dense<S>& d, const MatX<S>& x) {
  MatX<S> out = x * d.w;
  out.rowwise() += RowX<S>(d.b.row(0));
  return out;
}

template <typename S>
MatX<S> dense_block_plain(const DenseBlock<S>& blk, const MatX<S>& x) {
  MatX<S> h = dense_plain(blk.hidden, x).cwiseMax(S(0));
  return dense_plain(blk.out, h);
}

template <typename S>
std::pair<MatX<S>, MatX<S>> gaussian_block_plain(const GaussianBlock<S>& blk,
                                                 const MatX<S>& x) {
  MatX<S> pre = dense_plain(blk.hidden, x);
  MatX<S> h = pre.cwiseMax(S(0));
  MatX<S> lv = dense_plain(blk.logvar_head, h);
  lv = lv.cwiseMax(static_cast<S>(kLogVarMin))
           .cwiseMin(static_cast<S>(kLogVarMax));
  return {dense_plain(blk.mean_head, h), std::move(lv)};
}

template <typename S>
struct LstmStatePlain {
  MatX<S> h;
  MatX<S> c;
};

template <typename S>
LstmStatePlain<S> lstm_zero_state_plain(const LstmCell<S>& cell,
                                        Eigen::Index batch) {
  return {MatX<S>::Zero(batch, cell.d_h), MatX<S>::Zero(batch, cell.d_h)};
}

template <typename S>
LstmStatePlain<S> lstm_step_plain(const LstmCell<S>& cell, const MatX<S>& x,
                                  const LstmStatePlain<S>& s) {
  MatX<S> xh(x.rows(), cell.d_in + cell.d_h);
  xh << x, s.h;
  MatX<S> z = xh * cell.w;
  z.rowwise() += RowX<S>(cell.b.row(0));
  auto sig = [](const MatX<S>& v) {
    return (S(1) / (S(1) + (-v.array()).exp())).matrix();
  };
  MatX<S> i = sig(z.middleCols(0, cell.d_h));
  MatX<S> f = sig(z.middleCols(cell.d_h, cell.d_h));
  MatX<S> o = sig(z.middleCols(2 * cell.d_h, cell.d_h));
  MatX<S> g = z.middleCols(3 * cell.d_h, cell.d_h).array().tanh().matrix();
  MatX<S> c = f.cwiseProduct(s.c) + i.cwiseProduct(g);
  return {o.cwiseProduct(c.array().tanh().matrix()), std::move(c)};
}

template <typename S>
LstmCell<S> make_lstm(Eigen::Index d_in, Eigen::Index d_h, Rng& rng) {
  LstmCell<S> cell;
  cell.d_in = d_in;
  cell.d_h = d_h;
  S bound = std::sqrt(S(1) / static_cast<S>(d_in + d_h));
  cell.w.resize(d_in + d_h, 4 * d_h);
  cell.w.topRows(d_in) =
      rng.uniform_matrix<S>(d_in, 4 * d_h, -bound, bound);
  for (int gate = 0; gate < 4; ++gate)
    cell.w.block(d_in, gate * d_h, d_h, d_h) = orthogonal_matrix<S>(d_h, rng);
  cell.b = MatX<S>::Zero(1, 4 * d_h);
  return cell;
}

}  // namespace discvae
