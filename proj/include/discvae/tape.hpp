#pragma once

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "discvae/types.hpp"

namespace discvae {

// Reverse-mode differentiation over dense Eigen matrices. A Tape records the
// forward computation as a flat list of nodes; backward() replays it in
// reverse, accumulating gradients. Convention throughout: rows index batch
// samples, columns index features.
//
// The tape is rebuilt per forward pass. Handles (Var) are cheap value types;
// all state lives in the tape.

template <typename S>
class Tape;

template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  const MatX<S>& val() const { return tape->val(id); }
  Eigen::Index rows() const { return val().rows(); }
  Eigen::Index cols() const { return val().cols(); }
};

template <typename S>
class Tape {
 public:
  using Mat = MatX<S>;
  using BackFn = std::function<void(Tape&, const Mat& g)>;

  Var<S> input(Mat value, BackFn back = nullptr) {
    nodes_.push_back(Node{std::move(value), Mat(), std::move(back)});
    return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<S> constant(Mat value) { return input(std::move(value)); }

  Var<S> zeros(Eigen::Index r, Eigen::Index c) {
    return input(Mat::Zero(r, c));
  }

  // Id the next pushed node will get; lets a backward closure refer to the
  // op's own output value.
  int next_id() const { return static_cast<int>(nodes_.size()); }

  const Mat& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  Mat& grad(int id) { return nodes_[static_cast<size_t>(id)].grad; }
  const Mat& grad(Var<S> v) const {
    return nodes_[static_cast<size_t>(v.id)].grad;
  }

  // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse. root must be
  // a 1x1 node (a scalar objective).
  void backward(Var<S> root) {
    if (root.val().size() != 1)
      throw std::invalid_argument("backward: root must be a scalar node");
    for (int i = 0; i <= root.id; ++i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      n.grad.setZero(n.value.rows(), n.value.cols());
    }
    nodes_[static_cast<size_t>(root.id)].grad(0, 0) = S(1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.back) n.back(*this, n.grad);
    }
  }

  void clear() { nodes_.clear(); }
  int size() const { return static_cast<int>(nodes_.size()); }
  void reserve(size_t n) { nodes_.reserve(n); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    BackFn back;
  };
  std::vector<Node> nodes_;
};

namespace detail {
template <typename S>
void check_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// primitives

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimension mismatch");
  Tape<S>& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.input(a.val() * b.val(), [ia, ib](Tape<S>& tp, const MatX<S>& g) {
    tp.grad(ia).noalias() += g * tp.val(ib).transpose();
    tp.grad(ib).noalias() += tp.val(ia).transpose() * g;
  });
}

template <typename S>
Var<S> operator+(Var<S> a, Var<S> b) {
  detail::check_same_shape(a, b, "add");
  Tape<S>& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.input(a.val() + b.val(), [ia, ib](Tape<S>& tp, const MatX<S>& g) {
    tp.grad(ia) += g;
    tp.grad(ib) += g;
  });
}

template <typename S>
Var<S> operator-(Var<S> a, Var<S> b) {
  detail::check_same_shape(a, b, "sub");
  Tape<S>& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.input(a.val() - b.val(), [ia, ib](Tape<S>& tp, const MatX<S>& g) {
    tp.grad(ia) += g;
    tp.grad(ib) -= g;
  });
}

// Adds a 1xC row (e.g. a bias) to every row of a.
template <typename S>
Var<S> add_rowwise(Var<S> a, Var<S> row) {
  if (row.rows() != 1 || row.cols() != a.cols())
    throw std::invalid_argument("add_rowwise: row must be 1 x cols(a)");
  Tape<S>& t = *a.tape;
  int ia = a.id, ir = row.id;
  MatX<S> v = a.val();
  v.rowwise() += RowX<S>(row.val().row(0));
  return t.input(std::move(v), [ia, ir](Tape<S>& tp, const MatX<S>& g) {
    tp.grad(ia) += g;
    tp.grad(ir) += g.colwise().sum();
  });
}

template <typename S>
Var<S> hadamard(Var<S> a, Var<S> b) {
  detail::check_same_shape(a, b, "hadamard");
  Tape<S>& t = *a.tape;
  int ia = a.id, ib = b.id;
  return t.input(a.val().cwiseProduct(b.val()),
                 [ia, ib](Tape<S>& tp, const MatX<S>& g) {
                   tp.grad(ia) += g.cwiseProduct(tp.val(ib));
                   tp.grad(ib) += g.cwiseProduct(tp.val(ia));
                 });
}

template <typename S>
Var<S> scale(Var<S> a, S c) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.input(a.val() * c, [ia, c](Tape<S>& tp, const MatX<S>& g) {
    tp.grad(ia) += g * c;
  });
}

template <typename S>
Var<S> operator-(Var<S> a) {
  return scale(a, S(-1));
}

template <typename S>
Var<S> add_const(Var<S> a, S c) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.input((a.val().array() + c).matrix(),
                 [ia](Tape<S>& tp, const MatX<S>& g) { tp.grad(ia) += g; });
}

template <typename S>
Var<S> sigmoid(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id, io = t.next_id();
  MatX<S> v = (S(1) / (S(1) + (-a.val().array()).exp())).matrix();
  return t.input(std::move(v), [ia, io](Tape<S>& tp, const MatX<S>& g) {
    const auto s = tp.val(io).array();
    tp.grad(ia) += (g.array() * s * (S(1) - s)).matrix();
  });
}

template <typename S>
Var<S> tanh_v(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id, io = t.next_id();
  return t.input(a.val().array().tanh().matrix(),
                 [ia, io](Tape<S>& tp, const MatX<S>& g) {
                   const auto y = tp.val(io).array();
                   tp.grad(ia) += (g.array() * (S(1) - y.square())).matrix();
                 });
}

template <typename S>
Var<S> relu(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.input(a.val().cwiseMax(S(0)), [ia](Tape<S>& tp, const MatX<S>& g) {
    tp.grad(ia) +=
        (g.array() * (tp.val(ia).array() > S(0)).template cast<S>()).matrix();
  });
}

template <typename S>
Var<S> exp_v(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id, io = t.next_id();
  return t.input(a.val().array().exp().matrix(),
                 [ia, io](Tape<S>& tp, const MatX<S>& g) {
                   tp.grad(ia) += g.cwiseProduct(tp.val(io));
                 });
}

template <typename S>
Var<S> log_v(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.input(a.val().array().log().matrix(),
                 [ia](Tape<S>& tp, const MatX<S>& g) {
                   tp.grad(ia) += g.cwiseQuotient(tp.val(ia));
                 });
}

template <typename S>
Var<S> square(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.input(a.val().array().square().matrix(),
                 [ia](Tape<S>& tp, const MatX<S>& g) {
                   tp.grad(ia) +=
                       (S(2) * g.array() * tp.val(ia).array()).matrix();
                 });
}

// Gradient is zero strictly outside (lo, hi) and passes through inside.
template <typename S>
Var<S> clamp(Var<S> a, S lo, S hi) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  return t.input(a.val().cwiseMax(lo).cwiseMin(hi),
                 [ia, lo, hi](Tape<S>& tp, const MatX<S>& g) {
                   const auto x = tp.val(ia).array();
                   tp.grad(ia) +=
                       (g.array() * ((x > lo) && (x < hi)).template cast<S>())
                           .matrix();
                 });
}

// Row-stable log softmax: v = x - logsumexp(x) per row.
template <typename S>
Var<S> log_softmax_rows(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id, io = t.next_id();
  MatX<S> v = a.val();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    S m = v.row(r).maxCoeff();
    S lse = m + std::log((v.row(r).array() - m).exp().sum());
    v.row(r).array() -= lse;
  }
  return t.input(std::move(v), [ia, io](Tape<S>& tp, const MatX<S>& g) {
    MatX<S> p = tp.val(io).array().exp().matrix();
    VecX<S> rs = g.rowwise().sum();
    tp.grad(ia) += g - p.cwiseProduct(rs.replicate(1, p.cols()));
  });
}

template <typename S>
Var<S> softmax_rows(Var<S> a) {
  return exp_v(log_softmax_rows(a));
}

template <typename S>
Var<S> sum_all(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  MatX<S> v(1, 1);
  v(0, 0) = a.val().sum();
  return t.input(std::move(v), [ia](Tape<S>& tp, const MatX<S>& g) {
    tp.grad(ia).array() += g(0, 0);
  });
}

template <typename S>
Var<S> mean_all(Var<S> a) {
  return scale(sum_all(a), S(1) / static_cast<S>(a.val().size()));
}

// R x C -> R x 1, summing each row.
template <typename S>
Var<S> sum_rowwise(Var<S> a) {
  Tape<S>& t = *a.tape;
  int ia = a.id;
  MatX<S> v = a.val().rowwise().sum();
  return t.input(std::move(v), [ia](Tape<S>& tp, const MatX<S>& g) {
    tp.grad(ia) += g.replicate(1, tp.val(ia).cols());
  });
}

template <typename S>
Var<S> concat_cols(Var<S> a, Var<S> b) {
  if (a.rows() != b.rows())
    throw std::invalid_argument("concat_cols: row count mismatch");
  Tape<S>& t = *a.tape;
  int ia = a.id, ib = b.id;
  MatX<S> v(a.rows(), a.cols() + b.cols());
  v.leftCols(a.cols()) = a.val();
  v.rightCols(b.cols()) = b.val();
  Eigen::Index ca = a.cols();
  return t.input(std::move(v), [ia, ib, ca](Tape<S>& tp, const MatX<S>& g) {
    tp.grad(ia) += g.leftCols(ca);
    tp.grad(ib) += g.rightCols(g.cols() - ca);
  });
}

template <typename S>
Var<S> slice_cols(Var<S> a, Eigen::Index c0, Eigen::Index n) {
  if (c0 < 0 || n < 0 || c0 + n > a.cols())
    throw std::invalid_argument("slice_cols: out of range");
  Tape<S>& t = *a.tape;
  int ia = a.id;
  MatX<S> v = a.val().middleCols(c0, n);
  return t.input(std::move(v), [ia, c0, n](Tape<S>& tp, const MatX<S>& g) {
    tp.grad(ia).middleCols(c0, n) += g;
  });
}

}  // namespace discvae
