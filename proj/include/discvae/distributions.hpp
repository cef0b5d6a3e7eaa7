#pragma once

#include <cmath>

#include "discvae/rng.hpp"
#include "discvae/tape.hpp"
#include "discvae/types.hpp"

namespace discvae {

// Distribution math used by the models. Every quantity exists in two forms:
// a tape form (Var) that participates in the training graph, and a plain
// Eigen form for evaluation and rollout where no gradients are needed.
// Diagonal Gaussians are carried as (mean, log_var) matrix pairs, one row
// per batch sample.

inline constexpr double kLog2Pi = 1.8378770664093453;

// mean + exp(0.5 log_var) * eps with eps ~ N(0, I) supplied by the caller.
template <typename S>
Var<S> reparam_sample(Var<S> mean, Var<S> log_var, Var<S> eps) {
  return mean + hadamard(exp_v(scale(log_var, S(0.5))), eps);
}

// KL(q || p) between diagonal Gaussians, summed over dimensions; R x 1.
template <typename S>
Var<S> kl_diag_gaussians(Var<S> mq, Var<S> lq, Var<S> mp, Var<S> lp) {
  Var<S> diff = mq - mp;
  Var<S> inv_vp = exp_v(-lp);
  Var<S> term =
      (lp - lq) + hadamard(exp_v(lq) + hadamard(diff, diff), inv_vp);
  return scale(sum_rowwise(add_const(term, S(-1))), S(0.5));
}

template <typename S>
MatX<S> kl_diag_gaussians_plain(const MatX<S>& mq, const MatX<S>& lq,
                                const MatX<S>& mp, const MatX<S>& lp) {
  auto diff = (mq - mp).array();
  auto term = (lp - lq).array() + (lq.array().exp() + diff.square()) *
                                      (-lp.array()).exp() -
              S(1);
  return (S(0.5) * term).matrix().rowwise().sum();
}

// log N(x | mean, diag exp(log_var)) summed over dimensions; R x 1.
template <typename S>
Var<S> gaussian_log_likelihood(Var<S> x, Var<S> mean, Var<S> log_var) {
  Var<S> diff = x - mean;
  Var<S> term = add_const(log_var + hadamard(hadamard(diff, diff),
                                             exp_v(-log_var)),
                          static_cast<S>(kLog2Pi));
  return scale(sum_rowwise(term), S(-0.5));
}

template <typename S>
MatX<S> gaussian_log_likelihood_plain(const MatX<S>& x, const MatX<S>& mean,
                                      const MatX<S>& log_var) {
  auto diff = (x - mean).array();
  auto term = log_var.array() + diff.square() * (-log_var.array()).exp() +
              static_cast<S>(kLog2Pi);
  return (S(-0.5) * term).matrix().rowwise().sum();
}

// Concrete / Gumbel-softmax relaxation: softmax((logits + g) / tau) with
// g_i = -log(-log u_i) supplied by the caller.
template <typename S>
Var<S> gumbel_softmax_sample(Var<S> logits, Var<S> gumbel, S tau) {
  return softmax_rows(scale(logits + gumbel, S(1) / tau));
}

template <typename S>
MatX<S> gumbel_noise(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  MatX<S> g = rng.uniform_open_matrix<S>(rows, cols);
  return (-(-g.array().log()).log()).matrix();
}

// Entropy of the categorical given row-wise log probabilities; R x 1.
template <typename S>
Var<S> categorical_entropy(Var<S> log_probs) {
  return -sum_rowwise(hadamard(exp_v(log_probs), log_probs));
}

template <typename S>
MatX<S> categorical_entropy_plain(const MatX<S>& log_probs) {
  return (-(log_probs.array().exp() * log_probs.array()))
      .matrix()
      .rowwise()
      .sum();
}

template <typename S>
MatX<S> log_softmax_rows_plain(const MatX<S>& x) {
  MatX<S> v = x;
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    S m = v.row(r).maxCoeff();
    S lse = m + std::log((v.row(r).array() - m).exp().sum());
    v.row(r).array() -= lse;
  }
  return v;
}

template <typename S>
MatX<S> softmax_rows_plain(const MatX<S>& x) {
  return log_softmax_rows_plain(x).array().exp().matrix();
}

template <typename S>
MatX<S> reparam_sample_plain(const MatX<S>& mean, const MatX<S>& log_var,
                             Rng& rng) {
  MatX<S> eps = rng.normal_matrix<S>(mean.rows(), mean.cols());
  return mean + ((S(0.5) * log_var.array()).exp() * eps.array()).matrix();
}

}  // namespace discvae
