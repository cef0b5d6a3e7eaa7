#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "discvae/distributions.hpp"
#include "discvae/nn.hpp"
#include "discvae/objective.hpp"
#include "discvae/rng.hpp"

namespace discvae {

// Static Gaussian-mixture VAE: discrete y with uniform mixture weights
// selects a component of the learnable prior p(z|y); q(y|x) is relaxed with
// Gumbel-softmax so the ELBO stays differentiable. Serves as the clustering
// testbed; the sequence model reuses the same mechanism for its global
// latent.

struct GmvaeConfig {
  int K = 2;
  int dim_x = 2;
  int dim_z = 2;
  int hidden = 64;
  double sigma2_dec = 1.0;
};

template <typename S>
struct Gmvae {
  GmvaeConfig cfg;
  DenseBlock<S> encoder_y;    // x -> K logits
  GaussianBlock<S> encoder_z; // x ⊕ y -> q(z|x,y)
  MatX<S> prior_mean;         // K x dim_z component table
  MatX<S> prior_logvar;       // K x dim_z
  DenseBlock<S> decoder_x;    // z -> x mean, fixed variance

  template <typename F>
  void visit(const std::string& prefix, F&& fn) {
    encoder_y.visit(prefix + ".encoder_y", fn);
    encoder_z.visit(prefix + ".encoder_z", fn);
    fn(prefix + ".prior_mean", prior_mean);
    fn(prefix + ".prior_logvar", prior_logvar);
    decoder_x.visit(prefix + ".decoder_x", fn);
  }
};

template <typename S>
Gmvae<S> make_gmvae(const GmvaeConfig& cfg, Rng& rng) {
  Gmvae<S> m;
  m.cfg = cfg;
  m.encoder_y = make_dense_block<S>(cfg.dim_x, cfg.hidden, cfg.K, rng);
  m.encoder_z =
      make_gaussian_block<S>(cfg.dim_x + cfg.K, cfg.hidden, cfg.dim_z, rng);
  // random component means break the symmetry between clusters; unit variance
  m.prior_mean = rng.normal_matrix<S>(cfg.K, cfg.dim_z);
  m.prior_logvar = MatX<S>::Zero(cfg.K, cfg.dim_z);
  m.decoder_x = make_dense_block<S>(cfg.dim_z, cfg.hidden, cfg.dim_x, rng);
  return m;
}

template <typename S>
struct GmvaeElbo {
  Var<S> objective;
  ElboTerms<S> terms;
};

// Mean over the batch of [log p(x|z) - KL(q(z|x,y)||p(z|y)) + H(q(y|x))],
// one Monte-Carlo draw per datum.
template <typename S>
GmvaeElbo<S> gmvae_elbo(Gmvae<S>& m, Binder<S>& bn, const MatX<S>& x,
                        Rng& rng, S tau,
                        ObjectiveForm form = ObjectiveForm::entropy) {
  if (x.rows() == 0) throw std::invalid_argument("gmvae_elbo: empty batch");
  Tape<S>& tape = bn.tape();
  const Eigen::Index B = x.rows();
  const int K = m.cfg.K;

  Var<S> vx = tape.constant(x);
  Var<S> logits = m.encoder_y.forward(bn, vx);
  Var<S> log_q_y = log_softmax_rows(logits);
  Var<S> entropy = categorical_entropy(log_q_y);

  Var<S> gumbel = tape.constant(gumbel_noise<S>(rng, B, K));
  Var<S> y = gumbel_softmax_sample(logits, gumbel, tau);

  auto q_z = m.encoder_z.forward(bn, concat_cols(vx, y));
  Var<S> eps = tape.constant(rng.normal_matrix<S>(B, m.cfg.dim_z));
  Var<S> z = reparam_sample(q_z.mean, q_z.log_var, eps);

  Var<S> p_mean = matmul(y, bn(m.prior_mean));
  Var<S> p_logvar = clamp(matmul(y, bn(m.prior_logvar)),
                          static_cast<S>(kLogVarMin),
                          static_cast<S>(kLogVarMax));
  Var<S> kl_z = kl_diag_gaussians(q_z.mean, q_z.log_var, p_mean, p_logvar);

  Var<S> x_mean = m.decoder_x.forward(bn, z);
  Var<S> dec_logvar = tape.constant(MatX<S>::Constant(
      B, m.cfg.dim_x, static_cast<S>(std::log(m.cfg.sigma2_dec))));
  Var<S> recon = gaussian_log_likelihood(vx, x_mean, dec_logvar);

  Var<S> reg = (form == ObjectiveForm::entropy)
                   ? entropy
                   : add_const(entropy, -static_cast<S>(std::log(S(K))));
  Var<S> objective = scale(sum_all((recon - kl_z) + reg), S(1) / S(B));

  GmvaeElbo<S> out{objective, {}};
  out.terms.objective = objective.val()(0, 0);
  out.terms.recon_a = recon.val().mean();
  out.terms.kl_global = kl_z.val().mean();
  out.terms.entropy = entropy.val().mean();
  return out;
}

template <typename S>
struct GmvaeInference {
  MatX<S> log_q_y;   // B x K
  MatX<S> y_relaxed; // B x K relaxed sample used downstream
  MatX<S> z_mean;    // q(z|x,y) for the drawn y
  MatX<S> z_logvar;
  MatX<S> z;         // reparameterized draw
};

// Plain (gradient-free) inference pass mirroring the ELBO wiring.
template <typename S>
GmvaeInference<S> gmvae_infer(const Gmvae<S>& m, const MatX<S>& x, Rng& rng,
                              S tau) {
  GmvaeInference<S> out;
  MatX<S> logits = dense_block_plain(m.encoder_y, x);
  out.log_q_y = log_softmax_rows_plain<S>(logits);
  MatX<S> g = gumbel_noise<S>(rng, x.rows(), m.cfg.K);
  out.y_relaxed =
      softmax_rows_plain<S>((((logits + g).array()) / tau).matrix());
  MatX<S> xy(x.rows(), x.cols() + m.cfg.K);
  xy << x, out.y_relaxed;
  auto q = gaussian_block_plain(m.encoder_z, xy);
  out.z_mean = q.first;
  out.z_logvar = q.second;
  out.z = reparam_sample_plain<S>(out.z_mean, out.z_logvar, rng);
  return out;
}

// Cluster assignment: argmax_k q(y_k|x), first index on ties.
template <typename S>
std::vector<int> gmvae_assign(const Gmvae<S>& m, const MatX<S>& x) {
  MatX<S> logits = dense_block_plain(m.encoder_y, x);
  std::vector<int> out(static_cast<size_t>(x.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    int best = 0;
    for (int k = 1; k < m.cfg.K; ++k)
      if (logits(r, k) > logits(r, best)) best = k;
    out[static_cast<size_t>(r)] = best;
  }
  return out;
}

template <typename S>
struct GmvaeSample {
  MatX<S> z;
  MatX<S> x;
};

// Three-step generation: pick component via one-hot y, z ~ p(z|y), then
// x ~ N(decoder(z), sigma2_dec I).
template <typename S>
GmvaeSample<S> gmvae_generate(const Gmvae<S>& m, const MatX<S>& y_onehot,
                              Rng& rng) {
  for (Eigen::Index r = 0; r < y_onehot.rows(); ++r) {
    int ones = 0;
    for (Eigen::Index k = 0; k < y_onehot.cols(); ++k) {
      S v = y_onehot(r, k);
      if (v == S(1))
        ++ones;
      else if (v != S(0))
        throw std::invalid_argument("gmvae_generate: y must be one-hot");
    }
    if (ones != 1)
      throw std::invalid_argument("gmvae_generate: y must be one-hot");
  }
  GmvaeSample<S> out;
  MatX<S> p_mean = y_onehot * m.prior_mean;
  MatX<S> p_logvar = (y_onehot * m.prior_logvar)
                         .cwiseMax(static_cast<S>(kLogVarMin))
                         .cwiseMin(static_cast<S>(kLogVarMax));
  out.z = reparam_sample_plain<S>(p_mean, p_logvar, rng);
  MatX<S> x_mean = dense_block_plain(m.decoder_x, out.z);
  out.x = x_mean + std::sqrt(static_cast<S>(m.cfg.sigma2_dec)) *
                       rng.normal_matrix<S>(x_mean.rows(), x_mean.cols());
  return out;
}

}  // namespace discvae
