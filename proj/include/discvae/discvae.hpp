#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "discvae/batch.hpp"
#include "discvae/distributions.hpp"
#include "discvae/nn.hpp"
#include "discvae/objective.hpp"
#include "discvae/rng.hpp"

namespace discvae {

// Disentangled sequence clustering VAE. A discrete intent y selects a
// component of a Gaussian-mixture prior over the sequence-level latent z_G,
// while per-step latents z_{t,L} ride on a forward recurrence; decoding
// conditions on [z_G, z_{t,L}, h_t]. The same struct doubles as the
// non-clustered baseline: K=1 with fixed_global_prior freezes the mixture to
// a standard normal and the entropy term vanishes identically.

struct DiscvaeConfig {
  int K = 13;
  int dim_global = 16;
  int dim_local = 16;
  int beams = 72;
  int d_a = 8;    // joystick feature width; d_a + d_l = 136 default
  int d_l = 128;  // laser feature width
  int bi_state = 512;
  int local_state = 128;
  int hidden = 512;  // MLP hidden width
  double sigma2_dec = 1.0;
  bool fixed_global_prior = false;  // use N(0,I) for p(z_G), never trained

  int x_dim() const { return d_a + d_l; }
};

template <typename S>
struct Discvae {
  DiscvaeConfig cfg;
  DenseBlock<S> joystick_encoder;  // 2 -> d_a
  DenseBlock<S> laser_encoder;     // beams -> d_l
  LstmCell<S> bi_fwd;              // x_dim -> bi_state
  LstmCell<S> bi_bwd;
  LstmCell<S> local_cell;          // x_dim + dim_local -> local_state
  DenseBlock<S> q_y_head;          // bi_state -> K logits
  GaussianBlock<S> q_zG_head;      // bi_state + K -> dim_global
  MatX<S> p_zG_mean;               // K x dim_global mixture table
  MatX<S> p_zG_logvar;
  GaussianBlock<S> q_zL_head;      // x_dim + local_state -> dim_local
  GaussianBlock<S> p_zL_head;      // local_state -> dim_local
  DenseBlock<S> joystick_decoder;  // dim_global + dim_local + local_state -> 2
  DenseBlock<S> laser_decoder;     // ... -> beams

  template <typename F>
  void visit(const std::string& prefix, F&& fn) {
    joystick_encoder.visit(prefix + ".joystick_encoder", fn);
    laser_encoder.visit(prefix + ".laser_encoder", fn);
    bi_fwd.visit(prefix + ".bi_fwd", fn);
    bi_bwd.visit(prefix + ".bi_bwd", fn);
    local_cell.visit(prefix + ".local_cell", fn);
    q_y_head.visit(prefix + ".q_y_head", fn);
    q_zG_head.visit(prefix + ".q_zG_head", fn);
    if (!cfg.fixed_global_prior) {
      fn(prefix + ".p_zG_mean", p_zG_mean);
      fn(prefix + ".p_zG_logvar", p_zG_logvar);
    }
    q_zL_head.visit(prefix + ".q_zL_head", fn);
    p_zL_head.visit(prefix + ".p_zL_head", fn);
    joystick_decoder.visit(prefix + ".joystick_decoder", fn);
    laser_decoder.visit(prefix + ".laser_decoder", fn);
  }
};

template <typename S>
Discvae<S> make_discvae(const DiscvaeConfig& cfg, Rng& rng) {
  Discvae<S> m;
  m.cfg = cfg;
  const int xd = cfg.x_dim();
  m.joystick_encoder = make_dense_block<S>(2, cfg.hidden, cfg.d_a, rng);
  m.laser_encoder = make_dense_block<S>(cfg.beams, cfg.hidden, cfg.d_l, rng);
  m.bi_fwd = make_lstm<S>(xd, cfg.bi_state, rng);
  m.bi_bwd = make_lstm<S>(xd, cfg.bi_state, rng);
  m.local_cell = make_lstm<S>(xd + cfg.dim_local, cfg.local_state, rng);
  m.q_y_head = make_dense_block<S>(cfg.bi_state, cfg.hidden, cfg.K, rng);
  m.q_zG_head = make_gaussian_block<S>(cfg.bi_state + cfg.K, cfg.hidden,
                                       cfg.dim_global, rng);
  // Random component means break cluster symmetry, unit variance to start.
  // The draw happens for every variant so all of them consume the same
  // stream; a lone component has no symmetry to break and stays at the
  // origin, which makes the K=1 model and the fixed-prior baseline coincide.
  MatX<S> centres = rng.normal_matrix<S>(cfg.K, cfg.dim_global);
  m.p_zG_mean = (cfg.fixed_global_prior || cfg.K == 1)
                    ? MatX<S>::Zero(cfg.K, cfg.dim_global)
                    : std::move(centres);
  m.p_zG_logvar = MatX<S>::Zero(cfg.K, cfg.dim_global);
  m.q_zL_head = make_gaussian_block<S>(xd + cfg.local_state, cfg.hidden,
                                       cfg.dim_local, rng);
  m.p_zL_head =
      make_gaussian_block<S>(cfg.local_state, cfg.hidden, cfg.dim_local, rng);
  const int dec_in = cfg.dim_global + cfg.dim_local + cfg.local_state;
  m.joystick_decoder = make_dense_block<S>(dec_in, cfg.hidden, 2, rng);
  m.laser_decoder = make_dense_block<S>(dec_in, cfg.hidden, cfg.beams, rng);
  return m;
}

// ---------------------------------------------------------------------------
// tape forward (training)

// Per-step modality encoding: xenc_t = [jenc(a_t), lenc(l_t)].
template <typename S>
std::vector<Var<S>> encode_steps(Discvae<S>& m, Binder<S>& bn,
                                 const SequenceBatch<S>& batch) {
  Tape<S>& tape = bn.tape();
  std::vector<Var<S>> out;
  out.reserve(static_cast<size_t>(batch.steps()));
  for (Eigen::Index t = 0; t < batch.steps(); ++t) {
    Var<S> a = m.joystick_encoder.forward(bn, tape.constant(batch.joystick[t]));
    Var<S> l = m.laser_encoder.forward(bn, tape.constant(batch.laser[t]));
    out.push_back(concat_cols(a, l));
  }
  return out;
}

// Bidirectional pass merged by summation: h_T^fwd + g_1^bwd.
template <typename S>
Var<S> encode_global(Discvae<S>& m, Binder<S>& bn,
                     const std::vector<Var<S>>& xenc) {
  if (xenc.empty())
    throw std::invalid_argument("encode_global: empty sequence");
  Tape<S>& tape = bn.tape();
  const Eigen::Index B = xenc.front().rows();
  auto fwd = m.bi_fwd.zero_state(tape, B);
  for (size_t t = 0; t < xenc.size(); ++t) fwd = m.bi_fwd.step(bn, xenc[t], fwd);
  auto bwd = m.bi_bwd.zero_state(tape, B);
  for (size_t t = xenc.size(); t-- > 0;) bwd = m.bi_bwd.step(bn, xenc[t], bwd);
  return fwd.h + bwd.h;
}

template <typename S>
struct DiscvaeElbo {
  Var<S> objective;
  ElboTerms<S> terms;
};

// Entropy-regularized objective: mean over the batch of
//   sum_t [recon_a + recon_l - KL_local,t] - KL_global + H(q(y|x)),
// single Monte-Carlo draw per latent. Draw order is fixed (gumbel, global
// eps, then per-step eps) so two models fed the same rng stream share draws.
template <typename S>
DiscvaeElbo<S> discvae_elbo(Discvae<S>& m, Binder<S>& bn,
                            const SequenceBatch<S>& batch, Rng& rng, S tau,
                            ObjectiveForm form = ObjectiveForm::entropy) {
  if (batch.batch() == 0 || batch.steps() == 0)
    throw std::invalid_argument("discvae_elbo: empty batch");
  Tape<S>& tape = bn.tape();
  const Eigen::Index B = batch.batch();
  const Eigen::Index T = batch.steps();
  const int K = m.cfg.K;

  std::vector<Var<S>> xenc = encode_steps(m, bn, batch);
  Var<S> merged = encode_global(m, bn, xenc);

  Var<S> logits = m.q_y_head.forward(bn, merged);
  Var<S> log_q_y = log_softmax_rows(logits);
  Var<S> entropy = categorical_entropy(log_q_y);
  Var<S> gumbel = tape.constant(gumbel_noise<S>(rng, B, K));
  Var<S> y = gumbel_softmax_sample(logits, gumbel, tau);

  auto q_zG = m.q_zG_head.forward(bn, concat_cols(merged, y));
  Var<S> epsG = tape.constant(rng.normal_matrix<S>(B, m.cfg.dim_global));
  Var<S> z_G = reparam_sample(q_zG.mean, q_zG.log_var, epsG);

  Var<S> pG_mean, pG_logvar;
  if (m.cfg.fixed_global_prior) {
    pG_mean = matmul(y, tape.constant(MatX<S>::Zero(K, m.cfg.dim_global)));
    pG_logvar = clamp(
        matmul(y, tape.constant(MatX<S>::Zero(K, m.cfg.dim_global))),
        static_cast<S>(kLogVarMin), static_cast<S>(kLogVarMax));
  } else {
    pG_mean = matmul(y, bn(m.p_zG_mean));
    pG_logvar = clamp(matmul(y, bn(m.p_zG_logvar)),
                      static_cast<S>(kLogVarMin), static_cast<S>(kLogVarMax));
  }
  Var<S> kl_global =
      kl_diag_gaussians(q_zG.mean, q_zG.log_var, pG_mean, pG_logvar);

  const S dec_lv = static_cast<S>(std::log(m.cfg.sigma2_dec));
  Var<S> dec_lv_a = tape.constant(MatX<S>::Constant(B, 2, dec_lv));
  Var<S> dec_lv_l = tape.constant(MatX<S>::Constant(B, m.cfg.beams, dec_lv));

  Var<S> recon_a = tape.zeros(B, 1);
  Var<S> recon_l = tape.zeros(B, 1);
  Var<S> kl_local = tape.zeros(B, 1);
  auto state = m.local_cell.zero_state(tape, B);
  Var<S> z_prev = tape.zeros(B, m.cfg.dim_local);
  Var<S> xenc_prev = tape.zeros(B, m.cfg.x_dim());
  for (Eigen::Index t = 0; t < T; ++t) {
    state = m.local_cell.step(bn, concat_cols(xenc_prev, z_prev), state);
    auto q_zL = m.q_zL_head.forward(bn, concat_cols(xenc[t], state.h));
    auto p_zL = m.p_zL_head.forward(bn, state.h);
    Var<S> eps = tape.constant(rng.normal_matrix<S>(B, m.cfg.dim_local));
    Var<S> z_t = reparam_sample(q_zL.mean, q_zL.log_var, eps);
    kl_local = kl_local + kl_diag_gaussians(q_zL.mean, q_zL.log_var,
                                            p_zL.mean, p_zL.log_var);
    Var<S> dec_in = concat_cols(concat_cols(z_G, z_t), state.h);
    Var<S> a_mean = m.joystick_decoder.forward(bn, dec_in);
    Var<S> l_mean = m.laser_decoder.forward(bn, dec_in);
    recon_a = recon_a + gaussian_log_likelihood(
                            tape.constant(batch.joystick[t]), a_mean, dec_lv_a);
    recon_l = recon_l + gaussian_log_likelihood(
                            tape.constant(batch.laser[t]), l_mean, dec_lv_l);
    z_prev = z_t;
    xenc_prev = xenc[t];
  }

  Var<S> reg = (form == ObjectiveForm::entropy)
                   ? entropy
                   : add_const(entropy, -static_cast<S>(std::log(S(K))));
  Var<S> rows = (((recon_a + recon_l) - kl_local) - kl_global) + reg;
  Var<S> objective = scale(sum_all(rows), S(1) / S(B));

  DiscvaeElbo<S> out{objective, {}};
  out.terms.objective = objective.val()(0, 0);
  out.terms.recon_a = recon_a.val().mean();
  out.terms.recon_l = recon_l.val().mean();
  out.terms.kl_local = kl_local.val().mean();
  out.terms.kl_global = kl_global.val().mean();
  out.terms.entropy = entropy.val().mean();
  return out;
}

// ---------------------------------------------------------------------------
// plain forward (evaluation, rollout)

template <typename S>
std::vector<MatX<S>> encode_steps_plain(const Discvae<S>& m,
                                        const SequenceBatch<S>& batch) {
  std::vector<MatX<S>> out;
  out.reserve(static_cast<size_t>(batch.steps()));
  for (Eigen::Index t = 0; t < batch.steps(); ++t) {
    MatX<S> a = dense_block_plain(m.joystick_encoder, batch.joystick[t]);
    MatX<S> l = dense_block_plain(m.laser_encoder, batch.laser[t]);
    MatX<S> x(a.rows(), a.cols() + l.cols());
    x << a, l;
    out.push_back(std::move(x));
  }
  return out;
}

template <typename S>
MatX<S> encode_global_plain(const Discvae<S>& m,
                            const std::vector<MatX<S>>& xenc) {
  if (xenc.empty())
    throw std::invalid_argument("encode_global: empty sequence");
  const Eigen::Index B = xenc.front().rows();
  auto fwd = lstm_zero_state_plain(m.bi_fwd, B);
  for (size_t t = 0; t < xenc.size(); ++t)
    fwd = lstm_step_plain(m.bi_fwd, xenc[t], fwd);
  auto bwd = lstm_zero_state_plain(m.bi_bwd, B);
  for (size_t t = xenc.size(); t-- > 0;)
    bwd = lstm_step_plain(m.bi_bwd, xenc[t], bwd);
  return fwd.h + bwd.h;
}

template <typename S>
struct DiscvaeInference {
  MatX<S> log_q_y;           // B x K
  std::vector<int> cluster;  // argmax_k, lowest index on ties
  MatX<S> zG_mean;           // q(z_G | x, y=one-hot(cluster))
  MatX<S> zG_logvar;
  MatX<S> merged;            // bi-state, kept for probes
};

// Deterministic inference: hard one-hot assignment conditions the global
// posterior (relaxed samples are a training-time device only).
template <typename S>
DiscvaeInference<S> discvae_infer(const Discvae<S>& m,
                                  const SequenceBatch<S>& batch) {
  DiscvaeInference<S> out;
  std::vector<MatX<S>> xenc = encode_steps_plain(m, batch);
  out.merged = encode_global_plain(m, xenc);
  MatX<S> logits = dense_block_plain(m.q_y_head, out.merged);
  out.log_q_y = log_softmax_rows_plain<S>(logits);
  const Eigen::Index B = logits.rows();
  out.cluster.resize(static_cast<size_t>(B));
  MatX<S> y_hard = MatX<S>::Zero(B, m.cfg.K);
  for (Eigen::Index r = 0; r < B; ++r) {
    int best = 0;
    for (int k = 1; k < m.cfg.K; ++k)
      if (logits(r, k) > logits(r, best)) best = k;
    out.cluster[static_cast<size_t>(r)] = best;
    y_hard(r, best) = S(1);
  }
  MatX<S> my(out.merged.rows(), out.merged.cols() + m.cfg.K);
  my << out.merged, y_hard;
  auto q = gaussian_block_plain(m.q_zG_head, my);
  out.zG_mean = q.first;
  out.zG_logvar = q.second;
  return out;
}

template <typename S>
std::vector<int> assign_cluster(const Discvae<S>& m,
                                const SequenceBatch<S>& batch) {
  return discvae_infer(m, batch).cluster;
}

template <typename S>
struct DiscvaeRollout {
  std::vector<MatX<S>> joystick;  // n steps of B x 2 decoded means
  std::vector<MatX<S>> laser;     // n steps of B x beams
  MatX<S> z_G;                    // the one fixed draw, B x dim_global
  std::vector<int> cluster;
};

// Algorithm-1 rollout: infer on the prefix, pick cluster c (argmax unless
// overridden), draw ONE z_G ~ p(z_G|y=c), reset h and z_L to zero, then
// autoregress: the first update consumes the last prefix observation, later
// updates consume re-encoded decoded means. z_{i,L} is sampled from its
// prior each step; outputs are the decoder means.
template <typename S>
DiscvaeRollout<S> predict_rollout(const Discvae<S>& m,
                                  const SequenceBatch<S>& prefix, int n,
                                  Rng& rng, int override_cluster = -1) {
  if (n < 1) throw std::invalid_argument("predict_rollout: horizon must be >= 1");
  DiscvaeInference<S> inf = discvae_infer(m, prefix);
  const Eigen::Index B = prefix.batch();

  DiscvaeRollout<S> out;
  out.cluster = inf.cluster;
  if (override_cluster >= 0) {
    if (override_cluster >= m.cfg.K)
      throw std::invalid_argument("predict_rollout: cluster out of range");
    std::fill(out.cluster.begin(), out.cluster.end(), override_cluster);
  }

  MatX<S> y_hard = MatX<S>::Zero(B, m.cfg.K);
  for (Eigen::Index r = 0; r < B; ++r)
    y_hard(r, out.cluster[static_cast<size_t>(r)]) = S(1);
  MatX<S> pG_mean = m.cfg.fixed_global_prior
                        ? MatX<S>::Zero(B, m.cfg.dim_global).eval()
                        : (y_hard * m.p_zG_mean).eval();
  MatX<S> pG_logvar =
      m.cfg.fixed_global_prior
          ? MatX<S>::Zero(B, m.cfg.dim_global).eval()
          : (y_hard * m.p_zG_logvar)
                .cwiseMax(static_cast<S>(kLogVarMin))
                .cwiseMin(static_cast<S>(kLogVarMax))
                .eval();
  out.z_G = reparam_sample_plain<S>(pG_mean, pG_logvar, rng);

  auto state = lstm_zero_state_plain(m.local_cell, B);
  MatX<S> z_prev = MatX<S>::Zero(B, m.cfg.dim_local);
  std::vector<MatX<S>> last_enc =
      encode_steps_plain(m, slice_steps(prefix, prefix.steps() - 1, 1));
  MatX<S> xenc_prev = last_enc.front();

  out.joystick.reserve(static_cast<size_t>(n));
  out.laser.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    MatX<S> u(B, m.cfg.x_dim() + m.cfg.dim_local);
    u << xenc_prev, z_prev;
    state = lstm_step_plain(m.local_cell, u, state);
    auto p_zL = gaussian_block_plain(m.p_zL_head, state.h);
    MatX<S> z_i = reparam_sample_plain<S>(p_zL.first, p_zL.second, rng);
    MatX<S> dec_in(B, m.cfg.dim_global + m.cfg.dim_local + m.cfg.local_state);
    dec_in << out.z_G, z_i, state.h;
    MatX<S> a_mean = dense_block_plain(m.joystick_decoder, dec_in);
    MatX<S> l_mean = dense_block_plain(m.laser_decoder, dec_in);

    MatX<S> a_enc = dense_block_plain(m.joystick_encoder, a_mean);
    MatX<S> l_enc = dense_block_plain(m.laser_encoder, l_mean);
    xenc_prev.resize(B, m.cfg.x_dim());
    xenc_prev << a_enc, l_enc;
    z_prev = z_i;
    out.joystick.push_back(std::move(a_mean));
    out.laser.push_back(std::move(l_mean));
  }
  return out;
}

}  // namespace discvae
