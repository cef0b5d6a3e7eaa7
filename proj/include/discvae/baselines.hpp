#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "discvae/batch.hpp"
#include "discvae/distributions.hpp"
#include "discvae/nn.hpp"
#include "discvae/objective.hpp"
#include "discvae/rng.hpp"

namespace discvae {

// Comparison models sharing the DiSCVAE's input format and modality
// encoders: an autoregressive VRNN (one latent per step, no global latent)
// and a supervised bidirectional classifier. The non-clustered disentangled
// baseline is DiscvaeConfig{K=1, fixed_global_prior=true}; see discvae.hpp.

struct VrnnConfig {
  int beams = 72;
  int d_a = 8;
  int d_l = 128;
  int state = 128;
  int dim_z = 16;
  int hidden = 512;
  double sigma2_dec = 1.0;

  int x_dim() const { return d_a + d_l; }
};

template <typename S>
struct Vrnn {
  VrnnConfig cfg;
  DenseBlock<S> joystick_encoder;
  DenseBlock<S> laser_encoder;
  LstmCell<S> cell;                // [xenc_{t-1}, z_{t-1}] advances h
  GaussianBlock<S> prior_head;     // h_t -> p(z_t | h_t)
  GaussianBlock<S> posterior_head; // [xenc_t, h_t] -> q(z_t | x_t, h_t)
  DenseBlock<S> joystick_decoder;  // [z_t, h_t] -> 2
  DenseBlock<S> laser_decoder;     // [z_t, h_t] -> beams

  template <typename F>
  void visit(const std::string& prefix, F&& fn) {
    joystick_encoder.visit(prefix + ".joystick_encoder", fn);
    laser_encoder.visit(prefix + ".laser_encoder", fn);
    cell.visit(prefix + ".cell", fn);
    prior_head.visit(prefix + ".prior_head", fn);
    posterior_head.visit(prefix + ".posterior_head", fn);
    joystick_decoder.visit(prefix + ".joystick_decoder", fn);
    laser_decoder.visit(prefix + ".laser_decoder", fn);
  }
};

template <typename S>
Vrnn<S> make_vrnn(const VrnnConfig& cfg, Rng& rng) {
  Vrnn<S> m;
  m.cfg = cfg;
  const int xd = cfg.x_dim();
  m.joystick_encoder = make_dense_block<S>(2, cfg.hidden, cfg.d_a, rng);
  m.laser_encoder = make_dense_block<S>(cfg.beams, cfg.hidden, cfg.d_l, rng);
  m.cell = make_lstm<S>(xd + cfg.dim_z, cfg.state, rng);
  m.prior_head = make_gaussian_block<S>(cfg.state, cfg.hidden, cfg.dim_z, rng);
  m.posterior_head =
      make_gaussian_block<S>(xd + cfg.state, cfg.hidden, cfg.dim_z, rng);
  m.joystick_decoder =
      make_dense_block<S>(cfg.dim_z + cfg.state, cfg.hidden, 2, rng);
  m.laser_decoder =
      make_dense_block<S>(cfg.dim_z + cfg.state, cfg.hidden, cfg.beams, rng);
  return m;
}

template <typename S>
struct VrnnElbo {
  Var<S> objective;
  ElboTerms<S> terms;
};

// Mean over batch of sum_t [recon_a + recon_l - KL(q(z_t|x_t,h_t)||p(z_t|h_t))].
template <typename S>
VrnnElbo<S> vrnn_elbo(Vrnn<S>& m, Binder<S>& bn, const SequenceBatch<S>& batch,
                      Rng& rng) {
  if (batch.batch() == 0 || batch.steps() == 0)
    throw std::invalid_argument("vrnn_elbo: empty batch");
  Tape<S>& tape = bn.tape();
  const Eigen::Index B = batch.batch();
  const Eigen::Index T = batch.steps();

  std::vector<Var<S>> xenc;
  xenc.reserve(static_cast<size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) {
    Var<S> a = m.joystick_encoder.forward(bn, tape.constant(batch.joystick[t]));
    Var<S> l = m.laser_encoder.forward(bn, tape.constant(batch.laser[t]));
    xenc.push_back(concat_cols(a, l));
  }

  const S dec_lv = static_cast<S>(std::log(m.cfg.sigma2_dec));
  Var<S> dec_lv_a = tape.constant(MatX<S>::Constant(B, 2, dec_lv));
  Var<S> dec_lv_l = tape.constant(MatX<S>::Constant(B, m.cfg.beams, dec_lv));

  Var<S> recon_a = tape.zeros(B, 1);
  Var<S> recon_l = tape.zeros(B, 1);
  Var<S> kl = tape.zeros(B, 1);
  auto state = m.cell.zero_state(tape, B);
  Var<S> z_prev = tape.zeros(B, m.cfg.dim_z);
  Var<S> xenc_prev = tape.zeros(B, m.cfg.x_dim());
  for (Eigen::Index t = 0; t < T; ++t) {
    state = m.cell.step(bn, concat_cols(xenc_prev, z_prev), state);
    auto p = m.prior_head.forward(bn, state.h);
    auto q = m.posterior_head.forward(bn, concat_cols(xenc[t], state.h));
    Var<S> eps = tape.constant(rng.normal_matrix<S>(B, m.cfg.dim_z));
    Var<S> z_t = reparam_sample(q.mean, q.log_var, eps);
    kl = kl + kl_diag_gaussians(q.mean, q.log_var, p.mean, p.log_var);
    Var<S> dec_in = concat_cols(z_t, state.h);
    Var<S> a_mean = m.joystick_decoder.forward(bn, dec_in);
    Var<S> l_mean = m.laser_decoder.forward(bn, dec_in);
    recon_a = recon_a + gaussian_log_likelihood(
                            tape.constant(batch.joystick[t]), a_mean, dec_lv_a);
    recon_l = recon_l + gaussian_log_likelihood(
                            tape.constant(batch.laser[t]), l_mean, dec_lv_l);
    z_prev = z_t;
    xenc_prev = xenc[t];
  }

  Var<S> rows = (recon_a + recon_l) - kl;
  Var<S> objective = scale(sum_all(rows), S(1) / S(B));

  VrnnElbo<S> out{objective, {}};
  out.terms.objective = objective.val()(0, 0);
  out.terms.recon_a = recon_a.val().mean();
  out.terms.recon_l = recon_l.val().mean();
  out.terms.kl_local = kl.val().mean();
  return out;
}

template <typename S>
std::vector<MatX<S>> vrnn_encode_plain(const Vrnn<S>& m,
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

// Deterministic pass over a window driving the recurrence with posterior
// means; returns the last-step posterior mean, the latent the KNN probe
// consumes for this model.
template <typename S>
MatX<S> vrnn_latent(const Vrnn<S>& m, const SequenceBatch<S>& batch) {
  std::vector<MatX<S>> xenc = vrnn_encode_plain(m, batch);
  const Eigen::Index B = batch.batch();
  auto state = lstm_zero_state_plain(m.cell, B);
  MatX<S> z_prev = MatX<S>::Zero(B, m.cfg.dim_z);
  MatX<S> xenc_prev = MatX<S>::Zero(B, m.cfg.x_dim());
  MatX<S> q_mean;
  for (Eigen::Index t = 0; t < batch.steps(); ++t) {
    MatX<S> u(B, m.cfg.x_dim() + m.cfg.dim_z);
    u << xenc_prev, z_prev;
    state = lstm_step_plain(m.cell, u, state);
    MatX<S> xh(B, m.cfg.x_dim() + m.cfg.state);
    xh << xenc[t], state.h;
    auto q = gaussian_block_plain(m.posterior_head, xh);
    q_mean = q.first;
    z_prev = q_mean;
    xenc_prev = xenc[t];
  }
  return q_mean;
}

template <typename S>
struct VrnnRollout {
  std::vector<MatX<S>> joystick;
  std::vector<MatX<S>> laser;
};

// Autoregressive forecast: drive the prefix with posterior means, then
// generate with prior samples, feeding decoded means back in.
template <typename S>
VrnnRollout<S> vrnn_rollout(const Vrnn<S>& m, const SequenceBatch<S>& prefix,
                            int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("vrnn_rollout: horizon must be >= 1");
  std::vector<MatX<S>> xenc = vrnn_encode_plain(m, prefix);
  const Eigen::Index B = prefix.batch();
  auto state = lstm_zero_state_plain(m.cell, B);
  MatX<S> z_prev = MatX<S>::Zero(B, m.cfg.dim_z);
  MatX<S> xenc_prev = MatX<S>::Zero(B, m.cfg.x_dim());
  for (Eigen::Index t = 0; t < prefix.steps(); ++t) {
    MatX<S> u(B, m.cfg.x_dim() + m.cfg.dim_z);
    u << xenc_prev, z_prev;
    state = lstm_step_plain(m.cell, u, state);
    MatX<S> xh(B, m.cfg.x_dim() + m.cfg.state);
    xh << xenc[t], state.h;
    z_prev = gaussian_block_plain(m.posterior_head, xh).first;
    xenc_prev = xenc[t];
  }

  VrnnRollout<S> out;
  out.joystick.reserve(static_cast<size_t>(n));
  out.laser.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    MatX<S> u(B, m.cfg.x_dim() + m.cfg.dim_z);
    u << xenc_prev, z_prev;
    state = lstm_step_plain(m.cell, u, state);
    auto p = gaussian_block_plain(m.prior_head, state.h);
    MatX<S> z_i = reparam_sample_plain<S>(p.first, p.second, rng);
    MatX<S> dec_in(B, m.cfg.dim_z + m.cfg.state);
    dec_in << z_i, state.h;
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

// ---------------------------------------------------------------------------
// supervised bidirectional classifier

struct BilstmConfig {
  int beams = 72;
  int d_a = 8;
  int d_l = 128;
  int state = 512;
  int hidden = 512;
  int classes = 12;

  int x_dim() const { return d_a + d_l; }
};

template <typename S>
struct BilstmClassifier {
  BilstmConfig cfg;
  DenseBlock<S> joystick_encoder;
  DenseBlock<S> laser_encoder;
  LstmCell<S> fwd;
  LstmCell<S> bwd;
  Dense<S> head;  // merged bi-state -> class logits

  template <typename F>
  void visit(const std::string& prefix, F&& fn) {
    joystick_encoder.visit(prefix + ".joystick_encoder", fn);
    laser_encoder.visit(prefix + ".laser_encoder", fn);
    fwd.visit(prefix + ".fwd", fn);
    bwd.visit(prefix + ".bwd", fn);
    head.visit(prefix + ".head", fn);
  }
};

template <typename S>
BilstmClassifier<S> make_bilstm(const BilstmConfig& cfg, Rng& rng) {
  BilstmClassifier<S> m;
  m.cfg = cfg;
  const int xd = cfg.x_dim();
  m.joystick_encoder = make_dense_block<S>(2, cfg.hidden, cfg.d_a, rng);
  m.laser_encoder = make_dense_block<S>(cfg.beams, cfg.hidden, cfg.d_l, rng);
  m.fwd = make_lstm<S>(xd, cfg.state, rng);
  m.bwd = make_lstm<S>(xd, cfg.state, rng);
  m.head = make_dense<S>(cfg.state, cfg.classes, rng);
  return m;
}

template <typename S>
Var<S> bilstm_log_probs(BilstmClassifier<S>& m, Binder<S>& bn,
                        const SequenceBatch<S>& batch) {
  Tape<S>& tape = bn.tape();
  const Eigen::Index T = batch.steps();
  std::vector<Var<S>> xenc;
  xenc.reserve(static_cast<size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) {
    Var<S> a = m.joystick_encoder.forward(bn, tape.constant(batch.joystick[t]));
    Var<S> l = m.laser_encoder.forward(bn, tape.constant(batch.laser[t]));
    xenc.push_back(concat_cols(a, l));
  }
  auto f = m.fwd.zero_state(tape, batch.batch());
  for (Eigen::Index t = 0; t < T; ++t) f = m.fwd.step(bn, xenc[t], f);
  auto b = m.bwd.zero_state(tape, batch.batch());
  for (Eigen::Index t = T; t-- > 0;) b = m.bwd.step(bn, xenc[t], b);
  return log_softmax_rows(affine(bn, m.head, f.h + b.h));
}

// Maximized objective: negative cross-entropy, mean over the batch.
template <typename S>
Var<S> bilstm_objective(BilstmClassifier<S>& m, Binder<S>& bn,
                        const SequenceBatch<S>& batch) {
  Var<S> lp = bilstm_log_probs(m, bn, batch);
  const Eigen::Index B = batch.batch();
  MatX<S> onehot = MatX<S>::Zero(B, m.cfg.classes);
  for (Eigen::Index r = 0; r < B; ++r)
    onehot(r, batch.label[static_cast<size_t>(r)]) = S(1);
  Var<S> picked = hadamard(lp, bn.tape().constant(onehot));
  return scale(sum_all(picked), S(1) / S(B));
}

template <typename S>
MatX<S> bilstm_log_probs_plain(const BilstmClassifier<S>& m,
                               const SequenceBatch<S>& batch) {
  std::vector<MatX<S>> xenc;
  for (Eigen::Index t = 0; t < batch.steps(); ++t) {
    MatX<S> a = dense_block_plain(m.joystick_encoder, batch.joystick[t]);
    MatX<S> l = dense_block_plain(m.laser_encoder, batch.laser[t]);
    MatX<S> x(a.rows(), a.cols() + l.cols());
    x << a, l;
    xenc.push_back(std::move(x));
  }
  const Eigen::Index B = batch.batch();
  auto f = lstm_zero_state_plain(m.fwd, B);
  for (size_t t = 0; t < xenc.size(); ++t)
    f = lstm_step_plain(m.fwd, xenc[t], f);
  auto b = lstm_zero_state_plain(m.bwd, B);
  for (size_t t = xenc.size(); t-- > 0;)
    b = lstm_step_plain(m.bwd, xenc[t], b);
  MatX<S> merged = f.h + b.h;
  return log_softmax_rows_plain<S>(dense_plain(m.head, merged));
}

template <typename S>
std::vector<int> bilstm_classify(const BilstmClassifier<S>& m,
                                 const SequenceBatch<S>& batch) {
  MatX<S> lp = bilstm_log_probs_plain(m, batch);
  std::vector<int> out(static_cast<size_t>(lp.rows()));
  for (Eigen::Index r = 0; r < lp.rows(); ++r) {
    int best = 0;
    for (Eigen::Index k = 1; k < lp.cols(); ++k)
      if (lp(r, k) > lp(r, best)) best = static_cast<int>(k);
    out[static_cast<size_t>(r)] = best;
  }
  return out;
}

}  // namespace discvae
