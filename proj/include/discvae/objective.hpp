#pragma once

namespace discvae {

// The clustering objectives carry their categorical regulariser in either of
// two algebraically equivalent forms: +H(q(y|x)) or -KL(q(y|x) || uniform).
// The two differ by the constant log K, which the identity tests assert.
enum class ObjectiveForm { entropy, uniform_kl };

// Per-batch-mean term breakdown shared by every model's objective; terms a
// model lacks stay zero. Matches the training-history column set.
template <typename S>
struct ElboTerms {
  S objective = 0;
  S recon_a = 0;    // joystick reconstruction log-likelihood
  S recon_l = 0;    // laser reconstruction log-likelihood
  S kl_local = 0;   // sum of per-step KL terms
  S kl_global = 0;  // KL on the sequence-level latent
  S entropy = 0;    // H(q(y|x)), or its uniform-KL stand-in
};

}  // namespace discvae
