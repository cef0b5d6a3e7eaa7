#pragma once

#include "discvae/batch.hpp"
#include "discvae/rng.hpp"
#include "discvae/types.hpp"

namespace testsupport {

// Random normalized-looking windows for model-level tests.
template <typename S>
discvae::SequenceBatch<S> random_batch(Eigen::Index B, Eigen::Index T,
                                       Eigen::Index beams, discvae::Rng& rng,
                                       int classes = 12) {
  discvae::SequenceBatch<S> b;
  for (Eigen::Index t = 0; t < T; ++t) {
    b.joystick.push_back(rng.normal_matrix<S>(B, 2));
    b.laser.push_back(rng.normal_matrix<S>(B, beams));
  }
  for (Eigen::Index r = 0; r < B; ++r) {
    int cls = rng.uniform_int(classes);
    b.label.push_back(cls);
    b.manoeuvre.push_back(cls / 2);
    b.narrow.push_back(cls % 2);
    b.mode.push_back(rng.uniform_int(6));
    b.episode.push_back(static_cast<int>(r));
  }
  return b;
}

}  // namespace testsupport
