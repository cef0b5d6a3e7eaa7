#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "discvae/types.hpp"

namespace discvae {

// Deterministic random source. All draws are derived from splitmix64 so the
// stream is identical across compilers and platforms; std::<distribution>
// implementations are not portable, so we roll uniform/normal by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on the open interval (0, 1); never returns an exact endpoint.
  // The top of the range can round up to 1.0 (half-even ties), which would
  // blow up -log(-log u) style consumers, so those draws are pinned back.
  double uniform_open() {
    double v = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    return v < 1.0 ? v : 0x1.fffffffffffffp-1;
  }

  // Uniform on [lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  int uniform_int(int n) {  // [0, n)
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  // Box-Muller without caching the spare, so draw order stays simple.
  double normal() {
    double u1 = uniform_open();
    double u2 = uniform_open();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename S>
  MatX<S> normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    MatX<S> m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        m(i, j) = static_cast<S>(normal());
    return m;
  }

  template <typename S>
  MatX<S> uniform_open_matrix(Eigen::Index rows, Eigen::Index cols) {
    // Narrowing the double draw can also round onto 1.0 in a lower-precision
    // scalar; keep the open-interval contract after the cast.
    const S top = std::nextafter(S(1), S(0));
    MatX<S> m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) {
        const S v = static_cast<S>(uniform_open());
        m(i, j) = v < S(1) ? v : top;
      }
    return m;
  }

  template <typename S>
  MatX<S> uniform_matrix(Eigen::Index rows, Eigen::Index cols, S lo, S hi) {
    MatX<S> m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j)
        m(i, j) = static_cast<S>(uniform(lo, hi));
    return m;
  }

  // Derive an independent stream for a named subsystem. One root seed fans
  // out to data/init/training/eval streams that are reproducible in isolation.
  Rng split(const std::string& label) const {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ state_;
    for (char c : label) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return Rng(h);
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

inline std::uint64_t seed_for(std::uint64_t root, const std::string& label) {
  return Rng(root).split(label).state();
}

}  // namespace discvae
