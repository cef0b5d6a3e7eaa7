#pragma once

#include <stdexcept>
#include <vector>

#include "discvae/types.hpp"

namespace discvae {

// A batch of fixed-length windows, stored per timestep with rows = windows.
// joystick[t] is B x 2 (commanded v, omega), laser[t] is B x beams. Windows
// are generated at length T + horizon; training slices the first T steps and
// forecasting keeps the tail as ground truth.
template <typename S>
struct SequenceBatch {
  std::vector<MatX<S>> joystick;
  std::vector<MatX<S>> laser;
  std::vector<int> label;      // 12-way class id
  std::vector<int> manoeuvre;  // 6-way manoeuvre id
  std::vector<int> narrow;     // 0 wide, 1 narrow
  std::vector<int> mode;       // generator behaviour mode
  std::vector<int> episode;    // source episode id (leakage checks)

  Eigen::Index steps() const { return static_cast<Eigen::Index>(joystick.size()); }
  Eigen::Index batch() const {
    return joystick.empty() ? 0 : joystick.front().rows();
  }
};

template <typename S>
SequenceBatch<S> slice_steps(const SequenceBatch<S>& b, Eigen::Index t0,
                             Eigen::Index len) {
  if (t0 < 0 || t0 + len > b.steps())
    throw std::invalid_argument("slice_steps: range out of bounds");
  SequenceBatch<S> out;
  out.joystick.assign(b.joystick.begin() + t0, b.joystick.begin() + t0 + len);
  out.laser.assign(b.laser.begin() + t0, b.laser.begin() + t0 + len);
  out.label = b.label;
  out.manoeuvre = b.manoeuvre;
  out.narrow = b.narrow;
  out.mode = b.mode;
  out.episode = b.episode;
  return out;
}

template <typename S>
SequenceBatch<S> select_rows(const SequenceBatch<S>& b,
                             const std::vector<int>& rows) {
  SequenceBatch<S> out;
  auto pick_steps = [&](const std::vector<MatX<S>>& src,
                        std::vector<MatX<S>>& dst) {
    dst.reserve(src.size());
    for (const MatX<S>& m : src) {
      MatX<S> p(static_cast<Eigen::Index>(rows.size()), m.cols());
      for (size_t i = 0; i < rows.size(); ++i) p.row(i) = m.row(rows[i]);
      dst.push_back(std::move(p));
    }
  };
  pick_steps(b.joystick, out.joystick);
  pick_steps(b.laser, out.laser);
  auto pick_ints = [&](const std::vector<int>& src) {
    std::vector<int> d;
    d.reserve(rows.size());
    for (int r : rows) d.push_back(src.empty() ? 0 : src[r]);
    return d;
  };
  out.label = pick_ints(b.label);
  out.manoeuvre = pick_ints(b.manoeuvre);
  out.narrow = pick_ints(b.narrow);
  out.mode = pick_ints(b.mode);
  out.episode = pick_ints(b.episode);
  return out;
}

}  // namespace discvae
