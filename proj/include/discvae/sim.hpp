#pragma once

#include <string>
#include <vector>

#include "discvae/rng.hpp"
#include "discvae/types.hpp"

namespace discvae::sim {

// 2-D differential-drive simulator: three axis-aligned maps, a ray-cast
// rangefinder, a saturated proximity ("threat") score, and scripted
// behaviour modes that stand in for recorded navigation trials. Windows are
// labelled by commanded-velocity thresholds crossed with narrow/wide.

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;  // wrapped to (-pi, pi]
};

double wrap_angle(double a);

Pose unicycle_step(const Pose& p, double v, double omega, double dt);

struct Rect {
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;
  bool contains(double x, double y) const {
    return x >= xmin && x <= xmax && y >= ymin && y <= ymax;
  }
  double cx() const { return 0.5 * (xmin + xmax); }
  double cy() const { return 0.5 * (ymin + ymax); }
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
};

// Axis-aligned wall segment (x1 == x2 or y1 == y2).
struct Segment {
  double x1, y1, x2, y2;
};

// Free-space band the episode generator may exploit. Corridor regions run
// along one axis; open regions are large enough for turning arcs.
struct Region {
  Rect band;
  int axis = 0;      // 0: along x, 1: along y
  bool open = false; // roomy enough for arc manoeuvres
};

struct WorldMap {
  int id = 0;
  Rect outer;
  std::vector<Rect> obstacles;
  std::vector<Segment> walls;   // outer + obstacle boundaries
  std::vector<Region> regions;

  bool contains(double x, double y) const;
};

// Maps 1 and 2 feed train/validation; map 3 is the held-out test world.
WorldMap make_world_map(int id);

struct RaycastResult {
  VecXd ranges;
  bool outside = false;  // pose not in free space: all ranges = max_range
};

// B evenly spaced bearings starting at the heading; nearest wall hit per
// beam, capped at max_range.
RaycastResult raycast(const Pose& p, const WorldMap& map, int beams,
                      double max_range);

inline constexpr double kRobotRadius = 0.5;   // R of the threat score
inline constexpr double kSafetyMargin = 0.8;  // D_s
inline constexpr double kNarrowThreshold = 0.25;

// (1/N) * sum_i sat_[0,1]((D_s + R - l_i) / D_s).
double threat_score(const VecXd& ranges, double R = kRobotRadius,
                    double Ds = kSafetyMargin);

enum Manoeuvre {
  kForward = 0,
  kTurnLeft = 1,
  kTurnRight = 2,
  kReverse = 3,
  kRotateLeft = 4,
  kRotateRight = 5,
};

// Behaviour modes mirror the manoeuvre ids one-to-one.
inline constexpr int kNumModes = 6;
const std::string& mode_name(int mode);

struct WindowLabel {
  int manoeuvre = 0;
  int narrow = 0;
  int cls = 0;  // manoeuvre * 2 + narrow, 12 classes
};

// Thresholds on the window's mean commanded velocities; narrow iff the mean
// threat score exceeds kNarrowThreshold.
WindowLabel label_window(const MatXd& joystick, const MatXd& ranges);

struct Episode {
  MatXd joystick;  // ticks x 2 commanded (v, omega), noise included
  MatXd laser;     // ticks x beams, scan taken before the tick's motion
  MatXd poses;     // ticks x 3
  int mode = 0;
  int map_id = 0;
};

struct SimConfig {
  double dt = 0.1;  // 10 Hz
  int beams = 72;
  double max_range = 10.0;
  int max_ticks = 120;
  double sigma_v = 0.05;
  double sigma_omega = 0.1;
};

// Scripted controller executing one behaviour mode with command noise.
// Throws std::runtime_error when no feasible start pose is found after 20
// placements.
Episode generate_episode(const WorldMap& map, int mode, const SimConfig& cfg,
                         Rng& rng);

}  // namespace discvae::sim
