#include "discvae/sim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <utility>

namespace discvae::sim {

namespace {

constexpr double kPi = std::numbers::pi;

// Clearances are centre-to-wall distances from the rangefinder.
constexpr double kStartClearance = 0.54;
constexpr double kRunClearance = 0.52;
constexpr int kMinTicks = 30;
constexpr int kMaxPlacements = 20;

constexpr double kCruiseSpeed = 0.5;
constexpr double kReverseSpeed = -0.3;
constexpr double kTurnSpeed = 0.25;
constexpr double kTurnRadius = 0.7;
constexpr double kRotateRate = 0.6;
constexpr double kLateralGain = 0.8;
constexpr double kHeadingGain = 1.5;
// Cruise steering stays well under the 0.15 rad/s forward-label bound.
constexpr double kCruiseOmegaCap = 0.12;

void add_rect_walls(std::vector<Segment>& walls, const Rect& r) {
  walls.push_back({r.xmin, r.ymin, r.xmax, r.ymin});
  walls.push_back({r.xmax, r.ymin, r.xmax, r.ymax});
  walls.push_back({r.xmax, r.ymax, r.xmin, r.ymax});
  walls.push_back({r.xmin, r.ymax, r.xmin, r.ymin});
}

void finish_map(WorldMap& m) {
  add_rect_walls(m.walls, m.outer);
  for (const Rect& r : m.obstacles) add_rect_walls(m.walls, r);
}

}  // namespace

double wrap_angle(double a) {
  double r = std::fmod(a + kPi, 2.0 * kPi);
  if (r <= 0.0) r += 2.0 * kPi;
  return r - kPi;
}

Pose unicycle_step(const Pose& p, double v, double omega, double dt) {
  Pose q;
  q.x = p.x + v * std::cos(p.theta) * dt;
  q.y = p.y + v * std::sin(p.theta) * dt;
  q.theta = wrap_angle(p.theta + omega * dt);
  return q;
}

bool WorldMap::contains(double x, double y) const {
  if (x <= outer.xmin || x >= outer.xmax || y <= outer.ymin || y >= outer.ymax)
    return false;
  for (const Rect& r : obstacles)
    if (r.contains(x, y)) return false;
  return true;
}

WorldMap make_world_map(int id) {
  WorldMap m;
  m.id = id;
  switch (id) {
    case 1:
      // Ring around one block: narrow south strip, roomy north hall.
      m.outer = {0, 0, 12, 10};
      m.obstacles = {{2, 1.2, 10, 7}};
      m.regions = {
          {{0, 0, 12, 1.2}, 0, false},
          {{0, 7, 12, 10}, 0, true},
          {{0, 0, 2, 10}, 1, false},
          {{10, 0, 12, 10}, 1, false},
      };
      break;
    case 2:
      // Two blocks: tight west/east corridors, open north-east room.
      m.outer = {0, 0, 10, 14};
      m.obstacles = {{1.2, 2.5, 8.8, 6.5}, {1.2, 9, 5.5, 12.5}};
      m.regions = {
          {{0, 0, 10, 2.5}, 0, false},
          {{0, 0, 1.2, 14}, 1, false},
          {{0, 6.5, 10, 9}, 0, false},
          {{8.8, 2.5, 10, 6.5}, 1, false},
          {{5.5, 9, 10, 12.5}, 0, true},
      };
      break;
    case 3:
      // Held-out world: narrow gap between two blocks, open north hall.
      m.outer = {0, 0, 13, 11};
      m.obstacles = {{1.2, 1.2, 7, 6.2}, {8.2, 1.2, 11.8, 6.2}};
      m.regions = {
          {{7, 1.2, 8.2, 6.2}, 1, false},
          {{0, 0, 13, 1.2}, 0, false},
          {{0, 6.2, 13, 11}, 0, true},
          {{0, 0, 1.2, 11}, 1, false},
          {{11.8, 0, 13, 11}, 1, false},
      };
      break;
    default:
      throw std::invalid_argument("make_world_map: id must be 1, 2, or 3");
  }
  finish_map(m);
  return m;
}

RaycastResult raycast(const Pose& p, const WorldMap& map, int beams,
                      double max_range) {
  if (beams <= 0) throw std::invalid_argument("raycast: beams must be positive");
  if (max_range <= 0.0)
    throw std::invalid_argument("raycast: max_range must be positive");

  RaycastResult out;
  out.ranges = VecXd::Constant(beams, max_range);
  if (!map.contains(p.x, p.y)) {
    out.outside = true;
    return out;
  }

  for (int i = 0; i < beams; ++i) {
    const double bearing = p.theta + 2.0 * kPi * i / beams;
    const double dx = std::cos(bearing);
    const double dy = std::sin(bearing);
    double best = max_range;
    for (const Segment& s : map.walls) {
      double t;
      if (s.x1 == s.x2) {
        if (std::abs(dx) < 1e-15) continue;
        t = (s.x1 - p.x) / dx;
        if (t <= 1e-12 || t >= best) continue;
        const double y = p.y + t * dy;
        if (y < std::min(s.y1, s.y2) - 1e-12 ||
            y > std::max(s.y1, s.y2) + 1e-12)
          continue;
      } else {
        if (std::abs(dy) < 1e-15) continue;
        t = (s.y1 - p.y) / dy;
        if (t <= 1e-12 || t >= best) continue;
        const double x = p.x + t * dx;
        if (x < std::min(s.x1, s.x2) - 1e-12 ||
            x > std::max(s.x1, s.x2) + 1e-12)
          continue;
      }
      best = t;
    }
    out.ranges(i) = best;
  }
  return out;
}

double threat_score(const VecXd& ranges, double R, double Ds) {
  if (ranges.size() == 0)
    throw std::invalid_argument("threat_score: empty scan");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ranges.size(); ++i)
    acc += std::clamp((Ds + R - ranges(i)) / Ds, 0.0, 1.0);
  return acc / static_cast<double>(ranges.size());
}

const std::string& mode_name(int mode) {
  static const std::string names[kNumModes] = {
      "forward_cruise", "left_turn",   "right_turn",
      "reverse_out",    "rotate_left", "rotate_right"};
  if (mode < 0 || mode >= kNumModes)
    throw std::invalid_argument("mode_name: unknown mode");
  return names[mode];
}

WindowLabel label_window(const MatXd& joystick, const MatXd& ranges) {
  if (joystick.rows() == 0 || joystick.cols() != 2 ||
      ranges.rows() != joystick.rows())
    throw std::invalid_argument("label_window: bad window shapes");

  const double v = joystick.col(0).mean();
  const double w = joystick.col(1).mean();
  double threat = 0.0;
  for (Eigen::Index r = 0; r < ranges.rows(); ++r)
    threat += threat_score(VecXd(ranges.row(r).transpose()));
  threat /= static_cast<double>(ranges.rows());

  WindowLabel out;
  if (std::abs(v) < 0.05 && std::abs(w) > 0.3)
    out.manoeuvre = w > 0 ? kRotateLeft : kRotateRight;
  else if (v > 0.05 && std::abs(w) <= 0.15)
    out.manoeuvre = kForward;
  else if (v < -0.05)
    out.manoeuvre = kReverse;
  else
    out.manoeuvre = w >= 0 ? kTurnLeft : kTurnRight;
  out.narrow = threat > kNarrowThreshold ? 1 : 0;
  out.cls = out.manoeuvre * 2 + out.narrow;
  return out;
}

namespace {

using Control = std::function<std::pair<double, double>(const Pose&)>;

// Heading servo toward the corridor centre line. psi is the nominal heading;
// v0 < 0 backs the robot down the corridor and flips the correction sign.
Control corridor_control(double psi, double cx, double cy, double v0) {
  const double nx = -std::sin(psi);
  const double ny = std::cos(psi);
  return [=](const Pose& q) {
    const double e = (q.x - cx) * nx + (q.y - cy) * ny;
    const double delta = std::clamp(-(kLateralGain / v0) * e, -0.35, 0.35);
    const double w = std::clamp(
        kHeadingGain * wrap_angle(psi + delta - q.theta), -kCruiseOmegaCap,
        kCruiseOmegaCap);
    return std::pair{v0, w};
  };
}

Control arc_control(double cx, double cy, double s) {
  const double w0 = s * kTurnSpeed / kTurnRadius;
  return [=](const Pose& q) {
    const double rx = q.x - cx;
    const double ry = q.y - cy;
    const double tangent = std::atan2(ry, rx) + s * kPi / 2.0;
    const double delta =
        std::clamp(s * (std::hypot(rx, ry) - kTurnRadius), -0.3, 0.3);
    const double w =
        w0 + std::clamp(kHeadingGain * wrap_angle(tangent + delta - q.theta),
                        -0.15, 0.15);
    return std::pair{kTurnSpeed, w};
  };
}

}  // namespace

Episode generate_episode(const WorldMap& map, int mode, const SimConfig& cfg,
                         Rng& rng) {
  if (mode < 0 || mode >= kNumModes)
    throw std::invalid_argument("generate_episode: unknown mode");
  if (cfg.beams <= 0 || cfg.max_ticks < kMinTicks || cfg.dt <= 0.0)
    throw std::invalid_argument("generate_episode: bad config");

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < map.regions.size(); ++i) {
    const Region& r = map.regions[i];
    bool ok;
    if (mode == kTurnLeft || mode == kTurnRight) {
      ok = r.open;
    } else if (mode == kForward || mode == kReverse) {
      const double len = r.axis == 0 ? r.band.width() : r.band.height();
      ok = len >= 4.0;
    } else {
      ok = true;
    }
    if (ok) candidates.push_back(i);
  }
  if (candidates.empty())
    throw std::runtime_error("generate_episode: no region fits mode " +
                             mode_name(mode));

  for (int attempt = 0; attempt < kMaxPlacements; ++attempt) {
    const Region& reg =
        map.regions[candidates[rng.uniform_int(candidates.size())]];
    Pose pose;
    Control control;

    if (mode == kForward || mode == kReverse) {
      const double v0 = mode == kForward ? kCruiseSpeed : kReverseSpeed;
      const double dir = rng.uniform_open() < 0.5 ? 1.0 : -1.0;
      const double jlat = rng.uniform(-0.05, 0.05);
      const double jhead = rng.uniform(-0.04, 0.04);
      double travel;
      if (reg.axis == 0) {
        travel = dir > 0 ? 0.0 : kPi;
        pose.x = dir > 0 ? reg.band.xmin + 1.0 : reg.band.xmax - 1.0;
        pose.y = reg.band.cy() + jlat;
      } else {
        travel = dir > 0 ? kPi / 2.0 : -kPi / 2.0;
        pose.x = reg.band.cx() + jlat;
        pose.y = dir > 0 ? reg.band.ymin + 1.0 : reg.band.ymax - 1.0;
      }
      const double psi =
          mode == kForward ? travel : wrap_angle(travel + kPi);
      pose.theta = wrap_angle(psi + jhead);
      control = corridor_control(psi, reg.band.cx(), reg.band.cy(), v0);
    } else if (mode == kTurnLeft || mode == kTurnRight) {
      const double s = mode == kTurnLeft ? 1.0 : -1.0;
      const double jx =
          std::min(0.3, reg.band.width() / 2.0 - kTurnRadius - 0.58);
      const double jy =
          std::min(0.3, reg.band.height() / 2.0 - kTurnRadius - 0.58);
      if (jx < 0.0 || jy < 0.0) continue;
      const double cx = reg.band.cx() + rng.uniform(-jx, jx);
      const double cy = reg.band.cy() + rng.uniform(-jy, jy);
      const double alpha = rng.uniform(-kPi, kPi);
      pose.x = cx + kTurnRadius * std::cos(alpha);
      pose.y = cy + kTurnRadius * std::sin(alpha);
      pose.theta =
          wrap_angle(alpha + s * kPi / 2.0 + rng.uniform(-0.04, 0.04));
      control = arc_control(cx, cy, s);
    } else {
      const double s = mode == kRotateLeft ? 1.0 : -1.0;
      pose.x = reg.band.cx() + rng.uniform(-0.03, 0.03);
      pose.y = reg.band.cy() + rng.uniform(-0.03, 0.03);
      pose.theta = rng.uniform(-kPi, kPi);
      control = [s](const Pose&) { return std::pair{0.0, s * kRotateRate}; };
    }

    const RaycastResult rc0 = raycast(pose, map, cfg.beams, cfg.max_range);
    if (rc0.outside || rc0.ranges.minCoeff() < kStartClearance) continue;

    MatXd joy(cfg.max_ticks, 2);
    MatXd las(cfg.max_ticks, cfg.beams);
    MatXd ps(cfg.max_ticks, 3);
    int ticks = 0;
    Pose cur = pose;
    for (int t = 0; t < cfg.max_ticks; ++t) {
      const RaycastResult rc = raycast(cur, map, cfg.beams, cfg.max_range);
      if (rc.outside || rc.ranges.minCoeff() < kRunClearance) break;
      const auto [vc, wc] = control(cur);
      const double v = vc + cfg.sigma_v * rng.normal();
      const double w = wc + cfg.sigma_omega * rng.normal();
      joy(t, 0) = v;
      joy(t, 1) = w;
      las.row(t) = rc.ranges.transpose();
      ps(t, 0) = cur.x;
      ps(t, 1) = cur.y;
      ps(t, 2) = cur.theta;
      cur = unicycle_step(cur, v, w, cfg.dt);
      ++ticks;
    }
    if (ticks < kMinTicks) continue;

    Episode ep;
    ep.joystick = joy.topRows(ticks);
    ep.laser = las.topRows(ticks);
    ep.poses = ps.topRows(ticks);
    ep.mode = mode;
    ep.map_id = map.id;
    return ep;
  }
  throw std::runtime_error("generate_episode: no feasible start pose for " +
                           mode_name(mode) + " on map " +
                           std::to_string(map.id));
}

}  // namespace discvae::sim
