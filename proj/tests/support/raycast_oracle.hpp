#pragma once

#include <algorithm>
#include <cmath>

#include "discvae/sim.hpp"

namespace testsupport {

// Independent range finder built on orientation predicates: a wall is hit
// iff its endpoints straddle the ray line and the ray endpoints straddle the
// wall line; the crossing parameter is then located by bisecting the sign of
// the wall-line orientation along the ray. No parametric intersection math
// is shared with the production raycaster, and corner grazings are exact
// rather than step-limited.
inline double oracle_range(const discvae::sim::WorldMap& map, double ox,
                           double oy, double bearing, double max_range) {
  const double dx = std::cos(bearing);
  const double dy = std::sin(bearing);
  const double bx = ox + max_range * dx;
  const double by = oy + max_range * dy;
  auto orient = [](double ax, double ay, double px, double py, double cx,
                   double cy) {
    return (px - ax) * (cy - ay) - (py - ay) * (cx - ax);
  };

  double best = max_range;
  for (const discvae::sim::Segment& s : map.walls) {
    const double o1 = orient(ox, oy, bx, by, s.x1, s.y1);
    const double o2 = orient(ox, oy, bx, by, s.x2, s.y2);
    if (o1 * o2 > 0.0) continue;  // wall entirely on one side of the ray
    const double p0 = orient(s.x1, s.y1, s.x2, s.y2, ox, oy);
    const double p1 = orient(s.x1, s.y1, s.x2, s.y2, bx, by);
    if (p0 * p1 > 0.0) continue;            // ray does not reach the wall line
    if (p0 == 0.0 && p1 == 0.0) continue;   // collinear grazing

    double lo = 0.0, hi = max_range, flo = p0;
    for (int i = 0; i < 80; ++i) {
      const double mid = 0.5 * (lo + hi);
      const double fm =
          orient(s.x1, s.y1, s.x2, s.y2, ox + mid * dx, oy + mid * dy);
      if ((fm > 0.0) == (flo > 0.0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    best = std::min(best, 0.5 * (lo + hi));
  }
  return best;
}

}  // namespace testsupport
