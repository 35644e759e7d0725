#include "npp/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace npp {
namespace {

// Unit direction perpendicular to v with angle folded into [0, pi).
PeriodicityVector perpendicular(Vec2 v, double period) {
  Vec2 n{v.y, -v.x};
  if (n.y < 0.0 || (n.y == 0.0 && n.x < 0.0)) n = n * -1.0;
  double theta = std::atan2(n.y, n.x);
  if (theta < 0.0) theta += M_PI;       // fold, guards -0.0 corner
  if (theta >= M_PI) theta -= M_PI;
  return {period, theta};
}

}  // namespace

Periodicity to_periodicity_vectors(const DisplacementPair& d) {
  const double c = std::abs(cross(d.d1, d.d2));
  if (c == 0.0) throw std::invalid_argument("displacement pair is parallel or zero");
  Periodicity p;
  p.p1 = perpendicular(d.d2, c / norm(d.d2));
  p.p2 = perpendicular(d.d1, c / norm(d.d1));
  return p;
}

LatticeCloud lattice_cloud(const DisplacementPair& d, Vec2 origin, int width, int height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("empty lattice bounds");
  const double det = cross(d.d1, d.d2);
  if (det == 0.0) throw std::invalid_argument("displacement pair is parallel or zero");

  // Map the image corners through the inverse basis to bound (alpha, beta).
  double amin = 0, amax = 0, bmin = 0, bmax = 0;
  bool first = true;
  for (double cx : {0.0, double(width)}) {
    for (double cy : {0.0, double(height)}) {
      Vec2 r{cx - origin.x, cy - origin.y};
      double a = cross(r, d.d2) / det;
      double b = cross(d.d1, r) / det;
      if (first) {
        amin = amax = a;
        bmin = bmax = b;
        first = false;
      } else {
        amin = std::min(amin, a);
        amax = std::max(amax, a);
        bmin = std::min(bmin, b);
        bmax = std::max(bmax, b);
      }
    }
  }

  LatticeCloud cloud;
  cloud.width = width;
  cloud.height = height;
  const long a0 = llround(std::floor(amin)) - 1, a1 = llround(std::ceil(amax)) + 1;
  const long b0 = llround(std::floor(bmin)) - 1, b1 = llround(std::ceil(bmax)) + 1;
  for (long a = a0; a <= a1; ++a) {
    for (long b = b0; b <= b1; ++b) {
      Vec2 p = origin + d.d1 * double(a) + d.d2 * double(b);
      if (p.x >= 0.0 && p.x < width && p.y >= 0.0 && p.y < height) cloud.points.push_back(p);
    }
  }
  return cloud;
}

double chamfer_periodicity_error(const LatticeCloud& proposed, const LatticeCloud& truth) {
  if (proposed.points.empty() || truth.points.empty())
    throw std::invalid_argument("chamfer error needs non-empty clouds");
  double sum = 0.0;
  for (Vec2 p : proposed.points) {
    double best = std::numeric_limits<double>::infinity();
    for (Vec2 t : truth.points) best = std::min(best, norm(p - t));
    sum += best;
  }
  return sum / double(proposed.points.size());
}

std::pair<double, double> circular_warp(const CircularPeriodicity& c, Vec2 x) {
  const Vec2 r = x - c.centroid;
  const double radial = norm(r);
  if (r.x == 0.0 && r.y == 0.0) return {0.0, 0.0};
  double a = std::atan2(r.y, r.x);
  a = std::fmod(a + 2.0 * M_PI, 2.0 * M_PI);
  double phase = std::fmod(a, c.angular_period);
  if (phase >= c.angular_period) phase = 0.0;  // fmod rounding at the seam
  return {radial, phase};
}

}  // namespace npp
