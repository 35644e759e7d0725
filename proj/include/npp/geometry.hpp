#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace npp {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2&) const = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// Lattice basis. Integer-valued components, y >= 0 on both vectors,
// non-parallel.
struct DisplacementPair {
  Vec2 d1;
  Vec2 d2;
};

inline bool is_valid(const DisplacementPair& d) {
  return d.d1.y >= 0 && d.d2.y >= 0 && cross(d.d1, d.d2) != 0.0;
}

// period in pixels, direction angle in [0, pi).
struct PeriodicityVector {
  double period = 1.0;
  double theta = 0.0;

  Vec2 cartesian() const { return {period * std::cos(theta), period * std::sin(theta)}; }
};

struct Periodicity {
  PeriodicityVector p1;
  PeriodicityVector p2;
};

struct CircularPeriodicity {
  Vec2 centroid;
  double angular_period = 2.0 * M_PI;  // radians, in (0, 2pi]
};

struct LatticeCloud {
  std::vector<Vec2> points;
  int width = 0;
  int height = 0;
};

// p1 is perpendicular to d2 with |p1 x d2| = |d1 x d2|, direction folded into
// [0, pi); symmetrically p2 against d1. Throws on parallel or zero pairs.
Periodicity to_periodicity_vectors(const DisplacementPair& d);

// All alpha*d1 + beta*d2 + origin falling inside [0,W) x [0,H).
LatticeCloud lattice_cloud(const DisplacementPair& d, Vec2 origin, int width, int height);

// Mean distance from each proposed point to its nearest truth point.
// One-directional: not symmetric in its arguments.
double chamfer_periodicity_error(const LatticeCloud& proposed, const LatticeCloud& truth);

// (radial distance, angular phase in [0, p)). Angular is 0 at the centroid by
// convention.
std::pair<double, double> circular_warp(const CircularPeriodicity& c, Vec2 x);

}  // namespace npp
