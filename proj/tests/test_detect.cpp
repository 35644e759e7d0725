#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>
#include <vector>

#include "npp/bench.hpp"
#include "npp/detect.hpp"
#include "npp/geometry.hpp"
#include "npp/rng.hpp"

using namespace npp;

namespace {

std::set<std::pair<int, int>> as_set(const std::vector<Vec2>& v) {
  std::set<std::pair<int, int>> s;
  for (Vec2 d : v) s.insert({int(d.x), int(d.y)});
  return s;
}

RasterImage checker_image(int size, int period) {
  SynthSpec spec;
  spec.motif = Motif::checker;
  spec.pair = {{double(period), 0.0}, {0.0, double(period)}};
  spec.width = size;
  spec.height = size;
  return synth(spec).image;
}

}  // namespace

TEST_CASE("candidate ring membership on a 64x64 image") {
  const auto ring = as_set(candidate_set({4, 64, 64}));
  // Ring 4 holds displacements with max(|x|, y) in [13, 15]: inside the open
  // box at q=4 but outside it at q=5.
  CHECK(ring.count({15, 0}) == 1);
  CHECK(ring.count({0, 15}) == 1);
  CHECK(ring.count({-15, 15}) == 1);
  CHECK(ring.count({13, 2}) == 1);
  CHECK(ring.count({12, 0}) == 0);   // still inside the q=5 box
  CHECK(ring.count({16, 0}) == 0);   // outside the q=4 box
  CHECK(ring.count({0, 16}) == 0);
  CHECK(ring.count({0, 0}) == 0);
  CHECK(ring.count({5, -3}) == 0);   // lower half plane never appears

  for (Vec2 d : candidate_set({4, 64, 64})) {
    const int m = std::max(std::abs(int(d.x)), int(d.y));
    CHECK(m >= 13);
    CHECK(m <= 15);
  }
}

TEST_CASE("the coarsest ring on a 64x64 image is the unit neighborhood") {
  const auto ring = as_set(candidate_set({63, 64, 64}));
  const std::set<std::pair<int, int>> want{{-1, 0}, {1, 0}, {-1, 1}, {0, 1}, {1, 1}};
  CHECK(ring == want);
}

TEST_CASE("rings are disjoint and tile the finest box") {
  std::set<std::pair<int, int>> seen;
  size_t total = 0;
  for (int q = 1; q <= 9; ++q) {
    const auto ring = as_set(candidate_set({q, 64, 64}));
    for (auto d : ring) {
      CHECK(seen.count(d) == 0);
      seen.insert(d);
    }
    total += ring.size();
  }
  CHECK(seen.size() == total);

  // Together with the q=10 box they cover the q=1 box exactly.
  const int x10 = 63 / 10, y10 = 63 / 10;
  size_t box10 = size_t(2 * x10 + 1) * (y10 + 1) - 1;  // minus the origin
  size_t box1 = size_t(2 * 63 + 1) * 64 - 1;
  CHECK(total + box10 == box1);
}

TEST_CASE("candidate range rejects out-of-range q") {
  CHECK_THROWS_AS(candidate_set({0, 64, 64}), std::invalid_argument);
  CHECK_THROWS_AS(candidate_set({64, 64, 64}), std::invalid_argument);
  CHECK_NOTHROW(candidate_set({63, 64, 64}));
}

TEST_CASE("lattice displacements score far above off-lattice ones") {
  const RasterImage img = checker_image(64, 16);
  const FeatureMap f = extract(img);
  KnownMask full(64, 64, true);

  const double on = score_single(f, full, {16.0, 0.0});
  const double half = score_single(f, full, {8.0, 0.0});
  const double off = score_single(f, full, {13.0, 0.0});
  CHECK(on > 0.5);
  CHECK(half < -0.2);  // half-period shift anti-correlates a checkerboard
  CHECK(on > off);

  const double pair_on = score_pair(f, full, {{16.0, 0.0}, {0.0, 16.0}});
  const double pair_off = score_pair(f, full, {{16.0, 0.0}, {13.0, 2.0}});
  CHECK(pair_on > pair_off);
}

TEST_CASE("fully invalid mask cannot be scored") {
  const RasterImage img = checker_image(64, 16);
  const FeatureMap f = extract(img);
  KnownMask none(64, 64, false);
  CHECK(score_single(f, none, {16.0, 0.0}) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(detect(f, none, 3), std::runtime_error);
}

TEST_CASE("an 8x8 image is too small to score any displacement") {
  // 64 pixels total, so every shifted overlap has fewer than the required 64
  // anchor pairs.
  const RasterImage img = checker_image(8, 4);
  KnownMask full(8, 8, true);
  CHECK_THROWS_AS(detect(img, full, 1), std::runtime_error);
  CHECK_THROWS_AS(detect(img, full, 8), std::invalid_argument);
}

TEST_CASE("a constant image falls back to the shortest pair") {
  RasterImage img(64, 64, 1);
  for (auto& v : img.data) v = 0.5;
  KnownMask full(64, 64, true);
  const ScoredDisplacement best = detect(img, full, 4);
  // All scores tie; the shortest non-parallel pair in ring 4 in
  // lexicographic order wins.
  CHECK(best.pair.d1.x == -13.0);
  CHECK(best.pair.d1.y == 0.0);
  CHECK(best.pair.d2.x == 0.0);
  CHECK(best.pair.d2.y == 13.0);
}

TEST_CASE("checkerboard detection recovers the lattice within 2 px chamfer") {
  const RasterImage img = checker_image(64, 16);
  const DisplacementPair truth{{16.0, 0.0}, {0.0, 16.0}};
  const LatticeCloud truth_cloud = lattice_cloud(truth, {0.0, 0.0}, 64, 64);

  KnownMask full(64, 64, true);
  KnownMask holey(64, 64, true);
  Rng rng(9);
  for (size_t i = 0; i < holey.flags.size(); ++i)
    if (rng.uniform() < 0.25) holey.flags[i] = false;

  for (const KnownMask* mask : {&full, &holey}) {
    const ScoredDisplacement best = detect(img, *mask, 3);
    REQUIRE(is_valid(best.pair));
    const LatticeCloud cloud = lattice_cloud(best.pair, {0.0, 0.0}, 64, 64);
    CHECK(chamfer_periodicity_error(cloud, truth_cloud) <= 2.0);
  }
}

TEST_CASE("detection is deterministic") {
  SynthSpec spec;
  spec.motif = Motif::blobs;
  spec.pair = {{14.0, 0.0}, {3.0, 14.0}};
  spec.jitter = 0.02;
  spec.ramp = 0.1;
  spec.width = 64;
  spec.height = 64;
  spec.seed = 5;
  const RasterImage img = synth(spec).image;
  KnownMask full(64, 64, true);

  const ScoredDisplacement a = detect(img, full, 4);
  const ScoredDisplacement b = detect(img, full, 4);
  CHECK(a.pair.d1 == b.pair.d1);
  CHECK(a.pair.d2 == b.pair.d2);
  CHECK(a.score == b.score);
}
