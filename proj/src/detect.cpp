#include "npp/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace npp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr size_t kMaxAnchors = 8192;
constexpr size_t kMinPairs = 64;
constexpr size_t kTopSingles = 32;
// Minimum |sin| of the angle between a pair's displacements (~14 degrees).
// A near-parallel pair spans a sliver cell whose warp coordinates collapse,
// and on smooth content such slivers outscore every honest basis.
constexpr double kMinPairSin = 0.25;

bool inside_open_box(int x, int y, int w, int h, int q) {
  // -W/q < x < W/q and 0 <= y < H/q over the rationals.
  return std::abs(x) * q < w && y >= 0 && y * q < h;
}

// Per-pixel unit feature vectors in pixel-major order plus the subsampled
// anchor list; shared by every candidate scored against one image.
struct ScoreContext {
  int width = 0;
  int height = 0;
  int depth = 0;
  std::vector<double> unit;     // [pixel * depth + c]
  std::vector<uint8_t> usable;  // valid pixels (anchor or endpoint)
  std::vector<int> anchors;     // pixel indices, deterministic stride

  ScoreContext(const FeatureMap& f, const KnownMask& valid)
      : width(f.width), height(f.height), depth(f.depth) {
    const size_t n = f.pixels();
    unit.assign(n * size_t(depth), 0.0);
    usable.assign(n, 0);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (!valid.at(x, y)) continue;
        const size_t p = size_t(y) * width + x;
        usable[p] = 1;
        double sq = 0.0;
        for (int d = 0; d < depth; ++d) {
          const double v = f.at(x, y, d);
          unit[p * depth + d] = v;
          sq += v * v;
        }
        if (sq > 1e-24) {
          const double inv = 1.0 / std::sqrt(sq);
          for (int d = 0; d < depth; ++d) unit[p * depth + d] *= inv;
        } else {
          for (int d = 0; d < depth; ++d) unit[p * depth + d] = 0.0;
        }
      }
    }
    std::vector<int> all;
    all.reserve(n);
    for (size_t p = 0; p < n; ++p)
      if (usable[p]) all.push_back(int(p));
    if (all.size() <= kMaxAnchors) {
      anchors = std::move(all);
    } else {
      const size_t stride = (all.size() + kMaxAnchors - 1) / kMaxAnchors;
      for (size_t i = 0; i < all.size(); i += stride) anchors.push_back(all[i]);
    }
  }

  double score(Vec2 d) const {
    const int dx = int(d.x), dy = int(d.y);
    double acc = 0.0;
    size_t pairs = 0;
    for (int p : anchors) {
      const int x = p % width, y = p / width;
      const int x2 = x + dx, y2 = y + dy;
      if (x2 < 0 || x2 >= width || y2 < 0 || y2 >= height) continue;
      const size_t p2 = size_t(y2) * width + x2;
      if (!usable[p2]) continue;
      const double* a = unit.data() + size_t(p) * depth;
      const double* b = unit.data() + p2 * depth;
      double dot = 0.0;
      for (int c = 0; c < depth; ++c) dot += a[c] * b[c];
      acc += dot;
      ++pairs;
    }
    if (pairs < kMinPairs) return kNegInf;
    return acc / double(pairs);
  }
};

struct SingleCandidate {
  Vec2 d;
  double score = kNegInf;
};

bool lex_less(Vec2 a, Vec2 b) { return a.x != b.x ? a.x < b.x : a.y < b.y; }

bool single_better(const SingleCandidate& a, const SingleCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  const double na = norm(a.d), nb = norm(b.d);
  if (na != nb) return na < nb;
  return lex_less(a.d, b.d);
}

}  // namespace

std::vector<Vec2> candidate_set(const CandidateRange& range) {
  const int q = range.q, w = range.width, h = range.height;
  if (q < 1 || w <= 0 || h <= 0 || q >= std::min(w, h))
    throw std::invalid_argument("candidate range needs 1 <= q < min(width, height)");
  std::vector<Vec2> out;
  const int xmax = (w - 1) / q;  // largest |x| with |x|*q < w
  const int ymax = (h - 1) / q;
  for (int y = 0; y <= ymax; ++y) {
    for (int x = -xmax; x <= xmax; ++x) {
      if (x == 0 && y == 0) continue;
      if (inside_open_box(x, y, w, h, q + 1)) continue;
      out.push_back(Vec2(double(x), double(y)));
    }
  }
  return out;
}

double score_single(const FeatureMap& features, const KnownMask& valid, Vec2 d) {
  return ScoreContext(features, valid).score(d);
}

double score_pair(const FeatureMap& features, const KnownMask& valid, const DisplacementPair& d) {
  const ScoreContext ctx(features, valid);
  const double s1 = ctx.score(d.d1);
  const double s2 = ctx.score(d.d2);
  if (s1 == kNegInf || s2 == kNegInf) return kNegInf;
  return 0.5 * (s1 + s2);
}

ScoredDisplacement detect(const FeatureMap& features, const KnownMask& valid, int q) {
  const auto candidates = candidate_set({q, features.width, features.height});
  if (candidates.empty()) throw std::runtime_error("empty displacement candidate set");

  const ScoreContext ctx(features, valid);
  std::vector<SingleCandidate> scored;
  scored.reserve(candidates.size());
  for (Vec2 d : candidates) {
    const double s = ctx.score(d);
    if (s != kNegInf) scored.push_back({d, s});
  }
  if (scored.empty())
    throw std::runtime_error("image too small or too sparse for displacement search at this q");

  const size_t keep = std::min(kTopSingles, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + keep, scored.end(), single_better);
  scored.resize(keep);

  bool found = false;
  ScoredDisplacement best;
  double best_len = 0.0;
  for (size_t i = 0; i < scored.size(); ++i) {
    for (size_t j = 0; j < scored.size(); ++j) {
      const Vec2 a = scored[i].d, b = scored[j].d;
      if (!lex_less(a, b)) continue;
      if (std::abs(cross(a, b)) < kMinPairSin * norm(a) * norm(b)) continue;
      const double s = 0.5 * (scored[i].score + scored[j].score);
      const double len = norm(a) + norm(b);
      bool better = !found;
      if (found) {
        if (s != best.score) {
          better = s > best.score;
        } else if (len != best_len) {
          better = len < best_len;
        } else {
          better = lex_less(a, best.pair.d1) ||
                   (a == best.pair.d1 && lex_less(b, best.pair.d2));
        }
      }
      if (better) {
        best = {{a, b}, s};
        best_len = len;
        found = true;
      }
    }
  }
  if (!found) throw std::runtime_error("no well-separated displacement pair at this q");
  return best;
}

ScoredDisplacement detect(const RasterImage& img, const KnownMask& valid, int q) {
  return detect(extract(img), valid, q);
}

}  // namespace npp
