#pragma once

#include <vector>

#include "npp/features.hpp"
#include "npp/geometry.hpp"
#include "npp/raster.hpp"

namespace npp {

// Displacement search ring for one coarseness level q: ring q minus ring q+1.
struct CandidateRange {
  int q = 1;
  int width = 0;
  int height = 0;
};

struct ScoredDisplacement {
  DisplacementPair pair;
  double score = 0.0;
};

// Integer displacements (x,y) with -W/q < x < W/q, 0 <= y < H/q, excluding the
// same box at q+1 and excluding (0,0). Row-major (y, then x) order.
std::vector<Vec2> candidate_set(const CandidateRange& range);

// Mean cosine similarity between the feature vectors at x and x+d over valid
// anchor pixels whose displaced endpoint is also valid and in bounds. At most
// 8192 anchors, taken at a deterministic stride. Fewer than 64 usable pairs
// gives -inf.
double score_single(const FeatureMap& features, const KnownMask& valid, Vec2 d);

// Average of the two single-displacement scores; -inf if either is.
double score_pair(const FeatureMap& features, const KnownMask& valid, const DisplacementPair& d);

// Brute-force search over the q ring: every displacement is scored alone, the
// best 32 are paired exhaustively (angle at least ~14 degrees apart, d1
// lexicographically before d2), and the best-scoring pair wins. Ties prefer
// smaller |d1|+|d2|, then lexicographic order. Throws std::invalid_argument
// when q is out of range for the image and std::runtime_error when nothing
// is scoreable.
ScoredDisplacement detect(const FeatureMap& features, const KnownMask& valid, int q);
ScoredDisplacement detect(const RasterImage& img, const KnownMask& valid, int q);

}  // namespace npp
