#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "npp/geometry.hpp"
#include "npp/raster.hpp"

namespace npp {

// Square regions carved out of known territory to rank candidate
// periodicities by reconstruction error.
struct PseudoMaskPlan {
  struct Square {
    Vec2 center;
    double side = 0.0;
  };
  std::vector<Square> masks;
  int requested = 0;

  // Union of the squares as an unknown-region mask over the given dims.
  KnownMask rasterize(int width, int height) const;
};

// Centers are the largest values of the distance transform to invalid
// pixels, picked greedily so the squares stay disjoint; side = 5L/(6*sqrt 2)
// keeps each square fully inside known territory. Throws when even the best
// center yields a side under 8 px.
PseudoMaskPlan plan_pseudo_masks(const KnownMask& valid, int m);

struct RankedCandidate {
  DisplacementPair pair;
  Periodicity periodicity;
  double error = 0.0;  // RMSE over pseudo-mask pixels, [0,1] scale
  int q = 0;
};

struct ProposalSet {
  std::vector<RankedCandidate> ranked;  // ascending error
  int k = 0;                            // requested Top-K
  std::vector<double> offsets;

  int k_effective() const { return int(std::min(size_t(k), ranked.size())); }
};

// Candidate periodicity vectors for input warping, Top-1's own offsets
// separated from the rest. |top1_group| + |rest_group| = 2 * K_eff * |offsets|.
struct AugmentedWarpSet {
  std::vector<PeriodicityVector> top1_group;
  std::vector<PeriodicityVector> rest_group;
};

// The lightweight ranking trainer. Width and iteration count follow the
// design default (128 / 300); the batch size only needs to order candidates.
struct RankingConfig {
  int width = 128;
  int iterations = 300;
  int batch = 256;
  int pe_frequencies = 10;
  double learning_rate = 5e-4;
  uint64_t seed = 1;
};

// For each q: detect, convert, train the lightweight model with pseudo masks
// treated as unknown, score by RMSE inside them. Deduplicated (periods within
// 0.5 px and angles within 0.02 rad) and sorted by ascending error, then q.
ProposalSet search_periodicities(const RasterImage& img, const KnownMask& valid, int q_lo, int q_hi,
                                 int m, int k, const RankingConfig& cfg);

inline const std::vector<double>& default_offsets() {
  static const std::vector<double> kOffsets{0.0, 0.5, -0.5, 1.0, -1.0};
  return kOffsets;
}

// Top-K candidates expanded with radial offsets along their own directions.
AugmentedWarpSet augment(const ProposalSet& proposals, int k = 3,
                         const std::vector<double>& offsets = default_offsets());

}  // namespace npp
