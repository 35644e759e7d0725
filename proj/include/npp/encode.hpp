#pragma once

#include <Eigen/Dense>
#include <vector>

#include "npp/geometry.hpp"
#include "npp/proposal.hpp"

namespace npp {

struct EncodingConfig {
  int frequencies = 10;  // d
  int width = 0;         // image dims, for coordinate normalization
  int height = 0;
};

// (x cos t + y sin t) mod p with Euclidean modulus; always in [0, p).
double warp(const PeriodicityVector& p, Vec2 x);

// [sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^(d-1) pi v), cos(2^(d-1) pi v)].
void positional_encode(double v, int d, double* out);

struct EncodedInput {
  std::vector<double> branch_a;
  std::vector<double> branch_b;
};

// Input widths per branch: branch A carries PE(x), PE(y) and the top1 warps;
// branch B carries the rest-group warps.
inline int branch_a_width(const AugmentedWarpSet& warps, int d) {
  return 2 * d * (2 + int(warps.top1_group.size()));
}
inline int branch_b_width(const AugmentedWarpSet& warps, int d) {
  return 2 * d * int(warps.rest_group.size());
}

// x, y normalized to [-1,1] by image extent; each warp value normalized by
// its own period. Layout: PE(x) | PE(y) | PE(warp_1) | ... in group order.
EncodedInput encode_pixel(Vec2 x, const AugmentedWarpSet& warps, const EncodingConfig& cfg);

// Row per pixel. Matrices are resized to match.
void encode_batch(const std::vector<Vec2>& pixels, const AugmentedWarpSet& warps,
                  const EncodingConfig& cfg, Eigen::MatrixXd& branch_a, Eigen::MatrixXd& branch_b);

}  // namespace npp
