#pragma once

#include <cstdint>
#include <optional>

#include "npp/geometry.hpp"
#include "npp/raster.hpp"

namespace npp {

enum class Motif { checker, blobs, brick, stripes };
enum class Occluder { none, rect, disk };

// Procedural near-periodic test image: a motif tiled by an integer lattice,
// multiplied by an illumination ramp and a per-tile brightness jitter, with
// an optional non-periodic occluder pasted on top.
struct SynthSpec {
  Motif motif = Motif::checker;
  DisplacementPair pair{Vec2(16, 0), Vec2(0, 16)};
  double ramp = 0.0;    // multiplier spans [1-ramp, 1+ramp] across the image
  double jitter = 0.0;  // sigma of the per-tile brightness factor
  Occluder occluder = Occluder::none;
  double occluder_cx = 0.5;  // center, as a fraction of each dimension
  double occluder_cy = 0.5;
  double occluder_size = 0.25;  // side (rect) or diameter (disk) fraction
  uint64_t seed = 1;
  int width = 128;
  int height = 128;
};

struct SynthResult {
  RasterImage image;
  DisplacementPair pair;
  KnownMask non_periodic;  // true on occluder pixels
};

SynthResult synth(const SynthSpec& spec);

// Unknown-region protocols. nrtdb draws box size and position from seeded
// ranges (scaled down proportionally when min(W,H) < 500); dtd removes the
// bottom-right 70% box; facade removes a centered H/6 x W/3 box; center
// removes a centered frac-sized box.
enum class MaskProtocol { nrtdb, dtd, facade, center };

KnownMask make_mask(MaskProtocol protocol, int width, int height, uint64_t seed,
                    double frac = 0.5);

struct RegionMetrics {
  double rmse = 0.0;  // 0..255 scale
  double psnr = 0.0;  // dB, +inf on exact match
  double ssim = 0.0;
};

struct EvalReport {
  RegionMetrics full;
  RegionMetrics unknown;
  std::optional<double> chamfer;  // filled by callers that know the lattices
};

// RMSE / PSNR / SSIM over the whole frame and over the region where
// `unknown` is true (empty region reports NaN). SSIM: 11x11 Gaussian window
// sigma 1.5, K1=0.01, K2=0.03, range 1.0, border windows renormalized over
// their in-bounds taps, channels averaged.
EvalReport evaluate(const RasterImage& pred, const RasterImage& truth, const KnownMask& unknown);

}  // namespace npp
