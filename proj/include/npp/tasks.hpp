#pragma once

#include <optional>
#include <vector>

#include "npp/raster.hpp"
#include "npp/train.hpp"

namespace npp {

struct SegmentationResult {
  KnownMask periodic;      // true = labeled periodic
  std::vector<double> s1;  // grayscale reconstruction error per pixel
  std::vector<double> s2;  // first-scale perceptual distance per pixel
  double relabeled_fraction = 0.0;  // share of the initial non-periodic set relabeled
  std::optional<CompletionResult> completion;
};

// Crude initializer when no non-periodic prior exists: k-means (k=3) over
// luma, two chroma axes and damped position; the largest cluster is taken as
// periodic, everything else marked non-periodic. Deterministic per seed.
KnownMask auto_initial_nonperiodic(const RasterImage& img, uint64_t seed);

// Blur the input (sigma 1.5), complete it with the initial non-periodic set
// treated as unknown, then relabel initial-non-periodic pixels whose
// reconstruction agrees with the observation: S1 < eps1 and S2 < eps2.
// `observed` marks pixels that exist at all (holes stay unlabeled-periodic
// and never count toward the fraction). lambda_c is pinned to 5 here.
SegmentationResult segment(const RasterImage& img, const KnownMask& observed,
                           const KnownMask& initial_nonperiodic, double eps1, double eps2,
                           const TrainConfig& cfg);

struct Classification {
  bool npp = false;
  double relabeled_fraction = 0.0;
  SegmentationResult segmentation;
};

// Bottom-right 70% box minus the unobserved region as the non-periodic
// initializer; NPP iff strictly more than half of it relabels.
Classification classify(const RasterImage& img, const KnownMask& observed, const TrainConfig& cfg,
                        double eps1 = 0.15, double eps2 = 0.3);

// Window-variance of the Laplacian; a window is blurry when its variance is
// at or below the threshold (default: 25% of the median window variance).
// Returned mask: true = blurry.
KnownMask detect_blur(const RasterImage& img, int window = 16,
                      std::optional<double> threshold = std::nullopt);

// Re-synthesize blurry texture: blurry pixels are unknown for the proposal
// and patch stages but still steer the pixel loss at weight sigma_weight.
// lambda_c is pinned to 10 here. Throws when everything is blurry.
RasterImage remap_recover(const RasterImage& img, const KnownMask& blur, double sigma_weight,
                          TrainConfig cfg);

struct RefineResult {
  RasterImage output;
  bool refined = false;        // two-pass path taken (unknown ratio > 0.4)
  bool second_trained = false; // second-pass training actually ran
  CompletionResult first;
};

// Completion with periodicity refinement: above a 40% unknown ratio the
// periodicity search is redone on the first completion, but the final model
// trains only on originally observed pixels.
RefineResult refine(const RasterImage& img, const KnownMask& valid, const TrainConfig& cfg);

}  // namespace npp
