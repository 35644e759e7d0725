#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "npp/encode.hpp"
#include "npp/geometry.hpp"
#include "npp/model.hpp"
#include "npp/proposal.hpp"
#include "npp/raster.hpp"
#include "npp/rng.hpp"

namespace npp {

// General robust kernel rho(e; alpha, c) with the continuous limits at
// alpha = 0 (log form) and alpha = 2 (scaled quadratic). c > 0.
double robust_loss(double e, double alpha, double c);
double robust_loss_derivative(double e, double alpha, double c);

// Ablations: no_periodicity drops the warped inputs and lattice-guided patch
// sampling; pixel_random keeps warping but samples ground-truth patches at
// random; pixel_only / patch_only drop one loss term entirely.
enum class Variant { full, no_periodicity, pixel_only, patch_only, pixel_random };

struct TrainConfig {
  double lambda1 = 1.0;
  double lambda2 = 0.001;
  double lambda_p = 0.4;
  double lambda_c = 1.0;  // 1 completion, 10 remapping, 5 segmentation
  int pixel_batch = 8192;
  int patch_batch = 2;  // doubles every patch_shrink_every epochs
  int n_nearest = 3;
  std::vector<int> patch_sizes{64, 96, 128, 160};
  double known_area_threshold = 0.7;
  int shift_window = 8;  // |alpha|, |beta| bound for shifted centers

  double robust_alpha = 1.0;
  double robust_c = 0.03;

  int epochs = 4000;
  uint64_t seed = 1;
  double learning_rate = 5e-4;
  int decay_every = 500;
  double decay_factor = 0.5;
  int patch_shrink_every = 2000;
  int patch_every = 1;  // patch loss evaluated on epochs divisible by this

  int width = 512;
  int pe_frequencies = 10;
  double snake_a = 1.0;

  int top_k = 3;
  std::vector<double> offsets = default_offsets();
  int q_lo = 1;
  int q_hi = 9;
  int pseudo_masks = 3;
  RankingConfig ranking;

  int chunk = 1024;  // forward/backward rows held in memory at once
};

enum class PatchRole { known, unknown };

struct PatchSample {
  Vec2 center;
  int size = 0;
  PatchRole role = PatchRole::known;
};

// Optional override of where the pixel loss samples and how much each pixel
// counts. Empty weights mean 1 everywhere. Used by blur remapping, where the
// pixel loss covers the whole image at reduced weight on blurry pixels.
struct PixelDomain {
  KnownMask domain;
  std::vector<double> weights;
};

std::vector<int> sample_pixel_batch(const KnownMask& valid, int n, Rng& rng);

// Half the centers in known territory, half in unknown; all from the
// non-empty side when one side is empty.
std::vector<PatchSample> sample_patch_centers(const KnownMask& valid, int n, int size, Rng& rng);

// Lattice-shifted ground-truth patch centers x + alpha d1 + beta d2 with
// |alpha|,|beta| <= window, fully in bounds, known fraction >= threshold,
// nearest n by distance (ties by alpha then beta). (0,0) is excluded for
// unknown-role centers, which have no ground truth of their own.
std::vector<Vec2> shifted_gt_centers(Vec2 x, PatchRole role, const DisplacementPair& d,
                                     const KnownMask& valid, int s, int n, double threshold,
                                     int window);

// Lattice data threaded from the proposal stage into training. has_lattice
// false means no warped inputs and random ground-truth patches.
struct PeriodicityContext {
  AugmentedWarpSet warps;
  DisplacementPair top1_pair;
  Periodicity top1;
  bool has_lattice = false;
};

struct PatchLossTerms {
  double perceptual = 0.0;
  double contextual = 0.0;  // mean over the ground-truth centers used
  double total = 0.0;
  int centers_used = 0;
};

// Loss for one patch sample: lambda_p * gamma * L_p + lambda_c * L_c, where
// gamma = 1 only for known-role samples. When grads is non-null the gradient
// of grad_scale * total is accumulated into it.
PatchLossTerms patch_loss_with_centers(const NppModel& model, const AugmentedWarpSet& warps,
                                       const EncodingConfig& enc, const PatchSample& sample,
                                       const std::vector<Vec2>& gt_centers, const RasterImage& img,
                                       const KnownMask& valid, const TrainConfig& cfg,
                                       double grad_scale, ParamSet* grads);

// Convenience wrapper that derives the ground-truth centers from the lattice.
PatchLossTerms patch_loss(const NppModel& model, const AugmentedWarpSet& warps,
                          const EncodingConfig& enc, const PatchSample& sample,
                          const DisplacementPair& d_top1, const RasterImage& img,
                          const KnownMask& valid, const TrainConfig& cfg, double grad_scale,
                          ParamSet* grads);

// Robust pixel loss over an explicit batch of pixel indices, normalized by
// cfg.pixel_batch regardless of batch.size() so weighted and subset batches
// are comparable. Accumulates gradients when grads is non-null.
double pixel_loss_batch(const NppModel& model, const AugmentedWarpSet& warps,
                        const EncodingConfig& enc, const RasterImage& img,
                        const std::vector<int>& batch, const std::vector<double>& weights,
                        const TrainConfig& cfg, ParamSet* grads);

struct TrainResult {
  NppModel model;
  EncodingConfig encoding;
  AugmentedWarpSet warps;
  // Total evaluated loss per epoch; NaN on epochs where no term was due.
  std::vector<double> loss_history;
};

// Single-image optimization. Rejects masks whose known pixels were
// synthesized by an earlier model pass.
TrainResult train_model(const RasterImage& img, const KnownMask& valid,
                        const PeriodicityContext& ctx, const TrainConfig& cfg,
                        Variant variant = Variant::full, const PixelDomain* domain = nullptr);

RasterImage render_image(const NppModel& model, const AugmentedWarpSet& warps,
                         const EncodingConfig& enc, int width, int height, int chunk = 4096);

// Known pixels verbatim from input, unknown pixels from rendered. A 3-channel
// render feeding a grayscale input is averaged down.
RasterImage composite(const RasterImage& input, const RasterImage& rendered,
                      const KnownMask& valid);

struct CompletionResult {
  RasterImage output;
  ProposalSet proposals;
  std::optional<TrainResult> trained;
  bool fallback = false;  // no usable periodicity; trained without warps
};

// Propose, augment, train, render, composite. Falls back to the unwarped
// variant when the search fails or yields nothing. An empty unknown region
// short-circuits to the input image.
CompletionResult complete(const RasterImage& img, const KnownMask& valid, const TrainConfig& cfg,
                          Variant variant = Variant::full, const PixelDomain* domain = nullptr);

}  // namespace npp
