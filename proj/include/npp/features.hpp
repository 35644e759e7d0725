#pragma once

#include <array>
#include <vector>

#include "npp/raster.hpp"

namespace npp {

// Planar layout: channel-major, so one channel is a contiguous W*H block.
struct FeatureMap {
  int width = 0;
  int height = 0;
  int depth = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int w, int h, int d) : width(w), height(h), depth(d), data(size_t(w) * h * d, 0.0) {}

  double& at(int x, int y, int d) { return data[(size_t(d) * height + y) * width + x]; }
  double at(int x, int y, int d) const { return data[(size_t(d) * height + y) * width + x]; }
  size_t pixels() const { return size_t(width) * height; }
};

// Fixed hand-crafted pyramid standing in for pretrained CNN features: per
// scale, Gaussian-smoothed luma plus its central-difference gradients, each
// channel standardized to zero mean / unit variance. Deterministic and
// translation-equivariant away from borders.
inline constexpr std::array<int, 3> kFeatureScales{1, 2, 4};
inline constexpr int kFeatureDepth = int(kFeatureScales.size()) * 3;

FeatureMap extract(const RasterImage& img);

// What the adjoint pass needs: the standardized output and per-channel scale.
// sigma = 0 marks a degenerate (constant) channel that was zeroed.
struct ExtractionTrace {
  int width = 0;
  int height = 0;
  int channels = 0;  // of the forward input image
  std::array<double, kFeatureDepth> sigma{};
  FeatureMap features;
};

FeatureMap extract_with_trace(const RasterImage& img, ExtractionTrace& trace);

// Adjoint of extract: gradient w.r.t. the input image given the gradient
// w.r.t. the feature map.
RasterImage extract_backward(const ExtractionTrace& trace, const FeatureMap& dfeat);

// Mean over masked pixels of || u - v ||^2 between per-pixel unit-normalized
// feature vectors. Empty mask gives 0.
double perceptual_distance(const FeatureMap& a, const FeatureMap& b, const KnownMask& mask);

// The same quantity per pixel, unmasked.
std::vector<double> perceptual_map(const FeatureMap& a, const FeatureMap& b);

// perceptual_distance plus d(loss)/d(a), accumulated into da (same shape as a).
double perceptual_distance_grad(const FeatureMap& a, const FeatureMap& b, const KnownMask& mask,
                                FeatureMap& da);

// Set-to-set contextual loss over cosine distances between per-pixel feature
// vectors; the target set is restricted to valid pixels. Sets larger than
// 4096 pixels are stride-subsampled. Throws when no target pixel is valid.
double contextual_loss(const FeatureMap& pred, const FeatureMap& target, const KnownMask& target_valid);

double contextual_loss_grad(const FeatureMap& pred, const FeatureMap& target,
                            const KnownMask& target_valid, FeatureMap& dpred);

}  // namespace npp
