#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace npp {

// Row-major image, values in [0,1], 1 or 3 channels.
struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> data;

  RasterImage() = default;
  RasterImage(int w, int h, int c) : width(w), height(h), channels(c), data(size_t(w) * h * c, 0.0) {}

  double& at(int x, int y, int c = 0) { return data[(size_t(y) * width + x) * channels + c]; }
  double at(int x, int y, int c = 0) const { return data[(size_t(y) * width + x) * channels + c]; }
  size_t pixels() const { return size_t(width) * height; }
};

// true = known. `synthesized` marks masks whose known set was derived from
// model output rather than the original capture; the full trainer rejects
// those (refinement audit).
struct KnownMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> flags;
  bool synthesized = false;

  KnownMask() = default;
  KnownMask(int w, int h, bool known = true) : width(w), height(h), flags(size_t(w) * h, known ? 1 : 0) {}

  bool at(int x, int y) const { return flags[size_t(y) * width + x] != 0; }
  void set(int x, int y, bool v) { flags[size_t(y) * width + x] = v ? 1 : 0; }
  size_t count() const;
};

// PNG (8-bit gray/RGB), binary PGM (P5) and PPM (P6). Round trip is exact at
// 8 bits. Throws std::runtime_error on unreadable or unsupported files.
RasterImage load_image(const std::string& path);
void save_image(const RasterImage& img, const std::string& path);

// Mask I/O: PGM where value >= 128 means known.
KnownMask load_mask(const std::string& path);
void save_mask(const KnownMask& mask, const std::string& path);

// BT.601 luma for color input, identity for grayscale.
RasterImage to_grayscale(const RasterImage& img);

// Separable Gaussian, kernel radius ceil(3*sigma), symmetric (edge-inclusive)
// reflection. That border rule makes the operator doubly stochastic, so
// constants and the image mean are preserved exactly. sigma = 0 is identity.
RasterImage gaussian_blur(const RasterImage& img, double sigma);

// 1-D pass of the same blur over an arbitrary stride; exposed because the
// operator is its own adjoint and the feature backward pass reuses it.
void blur_line(const double* in, double* out, int n, const std::vector<double>& kernel, int stride);
std::vector<double> gaussian_kernel(double sigma);

// Exact Euclidean distance from each pixel to the nearest invalid pixel,
// where outside the image counts as invalid. 0 on invalid pixels.
std::vector<double> distance_to_invalid(const KnownMask& valid);

}  // namespace npp
