#include "npp/encode.hpp"

#include <cmath>

namespace npp {

double warp(const PeriodicityVector& p, Vec2 x) {
  const double proj = x.x * std::cos(p.theta) + x.y * std::sin(p.theta);
  double v = std::fmod(proj, p.period);
  if (v < 0.0) v += p.period;
  if (v >= p.period) v = 0.0;  // fmod rounding at the seam
  return v;
}

void positional_encode(double v, int d, double* out) {
  if (d <= 0) return;
  // One sincos at the base frequency, then double-angle recurrences. The
  // drift against direct evaluation stays near 2^d ulp, orders of magnitude
  // inside every tolerance used downstream.
  double s = std::sin(M_PI * v);
  double c = std::cos(M_PI * v);
  out[0] = s;
  out[1] = c;
  for (int i = 1; i < d; ++i) {
    const double s2 = 2.0 * s * c;
    const double c2 = c * c - s * s;
    out[2 * i] = s2;
    out[2 * i + 1] = c2;
    s = s2;
    c = c2;
  }
}

namespace {

inline double norm_coord(double v, int extent) {
  return extent > 1 ? 2.0 * v / double(extent - 1) - 1.0 : 0.0;
}

// One pixel's slice values in layout order; emit writes 2d values each.
template <class EmitA, class EmitB>
void encode_with(Vec2 x, const AugmentedWarpSet& warps, const EncodingConfig& cfg, EmitA emit_a,
                 EmitB emit_b) {
  emit_a(norm_coord(x.x, cfg.width));
  emit_a(norm_coord(x.y, cfg.height));
  for (const auto& p : warps.top1_group) emit_a(2.0 * warp(p, x) / p.period - 1.0);
  for (const auto& p : warps.rest_group) emit_b(2.0 * warp(p, x) / p.period - 1.0);
}

}  // namespace

EncodedInput encode_pixel(Vec2 x, const AugmentedWarpSet& warps, const EncodingConfig& cfg) {
  EncodedInput out;
  const int d = cfg.frequencies;
  out.branch_a.resize(size_t(branch_a_width(warps, d)));
  out.branch_b.resize(size_t(branch_b_width(warps, d)));
  double* pa = out.branch_a.data();
  double* pb = out.branch_b.data();
  encode_with(
      x, warps, cfg,
      [&](double v) {
        positional_encode(v, d, pa);
        pa += 2 * d;
      },
      [&](double v) {
        positional_encode(v, d, pb);
        pb += 2 * d;
      });
  return out;
}

void encode_batch(const std::vector<Vec2>& pixels, const AugmentedWarpSet& warps,
                  const EncodingConfig& cfg, Eigen::MatrixXd& branch_a, Eigen::MatrixXd& branch_b) {
  const int d = cfg.frequencies;
  const int na = branch_a_width(warps, d), nb = branch_b_width(warps, d);
  branch_a.resize(long(pixels.size()), na);
  branch_b.resize(long(pixels.size()), nb);
  std::vector<double> pe(size_t(2 * d));
  for (size_t r = 0; r < pixels.size(); ++r) {
    int ca = 0, cb = 0;
    encode_with(
        pixels[r], warps, cfg,
        [&](double v) {
          positional_encode(v, d, pe.data());
          for (int i = 0; i < 2 * d; ++i) branch_a(long(r), ca++) = pe[size_t(i)];
        },
        [&](double v) {
          positional_encode(v, d, pe.data());
          for (int i = 0; i < 2 * d; ++i) branch_b(long(r), cb++) = pe[size_t(i)];
        });
  }
}

}  // namespace npp
