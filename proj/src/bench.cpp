#include "npp/bench.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "npp/rng.hpp"

namespace npp {

namespace {

constexpr double kTwoPi = 6.283185307179586;

struct Rgb {
  double r, g, b;
};

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

// Motifs are functions of the within-cell position only, so the tiling is
// exactly lattice-invariant before ramp and jitter. Values stay in [0.2,0.8].
Rgb motif_color(Motif motif, double fu, double fv) {
  switch (motif) {
    case Motif::checker: {
      const bool q = (fu < 0.5) != (fv < 0.5);
      return q ? Rgb{0.72, 0.30, 0.26} : Rgb{0.24, 0.42, 0.66};
    }
    case Motif::blobs: {
      const double d2 = (fu - 0.5) * (fu - 0.5) + (fv - 0.5) * (fv - 0.5);
      const double g = std::exp(-d2 / (2.0 * 0.18 * 0.18));
      return lerp(Rgb{0.25, 0.30, 0.35}, Rgb{0.75, 0.65, 0.40}, g);
    }
    case Motif::brick: {
      // Running bond: the cell holds two brick rows, the lower one offset.
      double u = fv < 0.5 ? fu : fu + 0.5;
      if (u >= 1.0) u -= 1.0;
      const double v = fv < 0.5 ? fv * 2.0 : (fv - 0.5) * 2.0;
      const bool mortar = u < 0.12 || v < 0.12;
      return mortar ? Rgb{0.68, 0.66, 0.62} : Rgb{0.55, 0.30, 0.22};
    }
    case Motif::stripes: {
      const double t = 0.5 + 0.5 * std::sin(kTwoPi * fu);
      return lerp(Rgb{0.25, 0.35, 0.55}, Rgb{0.75, 0.65, 0.35}, t);
    }
  }
  return {0.5, 0.5, 0.5};
}

int64_t floordiv(int64_t u, int64_t d) {  // d > 0
  return u >= 0 ? u / d : -((-u + d - 1) / d);
}

double cell_normal(uint64_t seed, int64_t ca, int64_t cb) {
  const uint64_t base = hash_combine(hash_combine(seed, uint64_t(ca)), uint64_t(cb));
  const double u1 = std::max(hash_uniform(hash_combine(base, 1)), 1e-12);
  const double u2 = hash_uniform(hash_combine(base, 2));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Renormalized truncated-window pass: each output is the kernel-weighted mean
// of the in-bounds taps. Keeps constants exact at the borders.
void weighted_line(const double* in, double* out, int n, const std::vector<double>& k,
                   int stride) {
  const int r = int(k.size() / 2);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0, wsum = 0.0;
    for (int t = -r; t <= r; ++t) {
      const int j = i + t;
      if (j < 0 || j >= n) continue;
      const double w = k[size_t(t + r)];
      acc += w * in[size_t(j) * stride];
      wsum += w;
    }
    out[size_t(i) * stride] = acc / wsum;
  }
}

std::vector<double> smooth_window(const std::vector<double>& field, int w, int h,
                                  const std::vector<double>& k) {
  std::vector<double> tmp(field.size()), out(field.size());
  for (int y = 0; y < h; ++y) weighted_line(field.data() + size_t(y) * w, tmp.data() + size_t(y) * w, w, k, 1);
  for (int x = 0; x < w; ++x) weighted_line(tmp.data() + x, out.data() + x, h, k, w);
  return out;
}

}  // namespace

SynthResult synth(const SynthSpec& spec) {
  const int w = spec.width, h = spec.height;
  if (w < 1 || h < 1) throw std::invalid_argument("bad dimensions");
  if (!is_valid(spec.pair)) throw std::invalid_argument("degenerate lattice");
  const int64_t ax = int64_t(spec.pair.d1.x), ay = int64_t(spec.pair.d1.y);
  const int64_t bx = int64_t(spec.pair.d2.x), by = int64_t(spec.pair.d2.y);
  if (std::abs(ax) >= w || std::abs(bx) >= w || std::abs(ay) >= h || std::abs(by) >= h)
    throw std::invalid_argument("motif larger than image");
  int64_t det = ax * by - ay * bx;
  int64_t sgn = 1;
  if (det < 0) {
    det = -det;
    sgn = -1;
  }

  SynthResult out{RasterImage(w, h, 3), spec.pair, KnownMask(w, h, false)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // (alpha, beta) = inverse-basis coordinates, kept exact over integers.
      const int64_t u = sgn * (by * x - bx * y);
      const int64_t v = sgn * (-ay * x + ax * y);
      const int64_t ca = floordiv(u, det), cb = floordiv(v, det);
      const double fu = double(u - ca * det) / double(det);
      const double fv = double(v - cb * det) / double(det);
      const Rgb base = motif_color(spec.motif, fu, fv);
      double m = 1.0;
      if (spec.jitter > 0.0) m += spec.jitter * cell_normal(spec.seed, ca, cb);
      if (spec.ramp != 0.0)
        m *= 1.0 + spec.ramp * (double(x) / std::max(w - 1, 1) +
                                double(y) / std::max(h - 1, 1) - 1.0);
      out.image.at(x, y, 0) = clamp01(base.r * m);
      out.image.at(x, y, 1) = clamp01(base.g * m);
      out.image.at(x, y, 2) = clamp01(base.b * m);
    }
  }

  if (spec.occluder != Occluder::none) {
    const uint64_t noise_seed = hash_combine(spec.seed, 0x0cc1);
    auto paint = [&](int x, int y) {
      out.non_periodic.set(x, y, true);
      for (int c = 0; c < 3; ++c)
        out.image.at(x, y, c) =
            0.1 + 0.8 * hash_uniform(hash_combine(noise_seed, uint64_t(y) * uint64_t(w) * 3 +
                                                                  uint64_t(x) * 3 + uint64_t(c)));
    };
    if (spec.occluder == Occluder::rect) {
      const int bw = int(std::llround(spec.occluder_size * w));
      const int bh = int(std::llround(spec.occluder_size * h));
      const int x0 = std::max(0, int(std::llround(spec.occluder_cx * w)) - bw / 2);
      const int y0 = std::max(0, int(std::llround(spec.occluder_cy * h)) - bh / 2);
      const int x1 = std::min(w - 1, x0 + bw - 1), y1 = std::min(h - 1, y0 + bh - 1);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) paint(x, y);
    } else {
      const double cx = spec.occluder_cx * w, cy = spec.occluder_cy * h;
      const double r = spec.occluder_size * std::min(w, h) / 2.0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) paint(x, y);
    }
  }
  return out;
}

KnownMask make_mask(MaskProtocol protocol, int width, int height, uint64_t seed, double frac) {
  if (width < 2 || height < 2) throw std::invalid_argument("mask protocol needs a real image");
  KnownMask mask(width, height, true);
  auto carve = [&](int x0, int y0, int x1, int y1) {
    for (int y = std::max(0, y0); y <= std::min(height - 1, y1); ++y)
      for (int x = std::max(0, x0); x <= std::min(width - 1, x1); ++x) mask.set(x, y, false);
  };

  switch (protocol) {
    case MaskProtocol::dtd: {
      const int bh = int(std::llround(0.7 * height)), bw = int(std::llround(0.7 * width));
      if (bh < 1 || bw < 1) throw std::invalid_argument("image too small for dtd protocol");
      carve(width - bw, height - bh, width - 1, height - 1);
      break;
    }
    case MaskProtocol::facade: {
      const int bh = height / 6, bw = width / 3;
      if (bh < 1 || bw < 1) throw std::invalid_argument("image too small for facade protocol");
      carve((width - bw) / 2, (height - bh) / 2, (width - bw) / 2 + bw - 1,
            (height - bh) / 2 + bh - 1);
      break;
    }
    case MaskProtocol::center: {
      if (frac <= 0.0 || frac > 1.0) throw std::invalid_argument("center fraction out of range");
      const int bh = std::max(1, int(std::llround(frac * height)));
      const int bw = std::max(1, int(std::llround(frac * width)));
      carve((width - bw) / 2, (height - bh) / 2, (width - bw) / 2 + bw - 1,
            (height - bh) / 2 + bh - 1);
      break;
    }
    case MaskProtocol::nrtdb: {
      const int m = std::min(width, height);
      const double s = m < 500 ? double(m) / 1000.0 : 1.0;
      const int lo = std::max(1, int(std::llround(100.0 * s)));
      const int hi = std::max(lo, int(std::llround(500.0 * s)));
      Rng rng(seed);
      const int bh = lo + int(rng.index(uint64_t(hi - lo + 1)));
      const int bw = lo + int(rng.index(uint64_t(hi - lo + 1)));
      const int span = int(std::llround(250.0 * s));
      const int ty_lo = height / 2 - span, ty_hi = height / 2 + span;
      const int tx_lo = width / 2 - span, tx_hi = width / 2 + span;
      const int ty = ty_lo + int(rng.index(uint64_t(ty_hi - ty_lo + 1)));
      const int tx = tx_lo + int(rng.index(uint64_t(tx_hi - tx_lo + 1)));
      carve(tx, ty, tx + bw - 1, ty + bh - 1);
      break;
    }
  }
  if (mask.count() == 0) throw std::invalid_argument("protocol removed every pixel");
  return mask;
}

EvalReport evaluate(const RasterImage& pred, const RasterImage& truth, const KnownMask& unknown) {
  if (pred.width != truth.width || pred.height != truth.height ||
      pred.channels != truth.channels || pred.width != unknown.width ||
      pred.height != unknown.height)
    throw std::invalid_argument("evaluate: shape mismatch");
  const int w = pred.width, h = pred.height, ch = pred.channels;
  const size_t npix = pred.pixels();

  // Pixelwise error stats.
  double se_full = 0.0, se_unknown = 0.0;
  size_t n_unknown = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double se = 0.0;
      for (int c = 0; c < ch; ++c) {
        const double e = pred.at(x, y, c) - truth.at(x, y, c);
        se += e * e;
      }
      se_full += se;
      if (unknown.at(x, y)) {
        se_unknown += se;
        ++n_unknown;
      }
    }

  // SSIM maps per channel on renormalized 11x11 Gaussian windows.
  std::vector<double> k(11);
  for (int i = 0; i < 11; ++i) k[size_t(i)] = std::exp(-double((i - 5) * (i - 5)) / (2.0 * 1.5 * 1.5));
  constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
  std::vector<double> ssim_map(npix, 0.0);
  std::vector<double> a(npix), b(npix), aa(npix), bb(npix), ab(npix);
  for (int c = 0; c < ch; ++c) {
    for (size_t p = 0; p < npix; ++p) {
      const double pa = pred.data[p * size_t(ch) + size_t(c)];
      const double pb = truth.data[p * size_t(ch) + size_t(c)];
      a[p] = pa;
      b[p] = pb;
      aa[p] = pa * pa;
      bb[p] = pb * pb;
      ab[p] = pa * pb;
    }
    const auto ma = smooth_window(a, w, h, k);
    const auto mb = smooth_window(b, w, h, k);
    const auto maa = smooth_window(aa, w, h, k);
    const auto mbb = smooth_window(bb, w, h, k);
    const auto mab = smooth_window(ab, w, h, k);
    for (size_t p = 0; p < npix; ++p) {
      const double va = maa[p] - ma[p] * ma[p];
      const double vb = mbb[p] - mb[p] * mb[p];
      const double cov = mab[p] - ma[p] * mb[p];
      const double val = ((2.0 * ma[p] * mb[p] + kC1) * (2.0 * cov + kC2)) /
                         ((ma[p] * ma[p] + mb[p] * mb[p] + kC1) * (va + vb + kC2));
      ssim_map[p] += val / ch;
    }
  }
  double ssim_full = 0.0, ssim_unknown = 0.0;
  for (size_t p = 0; p < npix; ++p) {
    ssim_full += ssim_map[p];
    if (unknown.flags[p]) ssim_unknown += ssim_map[p];
  }

  auto region = [&](double se, size_t n, double ssim_sum) {
    RegionMetrics r;
    if (n == 0) {
      r.rmse = r.psnr = r.ssim = std::numeric_limits<double>::quiet_NaN();
      return r;
    }
    r.rmse = 255.0 * std::sqrt(se / (double(n) * ch));
    r.psnr = r.rmse == 0.0 ? std::numeric_limits<double>::infinity()
                           : 20.0 * std::log10(255.0 / r.rmse);
    r.ssim = ssim_sum / double(n);
    return r;
  };

  EvalReport rep;
  rep.full = region(se_full, npix, ssim_full);
  rep.unknown = region(se_unknown, n_unknown, ssim_unknown);
  return rep;
}

}  // namespace npp
