#include "npp/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace npp {
namespace {

constexpr double kNormEps = 1e-12;
constexpr double kCtxEps = 1e-5;
constexpr double kCtxBandwidth = 0.5;
constexpr size_t kCtxMaxSet = 4096;

double scale_sigma(int scale) { return scale / 2.0; }

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

void check_same_shape(const FeatureMap& a, const FeatureMap& b) {
  if (a.width != b.width || a.height != b.height || a.depth != b.depth)
    throw std::invalid_argument("feature map shape mismatch");
}

// Channels of one scale: smoothed luma, d/dx, d/dy (central differences with
// clamped indices).
void scale_channels(const RasterImage& smoothed, double* ci, double* cx, double* cy) {
  const int w = smoothed.width, h = smoothed.height;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = size_t(y) * w + x;
      ci[i] = smoothed.data[i];
      cx[i] = 0.5 * (smoothed.data[size_t(y) * w + clampi(x + 1, 0, w - 1)] -
                     smoothed.data[size_t(y) * w + clampi(x - 1, 0, w - 1)]);
      cy[i] = 0.5 * (smoothed.data[size_t(clampi(y + 1, 0, h - 1)) * w + x] -
                     smoothed.data[size_t(clampi(y - 1, 0, h - 1)) * w + x]);
    }
}

// In-place standardization; returns sigma, 0 when the channel is constant
// (output zeroed in that case).
double standardize(double* v, size_t n) {
  double mu = 0.0;
  for (size_t i = 0; i < n; ++i) mu += v[i];
  mu /= double(n);
  double var = 0.0;
  for (size_t i = 0; i < n; ++i) var += (v[i] - mu) * (v[i] - mu);
  var /= double(n);
  const double sigma = std::sqrt(var);
  if (sigma < 1e-12) {
    std::fill(v, v + n, 0.0);
    return 0.0;
  }
  for (size_t i = 0; i < n; ++i) v[i] = (v[i] - mu) / sigma;
  return sigma;
}

// Every stride-th element so the result stays at or below kCtxMaxSet.
std::vector<uint32_t> subsample(std::vector<uint32_t> idx) {
  if (idx.size() <= kCtxMaxSet) return idx;
  const size_t stride = (idx.size() + kCtxMaxSet - 1) / kCtxMaxSet;
  std::vector<uint32_t> out;
  out.reserve(idx.size() / stride + 1);
  for (size_t i = 0; i < idx.size(); i += stride) out.push_back(idx[i]);
  return out;
}

// Per-pixel feature vectors of the chosen pixels, unit-normalized with an
// epsilon guard; norms returned for the gradient path.
void gather_normalized(const FeatureMap& f, const std::vector<uint32_t>& idx,
                       std::vector<double>& vecs, std::vector<double>& norms) {
  const size_t n = idx.size(), d = size_t(f.depth), wh = f.pixels();
  vecs.assign(n * d, 0.0);
  norms.assign(n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (size_t c = 0; c < d; ++c) {
      const double v = f.data[c * wh + idx[i]];
      vecs[i * d + c] = v;
      s += v * v;
    }
    norms[i] = std::sqrt(s);
    const double inv = 1.0 / (norms[i] + kNormEps);
    for (size_t c = 0; c < d; ++c) vecs[i * d + c] *= inv;
  }
}

struct CtxWork {
  std::vector<uint32_t> pi, ti;          // pixel indices of each set
  std::vector<double> pv, pn, tv, tn;    // normalized vectors and raw norms
  std::vector<double> dist;              // Np x Nt cosine distances
  std::vector<double> cx;                // Np x Nt row-softmax affinities
  std::vector<double> rowmin;            // per pred row: min_j dist
  std::vector<uint32_t> argmin;          // and its column
  std::vector<uint32_t> colmax;          // per target column: argmax_i cx
  double mean_best = 0.0;
};

double contextual_forward(const FeatureMap& pred, const FeatureMap& target,
                          const KnownMask& target_valid, CtxWork& w) {
  check_same_shape(pred, target);
  if (target.width != target_valid.width || target.height != target_valid.height)
    throw std::invalid_argument("target mask shape mismatch");

  std::vector<uint32_t> all(pred.pixels());
  for (size_t i = 0; i < all.size(); ++i) all[i] = uint32_t(i);
  std::vector<uint32_t> tall;
  for (size_t i = 0; i < all.size(); ++i)
    if (target_valid.flags[i]) tall.push_back(uint32_t(i));
  if (tall.empty()) throw std::invalid_argument("contextual loss needs a valid target pixel");
  w.pi = subsample(std::move(all));
  w.ti = subsample(std::move(tall));

  gather_normalized(pred, w.pi, w.pv, w.pn);
  gather_normalized(target, w.ti, w.tv, w.tn);

  const size_t np = w.pi.size(), nt = w.ti.size(), d = size_t(pred.depth);
  w.dist.assign(np * nt, 0.0);
  w.rowmin.assign(np, 0.0);
  w.argmin.assign(np, 0);
  for (size_t i = 0; i < np; ++i) {
    double best = std::numeric_limits<double>::infinity();
    uint32_t bestj = 0;
    for (size_t j = 0; j < nt; ++j) {
      double dp = 0.0;
      for (size_t c = 0; c < d; ++c) dp += w.pv[i * d + c] * w.tv[j * d + c];
      const double dij = 1.0 - dp;
      w.dist[i * nt + j] = dij;
      if (dij < best) {
        best = dij;
        bestj = uint32_t(j);
      }
    }
    w.rowmin[i] = best;
    w.argmin[i] = bestj;
  }

  // Row softmax of (1 - dist/(rowmin+eps)) / h, shifted for stability.
  w.cx.assign(np * nt, 0.0);
  for (size_t i = 0; i < np; ++i) {
    const double denom = w.rowmin[i] + kCtxEps;
    double smax = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < nt; ++j) {
      const double s = (1.0 - w.dist[i * nt + j] / denom) / kCtxBandwidth;
      w.cx[i * nt + j] = s;
      smax = std::max(smax, s);
    }
    double sum = 0.0;
    for (size_t j = 0; j < nt; ++j) sum += w.cx[i * nt + j] = std::exp(w.cx[i * nt + j] - smax);
    for (size_t j = 0; j < nt; ++j) w.cx[i * nt + j] /= sum;
  }

  w.colmax.assign(nt, 0);
  double total = 0.0;
  for (size_t j = 0; j < nt; ++j) {
    double best = -1.0;
    for (size_t i = 0; i < np; ++i)
      if (w.cx[i * nt + j] > best) {
        best = w.cx[i * nt + j];
        w.colmax[j] = uint32_t(i);
      }
    total += best;
  }
  w.mean_best = total / double(nt);
  return -std::log(w.mean_best);
}

}  // namespace

FeatureMap extract(const RasterImage& img) {
  ExtractionTrace trace;
  return extract_with_trace(img, trace);
}

FeatureMap extract_with_trace(const RasterImage& img, ExtractionTrace& trace) {
  const RasterImage gray = to_grayscale(img);
  FeatureMap f(img.width, img.height, kFeatureDepth);
  const size_t wh = f.pixels();
  trace.width = img.width;
  trace.height = img.height;
  trace.channels = img.channels;
  for (size_t s = 0; s < kFeatureScales.size(); ++s) {
    const RasterImage sm = gaussian_blur(gray, scale_sigma(kFeatureScales[s]));
    double* base = f.data.data() + 3 * s * wh;
    scale_channels(sm, base, base + wh, base + 2 * wh);
    for (int c = 0; c < 3; ++c)
      trace.sigma[size_t(3 * s + c)] = standardize(base + size_t(c) * wh, wh);
  }
  trace.features = f;
  return f;
}

RasterImage extract_backward(const ExtractionTrace& trace, const FeatureMap& dfeat) {
  const int w = trace.width, h = trace.height;
  const size_t wh = size_t(w) * h;
  if (dfeat.width != w || dfeat.height != h || dfeat.depth != kFeatureDepth)
    throw std::invalid_argument("gradient shape mismatch");

  RasterImage dgray(w, h, 1);
  std::vector<double> dv(wh), dsm(wh);
  for (size_t s = 0; s < kFeatureScales.size(); ++s) {
    std::fill(dsm.begin(), dsm.end(), 0.0);
    for (int c = 0; c < 3; ++c) {
      const size_t ch = 3 * s + size_t(c);
      const double sig = trace.sigma[ch];
      if (sig == 0.0) continue;  // constant channel was zeroed, no gradient
      const double* z = trace.features.data.data() + ch * wh;
      const double* dz = dfeat.data.data() + ch * wh;
      double mdz = 0.0, mdzz = 0.0;
      for (size_t i = 0; i < wh; ++i) {
        mdz += dz[i];
        mdzz += dz[i] * z[i];
      }
      mdz /= double(wh);
      mdzz /= double(wh);
      for (size_t i = 0; i < wh; ++i) dv[i] = (dz[i] - mdz - z[i] * mdzz) / sig;

      if (c == 0) {
        for (size_t i = 0; i < wh; ++i) dsm[i] += dv[i];
      } else if (c == 1) {
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const double g = 0.5 * dv[size_t(y) * w + x];
            dsm[size_t(y) * w + clampi(x + 1, 0, w - 1)] += g;
            dsm[size_t(y) * w + clampi(x - 1, 0, w - 1)] -= g;
          }
      } else {
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const double g = 0.5 * dv[size_t(y) * w + x];
            dsm[size_t(clampi(y + 1, 0, h - 1)) * w + x] += g;
            dsm[size_t(clampi(y - 1, 0, h - 1)) * w + x] -= g;
          }
      }
    }
    // The symmetric-reflection blur is self-adjoint.
    RasterImage tmp(w, h, 1);
    tmp.data = dsm;
    const RasterImage back = gaussian_blur(tmp, scale_sigma(kFeatureScales[s]));
    for (size_t i = 0; i < wh; ++i) dgray.data[i] += back.data[i];
  }

  if (trace.channels == 1) return dgray;
  RasterImage dimg(w, h, 3);
  static constexpr double kLuma[3] = {0.299, 0.587, 0.114};
  for (size_t p = 0; p < wh; ++p)
    for (int c = 0; c < 3; ++c) dimg.data[3 * p + size_t(c)] = kLuma[c] * dgray.data[p];
  return dimg;
}

double perceptual_distance(const FeatureMap& a, const FeatureMap& b, const KnownMask& mask) {
  check_same_shape(a, b);
  if (a.width != mask.width || a.height != mask.height)
    throw std::invalid_argument("mask shape mismatch");
  const size_t wh = a.pixels(), d = size_t(a.depth);
  double total = 0.0;
  size_t n = 0;
  for (size_t p = 0; p < wh; ++p) {
    if (!mask.flags[p]) continue;
    double na = 0.0, nb = 0.0, ab = 0.0;
    for (size_t c = 0; c < d; ++c) {
      const double va = a.data[c * wh + p], vb = b.data[c * wh + p];
      na += va * va;
      nb += vb * vb;
      ab += va * vb;
    }
    const double ia = 1.0 / (std::sqrt(na) + kNormEps), ib = 1.0 / (std::sqrt(nb) + kNormEps);
    // ||u - v||^2 without materializing u, v.
    total += na * ia * ia + nb * ib * ib - 2.0 * ab * ia * ib;
    ++n;
  }
  return n == 0 ? 0.0 : total / double(n);
}

std::vector<double> perceptual_map(const FeatureMap& a, const FeatureMap& b) {
  check_same_shape(a, b);
  const size_t wh = a.pixels(), d = size_t(a.depth);
  std::vector<double> out(wh, 0.0);
  for (size_t p = 0; p < wh; ++p) {
    double na = 0.0, nb = 0.0, ab = 0.0;
    for (size_t c = 0; c < d; ++c) {
      const double va = a.data[c * wh + p], vb = b.data[c * wh + p];
      na += va * va;
      nb += vb * vb;
      ab += va * vb;
    }
    const double ia = 1.0 / (std::sqrt(na) + kNormEps), ib = 1.0 / (std::sqrt(nb) + kNormEps);
    out[p] = na * ia * ia + nb * ib * ib - 2.0 * ab * ia * ib;
  }
  return out;
}

double perceptual_distance_grad(const FeatureMap& a, const FeatureMap& b, const KnownMask& mask,
                                FeatureMap& da) {
  check_same_shape(a, b);
  check_same_shape(a, da);
  const size_t wh = a.pixels(), d = size_t(a.depth);
  size_t n = 0;
  for (size_t p = 0; p < wh; ++p) n += mask.flags[p] != 0;
  if (n == 0) return 0.0;

  double total = 0.0;
  std::vector<double> u(d), v(d), g(d);
  for (size_t p = 0; p < wh; ++p) {
    if (!mask.flags[p]) continue;
    double na = 0.0, nb = 0.0;
    for (size_t c = 0; c < d; ++c) {
      u[c] = a.data[c * wh + p];
      v[c] = b.data[c * wh + p];
      na += u[c] * u[c];
      nb += v[c] * v[c];
    }
    const double norm_a = std::sqrt(na), norm_b = std::sqrt(nb);
    const double ia = 1.0 / (norm_a + kNormEps), ib = 1.0 / (norm_b + kNormEps);
    double diff2 = 0.0, fdotg = 0.0;
    for (size_t c = 0; c < d; ++c) {
      const double uc = u[c] * ia, vc = v[c] * ib;
      const double dc = uc - vc;
      diff2 += dc * dc;
      g[c] = 2.0 * dc / double(n);  // d(loss)/d(u_c)
      fdotg += u[c] * g[c];
    }
    total += diff2 / double(n);
    // d(u)/d(raw a): u = f/(|f|+eps).
    const double corr = norm_a > 1e-18 ? fdotg / (norm_a * (norm_a + kNormEps) * (norm_a + kNormEps)) : 0.0;
    for (size_t c = 0; c < d; ++c) da.data[c * wh + p] += g[c] * ia - u[c] * corr;
  }
  return total;
}

double contextual_loss(const FeatureMap& pred, const FeatureMap& target, const KnownMask& target_valid) {
  CtxWork w;
  return contextual_forward(pred, target, target_valid, w);
}

double contextual_loss_grad(const FeatureMap& pred, const FeatureMap& target,
                            const KnownMask& target_valid, FeatureMap& dpred) {
  check_same_shape(pred, dpred);
  CtxWork w;
  const double loss = contextual_forward(pred, target, target_valid, w);

  const size_t np = w.pi.size(), nt = w.ti.size(), d = size_t(pred.depth), wh = pred.pixels();

  // d(loss)/d(cx) is sparse: one entry per target column at its argmax row.
  // Fold the column contributions into per-row upstream vectors, then run the
  // row-softmax and distance chains.
  std::vector<double> dcx_row(nt);
  std::vector<double> ddist(nt);
  const double dmean = -1.0 / (w.mean_best * double(nt));
  std::vector<double> du(d);
  for (size_t i = 0; i < np; ++i) {
    bool hit = false;
    std::fill(dcx_row.begin(), dcx_row.end(), 0.0);
    for (size_t j = 0; j < nt; ++j)
      if (w.colmax[j] == i) {
        dcx_row[j] = dmean;
        hit = true;
      }
    if (!hit) continue;

    // Softmax backward: ds_j = cx_j * (dcx_j - sum_k dcx_k cx_k).
    double inner = 0.0;
    for (size_t j = 0; j < nt; ++j) inner += dcx_row[j] * w.cx[i * nt + j];
    const double denom = w.rowmin[i] + kCtxEps;
    double dmin = 0.0;
    for (size_t j = 0; j < nt; ++j) {
      const double ds = w.cx[i * nt + j] * (dcx_row[j] - inner);
      // s = (1 - dist/denom)/h.
      ddist[j] = -ds / (kCtxBandwidth * denom);
      dmin += ds * w.dist[i * nt + j] / (kCtxBandwidth * denom * denom);
    }
    ddist[w.argmin[i]] += dmin;

    // dist_ij = 1 - u_i . v_j.
    std::fill(du.begin(), du.end(), 0.0);
    for (size_t j = 0; j < nt; ++j) {
      if (ddist[j] == 0.0) continue;
      for (size_t c = 0; c < d; ++c) du[c] -= ddist[j] * w.tv[j * d + c];
    }

    // u = f/(|f|+eps), f the raw feature vector of pred pixel i; the second
    // term of du/df collapses to u (u . du)/|f|.
    const double norm_f = w.pn[i];
    const double inv = 1.0 / (norm_f + kNormEps);
    double udotdu = 0.0;
    for (size_t c = 0; c < d; ++c) udotdu += w.pv[i * d + c] * du[c];
    const double corr = norm_f > 1e-18 ? udotdu / norm_f : 0.0;
    const size_t pix = w.pi[i];
    for (size_t c = 0; c < d; ++c)
      dpred.data[c * wh + pix] += du[c] * inv - w.pv[i * d + c] * corr;
  }
  return loss;
}

}  // namespace npp
