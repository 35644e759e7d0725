#include "npp/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "npp/features.hpp"

namespace npp {

namespace {

constexpr double kQuiet = std::numeric_limits<double>::quiet_NaN();

double gt_at(const RasterImage& img, int x, int y, int c) {
  return img.at(x, y, std::min(c, img.channels - 1));
}

// Inclusive-exclusive rectangle sums of the known flags.
struct KnownSat {
  int w = 0, h = 0;
  std::vector<int64_t> sat;

  explicit KnownSat(const KnownMask& m) : w(m.width), h(m.height), sat(size_t(w + 1) * (h + 1), 0) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        sat[size_t(y + 1) * (w + 1) + x + 1] = sat[size_t(y) * (w + 1) + x + 1] +
                                               sat[size_t(y + 1) * (w + 1) + x] -
                                               sat[size_t(y) * (w + 1) + x] + (m.at(x, y) ? 1 : 0);
  }

  int64_t count(int x0, int y0, int x1, int y1) const {  // [x0,x1) x [y0,y1)
    return sat[size_t(y1) * (w + 1) + x1] - sat[size_t(y0) * (w + 1) + x1] -
           sat[size_t(y1) * (w + 1) + x0] + sat[size_t(y0) * (w + 1) + x0];
  }
};

ModelShape shape_for(const TrainConfig& cfg, int in_a, int in_b) {
  ModelShape s;
  s.in_a = in_a;
  s.in_b = in_b;
  s.width_a = cfg.width;
  s.widths_b = {cfg.width, cfg.width, std::max(cfg.width / 2, 1), 3};
  s.snake_a = cfg.snake_a;
  return s;
}

int base_patch_size(const TrainConfig& cfg, const PeriodicityContext& ctx) {
  if (cfg.patch_sizes.empty()) throw std::invalid_argument("patch size set is empty");
  std::vector<int> sizes = cfg.patch_sizes;
  std::sort(sizes.begin(), sizes.end());
  if (!ctx.has_lattice) return sizes.front();
  const double need = 2.0 * std::max(ctx.top1.p1.period, ctx.top1.p2.period);
  for (int s : sizes)
    if (double(s) >= need) return s;
  return sizes.back();
}

RasterImage mask_multiply(const RasterImage& img, const KnownMask& mask) {
  RasterImage out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (!mask.at(x, y))
        for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = 0.0;
  return out;
}

// Uniform ground-truth centers for the lattice-free patch variants: positions
// whose patch sits fully in bounds and fully known, relaxed to the known-area
// threshold when no such position exists.
std::vector<int> eligible_gt_centers(const KnownMask& valid, int s, double threshold) {
  const KnownSat sat(valid);
  std::vector<int> full, partial;
  const double need = threshold * double(s) * double(s) - 1e-9;
  for (int y = 0; y < valid.height; ++y) {
    for (int x = 0; x < valid.width; ++x) {
      const int x0 = x - s / 2, y0 = y - s / 2;
      if (x0 < 0 || y0 < 0 || x0 + s > valid.width || y0 + s > valid.height) continue;
      const int64_t cnt = sat.count(x0, y0, x0 + s, y0 + s);
      if (cnt == int64_t(s) * s) full.push_back(y * valid.width + x);
      if (double(cnt) >= need) partial.push_back(y * valid.width + x);
    }
  }
  return full.empty() ? partial : full;
}

// Forward over arbitrary coordinates in bounded chunks; writes RGB rows.
void forward_rows(const NppModel& model, const AugmentedWarpSet& warps, const EncodingConfig& enc,
                  const std::vector<Vec2>& coords, int chunk, Eigen::MatrixXd& out) {
  out.resize(long(coords.size()), 3);
  Eigen::MatrixXd xa, xb;
  const size_t step = size_t(std::max(chunk, 1));
  for (size_t start = 0; start < coords.size(); start += step) {
    const size_t n = std::min(step, coords.size() - start);
    const std::vector<Vec2> part(coords.begin() + long(start), coords.begin() + long(start + n));
    encode_batch(part, warps, enc, xa, xb);
    out.middleRows(long(start), long(n)) = model.forward(xa, xb, nullptr);
  }
}

// Backward for a scalar loss whose gradient w.r.t. the RGB rows is known;
// re-runs the forward in chunks to keep one tape's worth of activations.
void backward_rows(const NppModel& model, const AugmentedWarpSet& warps, const EncodingConfig& enc,
                   const std::vector<Vec2>& coords, const Eigen::MatrixXd& drgb, int chunk,
                   ParamSet& grads) {
  Eigen::MatrixXd xa, xb;
  GradientTape tape;
  const size_t step = size_t(std::max(chunk, 1));
  for (size_t start = 0; start < coords.size(); start += step) {
    const size_t n = std::min(step, coords.size() - start);
    const std::vector<Vec2> part(coords.begin() + long(start), coords.begin() + long(start + n));
    encode_batch(part, warps, enc, xa, xb);
    model.forward(xa, xb, &tape);
    model.backward(tape, drgb.middleRows(long(start), long(n)), grads);
  }
}

}  // namespace

double robust_loss(double e, double alpha, double c) {
  if (c <= 0.0) throw std::invalid_argument("robust loss needs c > 0");
  const double t = e / c;
  if (std::abs(alpha - 2.0) < 1e-9) return 0.5 * t * t;
  if (std::abs(alpha) < 1e-9) return std::log(0.5 * t * t + 1.0);
  const double am2 = std::abs(alpha - 2.0);
  return (am2 / alpha) * (std::pow(t * t / am2 + 1.0, alpha / 2.0) - 1.0);
}

double robust_loss_derivative(double e, double alpha, double c) {
  if (c <= 0.0) throw std::invalid_argument("robust loss needs c > 0");
  const double t = e / c;
  if (std::abs(alpha - 2.0) < 1e-9) return e / (c * c);
  if (std::abs(alpha) < 1e-9) return 2.0 * e / (e * e + 2.0 * c * c);
  const double am2 = std::abs(alpha - 2.0);
  return (e / (c * c)) * std::pow(t * t / am2 + 1.0, alpha / 2.0 - 1.0);
}

std::vector<int> sample_pixel_batch(const KnownMask& valid, int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("batch size must be positive");
  std::vector<int> known;
  known.reserve(valid.count());
  for (int y = 0; y < valid.height; ++y)
    for (int x = 0; x < valid.width; ++x)
      if (valid.at(x, y)) known.push_back(y * valid.width + x);
  if (known.empty()) throw std::runtime_error("known region is empty");
  std::vector<int> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[size_t(i)] = known[rng.index(known.size())];
  return out;
}

std::vector<PatchSample> sample_patch_centers(const KnownMask& valid, int n, int size, Rng& rng) {
  if (n < 1 || size < 1) throw std::invalid_argument("bad patch sampler arguments");
  std::vector<int> known, unknown;
  for (int y = 0; y < valid.height; ++y)
    for (int x = 0; x < valid.width; ++x)
      (valid.at(x, y) ? known : unknown).push_back(y * valid.width + x);
  if (known.empty() && unknown.empty()) throw std::runtime_error("empty mask");

  int want_unknown = n / 2, want_known = n - n / 2;
  if (unknown.empty()) {
    want_known = n;
    want_unknown = 0;
  } else if (known.empty()) {
    want_unknown = n;
    want_known = 0;
  }
  std::vector<PatchSample> out;
  out.reserve(size_t(n));
  for (int i = 0; i < want_known; ++i) {
    const int p = known[rng.index(known.size())];
    out.push_back({Vec2(double(p % valid.width), double(p / valid.width)), size, PatchRole::known});
  }
  for (int i = 0; i < want_unknown; ++i) {
    const int p = unknown[rng.index(unknown.size())];
    out.push_back(
        {Vec2(double(p % valid.width), double(p / valid.width)), size, PatchRole::unknown});
  }
  return out;
}

std::vector<Vec2> shifted_gt_centers(Vec2 x, PatchRole role, const DisplacementPair& d,
                                     const KnownMask& valid, int s, int n, double threshold,
                                     int window) {
  if (s < 1 || n < 1 || window < 0) throw std::invalid_argument("bad shifted-center arguments");
  const KnownSat sat(valid);
  struct Cand {
    Vec2 c;
    double dist;
    int a, b;
  };
  std::vector<Cand> cands;
  const double need = threshold * double(s) * double(s) - 1e-9;
  for (int a = -window; a <= window; ++a) {
    for (int b = -window; b <= window; ++b) {
      if (a == 0 && b == 0 && role == PatchRole::unknown) continue;
      const Vec2 c = x + d.d1 * double(a) + d.d2 * double(b);
      const int cx = int(std::lround(c.x)), cy = int(std::lround(c.y));
      const int x0 = cx - s / 2, y0 = cy - s / 2;
      if (x0 < 0 || y0 < 0 || x0 + s > valid.width || y0 + s > valid.height) continue;
      if (double(sat.count(x0, y0, x0 + s, y0 + s)) < need) continue;
      cands.push_back({Vec2(double(cx), double(cy)), norm(c - x), a, b});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& p, const Cand& q) {
    if (p.dist != q.dist) return p.dist < q.dist;
    if (p.a != q.a) return p.a < q.a;
    return p.b < q.b;
  });
  std::vector<Vec2> out;
  for (size_t i = 0; i < cands.size() && int(i) < n; ++i) out.push_back(cands[i].c);
  return out;
}

PatchLossTerms patch_loss_with_centers(const NppModel& model, const AugmentedWarpSet& warps,
                                       const EncodingConfig& enc, const PatchSample& sample,
                                       const std::vector<Vec2>& gt_centers, const RasterImage& img,
                                       const KnownMask& valid, const TrainConfig& cfg,
                                       double grad_scale, ParamSet* grads) {
  const int s = sample.size;
  if (s < 1) throw std::invalid_argument("patch size must be positive");
  const int tlx = int(std::lround(sample.center.x)) - s / 2;
  const int tly = int(std::lround(sample.center.y)) - s / 2;

  std::vector<Vec2> coords;
  coords.reserve(size_t(s) * s);
  for (int j = 0; j < s; ++j)
    for (int i = 0; i < s; ++i) coords.push_back(Vec2(double(tlx + i), double(tly + j)));

  Eigen::MatrixXd rows;
  forward_rows(model, warps, enc, coords, cfg.chunk, rows);
  RasterImage pred(s, s, 3);
  for (int j = 0; j < s; ++j)
    for (int i = 0; i < s; ++i)
      for (int c = 0; c < 3; ++c) pred.at(i, j, c) = rows(j * s + i, c);

  KnownMask own(s, s, false);
  for (int j = 0; j < s; ++j)
    for (int i = 0; i < s; ++i) {
      const int x = tlx + i, y = tly + j;
      if (x >= 0 && y >= 0 && x < valid.width && y < valid.height && valid.at(x, y))
        own.set(i, j, true);
    }

  PatchLossTerms terms;
  RasterImage dpred(s, s, 3);
  const bool want_grad = grads != nullptr;
  const bool gamma = sample.role == PatchRole::known;

  if (gamma && cfg.lambda_p != 0.0 && own.count() > 0) {
    const RasterImage pred_m = mask_multiply(pred, own);
    RasterImage gt_m(s, s, 3);
    for (int j = 0; j < s; ++j)
      for (int i = 0; i < s; ++i)
        if (own.at(i, j))
          for (int c = 0; c < 3; ++c) gt_m.at(i, j, c) = gt_at(img, tlx + i, tly + j, c);
    if (want_grad) {
      ExtractionTrace trace;
      const FeatureMap fp = extract_with_trace(pred_m, trace);
      const FeatureMap fg = extract(gt_m);
      FeatureMap dfp(s, s, kFeatureDepth);
      terms.perceptual = perceptual_distance_grad(fp, fg, own, dfp);
      const RasterImage dimg = extract_backward(trace, dfp);
      const double w = grad_scale * cfg.lambda_p;
      for (int j = 0; j < s; ++j)
        for (int i = 0; i < s; ++i)
          if (own.at(i, j))
            for (int c = 0; c < 3; ++c) dpred.at(i, j, c) += w * dimg.at(i, j, c);
    } else {
      terms.perceptual = perceptual_distance(extract(pred_m), extract(gt_m), own);
    }
  }

  if (cfg.lambda_c != 0.0 && !gt_centers.empty()) {
    const double invn = 1.0 / double(gt_centers.size());
    for (const Vec2& gc : gt_centers) {
      const int gx = int(std::lround(gc.x)) - s / 2, gy = int(std::lround(gc.y)) - s / 2;
      if (gx < 0 || gy < 0 || gx + s > img.width || gy + s > img.height)
        throw std::invalid_argument("ground-truth patch sticks out of the image");
      KnownMask mc(s, s, false);
      RasterImage gt_raw(s, s, 3);
      for (int j = 0; j < s; ++j)
        for (int i = 0; i < s; ++i) {
          mc.set(i, j, valid.at(gx + i, gy + j));
          for (int c = 0; c < 3; ++c) gt_raw.at(i, j, c) = gt_at(img, gx + i, gy + j, c);
        }
      const RasterImage pred_m = mask_multiply(pred, mc);
      if (want_grad) {
        ExtractionTrace trace;
        const FeatureMap fp = extract_with_trace(pred_m, trace);
        const FeatureMap ft = extract(gt_raw);
        FeatureMap dfp(s, s, kFeatureDepth);
        terms.contextual += invn * contextual_loss_grad(fp, ft, mc, dfp);
        const RasterImage dimg = extract_backward(trace, dfp);
        const double w = grad_scale * cfg.lambda_c * invn;
        for (int j = 0; j < s; ++j)
          for (int i = 0; i < s; ++i)
            if (mc.at(i, j))
              for (int c = 0; c < 3; ++c) dpred.at(i, j, c) += w * dimg.at(i, j, c);
      } else {
        terms.contextual += invn * contextual_loss(extract(pred_m), extract(gt_raw), mc);
      }
      ++terms.centers_used;
    }
  }

  terms.total = cfg.lambda_p * (gamma ? 1.0 : 0.0) * terms.perceptual +
                cfg.lambda_c * terms.contextual;

  if (want_grad) {
    Eigen::MatrixXd drgb = Eigen::MatrixXd::Zero(long(coords.size()), 3);
    bool nonzero = false;
    for (int j = 0; j < s; ++j)
      for (int i = 0; i < s; ++i)
        for (int c = 0; c < 3; ++c) {
          const double v = dpred.at(i, j, c);
          if (v != 0.0) nonzero = true;
          drgb(j * s + i, c) = v;
        }
    if (nonzero) backward_rows(model, warps, enc, coords, drgb, cfg.chunk, *grads);
  }
  return terms;
}

PatchLossTerms patch_loss(const NppModel& model, const AugmentedWarpSet& warps,
                          const EncodingConfig& enc, const PatchSample& sample,
                          const DisplacementPair& d_top1, const RasterImage& img,
                          const KnownMask& valid, const TrainConfig& cfg, double grad_scale,
                          ParamSet* grads) {
  const std::vector<Vec2> centers =
      shifted_gt_centers(sample.center, sample.role, d_top1, valid, sample.size, cfg.n_nearest,
                         cfg.known_area_threshold, cfg.shift_window);
  return patch_loss_with_centers(model, warps, enc, sample, centers, img, valid, cfg, grad_scale,
                                 grads);
}

double pixel_loss_batch(const NppModel& model, const AugmentedWarpSet& warps,
                        const EncodingConfig& enc, const RasterImage& img,
                        const std::vector<int>& batch, const std::vector<double>& weights,
                        const TrainConfig& cfg, ParamSet* grads) {
  if (!weights.empty() && weights.size() != batch.size())
    throw std::invalid_argument("weights must match the batch");
  const double scale = cfg.lambda1 / double(cfg.pixel_batch);
  Eigen::MatrixXd xa, xb;
  GradientTape tape;
  double loss = 0.0;
  const size_t step = size_t(std::max(cfg.chunk, 1));
  for (size_t start = 0; start < batch.size(); start += step) {
    const size_t n = std::min(step, batch.size() - start);
    std::vector<Vec2> coords(n);
    for (size_t i = 0; i < n; ++i) {
      const int p = batch[start + i];
      coords[i] = Vec2(double(p % img.width), double(p / img.width));
    }
    encode_batch(coords, warps, enc, xa, xb);
    const Eigen::MatrixXd pred = model.forward(xa, xb, grads ? &tape : nullptr);
    Eigen::MatrixXd drgb(long(n), 3);
    for (size_t i = 0; i < n; ++i) {
      const double w = weights.empty() ? 1.0 : weights[start + i];
      const int px = batch[start + i] % img.width, py = batch[start + i] / img.width;
      for (int c = 0; c < 3; ++c) {
        const double e = pred(long(i), c) - gt_at(img, px, py, c);
        loss += w * robust_loss(e, cfg.robust_alpha, cfg.robust_c);
        drgb(long(i), c) = scale * w * robust_loss_derivative(e, cfg.robust_alpha, cfg.robust_c);
      }
    }
    if (grads) model.backward(tape, drgb, *grads);
  }
  return scale * loss;
}

TrainResult train_model(const RasterImage& img, const KnownMask& valid,
                        const PeriodicityContext& ctx_in, const TrainConfig& cfg, Variant variant,
                        const PixelDomain* domain) {
  if (valid.synthesized)
    throw std::invalid_argument("training mask marks model-synthesized pixels as known");
  if (img.width != valid.width || img.height != valid.height)
    throw std::invalid_argument("image and mask dims differ");
  if (cfg.epochs < 0 || cfg.pixel_batch < 1 || cfg.patch_batch < 1)
    throw std::invalid_argument("bad training config");

  PeriodicityContext ctx = ctx_in;
  if (variant == Variant::no_periodicity) {
    ctx.warps = AugmentedWarpSet{};
    ctx.has_lattice = false;
  }

  const EncodingConfig enc{cfg.pe_frequencies, img.width, img.height};
  NppModel model(shape_for(cfg, branch_a_width(ctx.warps, cfg.pe_frequencies),
                           branch_b_width(ctx.warps, cfg.pe_frequencies)),
                 hash_combine(cfg.seed, 1));
  Rng rng(hash_combine(cfg.seed, 2));
  AdamState adam = AdamState::for_model(model);
  AdamConfig acfg;
  acfg.learning_rate = cfg.learning_rate;
  acfg.decay_every = cfg.decay_every;
  acfg.decay_factor = cfg.decay_factor;

  const KnownMask& pix_domain = (domain && domain->domain.width > 0) ? domain->domain : valid;
  const std::vector<double>* pix_weights =
      (domain && !domain->weights.empty()) ? &domain->weights : nullptr;
  if (pix_weights && pix_weights->size() != img.pixels())
    throw std::invalid_argument("pixel weights must cover the image");

  const bool use_pixel = variant != Variant::patch_only;
  const bool use_patch = variant != Variant::pixel_only && cfg.lambda2 != 0.0;
  const bool lattice_patches =
      ctx.has_lattice && variant != Variant::no_periodicity && variant != Variant::pixel_random;
  const int s_base = use_patch ? base_patch_size(cfg, ctx) : 0;
  const int patch_every = std::max(cfg.patch_every, 1);

  std::map<int, std::vector<int>> center_cache;  // patch size -> eligible gt centers
  auto random_centers = [&](int s) -> std::vector<Vec2> {
    auto it = center_cache.find(s);
    if (it == center_cache.end())
      it = center_cache.emplace(s, eligible_gt_centers(valid, s, cfg.known_area_threshold)).first;
    const auto& pool = it->second;
    std::vector<Vec2> out;
    if (pool.empty()) return out;
    for (int i = 0; i < cfg.n_nearest; ++i) {
      const int p = pool[rng.index(pool.size())];
      out.push_back(Vec2(double(p % valid.width), double(p / valid.width)));
    }
    return out;
  };

  ParamSet grads = model.zero_like();
  std::vector<double> history;
  history.reserve(size_t(std::max(cfg.epochs, 0)));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (auto& g : grads) {
      g.w.setZero();
      g.b.setZero();
    }
    double total = 0.0;
    bool any = false;

    if (use_pixel) {
      const std::vector<int> batch = sample_pixel_batch(pix_domain, cfg.pixel_batch, rng);
      std::vector<double> w;
      if (pix_weights) {
        w.resize(batch.size());
        for (size_t i = 0; i < batch.size(); ++i) w[i] = (*pix_weights)[size_t(batch[i])];
      }
      total += pixel_loss_batch(model, ctx.warps, enc, img, batch, w, cfg, &grads);
      any = true;
    }

    if (use_patch && epoch % patch_every == 0) {
      const int t = cfg.patch_shrink_every > 0 ? epoch / cfg.patch_shrink_every : 0;
      const int s_t = std::max(s_base >> t, 8);
      const int n_t = cfg.patch_batch << t;
      const std::vector<PatchSample> samples = sample_patch_centers(valid, n_t, s_t, rng);
      const double gscale = cfg.lambda2 / double(n_t);
      for (const PatchSample& smp : samples) {
        const std::vector<Vec2> centers =
            lattice_patches
                ? shifted_gt_centers(smp.center, smp.role, ctx.top1_pair, valid, s_t,
                                     cfg.n_nearest, cfg.known_area_threshold, cfg.shift_window)
                : random_centers(s_t);
        const PatchLossTerms terms = patch_loss_with_centers(model, ctx.warps, enc, smp, centers,
                                                             img, valid, cfg, gscale, &grads);
        total += gscale * terms.total;
      }
      any = true;
    }

    if (any) {
      adam_step(model, adam, grads, epoch, acfg);
      history.push_back(total);
    } else {
      history.push_back(kQuiet);
    }
  }

  return TrainResult{std::move(model), enc, ctx.warps, std::move(history)};
}

RasterImage render_image(const NppModel& model, const AugmentedWarpSet& warps,
                         const EncodingConfig& enc, int width, int height, int chunk) {
  RasterImage out(width, height, 3);
  Eigen::MatrixXd xa, xb;
  const size_t step = size_t(std::max(chunk, 1));
  const size_t total = size_t(width) * height;
  std::vector<Vec2> coords;
  for (size_t start = 0; start < total; start += step) {
    const size_t n = std::min(step, total - start);
    coords.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const size_t p = start + i;
      coords[i] = Vec2(double(p % size_t(width)), double(p / size_t(width)));
    }
    encode_batch(coords, warps, enc, xa, xb);
    const Eigen::MatrixXd pred = model.forward(xa, xb, nullptr);
    for (size_t i = 0; i < n; ++i) {
      const size_t p = start + i;
      for (int c = 0; c < 3; ++c)
        out.at(int(p % size_t(width)), int(p / size_t(width)), c) = pred(long(i), c);
    }
  }
  return out;
}

RasterImage composite(const RasterImage& input, const RasterImage& rendered,
                      const KnownMask& valid) {
  if (input.width != rendered.width || input.height != rendered.height ||
      input.width != valid.width || input.height != valid.height)
    throw std::invalid_argument("composite dims differ");
  RasterImage out = input;
  for (int y = 0; y < input.height; ++y) {
    for (int x = 0; x < input.width; ++x) {
      if (valid.at(x, y)) continue;
      for (int c = 0; c < input.channels; ++c) {
        if (rendered.channels == input.channels) {
          out.at(x, y, c) = rendered.at(x, y, c);
        } else if (input.channels == 1) {
          double m = 0.0;
          for (int rc = 0; rc < rendered.channels; ++rc) m += rendered.at(x, y, rc);
          out.at(x, y, c) = m / rendered.channels;
        } else {
          out.at(x, y, c) = rendered.at(x, y, 0);
        }
      }
    }
  }
  return out;
}

CompletionResult complete(const RasterImage& img, const KnownMask& valid, const TrainConfig& cfg,
                          Variant variant, const PixelDomain* domain) {
  if (img.width != valid.width || img.height != valid.height)
    throw std::invalid_argument("image and mask dims differ");
  if (img.pixels() == valid.count())
    return CompletionResult{img, ProposalSet{}, std::nullopt, false};

  PeriodicityContext ctx;
  ProposalSet proposals;
  bool fallback = true;
  if (variant != Variant::no_periodicity) {
    try {
      RankingConfig rcfg = cfg.ranking;
      rcfg.pe_frequencies = cfg.pe_frequencies;
      rcfg.seed = hash_combine(cfg.seed, cfg.ranking.seed);
      proposals = search_periodicities(img, valid, cfg.q_lo, cfg.q_hi, cfg.pseudo_masks,
                                       cfg.top_k, rcfg);
      if (proposals.k_effective() > 0) {
        ctx.warps = augment(proposals, cfg.top_k, cfg.offsets);
        ctx.top1_pair = proposals.ranked.front().pair;
        ctx.top1 = proposals.ranked.front().periodicity;
        ctx.has_lattice = true;
        fallback = false;
      }
    } catch (const std::exception&) {
      proposals = ProposalSet{};
      fallback = true;
    }
  }

  TrainResult trained = train_model(img, valid, ctx, cfg, variant, domain);
  const RasterImage rendered =
      render_image(trained.model, trained.warps, trained.encoding, img.width, img.height);
  RasterImage output = composite(img, rendered, valid);
  CompletionResult result{std::move(output), std::move(proposals), std::move(trained), fallback};
  return result;
}

}  // namespace npp
