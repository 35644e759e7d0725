#include "npp/tasks.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "npp/features.hpp"
#include "npp/rng.hpp"

namespace npp {

namespace {

constexpr double kSegmentBlurSigma = 1.5;
constexpr double kPositionWeight = 0.5;

FeatureMap first_scale(const FeatureMap& f) {
  FeatureMap out(f.width, f.height, 3);
  std::copy(f.data.begin(), f.data.begin() + long(f.pixels()) * 3, out.data.begin());
  return out;
}

double tile_variance(const std::vector<double>& v, size_t begin, size_t end) {
  const size_t n = end - begin;
  double mean = 0.0;
  for (size_t i = begin; i < end; ++i) mean += v[i];
  mean /= double(n);
  double var = 0.0;
  for (size_t i = begin; i < end; ++i) var += (v[i] - mean) * (v[i] - mean);
  return var / double(n);
}

}  // namespace

KnownMask auto_initial_nonperiodic(const RasterImage& img, uint64_t seed) {
  const int w = img.width, h = img.height, k = 3;
  const size_t n = img.pixels();
  if (n < size_t(k)) throw std::invalid_argument("image too small to cluster");

  std::vector<std::array<double, 5>> f(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double r = img.at(x, y, 0);
      const double g = img.at(x, y, std::min(1, img.channels - 1));
      const double b = img.at(x, y, std::min(2, img.channels - 1));
      f[size_t(y) * w + x] = {0.299 * r + 0.587 * g + 0.114 * b, r - g, b - (r + g) / 2.0,
                             kPositionWeight * (double(x) / std::max(w - 1, 1) - 0.5),
                             kPositionWeight * (double(y) / std::max(h - 1, 1) - 0.5)};
    }
  auto dist2 = [&](const std::array<double, 5>& a, const std::array<double, 5>& b) {
    double s = 0.0;
    for (int i = 0; i < 5; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
  };

  // k-means++ seeding, then Lloyd iterations.
  Rng rng(seed);
  std::vector<std::array<double, 5>> centers;
  centers.push_back(f[rng.index(n)]);
  std::vector<double> best(n);
  while (centers.size() < size_t(k)) {
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      double d = dist2(f[i], centers[0]);
      for (size_t c = 1; c < centers.size(); ++c) d = std::min(d, dist2(f[i], centers[c]));
      best[i] = d;
      total += d;
    }
    size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total, acc = 0.0;
      for (size_t i = 0; i < n; ++i) {
        acc += best[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(f[pick]);
  }

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 25; ++iter) {
    bool moved = false;
    for (size_t i = 0; i < n; ++i) {
      int bi = 0;
      double bd = dist2(f[i], centers[0]);
      for (int c = 1; c < k; ++c) {
        const double d = dist2(f[i], centers[size_t(c)]);
        if (d < bd) {
          bd = d;
          bi = c;
        }
      }
      if (assign[i] != bi) {
        assign[i] = bi;
        moved = true;
      }
    }
    std::vector<std::array<double, 5>> sum(size_t(k), {0, 0, 0, 0, 0});
    std::vector<size_t> cnt(size_t(k), 0);
    for (size_t i = 0; i < n; ++i) {
      for (int d = 0; d < 5; ++d) sum[size_t(assign[i])][size_t(d)] += f[i][size_t(d)];
      ++cnt[size_t(assign[i])];
    }
    for (int c = 0; c < k; ++c) {
      if (cnt[size_t(c)] == 0) continue;  // empty cluster keeps its center
      for (int d = 0; d < 5; ++d) centers[size_t(c)][size_t(d)] = sum[size_t(c)][size_t(d)] / double(cnt[size_t(c)]);
    }
    if (!moved) break;
  }

  std::array<size_t, 3> counts{0, 0, 0};
  for (size_t i = 0; i < n; ++i) ++counts[size_t(assign[i])];
  const int largest = int(std::max_element(counts.begin(), counts.end()) - counts.begin());

  KnownMask np(w, h, false);
  for (size_t i = 0; i < n; ++i)
    if (assign[i] != largest) np.flags[i] = 1;
  return np;
}

SegmentationResult segment(const RasterImage& img, const KnownMask& observed,
                           const KnownMask& initial_nonperiodic, double eps1, double eps2,
                           const TrainConfig& cfg) {
  if (img.width != observed.width || img.height != observed.height ||
      img.width != initial_nonperiodic.width || img.height != initial_nonperiodic.height)
    throw std::invalid_argument("segment: shape mismatch");
  const size_t n = img.pixels();

  SegmentationResult res;
  res.periodic = KnownMask(img.width, img.height, false);
  for (size_t i = 0; i < n; ++i) res.periodic.flags[i] = initial_nonperiodic.flags[i] ? 0 : 1;
  res.s1.assign(n, 0.0);
  res.s2.assign(n, 0.0);
  if (initial_nonperiodic.count() == 0) return res;

  KnownMask train_valid = observed;
  for (size_t i = 0; i < n; ++i)
    if (initial_nonperiodic.flags[i]) train_valid.flags[i] = 0;
  if (train_valid.count() == 0) throw std::runtime_error("initial periodic region is empty");

  const RasterImage blurred = gaussian_blur(img, kSegmentBlurSigma);
  TrainConfig tcfg = cfg;
  tcfg.lambda_c = 5.0;
  res.completion = complete(blurred, train_valid, tcfg);

  const RasterImage g_hat = to_grayscale(res.completion->output);
  const RasterImage g_in = to_grayscale(blurred);
  for (size_t i = 0; i < n; ++i) res.s1[i] = std::abs(g_hat.data[i] - g_in.data[i]);
  res.s2 = perceptual_map(first_scale(extract(res.completion->output)),
                          first_scale(extract(blurred)));

  size_t relabeled = 0, eligible = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!initial_nonperiodic.flags[i] || !observed.flags[i]) continue;
    ++eligible;
    if (res.s1[i] < eps1 && res.s2[i] < eps2) {
      res.periodic.flags[i] = 1;
      ++relabeled;
    }
  }
  res.relabeled_fraction = eligible == 0 ? 0.0 : double(relabeled) / double(eligible);
  return res;
}

Classification classify(const RasterImage& img, const KnownMask& observed, const TrainConfig& cfg,
                        double eps1, double eps2) {
  if (img.width != observed.width || img.height != observed.height)
    throw std::invalid_argument("classify: shape mismatch");
  const int bw = int(std::llround(0.7 * img.width));
  const int bh = int(std::llround(0.7 * img.height));
  KnownMask init(img.width, img.height, false);
  for (int y = img.height - bh; y < img.height; ++y)
    for (int x = img.width - bw; x < img.width; ++x)
      if (observed.at(x, y)) init.set(x, y, true);

  Classification out;
  out.segmentation = segment(img, observed, init, eps1, eps2, cfg);
  out.relabeled_fraction = out.segmentation.relabeled_fraction;
  out.npp = out.relabeled_fraction > 0.5;
  return out;
}

KnownMask detect_blur(const RasterImage& img, int window, std::optional<double> threshold) {
  if (window < 4) throw std::invalid_argument("blur window must be at least 4");
  const int w = img.width, h = img.height;
  const RasterImage gray = to_grayscale(img);
  std::vector<double> lap(img.pixels());
  auto g = [&](int x, int y) {
    return gray.data[size_t(std::clamp(y, 0, h - 1)) * w + size_t(std::clamp(x, 0, w - 1))];
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      lap[size_t(y) * w + x] = 4.0 * g(x, y) - g(x - 1, y) - g(x + 1, y) - g(x, y - 1) - g(x, y + 1);

  const int tx = (w + window - 1) / window, ty = (h + window - 1) / window;
  std::vector<double> var(size_t(tx) * ty, 0.0);
  for (int j = 0; j < ty; ++j)
    for (int i = 0; i < tx; ++i) {
      std::vector<double> vals;
      vals.reserve(size_t(window) * window);
      for (int y = j * window; y < std::min(h, (j + 1) * window); ++y)
        for (int x = i * window; x < std::min(w, (i + 1) * window); ++x)
          vals.push_back(lap[size_t(y) * w + x]);
      var[size_t(j) * tx + i] = tile_variance(vals, 0, vals.size());
    }

  double thr;
  if (threshold) {
    thr = *threshold;
  } else {
    std::vector<double> sorted = var;
    std::sort(sorted.begin(), sorted.end());
    thr = 0.25 * sorted[sorted.size() / 2];
  }

  KnownMask blur(w, h, false);
  for (int j = 0; j < ty; ++j)
    for (int i = 0; i < tx; ++i) {
      if (var[size_t(j) * tx + i] > thr) continue;
      for (int y = j * window; y < std::min(h, (j + 1) * window); ++y)
        for (int x = i * window; x < std::min(w, (i + 1) * window); ++x) blur.set(x, y, true);
    }
  return blur;
}

RasterImage remap_recover(const RasterImage& img, const KnownMask& blur, double sigma_weight,
                          TrainConfig cfg) {
  if (img.width != blur.width || img.height != blur.height)
    throw std::invalid_argument("remap: shape mismatch");
  if (blur.count() == img.pixels()) throw std::invalid_argument("everything is blurry");

  KnownMask clear(img.width, img.height, true);
  PixelDomain domain;
  domain.domain = KnownMask(img.width, img.height, true);
  domain.weights.assign(img.pixels(), 1.0);
  for (size_t i = 0; i < img.pixels(); ++i)
    if (blur.flags[i]) {
      clear.flags[i] = 0;
      domain.weights[i] = sigma_weight;
    }

  cfg.lambda_c = 10.0;
  return complete(img, clear, cfg, Variant::full, &domain).output;
}

RefineResult refine(const RasterImage& img, const KnownMask& valid, const TrainConfig& cfg) {
  const double unknown_ratio = 1.0 - double(valid.count()) / double(img.pixels());
  CompletionResult first = complete(img, valid, cfg);
  if (unknown_ratio <= 0.4) {
    RasterImage out = first.output;
    return RefineResult{std::move(out), false, false, std::move(first)};
  }

  RefineResult res{first.output, true, false, std::move(first)};
  try {
    KnownMask completed_valid(img.width, img.height, true);
    completed_valid.synthesized = true;
    RankingConfig rcfg = cfg.ranking;
    rcfg.pe_frequencies = cfg.pe_frequencies;
    rcfg.seed = hash_combine(hash_combine(cfg.seed, cfg.ranking.seed), 4);
    const ProposalSet second = search_periodicities(res.first.output, completed_valid, cfg.q_lo,
                                                    cfg.q_hi, cfg.pseudo_masks, cfg.top_k, rcfg);
    if (second.k_effective() == 0) return res;

    PeriodicityContext ctx;
    ctx.warps = augment(second, cfg.top_k, cfg.offsets);
    ctx.top1_pair = second.ranked.front().pair;
    ctx.top1 = second.ranked.front().periodicity;
    ctx.has_lattice = true;

    TrainConfig second_cfg = cfg;
    second_cfg.seed = cfg.seed + 1;
    const TrainResult tr = train_model(img, valid, ctx, second_cfg, Variant::full, nullptr);
    const RasterImage rendered =
        render_image(tr.model, tr.warps, tr.encoding, img.width, img.height);
    res.output = composite(img, rendered, valid);
    res.second_trained = true;
  } catch (const std::exception&) {
    // keep the first pass
  }
  return res;
}

}  // namespace npp
