#include "npp/proposal.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "npp/detect.hpp"
#include "npp/encode.hpp"
#include "npp/model.hpp"
#include "npp/rng.hpp"
#include "npp/train.hpp"

namespace npp {

namespace {

constexpr double kSideFactor = 5.0 / (6.0 * 1.4142135623730951);
constexpr double kMinSide = 8.0;
constexpr double kDupPeriod = 0.5;
constexpr double kDupAngle = 0.02;
// Ranking reuses the pixel-loss kernel at its training defaults.
constexpr double kRobustAlpha = 1.0;
constexpr double kRobustC = 0.03;

double gt_at(const RasterImage& img, int x, int y, int c) {
  return img.at(x, y, std::min(c, img.channels - 1));
}

// Real-box separation on either axis; sufficient for the integer rasters.
bool squares_disjoint(Vec2 ca, double sa, Vec2 cb, double sb) {
  const double reach = (sa + sb) / 2.0;
  return std::abs(ca.x - cb.x) > reach || std::abs(ca.y - cb.y) > reach;
}

bool vectors_near(const PeriodicityVector& a, const PeriodicityVector& b) {
  double da = std::abs(a.theta - b.theta);
  da = std::min(da, M_PI - da);
  return std::abs(a.period - b.period) < kDupPeriod && da < kDupAngle;
}

bool duplicate_periodicity(const Periodicity& a, const Periodicity& b) {
  return (vectors_near(a.p1, b.p1) && vectors_near(a.p2, b.p2)) ||
         (vectors_near(a.p1, b.p2) && vectors_near(a.p2, b.p1));
}

struct Detection {
  DisplacementPair pair;
  Periodicity periodicity;
  int q = 0;
};

// Bypass-mode MLP fit on the known-minus-pseudo pixels, scored by RMSE over
// the pseudo squares. Independent model and sampling stream per candidate.
double ranking_error(const RasterImage& img, const KnownMask& train_valid,
                     const KnownMask& pseudo, const Detection& det, const RankingConfig& cfg) {
  AugmentedWarpSet warps;
  warps.top1_group = {det.periodicity.p1, det.periodicity.p2};
  const EncodingConfig enc{cfg.pe_frequencies, img.width, img.height};

  ModelShape shape;
  shape.in_a = branch_a_width(warps, cfg.pe_frequencies);
  shape.in_b = 0;
  shape.width_a = cfg.width;
  shape.widths_b = {cfg.width, cfg.width, cfg.width / 2, 3};
  const uint64_t stream = hash_combine(cfg.seed, uint64_t(det.q));
  NppModel model(shape, hash_combine(stream, 1));
  Rng rng(hash_combine(stream, 2));
  AdamState adam = AdamState::for_model(model);
  AdamConfig acfg;
  acfg.learning_rate = cfg.learning_rate;

  std::vector<int> known;
  known.reserve(train_valid.count());
  for (int y = 0; y < train_valid.height; ++y)
    for (int x = 0; x < train_valid.width; ++x)
      if (train_valid.at(x, y)) known.push_back(y * train_valid.width + x);
  if (known.empty()) throw std::runtime_error("no known pixels left outside the pseudo masks");

  std::vector<Vec2> coords(size_t(cfg.batch));
  std::vector<int> picks(size_t(cfg.batch));
  Eigen::MatrixXd xa, xb, drgb(cfg.batch, 3);
  GradientTape tape;
  ParamSet grads = model.zero_like();
  const double inv_b = 1.0 / double(cfg.batch);

  for (int it = 0; it < cfg.iterations; ++it) {
    for (int i = 0; i < cfg.batch; ++i) {
      picks[size_t(i)] = known[rng.index(known.size())];
      coords[size_t(i)] =
          Vec2(double(picks[size_t(i)] % img.width), double(picks[size_t(i)] / img.width));
    }
    encode_batch(coords, warps, enc, xa, xb);
    const Eigen::MatrixXd pred = model.forward(xa, xb, &tape);
    for (int i = 0; i < cfg.batch; ++i) {
      const int px = picks[size_t(i)] % img.width, py = picks[size_t(i)] / img.width;
      for (int c = 0; c < 3; ++c) {
        const double e = pred(i, c) - gt_at(img, px, py, c);
        drgb(i, c) = robust_loss_derivative(e, kRobustAlpha, kRobustC) * inv_b;
      }
    }
    for (auto& g : grads) {
      g.w.setZero();
      g.b.setZero();
    }
    model.backward(tape, drgb, grads);
    adam_step(model, adam, grads, it, acfg);
  }

  std::vector<Vec2> eval;
  for (int y = 0; y < pseudo.height; ++y)
    for (int x = 0; x < pseudo.width; ++x)
      if (pseudo.at(x, y)) eval.push_back(Vec2(double(x), double(y)));
  if (eval.empty()) throw std::runtime_error("pseudo masks rasterized to nothing");

  double se = 0.0;
  const size_t chunk = 1024;
  for (size_t start = 0; start < eval.size(); start += chunk) {
    const size_t n = std::min(chunk, eval.size() - start);
    const std::vector<Vec2> part(eval.begin() + long(start), eval.begin() + long(start + n));
    encode_batch(part, warps, enc, xa, xb);
    const Eigen::MatrixXd pred = model.forward(xa, xb, nullptr);
    for (size_t i = 0; i < n; ++i) {
      const int px = int(part[i].x), py = int(part[i].y);
      for (int c = 0; c < 3; ++c) {
        const double e = pred(long(i), c) - gt_at(img, px, py, c);
        se += e * e;
      }
    }
  }
  return std::sqrt(se / (3.0 * double(eval.size())));
}

}  // namespace

KnownMask PseudoMaskPlan::rasterize(int width, int height) const {
  KnownMask out(width, height, false);
  for (const auto& sq : masks) {
    const double h = sq.side / 2.0;
    const int x0 = std::max(0, int(std::ceil(sq.center.x - h)));
    const int x1 = std::min(width - 1, int(std::floor(sq.center.x + h)));
    const int y0 = std::max(0, int(std::ceil(sq.center.y - h)));
    const int y1 = std::min(height - 1, int(std::floor(sq.center.y + h)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) out.set(x, y, true);
  }
  return out;
}

PseudoMaskPlan plan_pseudo_masks(const KnownMask& valid, int m) {
  if (m < 1) throw std::invalid_argument("need at least one pseudo mask");
  if (valid.count() == 0) throw std::invalid_argument("known region is empty");
  const std::vector<double> dist = distance_to_invalid(valid);

  PseudoMaskPlan plan;
  plan.requested = m;
  for (int pick = 0; pick < m; ++pick) {
    double best_l = 0.0;
    Vec2 best_c;
    bool found = false;
    for (int y = 0; y < valid.height; ++y) {
      for (int x = 0; x < valid.width; ++x) {
        const double l = dist[size_t(y) * valid.width + x];
        if (l <= 0.0 || (found && l <= best_l)) continue;
        const Vec2 c{double(x), double(y)};
        const double side = kSideFactor * l;
        bool ok = true;
        for (const auto& sq : plan.masks)
          if (!squares_disjoint(c, side, sq.center, sq.side)) {
            ok = false;
            break;
          }
        if (!ok) continue;
        best_l = l;
        best_c = c;
        found = true;
      }
    }
    const double side = kSideFactor * best_l;
    if (!found || side < kMinSide) {
      if (plan.masks.empty())
        throw std::runtime_error("known region too small to host a pseudo mask");
      break;
    }
    plan.masks.push_back({best_c, side});
  }
  return plan;
}

ProposalSet search_periodicities(const RasterImage& img, const KnownMask& valid, int q_lo, int q_hi,
                                 int m, int k, const RankingConfig& cfg) {
  if (q_lo < 1 || q_hi < q_lo) throw std::invalid_argument("bad q range");
  if (k < 1) throw std::invalid_argument("k must be >= 1");

  const FeatureMap feat = extract(img);
  const PseudoMaskPlan plan = plan_pseudo_masks(valid, m);
  const KnownMask pseudo = plan.rasterize(valid.width, valid.height);
  KnownMask train_valid = valid;
  for (int y = 0; y < valid.height; ++y)
    for (int x = 0; x < valid.width; ++x)
      if (pseudo.at(x, y)) train_valid.set(x, y, false);

  // Rings can be empty (consecutive q with the same integer box) or too
  // sparse to score; such levels contribute nothing instead of aborting the
  // whole search.
  std::vector<Detection> unique;
  for (int q = q_lo; q <= q_hi; ++q) {
    ScoredDisplacement sd;
    try {
      sd = detect(feat, valid, q);
    } catch (const std::runtime_error&) {
      continue;
    }
    Detection det{sd.pair, to_periodicity_vectors(sd.pair), q};
    bool dup = false;
    for (const auto& u : unique)
      if (duplicate_periodicity(det.periodicity, u.periodicity)) {
        dup = true;
        break;
      }
    if (!dup) unique.push_back(std::move(det));
  }
  if (unique.empty()) throw std::runtime_error("no usable displacement level in the q range");

  ProposalSet out;
  out.k = k;
  out.offsets = default_offsets();
  out.ranked.reserve(unique.size());
  for (const auto& det : unique)
    out.ranked.push_back(
        {det.pair, det.periodicity, ranking_error(img, train_valid, pseudo, det, cfg), det.q});
  std::sort(out.ranked.begin(), out.ranked.end(), [](const auto& a, const auto& b) {
    return a.error != b.error ? a.error < b.error : a.q < b.q;
  });
  return out;
}

AugmentedWarpSet augment(const ProposalSet& proposals, int k, const std::vector<double>& offsets) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (offsets.empty()) throw std::invalid_argument("offsets must be non-empty");
  if (proposals.ranked.empty()) throw std::invalid_argument("no candidates to augment");
  AugmentedWarpSet out;
  const int keff = int(std::min(size_t(k), proposals.ranked.size()));
  for (int i = 0; i < keff; ++i) {
    const Periodicity& per = proposals.ranked[size_t(i)].periodicity;
    for (const PeriodicityVector* v : {&per.p1, &per.p2}) {
      for (double delta : offsets) {
        PeriodicityVector w;
        w.period = std::max(v->period + delta, 0.1);
        w.theta = v->theta;
        (i == 0 ? out.top1_group : out.rest_group).push_back(w);
      }
    }
  }
  return out;
}

}  // namespace npp
