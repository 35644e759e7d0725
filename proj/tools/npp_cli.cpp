// npp: one binary for the whole pipeline. Every subcommand writes a manifest
// JSON naming its inputs (content-hashed), config hash, seed and metrics, so
// any output can be traced back to an exact invocation.

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "npp/bench.hpp"
#include "npp/detect.hpp"
#include "npp/proposal.hpp"
#include "npp/raster.hpp"
#include "npp/tasks.hpp"
#include "npp/train.hpp"

using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

uint64_t fnv1a(const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 1469598103934665603ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  return hex64(fnv1a(bytes.data(), bytes.size()));
}

// NaN becomes null, infinities become strings; JSON has no spelling for them.
json jnum(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

json to_json(const npp::TrainConfig& c) {
  return json{{"lambda1", c.lambda1},
              {"lambda2", c.lambda2},
              {"lambda_p", c.lambda_p},
              {"lambda_c", c.lambda_c},
              {"pixel_batch", c.pixel_batch},
              {"patch_batch", c.patch_batch},
              {"n_nearest", c.n_nearest},
              {"patch_sizes", c.patch_sizes},
              {"known_area_threshold", c.known_area_threshold},
              {"shift_window", c.shift_window},
              {"robust_alpha", c.robust_alpha},
              {"robust_c", c.robust_c},
              {"epochs", c.epochs},
              {"seed", c.seed},
              {"learning_rate", c.learning_rate},
              {"decay_every", c.decay_every},
              {"decay_factor", c.decay_factor},
              {"patch_shrink_every", c.patch_shrink_every},
              {"patch_every", c.patch_every},
              {"width", c.width},
              {"pe_frequencies", c.pe_frequencies},
              {"snake_a", c.snake_a},
              {"top_k", c.top_k},
              {"offsets", c.offsets},
              {"q_lo", c.q_lo},
              {"q_hi", c.q_hi},
              {"pseudo_masks", c.pseudo_masks},
              {"ranking",
               {{"width", c.ranking.width},
                {"iterations", c.ranking.iterations},
                {"batch", c.ranking.batch},
                {"pe_frequencies", c.ranking.pe_frequencies},
                {"learning_rate", c.ranking.learning_rate},
                {"seed", c.ranking.seed}}},
              {"chunk", c.chunk}};
}

npp::TrainConfig config_from_json(const json& j) {
  npp::TrainConfig c;
  c.lambda1 = j.value("lambda1", c.lambda1);
  c.lambda2 = j.value("lambda2", c.lambda2);
  c.lambda_p = j.value("lambda_p", c.lambda_p);
  c.lambda_c = j.value("lambda_c", c.lambda_c);
  c.pixel_batch = j.value("pixel_batch", c.pixel_batch);
  c.patch_batch = j.value("patch_batch", c.patch_batch);
  c.n_nearest = j.value("n_nearest", c.n_nearest);
  c.patch_sizes = j.value("patch_sizes", c.patch_sizes);
  c.known_area_threshold = j.value("known_area_threshold", c.known_area_threshold);
  c.shift_window = j.value("shift_window", c.shift_window);
  c.robust_alpha = j.value("robust_alpha", c.robust_alpha);
  c.robust_c = j.value("robust_c", c.robust_c);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.decay_every = j.value("decay_every", c.decay_every);
  c.decay_factor = j.value("decay_factor", c.decay_factor);
  c.patch_shrink_every = j.value("patch_shrink_every", c.patch_shrink_every);
  c.patch_every = j.value("patch_every", c.patch_every);
  c.width = j.value("width", c.width);
  c.pe_frequencies = j.value("pe_frequencies", c.pe_frequencies);
  c.snake_a = j.value("snake_a", c.snake_a);
  c.top_k = j.value("top_k", c.top_k);
  c.offsets = j.value("offsets", c.offsets);
  c.q_lo = j.value("q_lo", c.q_lo);
  c.q_hi = j.value("q_hi", c.q_hi);
  c.pseudo_masks = j.value("pseudo_masks", c.pseudo_masks);
  if (j.contains("ranking")) {
    const json& r = j.at("ranking");
    c.ranking.width = r.value("width", c.ranking.width);
    c.ranking.iterations = r.value("iterations", c.ranking.iterations);
    c.ranking.batch = r.value("batch", c.ranking.batch);
    c.ranking.pe_frequencies = r.value("pe_frequencies", c.ranking.pe_frequencies);
    c.ranking.learning_rate = r.value("learning_rate", c.ranking.learning_rate);
    c.ranking.seed = r.value("seed", c.ranking.seed);
  }
  c.chunk = j.value("chunk", c.chunk);
  return c;
}

// Shared per-subcommand knobs. seed/epochs/width override the config file.
struct CommonOpts {
  std::string config_path;
  std::string manifest_path;
  long long seed = -1;
  int epochs = -1;
  int width = -1;
  int threads = 0;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_train = true) {
  cmd->add_option("--manifest", o.manifest_path, "manifest path (default: <out>.manifest.json)");
  cmd->add_option("--threads", o.threads, "worker threads (this build clamps to 1)");
  cmd->add_flag("--deterministic", o.deterministic, "ordered reductions (always on here)");
  if (with_train) {
    cmd->add_option("--config", o.config_path, "training config JSON");
    cmd->add_option("--seed", o.seed, "seed override");
    cmd->add_option("--epochs", o.epochs, "epoch override");
    cmd->add_option("--width", o.width, "model width override");
  }
}

npp::TrainConfig resolve_config(const CommonOpts& o) {
  npp::TrainConfig cfg;
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw std::runtime_error("cannot read " + o.config_path);
    json j;
    in >> j;
    cfg = config_from_json(j);
  }
  if (o.seed >= 0) cfg.seed = uint64_t(o.seed);
  if (o.epochs >= 0) cfg.epochs = o.epochs;
  if (o.width > 0) cfg.width = o.width;
  return cfg;
}

int effective_threads(const CommonOpts& o) {
  int t = o.threads;
  if (t <= 0)
    if (const char* env = std::getenv("NPP_THREADS")) t = std::atoi(env);
  return t < 1 ? 1 : 1;  // single-threaded build; the knob is recorded, not obeyed
}

void write_manifest(const std::string& command, const CommonOpts& o, const json& config,
                    uint64_t seed, const std::vector<std::pair<std::string, std::string>>& inputs,
                    const json& outputs, const json& metrics, const std::string& primary_out) {
  std::string path = o.manifest_path;
  if (path.empty()) path = (primary_out.empty() ? std::string("manifest") : primary_out) + ".manifest.json";
  json in = json::object();
  for (const auto& [role, p] : inputs) in[role] = json{{"path", p}, {"hash", file_hash(p)}};
  const std::string cfg_text = config.dump();
  json j{{"schema", 1},
         {"version", kVersion},
         {"command", command},
         {"seed", seed},
         {"deterministic", true},
         {"threads", effective_threads(o)},
         {"config", config},
         {"config_hash", hex64(fnv1a(cfg_text.data(), cfg_text.size()))},
         {"inputs", in},
         {"outputs", outputs},
         {"metrics", metrics}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

void emit_json(const json& j, const std::string& path) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

npp::KnownMask mask_or_full(const std::string& path, int w, int h) {
  if (path.empty()) return npp::KnownMask(w, h, true);
  npp::KnownMask m = npp::load_mask(path);
  if (m.width != w || m.height != h) throw std::runtime_error("mask does not match image size");
  return m;
}

json pair_json(const npp::DisplacementPair& d) {
  return json{{"d1", {d.d1.x, d.d1.y}}, {"d2", {d.d2.x, d.d2.y}}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"near-periodic pattern toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);

  // detect
  struct {
    CommonOpts common;
    std::string image, mask, out;
    int q = 1;
  } det;
  auto* cmd_detect = app.add_subcommand("detect", "displacement search at one coarseness level");
  cmd_detect->add_option("--image", det.image, "input image")->required();
  cmd_detect->add_option("--mask", det.mask, "known-pixel mask (PGM, >=128 known)");
  cmd_detect->add_option("--q", det.q, "coarseness level");
  cmd_detect->add_option("--out", det.out, "result JSON (default stdout)");
  add_common(cmd_detect, det.common, false);
  cmd_detect->callback([&] {
    const npp::RasterImage img = npp::load_image(det.image);
    const npp::KnownMask valid = mask_or_full(det.mask, img.width, img.height);
    const npp::ScoredDisplacement best = npp::detect(img, valid, det.q);
    json r = pair_json(best.pair);
    r["score"] = best.score;
    r["q"] = det.q;
    emit_json(r, det.out);
    std::vector<std::pair<std::string, std::string>> inputs{{"image", det.image}};
    if (!det.mask.empty()) inputs.emplace_back("mask", det.mask);
    write_manifest("detect", det.common, json{{"q", det.q}}, 0, inputs,
                   det.out.empty() ? json::object() : json{{"result", det.out}}, r, det.out);
  });

  // propose
  struct {
    CommonOpts common;
    std::string image, mask, out;
  } prop;
  auto* cmd_propose = app.add_subcommand("propose", "ranked periodicity proposals");
  cmd_propose->add_option("--image", prop.image, "input image")->required();
  cmd_propose->add_option("--mask", prop.mask, "known-pixel mask");
  cmd_propose->add_option("--out", prop.out, "proposals JSON (default stdout)");
  add_common(cmd_propose, prop.common);
  cmd_propose->callback([&] {
    const npp::TrainConfig cfg = resolve_config(prop.common);
    const npp::RasterImage img = npp::load_image(prop.image);
    const npp::KnownMask valid = mask_or_full(prop.mask, img.width, img.height);
    npp::RankingConfig rcfg = cfg.ranking;
    rcfg.pe_frequencies = cfg.pe_frequencies;
    rcfg.seed = npp::hash_combine(cfg.seed, cfg.ranking.seed);
    const npp::ProposalSet set = npp::search_periodicities(img, valid, cfg.q_lo, cfg.q_hi,
                                                           cfg.pseudo_masks, cfg.top_k, rcfg);
    json arr = json::array();
    for (const auto& r : set.ranked) {
      json e = pair_json(r.pair);
      e["period1"] = r.periodicity.p1.period;
      e["theta1"] = r.periodicity.p1.theta;
      e["period2"] = r.periodicity.p2.period;
      e["theta2"] = r.periodicity.p2.theta;
      e["error"] = r.error;
      e["q"] = r.q;
      arr.push_back(e);
    }
    json out{{"schema", 1}, {"k_effective", set.k_effective()}, {"proposals", arr}};
    emit_json(out, prop.out);
    std::vector<std::pair<std::string, std::string>> inputs{{"image", prop.image}};
    if (!prop.mask.empty()) inputs.emplace_back("mask", prop.mask);
    write_manifest("propose", prop.common, to_json(cfg), cfg.seed, inputs,
                   prop.out.empty() ? json::object() : json{{"proposals", prop.out}},
                   json{{"k_effective", set.k_effective()}}, prop.out);
  });

  // complete
  struct {
    CommonOpts common;
    std::string image, mask, out, model_out, ablation = "none";
    bool refine = false;
  } comp;
  auto* cmd_complete = app.add_subcommand("complete", "train and fill the unknown region");
  cmd_complete->add_option("--image", comp.image, "input image")->required();
  cmd_complete->add_option("--mask", comp.mask, "known-pixel mask")->required();
  cmd_complete->add_option("--out", comp.out, "completed image")->required();
  cmd_complete->add_option("--model-out", comp.model_out, "save trained weights");
  auto* abl = cmd_complete->add_option("--ablation", comp.ablation, "variant")
                  ->check(CLI::IsMember({"none", "no-periodicity", "pixel-only", "patch-only",
                                         "pixel-random"}));
  auto* ref = cmd_complete->add_flag("--refine", comp.refine, "two-pass periodicity refinement");
  ref->excludes(abl);
  add_common(cmd_complete, comp.common);
  cmd_complete->callback([&] {
    const npp::TrainConfig cfg = resolve_config(comp.common);
    const npp::RasterImage img = npp::load_image(comp.image);
    const npp::KnownMask valid = mask_or_full(comp.mask, img.width, img.height);
    npp::Variant variant = npp::Variant::full;
    if (comp.ablation == "no-periodicity") variant = npp::Variant::no_periodicity;
    if (comp.ablation == "pixel-only") variant = npp::Variant::pixel_only;
    if (comp.ablation == "patch-only") variant = npp::Variant::patch_only;
    if (comp.ablation == "pixel-random") variant = npp::Variant::pixel_random;

    json metrics;
    const npp::CompletionResult* final_cc = nullptr;
    npp::CompletionResult cc;
    npp::RefineResult rr;
    if (comp.refine) {
      rr = npp::refine(img, valid, cfg);
      npp::save_image(rr.output, comp.out);
      metrics["refined"] = rr.refined;
      metrics["second_trained"] = rr.second_trained;
      final_cc = &rr.first;
    } else {
      cc = npp::complete(img, valid, cfg, variant);
      npp::save_image(cc.output, comp.out);
      final_cc = &cc;
    }
    metrics["fallback"] = final_cc->fallback;
    metrics["k_effective"] = final_cc->proposals.k_effective();
    if (final_cc->trained) {
      double last = std::numeric_limits<double>::quiet_NaN();
      for (double v : final_cc->trained->loss_history)
        if (!std::isnan(v)) last = v;
      metrics["final_loss"] = jnum(last);
      if (!comp.model_out.empty()) final_cc->trained->model.save(comp.model_out);
    }
    json outs{{"image", comp.out}};
    if (!comp.model_out.empty() && final_cc->trained) outs["model"] = comp.model_out;
    write_manifest("complete", comp.common, to_json(cfg), cfg.seed,
                   {{"image", comp.image}, {"mask", comp.mask}}, outs, metrics, comp.out);
  });

  // segment
  struct {
    CommonOpts common;
    std::string image, mask, init, labels_out, json_out;
    double eps1 = 0.15, eps2 = 0.3;
  } seg;
  auto* cmd_segment = app.add_subcommand("segment", "periodic / non-periodic labeling");
  cmd_segment->add_option("--image", seg.image, "input image")->required();
  cmd_segment->add_option("--mask", seg.mask, "observed-pixel mask");
  cmd_segment->add_option("--init", seg.init, "initial non-periodic mask (PGM, >=128 non-periodic)");
  cmd_segment->add_option("--labels-out", seg.labels_out, "label PGM: 255 periodic, 0 non-periodic");
  cmd_segment->add_option("--json", seg.json_out, "summary JSON (default stdout)");
  cmd_segment->add_option("--eps1", seg.eps1, "grayscale error threshold");
  cmd_segment->add_option("--eps2", seg.eps2, "perceptual error threshold");
  add_common(cmd_segment, seg.common);
  cmd_segment->callback([&] {
    const npp::TrainConfig cfg = resolve_config(seg.common);
    const npp::RasterImage img = npp::load_image(seg.image);
    const npp::KnownMask observed = mask_or_full(seg.mask, img.width, img.height);
    npp::KnownMask init = seg.init.empty() ? npp::auto_initial_nonperiodic(img, cfg.seed)
                                           : npp::load_mask(seg.init);
    if (init.width != img.width || init.height != img.height)
      throw std::runtime_error("init mask does not match image size");
    const npp::SegmentationResult res =
        npp::segment(img, observed, init, seg.eps1, seg.eps2, cfg);
    if (!seg.labels_out.empty()) npp::save_mask(res.periodic, seg.labels_out);
    json summary{{"schema", 1},
                 {"relabeled_fraction", res.relabeled_fraction},
                 {"decision", res.relabeled_fraction > 0.5 ? "npp" : "not-npp"}};
    emit_json(summary, seg.json_out);
    std::vector<std::pair<std::string, std::string>> inputs{{"image", seg.image}};
    if (!seg.mask.empty()) inputs.emplace_back("mask", seg.mask);
    if (!seg.init.empty()) inputs.emplace_back("init", seg.init);
    json outs = json::object();
    if (!seg.labels_out.empty()) outs["labels"] = seg.labels_out;
    if (!seg.json_out.empty()) outs["summary"] = seg.json_out;
    write_manifest("segment", seg.common, to_json(cfg), cfg.seed, inputs, outs, summary,
                   seg.labels_out.empty() ? seg.json_out : seg.labels_out);
  });

  // classify
  struct {
    CommonOpts common;
    std::string image, mask, json_out;
    double eps1 = 0.15, eps2 = 0.3;
  } cls;
  auto* cmd_classify = app.add_subcommand("classify", "NPP / non-NPP decision");
  cmd_classify->add_option("--image", cls.image, "input image")->required();
  cmd_classify->add_option("--mask", cls.mask, "observed-pixel mask");
  cmd_classify->add_option("--json", cls.json_out, "result JSON (default stdout)");
  cmd_classify->add_option("--eps1", cls.eps1, "grayscale error threshold");
  cmd_classify->add_option("--eps2", cls.eps2, "perceptual error threshold");
  add_common(cmd_classify, cls.common);
  cmd_classify->callback([&] {
    const npp::TrainConfig cfg = resolve_config(cls.common);
    const npp::RasterImage img = npp::load_image(cls.image);
    const npp::KnownMask observed = mask_or_full(cls.mask, img.width, img.height);
    const npp::Classification res = npp::classify(img, observed, cfg, cls.eps1, cls.eps2);
    json r{{"schema", 1}, {"npp", res.npp}, {"relabeled_fraction", res.relabeled_fraction}};
    emit_json(r, cls.json_out);
    std::vector<std::pair<std::string, std::string>> inputs{{"image", cls.image}};
    if (!cls.mask.empty()) inputs.emplace_back("mask", cls.mask);
    write_manifest("classify", cls.common, to_json(cfg), cfg.seed, inputs,
                   cls.json_out.empty() ? json::object() : json{{"result", cls.json_out}}, r,
                   cls.json_out);
  });

  // remap
  struct {
    CommonOpts common;
    std::string image, blur_mask, out, blur_out;
    int window = 16;
    double sigma_weight = 0.3;
    double threshold = -1.0;
  } rem;
  auto* cmd_remap = app.add_subcommand("remap", "re-synthesize blurry regions");
  cmd_remap->add_option("--image", rem.image, "input image")->required();
  cmd_remap->add_option("--out", rem.out, "recovered image")->required();
  cmd_remap->add_option("--blur-mask", rem.blur_mask, "blurry-pixel mask (skips detection)");
  cmd_remap->add_option("--blur-out", rem.blur_out, "save the blur mask used");
  cmd_remap->add_option("--window", rem.window, "blur detector tile size");
  cmd_remap->add_option("--threshold", rem.threshold, "variance threshold (default: median/4)");
  cmd_remap->add_option("--sigma-weight", rem.sigma_weight, "pixel-loss weight on blurry pixels");
  add_common(cmd_remap, rem.common);
  cmd_remap->callback([&] {
    const npp::TrainConfig cfg = resolve_config(rem.common);
    const npp::RasterImage img = npp::load_image(rem.image);
    npp::KnownMask blur = rem.blur_mask.empty()
                              ? npp::detect_blur(img, rem.window,
                                                 rem.threshold < 0
                                                     ? std::nullopt
                                                     : std::optional<double>(rem.threshold))
                              : npp::load_mask(rem.blur_mask);
    if (blur.width != img.width || blur.height != img.height)
      throw std::runtime_error("blur mask does not match image size");
    if (!rem.blur_out.empty()) npp::save_mask(blur, rem.blur_out);
    const npp::RasterImage out = npp::remap_recover(img, blur, rem.sigma_weight, cfg);
    npp::save_image(out, rem.out);
    json metrics{{"blur_fraction", double(blur.count()) / double(img.pixels())}};
    std::vector<std::pair<std::string, std::string>> inputs{{"image", rem.image}};
    if (!rem.blur_mask.empty()) inputs.emplace_back("blur_mask", rem.blur_mask);
    json outs{{"image", rem.out}};
    if (!rem.blur_out.empty()) outs["blur_mask"] = rem.blur_out;
    write_manifest("remap", rem.common, to_json(cfg), cfg.seed, inputs, outs, metrics, rem.out);
  });

  // synth
  struct {
    CommonOpts common;
    std::string motif = "checker", occluder = "none", out, nonperiodic_out;
    int d1x = 16, d1y = 0, d2x = 0, d2y = 16, width = 128, height = 128;
    double ramp = 0.0, jitter = 0.0, ox = 0.5, oy = 0.5, osize = 0.25;
    long long seed = 1;
  } sy;
  auto* cmd_synth = app.add_subcommand("synth", "procedural near-periodic test image");
  cmd_synth->add_option("--motif", sy.motif, "checker | blobs | brick | stripes")
      ->check(CLI::IsMember({"checker", "blobs", "brick", "stripes"}));
  cmd_synth->add_option("--d1x", sy.d1x);
  cmd_synth->add_option("--d1y", sy.d1y);
  cmd_synth->add_option("--d2x", sy.d2x);
  cmd_synth->add_option("--d2y", sy.d2y);
  cmd_synth->add_option("--width", sy.width);
  cmd_synth->add_option("--height", sy.height);
  cmd_synth->add_option("--ramp", sy.ramp, "illumination ramp amplitude");
  cmd_synth->add_option("--jitter", sy.jitter, "per-tile brightness sigma");
  cmd_synth->add_option("--occluder", sy.occluder, "none | rect | disk")
      ->check(CLI::IsMember({"none", "rect", "disk"}));
  cmd_synth->add_option("--ox", sy.ox, "occluder center x fraction");
  cmd_synth->add_option("--oy", sy.oy, "occluder center y fraction");
  cmd_synth->add_option("--osize", sy.osize, "occluder size fraction");
  cmd_synth->add_option("--seed", sy.seed);
  cmd_synth->add_option("--out", sy.out, "output image")->required();
  cmd_synth->add_option("--nonperiodic-out", sy.nonperiodic_out, "occluder mask PGM");
  add_common(cmd_synth, sy.common, false);
  cmd_synth->callback([&] {
    npp::SynthSpec spec;
    if (sy.motif == "blobs") spec.motif = npp::Motif::blobs;
    if (sy.motif == "brick") spec.motif = npp::Motif::brick;
    if (sy.motif == "stripes") spec.motif = npp::Motif::stripes;
    if (sy.occluder == "rect") spec.occluder = npp::Occluder::rect;
    if (sy.occluder == "disk") spec.occluder = npp::Occluder::disk;
    spec.pair = {npp::Vec2(sy.d1x, sy.d1y), npp::Vec2(sy.d2x, sy.d2y)};
    spec.ramp = sy.ramp;
    spec.jitter = sy.jitter;
    spec.occluder_cx = sy.ox;
    spec.occluder_cy = sy.oy;
    spec.occluder_size = sy.osize;
    spec.seed = uint64_t(sy.seed);
    spec.width = sy.width;
    spec.height = sy.height;
    const npp::SynthResult res = npp::synth(spec);
    npp::save_image(res.image, sy.out);
    if (!sy.nonperiodic_out.empty()) npp::save_mask(res.non_periodic, sy.nonperiodic_out);
    json cfg{{"motif", sy.motif},   {"d1", {sy.d1x, sy.d1y}}, {"d2", {sy.d2x, sy.d2y}},
             {"ramp", sy.ramp},     {"jitter", sy.jitter},    {"occluder", sy.occluder},
             {"ox", sy.ox},         {"oy", sy.oy},            {"osize", sy.osize},
             {"width", sy.width},   {"height", sy.height},    {"seed", sy.seed}};
    json outs{{"image", sy.out}};
    if (!sy.nonperiodic_out.empty()) outs["non_periodic"] = sy.nonperiodic_out;
    write_manifest("synth", sy.common, cfg, spec.seed, {}, outs, pair_json(res.pair), sy.out);
  });

  // eval
  struct {
    CommonOpts common;
    std::string pred, truth, mask, out;
  } ev;
  auto* cmd_eval = app.add_subcommand("eval", "RMSE / PSNR / SSIM report");
  cmd_eval->add_option("--pred", ev.pred, "predicted image")->required();
  cmd_eval->add_option("--truth", ev.truth, "reference image")->required();
  cmd_eval->add_option("--mask", ev.mask, "known mask; its complement is the unknown region");
  cmd_eval->add_option("--out", ev.out, "report JSON (default stdout)");
  add_common(cmd_eval, ev.common, false);
  cmd_eval->callback([&] {
    const npp::RasterImage pred = npp::load_image(ev.pred);
    const npp::RasterImage truth = npp::load_image(ev.truth);
    npp::KnownMask unknown(pred.width, pred.height, false);
    if (!ev.mask.empty()) {
      const npp::KnownMask known = npp::load_mask(ev.mask);
      if (known.width != pred.width || known.height != pred.height)
        throw std::runtime_error("mask does not match image size");
      for (size_t i = 0; i < unknown.flags.size(); ++i) unknown.flags[i] = known.flags[i] ? 0 : 1;
    }
    const npp::EvalReport rep = npp::evaluate(pred, truth, unknown);
    auto region = [](const npp::RegionMetrics& m) {
      return json{{"rmse", jnum(m.rmse)}, {"psnr", jnum(m.psnr)}, {"ssim", jnum(m.ssim)}};
    };
    json r{{"schema", 1}, {"full", region(rep.full)}, {"unknown", region(rep.unknown)}};
    emit_json(r, ev.out);
    std::vector<std::pair<std::string, std::string>> inputs{{"pred", ev.pred},
                                                            {"truth", ev.truth}};
    if (!ev.mask.empty()) inputs.emplace_back("mask", ev.mask);
    write_manifest("eval", ev.common, json::object(), 0, inputs,
                   ev.out.empty() ? json::object() : json{{"report", ev.out}}, r, ev.out);
  });

  // make-mask
  struct {
    CommonOpts common;
    std::string protocol = "center", out;
    int width = 128, height = 128;
    double frac = 0.5;
    long long seed = 1;
  } mk;
  auto* cmd_mask = app.add_subcommand("make-mask", "unknown-region protocols");
  cmd_mask->add_option("--protocol", mk.protocol, "nrtdb | dtd | facade | center")
      ->check(CLI::IsMember({"nrtdb", "dtd", "facade", "center"}));
  cmd_mask->add_option("--width", mk.width);
  cmd_mask->add_option("--height", mk.height);
  cmd_mask->add_option("--frac", mk.frac, "center protocol box fraction");
  cmd_mask->add_option("--seed", mk.seed);
  cmd_mask->add_option("--out", mk.out, "known-pixel mask PGM")->required();
  add_common(cmd_mask, mk.common, false);
  cmd_mask->callback([&] {
    npp::MaskProtocol p = npp::MaskProtocol::center;
    if (mk.protocol == "nrtdb") p = npp::MaskProtocol::nrtdb;
    if (mk.protocol == "dtd") p = npp::MaskProtocol::dtd;
    if (mk.protocol == "facade") p = npp::MaskProtocol::facade;
    const npp::KnownMask mask = npp::make_mask(p, mk.width, mk.height, uint64_t(mk.seed), mk.frac);
    npp::save_mask(mask, mk.out);
    json cfg{{"protocol", mk.protocol}, {"width", mk.width},  {"height", mk.height},
             {"frac", mk.frac},         {"seed", mk.seed}};
    json metrics{{"known_fraction", double(mask.count()) / (double(mk.width) * mk.height)}};
    write_manifest("make-mask", mk.common, cfg, uint64_t(mk.seed), {}, json{{"mask", mk.out}},
                   metrics, mk.out);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
