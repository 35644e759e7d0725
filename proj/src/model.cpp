#include "npp/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "npp/rng.hpp"

namespace npp {

namespace {

// Training allocates multi-megabyte activation matrices every step; glibc's
// adaptive mmap/trim heuristics hand those pages back to the kernel on each
// free, so page faults dominate sys time unless the thresholds are pinned.
void tune_allocator() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

double snake(double x, double a) {
  const double s = std::sin(a * x);
  return x + s * s / a;
}

double snake_derivative(double x, double a) { return 1.0 + std::sin(2.0 * a * x); }

namespace {

Eigen::MatrixXd snake_mat(const Eigen::MatrixXd& z, double a) {
  return z.unaryExpr([a](double v) { return snake(v, a); });
}

// Activation and derivative from one sin/cos evaluation per element;
// sin(2az) = 2 sin(az) cos(az).
void snake_both(const Eigen::MatrixXd& z, double a, Eigen::MatrixXd& act, Eigen::MatrixXd& deriv) {
  act.resize(z.rows(), z.cols());
  deriv.resize(z.rows(), z.cols());
  const double* pz = z.data();
  double* pa = act.data();
  double* pd = deriv.data();
  const long n = long(z.size());
  for (long i = 0; i < n; ++i) {
    const double s = std::sin(a * pz[i]);
    const double c = std::cos(a * pz[i]);
    pa[i] = pz[i] + s * s / a;
    pd[i] = 1.0 + 2.0 * s * c;
  }
}

Eigen::MatrixXd logistic_mat(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

Eigen::MatrixXd affine(const Eigen::MatrixXd& x, const Layer& l) {
  Eigen::MatrixXd z = x * l.w;
  z.rowwise() += l.b.transpose();
  return z;
}

Eigen::MatrixXd concat_cols(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a;
  out.rightCols(b.cols()) = b;
  return out;
}

void accumulate(Layer& g, const Eigen::MatrixXd& input, const Eigen::MatrixXd& dz) {
  g.w.noalias() += input.transpose() * dz;
  g.b.noalias() += dz.colwise().sum().transpose();
}

constexpr char kMagic[4] = {'N', 'P', 'P', 'M'};
constexpr uint32_t kVersion = 1;

}  // namespace

NppModel::NppModel(const ModelShape& shape, uint64_t seed) : shape_(shape) {
  if (shape.in_a <= 0) throw std::invalid_argument("branch A input width must be positive");
  tune_allocator();
  const int wa = shape.width_a;
  const auto& wb = shape.widths_b;
  std::vector<std::pair<int, int>> dims;
  dims.reserve(kLayerCount);
  dims.emplace_back(shape.in_a, wa);
  for (int i = 1; i < 9; ++i) dims.emplace_back(i == 4 ? wa + shape.in_a : wa, wa);
  dims.emplace_back(wa + shape.in_b, wb[0]);
  dims.emplace_back(wb[0] + wa, wb[1]);
  dims.emplace_back(wb[1], wb[2]);
  dims.emplace_back(wb[2], wb[3]);
  dims.emplace_back(wa, 3);  // bypass head

  Rng rng(seed);
  params_.reserve(dims.size());
  for (auto [fi, fo] : dims) {
    Layer l;
    l.w.resize(fi, fo);
    l.b = Eigen::VectorXd::Zero(fo);
    const double lim = std::sqrt(6.0 / double(fi + fo));
    for (long r = 0; r < l.w.rows(); ++r)
      for (long c = 0; c < l.w.cols(); ++c) l.w(r, c) = rng.uniform(-lim, lim);
    params_.push_back(std::move(l));
  }
}

ParamSet NppModel::zero_like() const {
  ParamSet out;
  out.reserve(params_.size());
  for (const auto& l : params_) {
    Layer z;
    z.w = Eigen::MatrixXd::Zero(l.w.rows(), l.w.cols());
    z.b = Eigen::VectorXd::Zero(l.b.size());
    out.push_back(std::move(z));
  }
  return out;
}

Eigen::MatrixXd NppModel::forward(const Eigen::MatrixXd& xa, const Eigen::MatrixXd& xb,
                                  GradientTape* tape) const {
  if (xa.cols() != shape_.in_a) throw std::invalid_argument("branch A input layout mismatch");
  const bool two_branch = shape_.in_b > 0;
  if (two_branch && xb.cols() != shape_.in_b)
    throw std::invalid_argument("branch B input layout mismatch");
  const double a = shape_.snake_a;

  if (tape) {
    tape->xa = xa;
    tape->xb = two_branch ? xb : Eigen::MatrixXd();
    tape->za.clear();
    tape->zb.clear();
  }

  Eigen::MatrixXd act;
  for (int i = 0; i < 9; ++i) {
    const Eigen::MatrixXd& input = i == 0 ? xa : act;
    Eigen::MatrixXd z = i == 4 ? affine(concat_cols(act, xa), params_[4]) : affine(input, params_[size_t(i)]);
    if (tape) tape->za.push_back(z);
    act = snake_mat(z, a);
  }

  if (!two_branch) {
    Eigen::MatrixXd z = affine(act, params_[kHeadIndex]);
    if (tape) tape->zhead = z;
    return logistic_mat(z);
  }

  Eigen::MatrixXd z0 = affine(concat_cols(act, xb), params_[9]);
  Eigen::MatrixXd act0 = snake_mat(z0, a);
  Eigen::MatrixXd z1 = affine(concat_cols(act0, act), params_[10]);
  Eigen::MatrixXd act1 = snake_mat(z1, a);
  Eigen::MatrixXd z2 = affine(act1, params_[11]);
  Eigen::MatrixXd act2 = snake_mat(z2, a);
  Eigen::MatrixXd z3 = affine(act2, params_[12]);
  if (tape) {
    tape->zb.push_back(std::move(z0));
    tape->zb.push_back(std::move(z1));
    tape->zb.push_back(std::move(z2));
    tape->zb.push_back(z3);
  }
  return logistic_mat(z3);
}

void NppModel::backward(const GradientTape& tape, const Eigen::MatrixXd& drgb,
                        ParamSet& grads) const {
  if (grads.size() != params_.size()) throw std::invalid_argument("gradient container mismatch");
  const bool two_branch = shape_.in_b > 0;
  const double a = shape_.snake_a;
  if (tape.za.size() != 9 || (two_branch && tape.zb.size() != 4))
    throw std::invalid_argument("stale or mismatched tape");

  // Branch-A activations get recomputed from the cached pre-activations.
  std::vector<Eigen::MatrixXd> act_a(9), der_a(9);
  for (int i = 0; i < 9; ++i) snake_both(tape.za[size_t(i)], a, act_a[size_t(i)], der_a[size_t(i)]);
  const Eigen::MatrixXd& a_out = act_a[8];

  Eigen::MatrixXd d_aout;
  if (!two_branch) {
    const Eigen::MatrixXd y = logistic_mat(tape.zhead);
    const Eigen::MatrixXd dz = (drgb.array() * (y.array() * (1.0 - y.array()))).matrix();
    accumulate(grads[kHeadIndex], a_out, dz);
    d_aout = dz * params_[kHeadIndex].w.transpose();
  } else {
    Eigen::MatrixXd act_b[3], der_b[3];
    for (int i = 0; i < 3; ++i) snake_both(tape.zb[size_t(i)], a, act_b[i], der_b[i]);

    const Eigen::MatrixXd y = logistic_mat(tape.zb[3]);
    Eigen::MatrixXd dz3 = (drgb.array() * (y.array() * (1.0 - y.array()))).matrix();
    accumulate(grads[12], act_b[2], dz3);
    Eigen::MatrixXd dact2 = dz3 * params_[12].w.transpose();

    Eigen::MatrixXd dz2 = (dact2.array() * der_b[2].array()).matrix();
    accumulate(grads[11], act_b[1], dz2);
    Eigen::MatrixXd dact1 = dz2 * params_[11].w.transpose();

    Eigen::MatrixXd dz1 = (dact1.array() * der_b[1].array()).matrix();
    accumulate(grads[10], concat_cols(act_b[0], a_out), dz1);
    Eigen::MatrixXd din1 = dz1 * params_[10].w.transpose();
    Eigen::MatrixXd dact0 = din1.leftCols(tape.zb[0].cols());
    d_aout = din1.rightCols(a_out.cols());

    Eigen::MatrixXd dz0 = (dact0.array() * der_b[0].array()).matrix();
    accumulate(grads[9], concat_cols(a_out, tape.xb), dz0);
    d_aout += (dz0 * params_[9].w.transpose()).leftCols(a_out.cols());
  }

  Eigen::MatrixXd dact = std::move(d_aout);
  for (int i = 8; i >= 0; --i) {
    Eigen::MatrixXd dz = (dact.array() * der_a[size_t(i)].array()).matrix();
    if (i == 0) {
      accumulate(grads[0], tape.xa, dz);
    } else if (i == 4) {
      accumulate(grads[4], concat_cols(act_a[3], tape.xa), dz);
      dact = (dz * params_[4].w.transpose()).leftCols(act_a[3].cols());
    } else {
      accumulate(grads[size_t(i)], act_a[size_t(i - 1)], dz);
      dact = dz * params_[size_t(i)].w.transpose();
    }
  }
}

AdamState AdamState::for_model(const NppModel& model) {
  AdamState s;
  s.m = model.zero_like();
  s.v = model.zero_like();
  return s;
}

void adam_step(NppModel& model, AdamState& state, const ParamSet& grads, int epoch,
               const AdamConfig& cfg) {
  state.step += 1;
  const double lr =
      cfg.learning_rate * std::pow(cfg.decay_factor, double(epoch / cfg.decay_every));
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  auto& params = model.params();
  for (size_t i = 0; i < params.size(); ++i) {
    auto upd = [&](Eigen::MatrixXd& p, Eigen::MatrixXd& m, Eigen::MatrixXd& v,
                   const Eigen::MatrixXd& g) {
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = (cfg.beta2 * v.array() + (1.0 - cfg.beta2) * g.array().square()).matrix();
      p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.epsilon);
    };
    upd(params[i].w, state.m[i].w, state.v[i].w, grads[i].w);
    Eigen::MatrixXd pb = params[i].b, mb = state.m[i].b, vb = state.v[i].b, gb = grads[i].b;
    upd(pb, mb, vb, gb);
    params[i].b = pb;
    state.m[i].b = mb;
    state.v[i].b = vb;
  }
}

void NppModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  auto w32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto w64f = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
  w32(kVersion);
  w32(uint32_t(shape_.in_a));
  w32(uint32_t(shape_.in_b));
  w32(uint32_t(shape_.width_a));
  for (int v : shape_.widths_b) w32(uint32_t(v));
  w64f(shape_.snake_a);
  for (const auto& l : params_) {
    w32(uint32_t(l.w.rows()));
    w32(uint32_t(l.w.cols()));
    for (long r = 0; r < l.w.rows(); ++r)
      for (long c = 0; c < l.w.cols(); ++c) w64f(l.w(r, c));
    for (long r = 0; r < l.b.size(); ++r) w64f(l.b(r));
  }
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
}

NppModel NppModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(kMagic, 4))
    throw std::runtime_error("not a model checkpoint: " + path);
  auto r32 = [&]() {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto r64f = [&]() {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  if (r32() != kVersion) throw std::runtime_error("unsupported checkpoint version: " + path);
  ModelShape shape;
  shape.in_a = int(r32());
  shape.in_b = int(r32());
  shape.width_a = int(r32());
  for (int& v : shape.widths_b) v = int(r32());
  shape.snake_a = r64f();
  NppModel model(shape, 0);
  for (auto& l : model.params_) {
    const long rows = long(r32()), cols = long(r32());
    if (rows != l.w.rows() || cols != l.w.cols())
      throw std::runtime_error("checkpoint layout mismatch: " + path);
    for (long r = 0; r < rows; ++r)
      for (long c = 0; c < cols; ++c) l.w(r, c) = r64f();
    for (long r = 0; r < l.b.size(); ++r) l.b(r) = r64f();
  }
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  return model;
}

}  // namespace npp
