#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace npp {

// snake(x) = x + sin^2(ax)/a; derivative 1 + sin(2ax).
double snake(double x, double a);
double snake_derivative(double x, double a);

struct ModelShape {
  int in_a = 0;
  int in_b = 0;  // 0 selects the bypass head; branch B is then unused
  int width_a = 512;
  std::array<int, 4> widths_b{512, 512, 256, 3};
  double snake_a = 1.0;

  bool operator==(const ModelShape&) const = default;
};

struct Layer {
  Eigen::MatrixXd w;  // in x out
  Eigen::VectorXd b;
};

// One tensor per parameter matrix, in the model's fixed layer order. Doubles
// as the gradient container and the Adam moment container.
using ParamSet = std::vector<Layer>;

// Per-batch cache of inputs and pre-activations; consumed by one backward.
struct GradientTape {
  Eigen::MatrixXd xa, xb;
  std::vector<Eigen::MatrixXd> za;  // 9 branch-A pre-activations
  std::vector<Eigen::MatrixXd> zb;  // 4 branch-B pre-activations (two-branch mode)
  Eigen::MatrixXd zhead;            // bypass mode
};

// Two-branch coordinate MLP with Snake activations.
//
// Branch A: 9 layers of width_a; layer 5's input is [act4, raw input].
// Branch B: layer 1 input [A_out, raw branch-B input], layer 2 input
// [act1, A_out], then plain layers; final layer is linear into a logistic
// squash to [0,1]. When in_b = 0 the RGB comes from a linear head on A_out
// instead and branch B stays untouched (zero gradients).
class NppModel {
 public:
  NppModel() = default;
  explicit NppModel(const ModelShape& shape, uint64_t seed);

  const ModelShape& shape() const { return shape_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Zero-filled set matching this model's parameter shapes.
  ParamSet zero_like() const;

  // xa: N x in_a, xb: N x in_b (ignored when in_b = 0). Returns N x 3 RGB in
  // [0,1]. Pass a tape to enable backward.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& xa, const Eigen::MatrixXd& xb,
                          GradientTape* tape = nullptr) const;

  // Accumulates d(loss)/d(params) into grads given d(loss)/d(rgb).
  void backward(const GradientTape& tape, const Eigen::MatrixXd& drgb, ParamSet& grads) const;

  void save(const std::string& path) const;
  static NppModel load(const std::string& path);

  // Fixed indices into params(): branch A 0..8, branch B 9..12, head 13.
  static constexpr int kLayerCount = 14;
  static constexpr int kHeadIndex = 13;

 private:
  ModelShape shape_;
  ParamSet params_;
};

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int decay_every = 500;   // epochs
  double decay_factor = 0.5;
};

struct AdamState {
  ParamSet m;
  ParamSet v;
  long step = 0;

  static AdamState for_model(const NppModel& model);
};

// Standard bias-corrected update; the learning rate is the configured base
// times decay_factor^floor(epoch / decay_every).
void adam_step(NppModel& model, AdamState& state, const ParamSet& grads, int epoch,
               const AdamConfig& cfg);

}  // namespace npp
