#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fmr::nn {

enum class Activation { None, Relu, LeakyRelu };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

/// Affine map y = x W^T + b.
struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }
};

/// Named layer with its activation tag; ParamSet order is the forward and
/// serialization order.
struct LayerDef {
  std::string name;
  DenseLayer dense;
  Activation act = Activation::None;
  double slope = 0.0;  // leaky_relu only
};

struct ParamSet {
  std::vector<LayerDef> layers;
};

/// Same shapes as a ParamSet, holding d(loss)/d(parameter).
struct GradSet {
  struct LayerGrad {
    Eigen::MatrixXd d_weight;
    Eigen::VectorXd d_bias;
  };
  std::vector<LayerGrad> layers;

  static GradSet zeros_like(const ParamSet& params);
  GradSet& operator+=(const GradSet& other);
  GradSet& operator*=(double s);
  bool all_finite() const;
};

/// Seeded init: weights uniform in [-s, s] with s = sqrt(1/fan_in), zero bias.
DenseLayer init_dense(int out_dim, int in_dim, std::uint64_t seed);

// Kernels. X is one row per sample/point.
Eigen::MatrixXd dense_forward(const DenseLayer& layer,
                              const Eigen::MatrixXd& x);
struct DenseGrads {
  Eigen::MatrixXd d_x;
  Eigen::MatrixXd d_weight;
  Eigen::VectorXd d_bias;
};
DenseGrads dense_backward(const DenseLayer& layer, const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& d_y);

/// Elementwise activation; the subgradient at 0 takes the positive branch.
Eigen::MatrixXd activation_forward(Activation act, const Eigen::MatrixXd& x,
                                   double slope = 0.0);
Eigen::MatrixXd activation_backward(Activation act, const Eigen::MatrixXd& x,
                                    const Eigen::MatrixXd& d_y,
                                    double slope = 0.0);

/// Per-channel max over rows; ties broken by the lowest row index.
struct MaxPoolResult {
  Eigen::VectorXd pooled;        // C
  std::vector<int> argmax;       // C row indices
};
MaxPoolResult maxpool_points_forward(const Eigen::MatrixXd& x);
Eigen::MatrixXd maxpool_points_backward(const std::vector<int>& argmax,
                                        int n_rows,
                                        const Eigen::VectorXd& d_y);

// Whole-stack helpers used by the encoder/decoder assemblies.
struct StackTrace {
  std::vector<Eigen::MatrixXd> inputs;    // input to each layer
  std::vector<Eigen::MatrixXd> pre_act;   // dense output before activation
};
Eigen::MatrixXd stack_forward(const ParamSet& params, const Eigen::MatrixXd& x,
                              StackTrace* trace = nullptr);
/// Backward through the whole stack; returns d(input) and fills `grads`.
Eigen::MatrixXd stack_backward(const ParamSet& params, const StackTrace& trace,
                               const Eigen::MatrixXd& d_y, GradSet& grads);

/// First-order optimizer with bias-corrected per-parameter moment estimates.
struct OptState {
  long step = 0;
  std::vector<GradSet::LayerGrad> m;  // first moments
  std::vector<GradSet::LayerGrad> v;  // second moments

  static OptState zeros_like(const ParamSet& params);
};
struct OptConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};
void opt_step(ParamSet& params, const GradSet& grads, OptState& state,
              const OptConfig& cfg);

// Checkpoint file: "FMRCKPT1" magic, u32-LE length-prefixed UTF-8 JSON header
// (format version, free-form meta, layer names/shapes/activations), tensors
// as little-endian float64 row-major in declared order, trailing CRC32.
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const ParamSet& params, const std::string& meta_json,
                     const std::filesystem::path& path);
struct Checkpoint {
  ParamSet params;
  std::string meta_json;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fmr::nn
