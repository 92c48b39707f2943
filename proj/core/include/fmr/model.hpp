#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "fmr/cloud.hpp"
#include "fmr/tinynet.hpp"

namespace fmr {

/// Global feature of a point cloud (Eigen vector of length K).
using FeatureVector = Eigen::VectorXd;

/// Architecture knobs. Defaults: encoder 3->64->128->K with ReLU between
/// layers and a linear last stage before max-pool; decoder
/// K->512->256->128->3M with LeakyReLU on all but the final layer.
struct ModelConfig {
  int feature_dim = 1024;                      // K
  std::vector<int> encoder_widths = {64, 128};
  std::vector<int> decoder_widths = {512, 256, 128};
  int decoder_points = 512;                    // M
  double leaky_slope = 0.01;
};

/// Encoder and decoder weights. No alignment (input/feature transform)
/// sub-networks: the feature must stay attentive to rigid rotation.
struct ModelParams {
  nn::ParamSet encoder;
  nn::ParamSet decoder;
  ModelConfig config;
};

ModelParams init_model(const ModelConfig& config, std::uint64_t seed);

/// Global feature: per-point shared dense stack, then per-channel max over
/// points. Exactly permutation-invariant; sensitive to rigid motion.
FeatureVector encode(const PointCloud& cloud, const ModelParams& params);

/// Gradients of a scalar loss w.r.t. encoder parameters given d(loss)/d(feature).
nn::GradSet encode_backward(const PointCloud& cloud, const ModelParams& params,
                            const FeatureVector& d_feature);

// Traced variants for training loops: the forward pass keeps the
// intermediates so one backward can follow without recomputation.
struct EncodeTrace {
  nn::StackTrace stack;
  std::vector<int> argmax;
  int n_points = 0;
};
FeatureVector encode_traced(const PointCloud& cloud, const ModelParams& params,
                            EncodeTrace& trace);
nn::GradSet encode_backward_traced(const EncodeTrace& trace,
                                   const ModelParams& params,
                                   const FeatureVector& d_feature);

struct DecodeTrace {
  nn::StackTrace stack;
};
PointCloud decode_traced(const FeatureVector& feature,
                         const ModelParams& params, DecodeTrace& trace);

/// Reconstruct M points from a feature.
PointCloud decode(const FeatureVector& feature, const ModelParams& params);

/// Gradients w.r.t. decoder parameters and the input feature given
/// d(loss)/d(decoded points).
struct DecodeBackwardResult {
  nn::GradSet decoder_grads;
  FeatureVector d_feature;
};
DecodeBackwardResult decode_backward(const FeatureVector& feature,
                                     const ModelParams& params,
                                     const Eigen::MatrixXd& d_points);
DecodeBackwardResult decode_backward_traced(const DecodeTrace& trace,
                                            const ModelParams& params,
                                            const Eigen::MatrixXd& d_points);

// Checkpoint wrappers: one file holds encoder + decoder + hyperparameters.
void save_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

/// Number of encoder forward passes executed by this thread; lets tests and
/// the bench harness verify how many feature evaluations a solver spends.
std::uint64_t encode_forward_count();
void reset_encode_forward_count();

}  // namespace fmr
