#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fmr/cloud.hpp"
#include "fmr/losses.hpp"
#include "fmr/model.hpp"
#include "fmr/registration.hpp"

namespace fmr {

/// Clouds with their shape-family tags; all clouds unit-box normalized.
struct Dataset {
  std::vector<PointCloud> clouds;
  std::vector<std::string> families;
  std::vector<std::uint64_t> shape_seeds;  // per-cloud generator seed

  int size() const { return static_cast<int>(clouds.size()); }
};

struct FamilyCount {
  ShapeFamily family;
  int count = 0;
};

/// Procedural dataset: `count` clouds per family entry, each with its own
/// shape seed, all normalized.
Dataset make_dataset(const std::vector<FamilyCount>& families, int points,
                     std::uint64_t seed);

struct TrainConfig {
  TrainMode mode = TrainMode::Unsupervised;
  int epochs = 50;
  double lr = 1e-3;
  int cloud_size = 512;
  std::vector<FamilyCount> dataset;
  double rot_max_train = 45.0 * 3.14159265358979323846 / 180.0;
  double trans_max_train = 0.8;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  int accum_steps = 1;           // optimizer step every this many clouds
  int semi_register_iters = 3;   // truncated solver budget inside the loop
  ModelConfig model;
};

struct EpochStats {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_cf = 0.0;
  double loss_pe = 0.0;
  double val_chamfer = 0.0;
  double val_rot_err_deg = 0.0;  // semi mode only; 0 in unsupervised
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
};

/// CSV with header epoch,loss_total,loss_cf,loss_pe,val_chamfer,
/// val_rot_err_deg,seconds (written atomically).
void write_report_csv(const TrainReport& report,
                      const std::filesystem::path& path);

/// One training sample: a dataset cloud, a random rigid motion, and its
/// transformed copy.
struct TrainingPair {
  PointCloud p;
  PointCloud q;
  RigidTransform g_gt;
};
TrainingPair sample_training_pair(const Dataset& dataset,
                                  const TrainConfig& cfg, Rng& rng);

struct TrainOutput {
  ModelParams best;    // lowest validation metric
  ModelParams final;   // after the last epoch
  TrainReport report;
  std::vector<int> val_indices;  // held-out clouds (never trained on)
};

/// Fits the encoder/decoder. Unsupervised mode minimizes the reconstruction
/// Chamfer of both rotated copies and never sees the ground-truth transform;
/// semi mode adds the point error of a truncated registration against the
/// ground truth. Deterministic per seed. Throws NonFiniteLoss with the step
/// index when a loss diverges.
TrainOutput train(const TrainConfig& cfg);

/// Same loop over a caller-provided dataset (e.g. loaded from disk).
TrainOutput train(const TrainConfig& cfg, const Dataset& dataset);

/// Pluggable registration call used by evaluate (lets tests swap in stubs).
using Estimator =
    std::function<RegistrationResult(const PointCloud& p, const PointCloud& q)>;

struct EvalProtocol {
  std::vector<double> init_rot_angles_deg = {0, 10, 20, 30, 40, 50, 60, 70, 80};
  double init_trans_max = 0.8;
  int trials_per_bin = 10;
  std::uint64_t seed = 0;
  double success_rot_deg = 5.0;
  double success_trans = 0.05;
};

struct EvalRow {
  double init_angle_deg = 0.0;
  int trials = 0;
  double rot_err_mean_deg = 0.0;
  double rot_err_median_deg = 0.0;
  double trans_err_mean = 0.0;
  double rmse_mean = 0.0;
  double success_rate = 0.0;
};

std::vector<EvalRow> evaluate_with(const Estimator& estimator,
                                   const Dataset& dataset,
                                   const EvalProtocol& protocol);
std::vector<EvalRow> evaluate(const ModelParams& params, const Dataset& dataset,
                              const EvalProtocol& protocol,
                              const RegistrationConfig& reg_cfg = {});

}  // namespace fmr
