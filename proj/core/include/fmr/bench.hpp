#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fmr/cloud.hpp"
#include "fmr/registration.hpp"
#include "fmr/training.hpp"

namespace fmr::bench {

enum class Method { Fmr, FmrUnsup, Icp };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

/// Sweep definition shared by all protocols. Every method in a cell sees the
/// same pre-generated (P, Q, g_gt) trials.
struct BenchProtocol {
  std::vector<double> init_rot_angles_deg = {0, 10, 20, 30, 40,
                                             50, 60, 70, 80};
  double init_trans_max = 0.8;
  int trials_per_cell = 10;
  PerturbationSpec perturbation;  // applied to the source cloud
  std::vector<Method> methods = {Method::Fmr, Method::Icp};
  std::uint64_t seed = 0;
  double success_rot_deg = 5.0;
  double success_trans = 0.05;
  RegistrationConfig reg_cfg;
  IcpConfig icp_cfg;
};

/// One row per (method, init angle, perturbation) cell. Error statistics are
/// over trials whose solver completed; success_rate counts all trials.
struct BenchRow {
  std::string method;
  double init_angle_deg = 0.0;
  std::string perturbation;
  int trials = 0;
  double rot_err_mean_deg = 0.0;
  double rot_err_median_deg = 0.0;
  double trans_err_mean = 0.0;
  double rmse_mean = 0.0;
  double success_rate = 0.0;
  double time_ms_mean = 0.0;
};

/// Trained checkpoints backing the feature-metric methods; Icp needs none.
struct BenchModels {
  const ModelParams* fmr = nullptr;
  const ModelParams* fmr_unsup = nullptr;
};

std::vector<BenchRow> rotation_sweep(const BenchModels& models,
                                     const Dataset& dataset,
                                     const BenchProtocol& protocol);

/// rotation_sweep with the source decimated to keep_fraction before
/// registration (default 0.1 = the ten-times density difference study).
std::vector<BenchRow> density_test(const BenchModels& models,
                                   const Dataset& dataset,
                                   BenchProtocol protocol,
                                   double keep_fraction = 0.1);

/// rotation_sweep with Gaussian noise on the source (sigma presets 0.01 and
/// 0.02 in unit-box coordinates).
std::vector<BenchRow> noise_test(const BenchModels& models,
                                 const Dataset& dataset,
                                 BenchProtocol protocol, double sigma = 0.01);

/// rotation_sweep with an axis-aligned crop of the source.
std::vector<BenchRow> overlap_test(const BenchModels& models,
                                   const Dataset& dataset,
                                   BenchProtocol protocol,
                                   double crop_fraction = 0.1);

/// Pinned CSV layout: header row exactly
/// method,init_angle_deg,perturbation,trials,rot_err_mean_deg,
/// rot_err_median_deg,trans_err_mean,rmse_mean,success_rate,time_ms_mean
void write_bench_csv(const std::vector<BenchRow>& rows,
                     const std::filesystem::path& path);

/// Per-iteration feature error of one registration, with the rotation error
/// against g_gt when it is known.
struct TraceRow {
  int iteration = 0;
  double feature_error = 0.0;
  double rot_err_deg = 0.0;
};
std::vector<TraceRow> residual_trace(const ModelParams& params,
                                     const PointCloud& p, const PointCloud& q,
                                     const RegistrationConfig& cfg,
                                     const RigidTransform* g_gt = nullptr);
/// Header: iteration,feature_error,rot_err_deg
void write_trace_csv(const std::vector<TraceRow>& rows,
                     const std::filesystem::path& path);

struct TimingRow {
  std::string method;
  int n_points = 0;
  double time_ms_median = 0.0;
  double time_ms_mean = 0.0;
};
/// Wall-clock per method and cloud size over seeded trials (first trial
/// warms up and is discarded); forced serial.
std::vector<TimingRow> timing_report(const BenchModels& models,
                                     const std::vector<int>& sizes,
                                     const BenchProtocol& protocol,
                                     int trials = 10);
void write_timing_csv(const std::vector<TimingRow>& rows,
                      const std::filesystem::path& path);

namespace detail {

/// One pre-generated trial; all methods of a cell share it.
struct Trial {
  PointCloud p;
  PointCloud q;
  RigidTransform g_gt;
};

std::vector<Trial> make_trials(const Dataset& dataset,
                               const BenchProtocol& protocol, size_t angle_bin,
                               double angle_deg);

/// Runs `estimator` over the trials of one cell and reduces to a row.
/// Exposed so tests can exercise failure isolation with stub estimators.
BenchRow run_cell(const Estimator& estimator, const std::vector<Trial>& trials,
                  const std::string& method, double angle_deg,
                  const std::string& perturbation_tag,
                  const BenchProtocol& protocol, bool parallel);

/// Worker count: FMR_THREADS when set (1 forces serial), else all cores.
int thread_budget();

}  // namespace detail

}  // namespace fmr::bench
