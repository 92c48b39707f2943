#include "fmr/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <numeric>
#include <thread>

#include "fmr/cloud_io.hpp"
#include "fmr/errors.hpp"

namespace fmr::bench {

namespace {

constexpr std::uint64_t kStreamCloud = 0x11;
constexpr std::uint64_t kStreamGt = 0x12;
constexpr std::uint64_t kStreamDecimate = 0x13;
constexpr std::uint64_t kStreamNoise = 0x14;
constexpr std::uint64_t kStreamCrop = 0x15;
constexpr std::uint64_t kStreamTiming = 0x16;

std::string perturbation_tag(const PerturbationSpec& spec) {
  if (spec.is_noop()) return "none";
  std::string tag;
  char buf[48];
  if (spec.keep_fraction < 1.0) {
    std::snprintf(buf, sizeof(buf), "decim_k%.2f", spec.keep_fraction);
    tag += buf;
  }
  if (spec.noise_sigma > 0.0) {
    if (!tag.empty()) tag += '+';
    std::snprintf(buf, sizeof(buf), "noise_s%.4f", spec.noise_sigma);
    tag += buf;
  }
  if (spec.crop_fraction > 0.0) {
    if (!tag.empty()) tag += '+';
    std::snprintf(buf, sizeof(buf), "crop_f%.2f", spec.crop_fraction);
    tag += buf;
  }
  return tag;
}

Estimator bind_method(Method method, const BenchModels& models,
                      const BenchProtocol& protocol) {
  switch (method) {
    case Method::Fmr:
      if (!models.fmr) throw InvalidArgument("method fmr requires a model");
      return [params = models.fmr, cfg = protocol.reg_cfg](
                 const PointCloud& p, const PointCloud& q) {
        return register_clouds(p, q, *params, cfg);
      };
    case Method::FmrUnsup:
      if (!models.fmr_unsup) {
        throw InvalidArgument("method fmr_unsup requires a model");
      }
      return [params = models.fmr_unsup, cfg = protocol.reg_cfg](
                 const PointCloud& p, const PointCloud& q) {
        return register_clouds(p, q, *params, cfg);
      };
    case Method::Icp:
      return [cfg = protocol.icp_cfg](const PointCloud& p,
                                      const PointCloud& q) {
        return icp_register(p, q, cfg);
      };
  }
  throw InvalidArgument("unknown method");
}

struct TrialOutcome {
  bool completed = false;
  double rot_err_deg = 0.0;
  double trans_err = 0.0;
  double rmse = 0.0;
  double millis = 0.0;
};

void parallel_for(int n, bool parallel, const std::function<void(int)>& body) {
  const int budget = parallel ? detail::thread_budget() : 1;
  const int workers = std::max(1, std::min(budget, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        body(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::Fmr: return "fmr";
    case Method::FmrUnsup: return "fmr_unsup";
    case Method::Icp: return "icp";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "fmr") return Method::Fmr;
  if (name == "fmr_unsup") return Method::FmrUnsup;
  if (name == "icp") return Method::Icp;
  throw InvalidArgument("unknown method: " + name);
}

namespace detail {

int thread_budget() {
  if (const char* env = std::getenv("FMR_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

std::vector<Trial> make_trials(const Dataset& dataset,
                               const BenchProtocol& protocol, size_t angle_bin,
                               double angle_deg) {
  if (dataset.size() < 1) throw InvalidArgument("dataset is empty");
  std::vector<Trial> trials(protocol.trials_per_cell);
  const PerturbationSpec& pert = protocol.perturbation;
  for (int t = 0; t < protocol.trials_per_cell; ++t) {
    Rng cloud_rng(derive_seed(protocol.seed, kStreamCloud, angle_bin, t));
    Trial& trial = trials[t];
    trial.p = dataset.clouds[cloud_rng.uniform_index(dataset.size())];

    Rng gt_rng(derive_seed(protocol.seed, kStreamGt, angle_bin, t));
    trial.g_gt = random_transform_fixed_angle(
        angle_deg * std::numbers::pi / 180.0, protocol.init_trans_max, gt_rng);
    trial.q = apply(trial.g_gt, trial.p);

    // Perturbation stages run on independent streams so that no-op stages
    // leave the other draws untouched.
    if (pert.keep_fraction < 1.0) {
      Rng rng(derive_seed(pert.seed, kStreamDecimate, angle_bin, t));
      trial.q = decimate(trial.q, pert.keep_fraction, rng);
    }
    if (pert.noise_sigma > 0.0) {
      Rng rng(derive_seed(pert.seed, kStreamNoise, angle_bin, t));
      trial.q = add_gaussian_noise(trial.q, pert.noise_sigma, rng);
    }
    if (pert.crop_fraction > 0.0) {
      Rng rng(derive_seed(pert.seed, kStreamCrop, angle_bin, t));
      trial.q = crop_half_space(trial.q, pert.crop_fraction, pert.crop_axis,
                                rng);
    }
  }
  return trials;
}

BenchRow run_cell(const Estimator& estimator, const std::vector<Trial>& trials,
                  const std::string& method, double angle_deg,
                  const std::string& perturbation_tag,
                  const BenchProtocol& protocol, bool parallel) {
  const int n = static_cast<int>(trials.size());
  std::vector<TrialOutcome> outcomes(n);
  parallel_for(n, parallel, [&](int i) {
    const Trial& trial = trials[i];
    TrialOutcome& out = outcomes[i];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const RegistrationResult res = estimator(trial.p, trial.q);
      const RigidTransform g_true = inverse(trial.g_gt);
      out.rot_err_deg =
          angular_error(res.g_est, g_true) * 180.0 / std::numbers::pi;
      out.trans_err = translation_error(res.g_est, g_true);
      out.rmse = transform_rmse(res.g_est, g_true);
      out.completed = true;
    } catch (const Error&) {
      out.completed = false;  // failure recorded, sweep continues
    }
    out.millis = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
  });

  BenchRow row;
  row.method = method;
  row.init_angle_deg = angle_deg;
  row.perturbation = perturbation_tag;
  row.trials = n;
  std::vector<double> rot_errs;
  double trans_sum = 0.0, rmse_sum = 0.0, ms_sum = 0.0;
  int successes = 0;
  for (const auto& out : outcomes) {
    ms_sum += out.millis;
    if (!out.completed) continue;
    rot_errs.push_back(out.rot_err_deg);
    trans_sum += out.trans_err;
    rmse_sum += out.rmse;
    if (out.rot_err_deg < protocol.success_rot_deg &&
        out.trans_err < protocol.success_trans) {
      ++successes;
    }
  }
  const int done = static_cast<int>(rot_errs.size());
  if (done > 0) {
    row.rot_err_mean_deg =
        std::accumulate(rot_errs.begin(), rot_errs.end(), 0.0) / done;
    std::sort(rot_errs.begin(), rot_errs.end());
    row.rot_err_median_deg =
        done % 2 == 1 ? rot_errs[done / 2]
                      : 0.5 * (rot_errs[done / 2 - 1] + rot_errs[done / 2]);
    row.trans_err_mean = trans_sum / done;
    row.rmse_mean = rmse_sum / done;
  }
  row.success_rate = n > 0 ? static_cast<double>(successes) / n : 0.0;
  row.time_ms_mean = n > 0 ? ms_sum / n : 0.0;
  return row;
}

}  // namespace detail

std::vector<BenchRow> rotation_sweep(const BenchModels& models,
                                     const Dataset& dataset,
                                     const BenchProtocol& protocol) {
  if (protocol.trials_per_cell < 1) {
    throw InvalidArgument("trials_per_cell must be >= 1");
  }
  for (double a : protocol.init_rot_angles_deg) {
    if (a < 0.0 || a >= 180.0) {
      throw InvalidArgument("init rotation angles must be in [0, 180)");
    }
  }
  const std::string tag = perturbation_tag(protocol.perturbation);

  // Shared trial sets: every method of a cell sees identical inputs.
  std::vector<std::vector<detail::Trial>> trials_per_bin;
  trials_per_bin.reserve(protocol.init_rot_angles_deg.size());
  for (size_t bin = 0; bin < protocol.init_rot_angles_deg.size(); ++bin) {
    trials_per_bin.push_back(detail::make_trials(
        dataset, protocol, bin, protocol.init_rot_angles_deg[bin]));
  }

  std::vector<BenchRow> rows;
  rows.reserve(protocol.methods.size() * trials_per_bin.size());
  for (Method method : protocol.methods) {
    const Estimator estimator = bind_method(method, models, protocol);
    for (size_t bin = 0; bin < trials_per_bin.size(); ++bin) {
      rows.push_back(detail::run_cell(estimator, trials_per_bin[bin],
                                      to_string(method),
                                      protocol.init_rot_angles_deg[bin], tag,
                                      protocol, /*parallel=*/true));
    }
  }
  return rows;
}

std::vector<BenchRow> density_test(const BenchModels& models,
                                   const Dataset& dataset,
                                   BenchProtocol protocol,
                                   double keep_fraction) {
  protocol.perturbation.keep_fraction = keep_fraction;
  return rotation_sweep(models, dataset, protocol);
}

std::vector<BenchRow> noise_test(const BenchModels& models,
                                 const Dataset& dataset, BenchProtocol protocol,
                                 double sigma) {
  protocol.perturbation.noise_sigma = sigma;
  return rotation_sweep(models, dataset, protocol);
}

std::vector<BenchRow> overlap_test(const BenchModels& models,
                                   const Dataset& dataset,
                                   BenchProtocol protocol,
                                   double crop_fraction) {
  protocol.perturbation.crop_fraction = crop_fraction;
  return rotation_sweep(models, dataset, protocol);
}

void write_bench_csv(const std::vector<BenchRow>& rows,
                     const std::filesystem::path& path) {
  atomic_write(path, [&](std::ostream& out) {
    out << "method,init_angle_deg,perturbation,trials,rot_err_mean_deg,"
           "rot_err_median_deg,trans_err_mean,rmse_mean,success_rate,"
           "time_ms_mean\n";
    char buf[320];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf),
                    "%s,%.9g,%s,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n",
                    r.method.c_str(), r.init_angle_deg, r.perturbation.c_str(),
                    r.trials, r.rot_err_mean_deg, r.rot_err_median_deg,
                    r.trans_err_mean, r.rmse_mean, r.success_rate,
                    r.time_ms_mean);
      out << buf;
    }
  });
}

std::vector<TraceRow> residual_trace(const ModelParams& params,
                                     const PointCloud& p, const PointCloud& q,
                                     const RegistrationConfig& cfg,
                                     const RigidTransform* g_gt) {
  const RegistrationResult res = register_clouds(p, q, params, cfg);
  std::vector<TraceRow> rows;
  rows.reserve(res.residual_history.size());
  for (size_t i = 0; i < res.residual_history.size(); ++i) {
    TraceRow row;
    row.iteration = static_cast<int>(i);
    row.feature_error = res.residual_history[i];
    if (g_gt != nullptr) {
      row.rot_err_deg = angular_error(res.iterate_history[i], inverse(*g_gt)) *
                        180.0 / std::numbers::pi;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_trace_csv(const std::vector<TraceRow>& rows,
                     const std::filesystem::path& path) {
  atomic_write(path, [&](std::ostream& out) {
    out << "iteration,feature_error,rot_err_deg\n";
    char buf[128];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g\n", r.iteration,
                    r.feature_error, r.rot_err_deg);
      out << buf;
    }
  });
}

std::vector<TimingRow> timing_report(const BenchModels& models,
                                     const std::vector<int>& sizes,
                                     const BenchProtocol& protocol,
                                     int trials) {
  if (trials < 1) throw InvalidArgument("timing needs at least one trial");
  std::vector<TimingRow> rows;
  for (Method method : protocol.methods) {
    const Estimator estimator = bind_method(method, models, protocol);
    for (size_t si = 0; si < sizes.size(); ++si) {
      const int n = sizes[si];
      std::vector<double> ms;
      // First trial warms caches and is discarded.
      for (int t = 0; t <= trials; ++t) {
        Rng rng(derive_seed(protocol.seed, kStreamTiming, si, t));
        const PointCloud p = sample_shape(
            ShapeFamily::Composite, n,
            derive_seed(protocol.seed, kStreamTiming, si, 1000 + t), rng);
        const RigidTransform g_gt = random_transform_fixed_angle(
            20.0 * std::numbers::pi / 180.0, 0.2, rng);
        const PointCloud q = apply(g_gt, p);
        const auto t0 = std::chrono::steady_clock::now();
        try {
          estimator(p, q);
        } catch (const Error&) {
          // timing only; failures still cost wall clock
        }
        const double elapsed = std::chrono::duration<double, std::milli>(
                                   std::chrono::steady_clock::now() - t0)
                                   .count();
        if (t > 0) ms.push_back(elapsed);
      }
      TimingRow row;
      row.method = to_string(method);
      row.n_points = n;
      row.time_ms_mean =
          std::accumulate(ms.begin(), ms.end(), 0.0) / ms.size();
      std::sort(ms.begin(), ms.end());
      row.time_ms_median = ms.size() % 2 == 1
                               ? ms[ms.size() / 2]
                               : 0.5 * (ms[ms.size() / 2 - 1] +
                                        ms[ms.size() / 2]);
      rows.push_back(row);
    }
  }
  return rows;
}

void write_timing_csv(const std::vector<TimingRow>& rows,
                      const std::filesystem::path& path) {
  atomic_write(path, [&](std::ostream& out) {
    out << "method,n_points,time_ms_median,time_ms_mean\n";
    char buf[128];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%s,%d,%.3f,%.3f\n", r.method.c_str(),
                    r.n_points, r.time_ms_median, r.time_ms_mean);
      out << buf;
    }
  });
}

}  // namespace fmr::bench
