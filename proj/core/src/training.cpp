#include "fmr/training.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "fmr/cloud_io.hpp"
#include "fmr/errors.hpp"

namespace fmr {

namespace {

constexpr std::uint64_t kStreamDataset = 0x01;
constexpr std::uint64_t kStreamSplit = 0x02;
constexpr std::uint64_t kStreamInit = 0x03;
constexpr std::uint64_t kStreamEpoch = 0x04;
constexpr std::uint64_t kStreamVal = 0x05;

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

Dataset make_dataset(const std::vector<FamilyCount>& families, int points,
                     std::uint64_t seed) {
  if (families.empty()) throw InvalidArgument("dataset family list is empty");
  Dataset ds;
  for (size_t f = 0; f < families.size(); ++f) {
    if (families[f].count < 1) {
      throw InvalidArgument("family count must be >= 1");
    }
    for (int i = 0; i < families[f].count; ++i) {
      const std::uint64_t shape_seed = derive_seed(seed, kStreamDataset, f, i);
      Rng rng(derive_seed(shape_seed, 0x9d));
      ds.clouds.push_back(
          sample_shape(families[f].family, points, shape_seed, rng));
      ds.families.push_back(to_string(families[f].family));
      ds.shape_seeds.push_back(shape_seed);
    }
  }
  return ds;
}

TrainingPair sample_training_pair(const Dataset& dataset,
                                  const TrainConfig& cfg, Rng& rng) {
  if (dataset.size() < 1) throw InvalidArgument("dataset is empty");
  TrainingPair pair;
  const int idx = static_cast<int>(rng.uniform_index(dataset.size()));
  pair.p = dataset.clouds[idx];
  pair.g_gt = random_transform(cfg.rot_max_train, cfg.trans_max_train, rng);
  pair.q = apply(pair.g_gt, pair.p);
  return pair;
}

void write_report_csv(const TrainReport& report,
                      const std::filesystem::path& path) {
  atomic_write(path, [&](std::ostream& out) {
    out << "epoch,loss_total,loss_cf,loss_pe,val_chamfer,val_rot_err_deg,"
           "seconds\n";
    char buf[256];
    for (const auto& e : report.epochs) {
      std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n",
                    e.epoch, e.loss_total, e.loss_cf, e.loss_pe, e.val_chamfer,
                    e.val_rot_err_deg, e.seconds);
      out << buf;
    }
  });
}

namespace {

// Reconstruction Chamfer of one cloud plus its parameter gradients.
double reconstruction_step(const PointCloud& x, const ModelParams& params,
                           nn::GradSet& enc_grads, nn::GradSet& dec_grads) {
  EncodeTrace enc_trace;
  const FeatureVector feature = encode_traced(x, params, enc_trace);
  DecodeTrace dec_trace;
  const PointCloud recon = decode_traced(feature, params, dec_trace);
  const double cf = chamfer(recon, x);

  const ChamferGrads cg = chamfer_backward(recon, x);
  const DecodeBackwardResult db =
      decode_backward_traced(dec_trace, params, cg.d_a);
  dec_grads += db.decoder_grads;
  enc_grads += encode_backward_traced(enc_trace, params, db.d_feature);
  return cf;
}

double reconstruction_chamfer(const PointCloud& x, const ModelParams& params) {
  return chamfer(decode(encode(x, params), params), x);
}

Eigen::Matrix<double, 6, 1> solve_damped_6x6(
    const Eigen::Matrix<double, 6, 6>& a,
    const Eigen::Matrix<double, 6, 1>& b, double lambda) {
  double lam = lambda;
  const double floor = 1e-12 * std::max(a.trace() / 6.0, 1.0);
  for (int attempt = 0; attempt < 64; ++attempt) {
    Eigen::Matrix<double, 6, 6> damped = a;
    damped.diagonal().array() += lam;
    const Eigen::LLT<Eigen::Matrix<double, 6, 6>> llt(damped);
    if (llt.info() == Eigen::Success) {
      const Eigen::Matrix<double, 6, 1> x = llt.solve(b);
      if (x.allFinite()) return x;
    }
    lam = lam > 0.0 ? lam * 10.0 : floor;
  }
  throw SingularNormalEquations("damped 6x6 solve failed");
}

// Truncated feature-metric registration unrolled for the geometric loss.
// Only the final iteration's residual carries gradients; the precomputed
// Jacobian and earlier iterates are treated as constants.
double point_error_step(const TrainingPair& pair, const ModelParams& params,
                        const RegistrationConfig& reg_cfg, int iters,
                        nn::GradSet& enc_grads) {
  EncodeTrace trace_p;
  const FeatureVector f_p = encode_traced(pair.p, params, trace_p);
  Eigen::MatrixXd j(f_p.size(), 6);
  for (int i = 0; i < 6; ++i) {
    const RigidTransform perturb =
        exp(Twist::basis(i, reg_cfg.perturbation_xi));
    j.col(i) = (encode(apply(perturb, pair.p), params) - f_p) /
               reg_cfg.perturbation_xi;
  }

  RigidTransform g;
  for (int k = 0; k < iters - 1; ++k) {
    const FeatureVector r = f_p - encode(apply(g, pair.q), params);
    g = compose(exp(gn_step(j, r, reg_cfg.damping_lambda)), g);
  }
  EncodeTrace trace_q;
  const FeatureVector f_q =
      encode_traced(apply(g, pair.q), params, trace_q);
  const FeatureVector r_last = f_p - f_q;
  const Twist delta = gn_step(j, r_last, reg_cfg.damping_lambda);
  const RigidTransform g_est = compose(exp(delta), g);

  const RigidTransform g_true = inverse(pair.g_gt);
  const double pe = point_error_loss(g_est, g_true, pair.p);

  // d(pe)/d(delta) in the left-perturbation chart, pushed back through the
  // Gauss-Newton solve to the residual: dr = A^T gamma with
  // A = (J^T J + lambda I)^-1 J^T.
  const Eigen::Matrix<double, 6, 1> gamma =
      point_error_loss_grad(g_est, g_true, pair.p).vector();
  const Eigen::Matrix<double, 6, 6> jtj = j.transpose() * j;
  const Eigen::Matrix<double, 6, 1> y =
      solve_damped_6x6(jtj, gamma, reg_cfg.damping_lambda);
  const FeatureVector d_r = j * y;

  enc_grads += encode_backward_traced(trace_p, params, d_r);
  enc_grads += encode_backward_traced(trace_q, params, -d_r);
  return pe;
}

}  // namespace

TrainOutput train(const TrainConfig& cfg) {
  ModelConfig model_cfg = cfg.model;
  model_cfg.decoder_points = cfg.cloud_size;
  TrainConfig full = cfg;
  full.model = model_cfg;
  const Dataset ds = make_dataset(cfg.dataset, cfg.cloud_size, cfg.seed);
  return train(full, ds);
}

TrainOutput train(const TrainConfig& cfg, const Dataset& dataset) {
  if (cfg.epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (cfg.val_fraction <= 0.0 || cfg.val_fraction >= 1.0) {
    throw InvalidArgument("val_fraction must be in (0, 1)");
  }
  if (dataset.size() < 2) {
    throw InvalidArgument("dataset needs at least 2 clouds");
  }

  // Seeded disjoint split; validation clouds never produce gradients.
  std::vector<int> order(dataset.size());
  for (int i = 0; i < dataset.size(); ++i) order[i] = i;
  {
    Rng split_rng(derive_seed(cfg.seed, kStreamSplit));
    for (int i = dataset.size() - 1; i > 0; --i) {
      std::swap(order[i],
                order[static_cast<int>(split_rng.uniform_index(i + 1))]);
    }
  }
  const int n_val = std::max(
      1, static_cast<int>(std::lround(cfg.val_fraction * dataset.size())));
  std::vector<int> val_idx(order.begin(), order.begin() + n_val);
  std::vector<int> train_idx(order.begin() + n_val, order.end());
  if (train_idx.empty()) throw InvalidArgument("no training clouds left");

  ModelParams params =
      init_model(cfg.model, derive_seed(cfg.seed, kStreamInit));
  nn::OptState opt_state = nn::OptState::zeros_like(params.encoder);
  nn::OptState opt_state_dec = nn::OptState::zeros_like(params.decoder);
  nn::OptConfig opt_cfg;
  opt_cfg.lr = cfg.lr > 0.0 ? cfg.lr : 1e-3;  // lr == 0 skips stepping below

  RegistrationConfig reg_cfg;  // solver defaults inside the training loop

  TrainOutput out;
  out.report.epochs.reserve(cfg.epochs);
  double best_metric = std::numeric_limits<double>::infinity();
  long global_step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double t0 = now_seconds();
    std::vector<int> epoch_order = train_idx;
    Rng epoch_rng(derive_seed(cfg.seed, kStreamEpoch, epoch));
    for (int i = static_cast<int>(epoch_order.size()) - 1; i > 0; --i) {
      std::swap(epoch_order[i],
                epoch_order[static_cast<int>(epoch_rng.uniform_index(i + 1))]);
    }

    double sum_total = 0.0, sum_cf = 0.0, sum_pe = 0.0;
    nn::GradSet enc_acc = nn::GradSet::zeros_like(params.encoder);
    nn::GradSet dec_acc = nn::GradSet::zeros_like(params.decoder);
    int pending = 0;

    auto flush = [&]() {
      if (pending == 0 || cfg.lr <= 0.0) {
        pending = 0;
        enc_acc = nn::GradSet::zeros_like(params.encoder);
        dec_acc = nn::GradSet::zeros_like(params.decoder);
        return;
      }
      enc_acc *= 1.0 / pending;
      dec_acc *= 1.0 / pending;
      nn::opt_step(params.encoder, enc_acc, opt_state, opt_cfg);
      nn::opt_step(params.decoder, dec_acc, opt_state_dec, opt_cfg);
      enc_acc = nn::GradSet::zeros_like(params.encoder);
      dec_acc = nn::GradSet::zeros_like(params.decoder);
      pending = 0;
    };

    for (size_t s = 0; s < epoch_order.size(); ++s) {
      Rng pair_rng(derive_seed(cfg.seed, kStreamEpoch, epoch, 1000 + s));
      TrainingPair pair;
      pair.p = dataset.clouds[epoch_order[s]];
      pair.g_gt =
          random_transform(cfg.rot_max_train, cfg.trans_max_train, pair_rng);
      pair.q = apply(pair.g_gt, pair.p);

      // Both rotated copies are reconstructed so the feature stays
      // attentive to the pose, not just the shape.
      double cf = reconstruction_step(pair.p, params, enc_acc, dec_acc);
      cf += reconstruction_step(pair.q, params, enc_acc, dec_acc);

      std::optional<double> pe;
      if (cfg.mode == TrainMode::Semi) {
        pe = point_error_step(pair, params, reg_cfg, cfg.semi_register_iters,
                              enc_acc);
      }
      const LossValue loss = combined_loss(cfg.mode, cf, pe);
      ++global_step;
      if (!std::isfinite(loss.total) || !enc_acc.all_finite() ||
          !dec_acc.all_finite()) {
        throw NonFiniteLoss(global_step, "training loss or gradient diverged");
      }
      sum_total += loss.total;
      sum_cf += loss.chamfer;
      sum_pe += loss.point_error;
      if (++pending >= cfg.accum_steps) flush();
    }
    flush();

    EpochStats stats;
    stats.epoch = epoch;
    const double n_steps = static_cast<double>(epoch_order.size());
    stats.loss_total = sum_total / n_steps;
    stats.loss_cf = sum_cf / n_steps;
    stats.loss_pe = sum_pe / n_steps;

    double val_cf = 0.0;
    for (int idx : val_idx) {
      val_cf += reconstruction_chamfer(dataset.clouds[idx], params);
    }
    stats.val_chamfer = val_cf / static_cast<double>(val_idx.size());

    if (cfg.mode == TrainMode::Semi) {
      // Fixed seeded validation pairs, full-budget solver.
      const int n_trials = std::min<int>(16, static_cast<int>(val_idx.size()));
      double err_sum = 0.0;
      int done = 0;
      for (int t = 0; t < n_trials; ++t) {
        Rng val_rng(derive_seed(cfg.seed, kStreamVal, t));
        const PointCloud& p = dataset.clouds[val_idx[t]];
        const RigidTransform g_gt =
            random_transform(cfg.rot_max_train, cfg.trans_max_train, val_rng);
        try {
          const RegistrationResult res =
              register_clouds(p, apply(g_gt, p), params, reg_cfg);
          err_sum += angular_error(res.g_est, inverse(g_gt));
          ++done;
        } catch (const Error&) {
          // failed trial; skip
        }
      }
      stats.val_rot_err_deg =
          done > 0 ? err_sum / done * 180.0 / std::numbers::pi : 180.0;
    }

    stats.seconds = now_seconds() - t0;
    out.report.epochs.push_back(stats);

    const double metric = cfg.mode == TrainMode::Semi ? stats.val_rot_err_deg
                                                      : stats.val_chamfer;
    if (metric < best_metric) {
      best_metric = metric;
      out.best = params;
    }
  }
  out.final = params;
  if (out.best.encoder.layers.empty()) out.best = params;
  out.val_indices = val_idx;
  return out;
}

std::vector<EvalRow> evaluate_with(const Estimator& estimator,
                                   const Dataset& dataset,
                                   const EvalProtocol& protocol) {
  if (dataset.size() < 1) throw InvalidArgument("dataset is empty");
  std::vector<EvalRow> rows;
  rows.reserve(protocol.init_rot_angles_deg.size());
  for (size_t bin = 0; bin < protocol.init_rot_angles_deg.size(); ++bin) {
    const double angle_deg = protocol.init_rot_angles_deg[bin];
    EvalRow row;
    row.init_angle_deg = angle_deg;
    row.trials = protocol.trials_per_bin;
    std::vector<double> rot_errs;
    double trans_sum = 0.0, rmse_sum = 0.0;
    int successes = 0;
    for (int t = 0; t < protocol.trials_per_bin; ++t) {
      Rng rng(derive_seed(protocol.seed, 0xe7a1, bin, t));
      const PointCloud& p =
          dataset.clouds[rng.uniform_index(dataset.size())];
      const RigidTransform g_gt = random_transform_fixed_angle(
          angle_deg * std::numbers::pi / 180.0, protocol.init_trans_max, rng);
      const RigidTransform g_true = inverse(g_gt);
      try {
        const RegistrationResult res = estimator(p, apply(g_gt, p));
        const double rot = angular_error(res.g_est, g_true);
        const double trans = translation_error(res.g_est, g_true);
        rot_errs.push_back(rot * 180.0 / std::numbers::pi);
        trans_sum += trans;
        rmse_sum += transform_rmse(res.g_est, g_true);
        if (rot * 180.0 / std::numbers::pi < protocol.success_rot_deg &&
            trans < protocol.success_trans) {
          ++successes;
        }
      } catch (const Error&) {
        // solver failure counts against the success rate only
      }
    }
    const int done = static_cast<int>(rot_errs.size());
    if (done > 0) {
      row.rot_err_mean_deg =
          std::accumulate(rot_errs.begin(), rot_errs.end(), 0.0) / done;
      std::vector<double> sorted = rot_errs;
      std::sort(sorted.begin(), sorted.end());
      row.rot_err_median_deg =
          done % 2 == 1 ? sorted[done / 2]
                        : 0.5 * (sorted[done / 2 - 1] + sorted[done / 2]);
      row.trans_err_mean = trans_sum / done;
      row.rmse_mean = rmse_sum / done;
    }
    row.success_rate =
        static_cast<double>(successes) / protocol.trials_per_bin;
    rows.push_back(row);
  }
  return rows;
}

std::vector<EvalRow> evaluate(const ModelParams& params,
                              const Dataset& dataset,
                              const EvalProtocol& protocol,
                              const RegistrationConfig& reg_cfg) {
  return evaluate_with(
      [&](const PointCloud& p, const PointCloud& q) {
        return register_clouds(p, q, params, reg_cfg);
      },
      dataset, protocol);
}

}  // namespace fmr
