// fmr command line: dataset generation, training, one-shot registration and
// benchmark sweeps. Exit codes: 0 success, 2 usage/parse errors, 3 training
// failure, 4 solver failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fmr/bench.hpp"
#include "fmr/cloud_io.hpp"
#include "fmr/errors.hpp"
#include "fmr/model.hpp"
#include "fmr/registration.hpp"
#include "fmr/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kConfigVersion = 1;

std::vector<fmr::ShapeFamily> parse_families(const std::string& csv) {
  std::vector<fmr::ShapeFamily> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(fmr::shape_family_from_string(tok));
  }
  if (out.empty()) throw fmr::InvalidArgument("no shape families given");
  return out;
}

std::vector<fmr::bench::Method> parse_methods(const std::string& csv) {
  std::vector<fmr::bench::Method> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(fmr::bench::method_from_string(tok));
  }
  if (out.empty()) throw fmr::InvalidArgument("no methods given");
  return out;
}

// ---------------------------------------------------------------- gen ----

struct GenArgs {
  std::string families = "sphere,box,torus,composite";
  int count = 16;
  int points = 512;
  std::uint64_t seed = 0;
  std::string out = ".";
};

int cmd_gen(const GenArgs& args) {
  const auto families = parse_families(args.families);
  std::vector<fmr::FamilyCount> spec;
  spec.reserve(families.size());
  for (auto f : families) spec.push_back({f, args.count});
  const fmr::Dataset ds = fmr::make_dataset(spec, args.points, args.seed);

  fs::create_directories(args.out);
  json manifest;
  manifest["version"] = 1;
  manifest["seed"] = args.seed;
  manifest["points"] = args.points;
  manifest["clouds"] = json::array();
  int per_family_index = 0;
  std::string last_family;
  char name[64];
  for (int i = 0; i < ds.size(); ++i) {
    if (ds.families[i] != last_family) {
      last_family = ds.families[i];
      per_family_index = 0;
    }
    std::snprintf(name, sizeof(name), "%s_%03d.xyz", ds.families[i].c_str(),
                  per_family_index++);
    fmr::save_cloud(ds.clouds[i], fs::path(args.out) / name);
    manifest["clouds"].push_back({{"file", name},
                                  {"family", ds.families[i]},
                                  {"seed", ds.shape_seeds[i]},
                                  {"points", ds.clouds[i].size()}});
  }
  fmr::atomic_write(fs::path(args.out) / "manifest.json",
                    [&](std::ostream& out) { out << manifest.dump(2) << "\n"; });
  std::printf("wrote %d clouds + manifest to %s\n", ds.size(),
              args.out.c_str());
  return 0;
}

fmr::Dataset load_dataset_dir(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw fmr::IoError("dataset manifest not found: " + manifest_path.string());
  }
  std::ifstream in(manifest_path);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw fmr::ParseError(0, std::string("bad manifest: ") + e.what());
  }
  fmr::Dataset ds;
  for (const auto& entry : manifest.at("clouds")) {
    ds.clouds.push_back(
        fmr::load_cloud(fs::path(dir) / entry.at("file").get<std::string>()));
    ds.families.push_back(entry.at("family").get<std::string>());
    ds.shape_seeds.push_back(entry.value("seed", 0ull));
  }
  if (ds.clouds.empty()) throw fmr::ParseError(0, "manifest lists no clouds");
  return ds;
}

// -------------------------------------------------------------- train ----

struct TrainArgs {
  std::string data_dir;
  std::string mode = "unsupervised";
  int epochs = 50;
  double lr = 1e-3;
  int k = 1024;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  int accum = 1;
  std::string out = ".";
};

int cmd_train(const TrainArgs& args) {
  if (!fs::exists(args.data_dir)) {
    throw fmr::IoError("dataset path does not exist: " + args.data_dir);
  }
  const fmr::Dataset ds = load_dataset_dir(args.data_dir);

  fmr::TrainConfig cfg;
  cfg.mode = args.mode == "semi" ? fmr::TrainMode::Semi
                                 : fmr::TrainMode::Unsupervised;
  cfg.epochs = args.epochs;
  cfg.lr = args.lr;
  cfg.seed = args.seed;
  cfg.val_fraction = args.val_fraction;
  cfg.accum_steps = args.accum;
  cfg.cloud_size = ds.clouds.front().size();
  cfg.model.feature_dim = args.k;
  cfg.model.decoder_points = cfg.cloud_size;

  const fmr::TrainOutput out = fmr::train(cfg, ds);

  fs::create_directories(args.out);
  fmr::save_model(out.final, fs::path(args.out) / "final.ckpt");
  fmr::save_model(out.best, fs::path(args.out) / "best.ckpt");
  fmr::write_report_csv(out.report, fs::path(args.out) / "report.csv");
  const auto& last = out.report.epochs.back();
  std::printf("trained %d epochs: loss=%.6g val_chamfer=%.6g -> %s\n",
              args.epochs, last.loss_total, last.val_chamfer,
              args.out.c_str());
  return 0;
}

// ----------------------------------------------------------- register ----

struct RegisterArgs {
  std::string model;
  std::string source;
  std::string target;
  std::string method = "fmr";
  int iters = 10;
  double xi = 0.02;
  std::string out;
};

int cmd_register(const RegisterArgs& args) {
  const fmr::PointCloud q_raw = fmr::load_cloud(args.source);
  const fmr::PointCloud p_raw = fmr::load_cloud(args.target);

  // Both clouds go to the target's unit-box frame; the solver stays a pure
  // function on normalized data and the report is mapped back afterwards.
  const auto [p_norm, frame] = fmr::normalize_unit_box(p_raw);
  fmr::PointCloud q_norm;
  q_norm.points.reserve(q_raw.points.size());
  for (const auto& pt : q_raw.points) {
    q_norm.points.push_back(frame.to_normalized(pt));
  }

  fmr::RegistrationResult result;
  if (args.method == "fmr") {
    if (args.model.empty()) {
      throw fmr::InvalidArgument("--method fmr requires --model");
    }
    const fmr::ModelParams params = fmr::load_model(args.model);
    fmr::RegistrationConfig cfg;
    cfg.max_iterations = args.iters;
    cfg.perturbation_xi = args.xi;
    result = fmr::register_clouds(p_norm, q_norm, params, cfg);
  } else if (args.method == "icp") {
    fmr::IcpConfig cfg;
    cfg.max_iterations = std::max(args.iters, 30);
    result = fmr::icp_register(p_norm, q_norm, cfg);
  } else {
    throw fmr::InvalidArgument("unknown method: " + args.method);
  }

  // De-normalized transform: same rotation, translation mapped back to the
  // target's original frame.
  fmr::RigidTransform g_orig;
  g_orig.R = result.g_est.R;
  g_orig.t = frame.offset - result.g_est.R * frame.offset +
             result.g_est.t / frame.scale;

  for (int r = 0; r < 3; ++r) {
    std::printf("%.9g %.9g %.9g %.9g\n", g_orig.R(r, 0), g_orig.R(r, 1),
                g_orig.R(r, 2), g_orig.t[r]);
  }
  std::printf("r_est=%.9g\n", result.r_est);
  std::printf("iterations=%d\n", result.iterations_run);

  if (!args.out.empty()) {
    fmr::PointCloud aligned;
    aligned.points.reserve(q_norm.points.size());
    for (const auto& pt : q_norm.points) {
      aligned.points.push_back(frame.to_original(result.g_est * pt));
    }
    fmr::save_cloud(aligned, args.out);
  }
  return 0;
}

// -------------------------------------------------------------- bench ----

struct BenchArgs {
  std::string data_dir;
  std::string model;
  std::string model_unsup;
  std::string methods = "fmr,icp";
  std::string angles = "0,10,20,30,40,50,60,70,80";
  int trials = 10;
  std::uint64_t seed = 0;
  double trans_max = 0.8;
  int iters = 10;
  double keep = 0.1;
  double sigma = 0.01;
  double crop = 0.1;
  std::string sizes = "512,2048";
  std::string source, target;  // trace only
  std::string out = ".";
};

std::vector<double> parse_doubles(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

int cmd_bench(const std::string& protocol, const BenchArgs& args) {
  fmr::bench::BenchProtocol proto;
  proto.methods = parse_methods(args.methods);
  proto.init_rot_angles_deg = parse_doubles(args.angles);
  proto.trials_per_cell = args.trials;
  proto.seed = args.seed;
  proto.perturbation.seed = args.seed;
  proto.init_trans_max = args.trans_max;
  proto.reg_cfg.max_iterations = args.iters;

  std::optional<fmr::ModelParams> model, model_unsup;
  if (!args.model.empty()) model = fmr::load_model(args.model);
  if (!args.model_unsup.empty()) {
    model_unsup = fmr::load_model(args.model_unsup);
  }
  fmr::bench::BenchModels models;
  if (model) models.fmr = &*model;
  if (model_unsup) models.fmr_unsup = &*model_unsup;

  fs::create_directories(args.out);
  const fs::path out_csv = fs::path(args.out) / (protocol + ".csv");

  if (protocol == "trace") {
    if (!model) throw fmr::InvalidArgument("bench trace requires --model");
    if (args.source.empty() || args.target.empty()) {
      throw fmr::InvalidArgument("bench trace requires --source and --target");
    }
    const auto p = fmr::normalize_unit_box(fmr::load_cloud(args.target)).first;
    const auto q = fmr::normalize_unit_box(fmr::load_cloud(args.source)).first;
    const auto rows = fmr::bench::residual_trace(*model, p, q, proto.reg_cfg);
    fmr::bench::write_trace_csv(rows, out_csv);
    std::printf("wrote %zu trace rows to %s\n", rows.size(),
                out_csv.string().c_str());
    return 0;
  }
  if (protocol == "timing") {
    std::vector<int> sizes;
    for (double s : parse_doubles(args.sizes)) {
      sizes.push_back(static_cast<int>(s));
    }
    const auto rows =
        fmr::bench::timing_report(models, sizes, proto, args.trials);
    fmr::bench::write_timing_csv(rows, out_csv);
    std::printf("wrote %zu timing rows to %s\n", rows.size(),
                out_csv.string().c_str());
    return 0;
  }

  if (args.data_dir.empty() || !fs::exists(args.data_dir)) {
    throw fmr::IoError("bench needs --data pointing at a generated dataset");
  }
  const fmr::Dataset ds = load_dataset_dir(args.data_dir);

  std::vector<fmr::bench::BenchRow> rows;
  if (protocol == "rotation") {
    rows = fmr::bench::rotation_sweep(models, ds, proto);
  } else if (protocol == "density") {
    rows = fmr::bench::density_test(models, ds, proto, args.keep);
  } else if (protocol == "noise") {
    rows = fmr::bench::noise_test(models, ds, proto, args.sigma);
  } else if (protocol == "overlap") {
    rows = fmr::bench::overlap_test(models, ds, proto, args.crop);
  } else {
    throw fmr::InvalidArgument("unknown bench protocol: " + protocol);
  }
  fmr::bench::write_bench_csv(rows, out_csv);
  std::printf("wrote %zu rows to %s\n", rows.size(), out_csv.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feature-metric point cloud registration toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file with sections");
  int config_version = kConfigVersion;
  app.add_option("--config_version", config_version,
                 "config schema version (must be " +
                     std::to_string(kConfigVersion) + ")");

  GenArgs gen;
  CLI::App* gen_cmd = app.add_subcommand("gen", "generate a synthetic dataset");
  gen_cmd->add_option("--families", gen.families,
                      "comma list of sphere,box,torus,composite")
      ->capture_default_str();
  gen_cmd->add_option("--count", gen.count, "clouds per family")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_cmd->add_option("--points", gen.points, "points per cloud")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "rng seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output directory")
      ->capture_default_str();

  TrainArgs train;
  CLI::App* train_cmd =
      app.add_subcommand("train", "fit the encoder/decoder on a dataset");
  train_cmd->add_option("data", train.data_dir, "dataset directory (from gen)")
      ->required();
  train_cmd->add_option("--mode", train.mode, "semi | unsupervised")
      ->check(CLI::IsMember({"semi", "unsupervised"}))
      ->capture_default_str();
  train_cmd->add_option("--epochs", train.epochs)
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--lr", train.lr, "learning rate (0 disables updates)")
      ->capture_default_str();
  train_cmd->add_option("--k", train.k, "feature dimension K")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--seed", train.seed)->capture_default_str();
  train_cmd->add_option("--val-fraction", train.val_fraction)
      ->capture_default_str();
  train_cmd->add_option("--accum", train.accum, "gradient accumulation steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_cmd->add_option("--out", train.out, "output directory")
      ->capture_default_str();

  RegisterArgs reg;
  CLI::App* reg_cmd =
      app.add_subcommand("register", "align a source cloud onto a target");
  reg_cmd->add_option("--model", reg.model, "checkpoint (fmr method)");
  reg_cmd->add_option("--source", reg.source, "source cloud Q")->required();
  reg_cmd->add_option("--target", reg.target, "target cloud P")->required();
  reg_cmd->add_option("--method", reg.method, "fmr | icp")
      ->check(CLI::IsMember({"fmr", "icp"}))
      ->capture_default_str();
  reg_cmd->add_option("--iters", reg.iters, "solver iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  reg_cmd->add_option("--xi", reg.xi, "finite-difference perturbation")
      ->capture_default_str();
  reg_cmd->add_option("--out", reg.out, "write aligned source cloud here");

  BenchArgs bench;
  CLI::App* bench_cmd =
      app.add_subcommand("bench", "benchmark sweeps and reports");
  bench_cmd->require_subcommand(1);
  const std::vector<std::string> bench_protocols = {
      "rotation", "density", "noise", "overlap", "timing", "trace"};
  for (const auto& name : bench_protocols) {
    CLI::App* sub = bench_cmd->add_subcommand(
        name, name == "rotation"  ? "error vs initial rotation angle"
              : name == "density" ? "rotation sweep with decimated source"
              : name == "noise"   ? "rotation sweep with noisy source"
              : name == "overlap" ? "rotation sweep with cropped source"
              : name == "timing"  ? "wall-clock per method and cloud size"
                                  : "per-iteration residual of one pair");
    sub->add_option("--data", bench.data_dir, "dataset directory");
    sub->add_option("--model", bench.model, "checkpoint for method fmr");
    sub->add_option("--model-unsup", bench.model_unsup,
                    "checkpoint for method fmr_unsup");
    sub->add_option("--methods", bench.methods,
                    "comma list (fmr,fmr_unsup,icp)")
        ->capture_default_str();
    sub->add_option("--angles", bench.angles, "comma list of degrees")
        ->capture_default_str();
    sub->add_option("--trials", bench.trials, "trials per cell")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--seed", bench.seed)->capture_default_str();
    sub->add_option("--trans-max", bench.trans_max, "initial translation cap")
        ->capture_default_str();
    sub->add_option("--iters", bench.iters, "fmr solver iterations")
        ->capture_default_str();
    sub->add_option("--out", bench.out, "output directory")
        ->capture_default_str();
    if (name == "density") {
      sub->add_option("--keep", bench.keep, "kept fraction of source points")
          ->capture_default_str();
    }
    if (name == "noise") {
      sub->add_option("--sigma", bench.sigma, "noise sigma (0.01 / 0.02)")
          ->capture_default_str();
    }
    if (name == "overlap") {
      sub->add_option("--crop", bench.crop, "cropped fraction (0.1 / 0.25)")
          ->capture_default_str();
    }
    if (name == "timing") {
      sub->add_option("--sizes", bench.sizes, "comma list of point counts")
          ->capture_default_str();
    }
    if (name == "trace") {
      sub->add_option("--source", bench.source, "source cloud");
      sub->add_option("--target", bench.target, "target cloud");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (config_version != kConfigVersion) {
      throw fmr::InvalidArgument("unsupported config_version " +
                                 std::to_string(config_version));
    }
    if (gen_cmd->parsed()) return cmd_gen(gen);
    if (train_cmd->parsed()) return cmd_train(train);
    if (reg_cmd->parsed()) return cmd_register(reg);
    if (bench_cmd->parsed()) {
      for (const auto& name : bench_protocols) {
        if (bench_cmd->get_subcommand(name)->parsed()) {
          return cmd_bench(name, bench);
        }
      }
    }
    std::fprintf(stderr, "no command given\n");
    return 2;
  } catch (const fmr::NonFiniteLoss& e) {
    std::fprintf(stderr, "training failed: %s\n", e.what());
    return 3;
  } catch (const fmr::SingularNormalEquations& e) {
    std::fprintf(stderr, "solver failed: %s\n", e.what());
    return 4;
  } catch (const fmr::DegenerateCloud& e) {
    std::fprintf(stderr, "solver failed: %s\n", e.what());
    return 4;
  } catch (const fmr::DegenerateConfiguration& e) {
    std::fprintf(stderr, "solver failed: %s\n", e.what());
    return 4;
  } catch (const fmr::AngleNearPi& e) {
    std::fprintf(stderr, "solver failed: %s\n", e.what());
    return 4;
  } catch (const fmr::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
