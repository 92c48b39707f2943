#include "fmr/model.hpp"

#include "fmr/errors.hpp"
#include "fmr/rng.hpp"
#include "json.hpp"

namespace fmr {

using nlohmann::json;

namespace {

thread_local std::uint64_t g_encode_count = 0;

nn::ParamSet build_encoder(const ModelConfig& cfg, std::uint64_t seed) {
  nn::ParamSet enc;
  std::vector<int> dims = {3};
  dims.insert(dims.end(), cfg.encoder_widths.begin(),
              cfg.encoder_widths.end());
  dims.push_back(cfg.feature_dim);
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    nn::LayerDef l;
    l.name = "enc" + std::to_string(i + 1);
    l.dense = nn::init_dense(dims[i + 1], dims[i], derive_seed(seed, 1, i));
    const bool last = (i + 2 == dims.size());
    l.act = last ? nn::Activation::None : nn::Activation::Relu;
    enc.layers.push_back(std::move(l));
  }
  return enc;
}

nn::ParamSet build_decoder(const ModelConfig& cfg, std::uint64_t seed) {
  nn::ParamSet dec;
  std::vector<int> dims = {cfg.feature_dim};
  dims.insert(dims.end(), cfg.decoder_widths.begin(),
              cfg.decoder_widths.end());
  dims.push_back(3 * cfg.decoder_points);
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    nn::LayerDef l;
    l.name = "dec" + std::to_string(i + 1);
    l.dense = nn::init_dense(dims[i + 1], dims[i], derive_seed(seed, 2, i));
    const bool last = (i + 2 == dims.size());
    l.act = last ? nn::Activation::None : nn::Activation::LeakyRelu;
    l.slope = last ? 0.0 : cfg.leaky_slope;
    dec.layers.push_back(std::move(l));
  }
  return dec;
}

}  // namespace

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  if (config.feature_dim < 1 || config.decoder_points < 1) {
    throw InvalidArgument("feature_dim and decoder_points must be >= 1");
  }
  ModelParams p;
  p.config = config;
  p.encoder = build_encoder(config, seed);
  p.decoder = build_decoder(config, seed);
  return p;
}

FeatureVector encode(const PointCloud& cloud, const ModelParams& params) {
  if (cloud.empty()) throw InvalidArgument("encode: empty cloud");
  ++g_encode_count;
  const Eigen::MatrixXd per_point =
      nn::stack_forward(params.encoder, cloud.matrix());
  return nn::maxpool_points_forward(per_point).pooled;
}

nn::GradSet encode_backward(const PointCloud& cloud, const ModelParams& params,
                            const FeatureVector& d_feature) {
  EncodeTrace trace;
  encode_traced(cloud, params, trace);
  return encode_backward_traced(trace, params, d_feature);
}

FeatureVector encode_traced(const PointCloud& cloud, const ModelParams& params,
                            EncodeTrace& trace) {
  if (cloud.empty()) throw InvalidArgument("encode: empty cloud");
  ++g_encode_count;
  trace.stack = nn::StackTrace{};
  const Eigen::MatrixXd per_point =
      nn::stack_forward(params.encoder, cloud.matrix(), &trace.stack);
  auto pool = nn::maxpool_points_forward(per_point);
  trace.argmax = std::move(pool.argmax);
  trace.n_points = cloud.size();
  return pool.pooled;
}

nn::GradSet encode_backward_traced(const EncodeTrace& trace,
                                   const ModelParams& params,
                                   const FeatureVector& d_feature) {
  if (d_feature.size() != params.config.feature_dim) {
    throw ShapeMismatch("encode_backward: d_feature length != K");
  }
  const Eigen::MatrixXd d_per_point =
      nn::maxpool_points_backward(trace.argmax, trace.n_points, d_feature);
  nn::GradSet grads = nn::GradSet::zeros_like(params.encoder);
  nn::stack_backward(params.encoder, trace.stack, d_per_point, grads);
  return grads;
}

PointCloud decode(const FeatureVector& feature, const ModelParams& params) {
  if (feature.size() != params.config.feature_dim) {
    throw ShapeMismatch("decode: feature length != K");
  }
  const Eigen::MatrixXd flat =
      nn::stack_forward(params.decoder, feature.transpose());
  PointCloud out;
  const int m = params.config.decoder_points;
  out.points.resize(m);
  for (int i = 0; i < m; ++i) {
    out.points[i] = Eigen::Vector3d(flat(0, 3 * i), flat(0, 3 * i + 1),
                                    flat(0, 3 * i + 2));
  }
  return out;
}

DecodeBackwardResult decode_backward(const FeatureVector& feature,
                                     const ModelParams& params,
                                     const Eigen::MatrixXd& d_points) {
  DecodeTrace trace;
  decode_traced(feature, params, trace);
  return decode_backward_traced(trace, params, d_points);
}

PointCloud decode_traced(const FeatureVector& feature,
                         const ModelParams& params, DecodeTrace& trace) {
  if (feature.size() != params.config.feature_dim) {
    throw ShapeMismatch("decode: feature length != K");
  }
  trace.stack = nn::StackTrace{};
  const Eigen::MatrixXd flat =
      nn::stack_forward(params.decoder, feature.transpose(), &trace.stack);
  PointCloud out;
  const int m = params.config.decoder_points;
  out.points.resize(m);
  for (int i = 0; i < m; ++i) {
    out.points[i] = Eigen::Vector3d(flat(0, 3 * i), flat(0, 3 * i + 1),
                                    flat(0, 3 * i + 2));
  }
  return out;
}

DecodeBackwardResult decode_backward_traced(const DecodeTrace& trace,
                                            const ModelParams& params,
                                            const Eigen::MatrixXd& d_points) {
  const int m = params.config.decoder_points;
  if (d_points.rows() != m || d_points.cols() != 3) {
    throw ShapeMismatch("decode_backward: d_points must be M x 3");
  }
  Eigen::MatrixXd d_flat(1, 3 * m);
  for (int i = 0; i < m; ++i) {
    d_flat(0, 3 * i) = d_points(i, 0);
    d_flat(0, 3 * i + 1) = d_points(i, 1);
    d_flat(0, 3 * i + 2) = d_points(i, 2);
  }
  DecodeBackwardResult r;
  r.decoder_grads = nn::GradSet::zeros_like(params.decoder);
  const Eigen::MatrixXd d_in =
      nn::stack_backward(params.decoder, trace.stack, d_flat, r.decoder_grads);
  r.d_feature = d_in.row(0).transpose();
  return r;
}

void save_model(const ModelParams& params, const std::filesystem::path& path) {
  json meta;
  meta["feature_dim"] = params.config.feature_dim;
  meta["encoder_widths"] = params.config.encoder_widths;
  meta["decoder_widths"] = params.config.decoder_widths;
  meta["decoder_points"] = params.config.decoder_points;
  meta["leaky_slope"] = params.config.leaky_slope;
  meta["encoder_layers"] = params.encoder.layers.size();

  nn::ParamSet flat;
  flat.layers.reserve(params.encoder.layers.size() +
                      params.decoder.layers.size());
  for (const auto& l : params.encoder.layers) flat.layers.push_back(l);
  for (const auto& l : params.decoder.layers) flat.layers.push_back(l);
  nn::save_checkpoint(flat, meta.dump(), path);
}

ModelParams load_model(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ckpt.meta_json);
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("bad model meta: ") + e.what());
  }
  ModelParams p;
  p.config.feature_dim = meta.at("feature_dim").get<int>();
  p.config.encoder_widths = meta.at("encoder_widths").get<std::vector<int>>();
  p.config.decoder_widths = meta.at("decoder_widths").get<std::vector<int>>();
  p.config.decoder_points = meta.at("decoder_points").get<int>();
  p.config.leaky_slope = meta.at("leaky_slope").get<double>();
  const size_t n_enc = meta.at("encoder_layers").get<size_t>();
  if (n_enc > ckpt.params.layers.size()) {
    throw ParseError(0, "encoder layer count exceeds stored layers");
  }
  for (size_t i = 0; i < ckpt.params.layers.size(); ++i) {
    (i < n_enc ? p.encoder : p.decoder)
        .layers.push_back(ckpt.params.layers[i]);
  }
  return p;
}

std::uint64_t encode_forward_count() { return g_encode_count; }
void reset_encode_forward_count() { g_encode_count = 0; }

}  // namespace fmr
