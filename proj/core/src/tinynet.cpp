#include "fmr/tinynet.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "fmr/cloud_io.hpp"
#include "fmr/errors.hpp"
#include "fmr/rng.hpp"
#include "json.hpp"

namespace fmr::nn {

using nlohmann::json;

std::string to_string(Activation act) {
  switch (act) {
    case Activation::None: return "none";
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky_relu";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "none") return Activation::None;
  if (name == "relu") return Activation::Relu;
  if (name == "leaky_relu") return Activation::LeakyRelu;
  throw InvalidArgument("unknown activation: " + name);
}

GradSet GradSet::zeros_like(const ParamSet& params) {
  GradSet g;
  g.layers.reserve(params.layers.size());
  for (const auto& l : params.layers) {
    g.layers.push_back({Eigen::MatrixXd::Zero(l.dense.out_dim(),
                                              l.dense.in_dim()),
                        Eigen::VectorXd::Zero(l.dense.out_dim())});
  }
  return g;
}

GradSet& GradSet::operator+=(const GradSet& other) {
  if (layers.size() != other.layers.size()) {
    throw ShapeMismatch("grad set layer count mismatch");
  }
  for (size_t i = 0; i < layers.size(); ++i) {
    layers[i].d_weight += other.layers[i].d_weight;
    layers[i].d_bias += other.layers[i].d_bias;
  }
  return *this;
}

GradSet& GradSet::operator*=(double s) {
  for (auto& l : layers) {
    l.d_weight *= s;
    l.d_bias *= s;
  }
  return *this;
}

bool GradSet::all_finite() const {
  for (const auto& l : layers) {
    if (!l.d_weight.allFinite() || !l.d_bias.allFinite()) return false;
  }
  return true;
}

DenseLayer init_dense(int out_dim, int in_dim, std::uint64_t seed) {
  Rng rng(seed);
  const double s = std::sqrt(1.0 / in_dim);
  DenseLayer layer;
  layer.weight.resize(out_dim, in_dim);
  for (int r = 0; r < out_dim; ++r) {
    for (int c = 0; c < in_dim; ++c) layer.weight(r, c) = rng.uniform(-s, s);
  }
  layer.bias = Eigen::VectorXd::Zero(out_dim);
  return layer;
}

Eigen::MatrixXd dense_forward(const DenseLayer& layer,
                              const Eigen::MatrixXd& x) {
  if (x.cols() != layer.in_dim()) {
    throw ShapeMismatch("dense_forward: input has " +
                        std::to_string(x.cols()) + " columns, layer expects " +
                        std::to_string(layer.in_dim()));
  }
  return (x * layer.weight.transpose()).rowwise() + layer.bias.transpose();
}

DenseGrads dense_backward(const DenseLayer& layer, const Eigen::MatrixXd& x,
                          const Eigen::MatrixXd& d_y) {
  if (x.cols() != layer.in_dim() || d_y.cols() != layer.out_dim() ||
      x.rows() != d_y.rows()) {
    throw ShapeMismatch("dense_backward: shape disagreement");
  }
  DenseGrads g;
  g.d_x = d_y * layer.weight;
  g.d_weight = d_y.transpose() * x;
  g.d_bias = d_y.colwise().sum().transpose();
  return g;
}

Eigen::MatrixXd activation_forward(Activation act, const Eigen::MatrixXd& x,
                                   double slope) {
  switch (act) {
    case Activation::None: return x;
    case Activation::Relu: return x.cwiseMax(0.0);
    case Activation::LeakyRelu:
      return x.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
  }
  return x;
}

Eigen::MatrixXd activation_backward(Activation act, const Eigen::MatrixXd& x,
                                    const Eigen::MatrixXd& d_y, double slope) {
  switch (act) {
    case Activation::None: return d_y;
    case Activation::Relu:
      return (x.array() >= 0.0).select(d_y, Eigen::MatrixXd::Zero(x.rows(),
                                                                  x.cols()));
    case Activation::LeakyRelu:
      return (x.array() >= 0.0).select(d_y, slope * d_y);
  }
  return d_y;
}

MaxPoolResult maxpool_points_forward(const Eigen::MatrixXd& x) {
  if (x.rows() < 1) throw ShapeMismatch("maxpool needs at least one row");
  MaxPoolResult r;
  const int cols = static_cast<int>(x.cols());
  r.pooled.resize(cols);
  r.argmax.resize(cols);
  for (int c = 0; c < cols; ++c) {
    int best = 0;
    double best_v = x(0, c);
    for (int i = 1; i < x.rows(); ++i) {
      if (x(i, c) > best_v) {  // strict: ties keep the lowest index
        best_v = x(i, c);
        best = i;
      }
    }
    r.pooled[c] = best_v;
    r.argmax[c] = best;
  }
  return r;
}

Eigen::MatrixXd maxpool_points_backward(const std::vector<int>& argmax,
                                        int n_rows,
                                        const Eigen::VectorXd& d_y) {
  if (static_cast<int>(argmax.size()) != d_y.size()) {
    throw ShapeMismatch("maxpool backward: argmax/d_y size mismatch");
  }
  Eigen::MatrixXd d_x = Eigen::MatrixXd::Zero(n_rows, d_y.size());
  for (int c = 0; c < d_y.size(); ++c) d_x(argmax[c], c) += d_y[c];
  return d_x;
}

Eigen::MatrixXd stack_forward(const ParamSet& params, const Eigen::MatrixXd& x,
                              StackTrace* trace) {
  Eigen::MatrixXd h = x;
  for (const auto& layer : params.layers) {
    if (trace) trace->inputs.push_back(h);
    Eigen::MatrixXd z = dense_forward(layer.dense, h);
    if (trace) trace->pre_act.push_back(z);
    h = activation_forward(layer.act, z, layer.slope);
  }
  return h;
}

Eigen::MatrixXd stack_backward(const ParamSet& params, const StackTrace& trace,
                               const Eigen::MatrixXd& d_y, GradSet& grads) {
  if (grads.layers.size() != params.layers.size()) {
    throw ShapeMismatch("stack_backward: grads not congruent with params");
  }
  Eigen::MatrixXd d = d_y;
  for (int i = static_cast<int>(params.layers.size()) - 1; i >= 0; --i) {
    const auto& layer = params.layers[i];
    d = activation_backward(layer.act, trace.pre_act[i], d, layer.slope);
    DenseGrads g = dense_backward(layer.dense, trace.inputs[i], d);
    grads.layers[i].d_weight += g.d_weight;
    grads.layers[i].d_bias += g.d_bias;
    d = std::move(g.d_x);
  }
  return d;
}

OptState OptState::zeros_like(const ParamSet& params) {
  OptState s;
  const GradSet z = GradSet::zeros_like(params);
  s.m = z.layers;
  s.v = z.layers;
  return s;
}

void opt_step(ParamSet& params, const GradSet& grads, OptState& state,
              const OptConfig& cfg) {
  if (cfg.lr <= 0.0) throw InvalidArgument("learning rate must be > 0");
  if (grads.layers.size() != params.layers.size() ||
      state.m.size() != params.layers.size()) {
    throw ShapeMismatch("opt_step: params/grads/state not congruent");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, state.step);
  const double bc2 = 1.0 - std::pow(cfg.beta2, state.step);
  for (size_t i = 0; i < params.layers.size(); ++i) {
    auto& w = params.layers[i].dense.weight;
    auto& b = params.layers[i].dense.bias;
    const auto& gw = grads.layers[i].d_weight;
    const auto& gb = grads.layers[i].d_bias;
    if (gw.rows() != w.rows() || gw.cols() != w.cols() ||
        gb.size() != b.size()) {
      throw ShapeMismatch("opt_step: gradient shape mismatch at layer " +
                          params.layers[i].name);
    }
    auto& mw = state.m[i].d_weight;
    auto& mb = state.m[i].d_bias;
    auto& vw = state.v[i].d_weight;
    auto& vb = state.v[i].d_bias;
    mw = cfg.beta1 * mw + (1.0 - cfg.beta1) * gw;
    mb = cfg.beta1 * mb + (1.0 - cfg.beta1) * gb;
    vw = cfg.beta2 * vw + (1.0 - cfg.beta2) * gw.cwiseProduct(gw);
    vb = cfg.beta2 * vb + (1.0 - cfg.beta2) * gb.cwiseProduct(gb);
    w -= cfg.lr *
         ((mw / bc1).array() / ((vw / bc2).cwiseSqrt().array() + cfg.epsilon))
             .matrix();
    b -= cfg.lr *
         ((mb / bc1).array() / ((vb / bc2).cwiseSqrt().array() + cfg.epsilon))
             .matrix();
  }
}

namespace {

constexpr char kMagic[8] = {'F', 'M', 'R', 'C', 'K', 'P', 'T', '1'};

void append_f64_le(std::string& buf, double v) {
  static_assert(std::endian::native == std::endian::little ||
                std::endian::native == std::endian::big);
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  if constexpr (std::endian::native == std::endian::big) {
    bits = __builtin_bswap64(bits);
  }
  char raw[8];
  std::memcpy(raw, &bits, 8);
  buf.append(raw, 8);
}

double read_f64_le(const char* p) {
  std::uint64_t bits;
  std::memcpy(&bits, p, 8);
  if constexpr (std::endian::native == std::endian::big) {
    bits = __builtin_bswap64(bits);
  }
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::uint32_t crc_of(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
            static_cast<uInt>(bytes.size())));
}

}  // namespace

void save_checkpoint(const ParamSet& params, const std::string& meta_json,
                     const std::filesystem::path& path) {
  json header;
  header["version"] = kCheckpointVersion;
  header["meta"] = meta_json.empty() ? json::object() : json::parse(meta_json);
  header["layers"] = json::array();
  for (const auto& l : params.layers) {
    header["layers"].push_back({{"name", l.name},
                                {"out", l.dense.out_dim()},
                                {"in", l.dense.in_dim()},
                                {"act", to_string(l.act)},
                                {"slope", l.slope}});
  }
  const std::string header_str = header.dump();

  std::string blob;
  blob.append(kMagic, 8);
  const std::uint32_t len = static_cast<std::uint32_t>(header_str.size());
  char len_le[4] = {static_cast<char>(len & 0xff),
                    static_cast<char>((len >> 8) & 0xff),
                    static_cast<char>((len >> 16) & 0xff),
                    static_cast<char>((len >> 24) & 0xff)};
  blob.append(len_le, 4);
  blob += header_str;
  for (const auto& l : params.layers) {
    for (int r = 0; r < l.dense.out_dim(); ++r) {
      for (int c = 0; c < l.dense.in_dim(); ++c) {
        append_f64_le(blob, l.dense.weight(r, c));
      }
    }
    for (int r = 0; r < l.dense.out_dim(); ++r) {
      append_f64_le(blob, l.dense.bias[r]);
    }
  }
  const std::uint32_t crc = crc_of(blob);
  char crc_le[4] = {static_cast<char>(crc & 0xff),
                    static_cast<char>((crc >> 8) & 0xff),
                    static_cast<char>((crc >> 16) & 0xff),
                    static_cast<char>((crc >> 24) & 0xff)};
  blob.append(crc_le, 4);

  atomic_write(path, [&](std::ostream& out) {
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  });
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::string blob((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());

  if (blob.size() < 12 || std::memcmp(blob.data(), kMagic, 8) != 0) {
    throw BadMagic("not a checkpoint file: " + path.string());
  }
  if (blob.size() < 16) throw ChecksumMismatch("truncated checkpoint");
  const std::string body = blob.substr(0, blob.size() - 4);
  const unsigned char* tail =
      reinterpret_cast<const unsigned char*>(blob.data() + blob.size() - 4);
  const std::uint32_t stored = static_cast<std::uint32_t>(tail[0]) |
                               (static_cast<std::uint32_t>(tail[1]) << 8) |
                               (static_cast<std::uint32_t>(tail[2]) << 16) |
                               (static_cast<std::uint32_t>(tail[3]) << 24);
  if (crc_of(body) != stored) {
    throw ChecksumMismatch("checkpoint CRC mismatch: " + path.string());
  }

  const unsigned char* lp =
      reinterpret_cast<const unsigned char*>(blob.data() + 8);
  const std::uint32_t header_len = static_cast<std::uint32_t>(lp[0]) |
                                   (static_cast<std::uint32_t>(lp[1]) << 8) |
                                   (static_cast<std::uint32_t>(lp[2]) << 16) |
                                   (static_cast<std::uint32_t>(lp[3]) << 24);
  if (12 + static_cast<size_t>(header_len) + 4 > blob.size()) {
    throw ChecksumMismatch("header length exceeds file size");
  }
  json header;
  try {
    header = json::parse(blob.substr(12, header_len));
  } catch (const json::exception& e) {
    throw ParseError(0, std::string("bad checkpoint header: ") + e.what());
  }
  if (!header.contains("version") ||
      header["version"].get<int>() != kCheckpointVersion) {
    throw VersionMismatch("checkpoint format version not supported");
  }

  Checkpoint ckpt;
  ckpt.meta_json = header.value("meta", json::object()).dump();
  size_t off = 12 + header_len;
  for (const auto& jl : header["layers"]) {
    LayerDef l;
    l.name = jl.at("name").get<std::string>();
    const int out = jl.at("out").get<int>();
    const int in = jl.at("in").get<int>();
    l.act = activation_from_string(jl.at("act").get<std::string>());
    l.slope = jl.at("slope").get<double>();
    const size_t need = static_cast<size_t>(out) * in * 8 + out * 8;
    if (off + need + 4 > blob.size()) {
      throw ChecksumMismatch("tensor data truncated");
    }
    l.dense.weight.resize(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) {
        l.dense.weight(r, c) = read_f64_le(blob.data() + off);
        off += 8;
      }
    }
    l.dense.bias.resize(out);
    for (int r = 0; r < out; ++r) {
      l.dense.bias[r] = read_f64_le(blob.data() + off);
      off += 8;
    }
    ckpt.params.layers.push_back(std::move(l));
  }
  if (off + 4 != blob.size()) {
    throw ChecksumMismatch("trailing bytes after tensor data");
  }
  return ckpt;
}

}  // namespace fmr::nn
