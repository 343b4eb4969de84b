// SPDX-License-Identifier: Apache-2.0
#include "rmies/network.hpp"

#include "rmies/io.hpp"
#include "rmies/random.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <numeric>

namespace rmies::nn {

using json = nlohmann::json;

std::string to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer parse_optimizer(const std::string& name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "adam") return Optimizer::adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

void NetworkConfig::validate() const {
  if (layer_sizes.size() < 3) throw ConfigError("network: need input, >= 1 hidden and output layer sizes");
  for (Index s : layer_sizes) {
    if (s < 1) throw ConfigError("network: layer sizes must be >= 1");
  }
  if (input_dim() != output_dim()) throw ConfigError("network: input and output sizes must both equal the grid length");
  if (!(contraction_lambda >= 0.0)) throw ConfigError("network: contraction_lambda must be >= 0");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("network: dropout_p must lie in [0, 1)");
  if (!(learning_rate > 0.0) || !(pretrain_learning_rate > 0.0)) throw ConfigError("network: learning rates must be > 0");
  if (epochs_pretrain < 0 || epochs_finetune < 0) throw ConfigError("network: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("network: batch_size must be >= 1");
  if (!(output_ridge >= 0.0)) throw ConfigError("network: output_ridge must be >= 0");
}

NetworkConfig NetworkConfig::from_config(const KeyValueConfig& cfg) {
  NetworkConfig out;
  const std::string s = "network";
  std::vector<double> sizes(out.layer_sizes.begin(), out.layer_sizes.end());
  sizes = cfg.get_list(s, "layer_sizes", sizes);
  out.layer_sizes.clear();
  for (double v : sizes) {
    if (v != std::floor(v)) throw ConfigError("network.layer_sizes must be integers");
    out.layer_sizes.push_back(static_cast<Index>(v));
  }
  out.contraction_lambda = cfg.get_double(s, "contraction_lambda", out.contraction_lambda);
  out.dropout_p = cfg.get_double(s, "dropout_p", out.dropout_p);
  out.dropout_in_training = cfg.get_bool(s, "dropout_in_training", out.dropout_in_training);
  out.learning_rate = cfg.get_double(s, "learning_rate", out.learning_rate);
  out.pretrain_learning_rate = cfg.get_double(s, "pretrain_learning_rate", out.pretrain_learning_rate);
  out.epochs_pretrain = static_cast<int>(cfg.get_int(s, "epochs_pretrain", out.epochs_pretrain));
  out.epochs_finetune = static_cast<int>(cfg.get_int(s, "epochs_finetune", out.epochs_finetune));
  out.batch_size = static_cast<Index>(cfg.get_int(s, "batch_size", out.batch_size));
  out.output_ridge = cfg.get_double(s, "output_ridge", out.output_ridge);
  if (auto v = cfg.get(s, "optimizer")) out.optimizer = parse_optimizer(*v);
  out.seed = static_cast<std::uint64_t>(cfg.get_int(s, "seed", static_cast<long long>(out.seed)));
  out.validate();
  return out;
}

void NetworkConfig::to_config(KeyValueConfig& cfg) const {
  const std::string s = "network";
  std::string sizes;
  for (Index v : layer_sizes) sizes += (sizes.empty() ? "" : " ") + std::to_string(v);
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  cfg.set(s, "layer_sizes", sizes);
  cfg.set(s, "contraction_lambda", num(contraction_lambda));
  cfg.set(s, "dropout_p", num(dropout_p));
  cfg.set(s, "dropout_in_training", dropout_in_training ? "true" : "false");
  cfg.set(s, "learning_rate", num(learning_rate));
  cfg.set(s, "pretrain_learning_rate", num(pretrain_learning_rate));
  cfg.set(s, "epochs_pretrain", std::to_string(epochs_pretrain));
  cfg.set(s, "epochs_finetune", std::to_string(epochs_finetune));
  cfg.set(s, "batch_size", std::to_string(batch_size));
  cfg.set(s, "output_ridge", num(output_ridge));
  cfg.set(s, "optimizer", to_string(optimizer));
  cfg.set(s, "seed", std::to_string(seed));
}

void ModelParameters::validate() const {
  if (layers.empty()) throw FormatError("model has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerParams& p = layers[l];
    if (p.bias.size() != p.out_dim()) throw FormatError("layer " + std::to_string(l) + ": bias length mismatch");
    if (l > 0 && p.in_dim() != layers[l - 1].out_dim()) {
      throw FormatError("layer " + std::to_string(l) + ": input size does not chain with previous layer");
    }
    if (!p.weights.allFinite() || !p.bias.allFinite()) {
      throw FormatError("layer " + std::to_string(l) + ": non-finite parameters");
    }
  }
  if (static_cast<Index>(layers.size()) > config.hidden_layers() + 1) throw FormatError("model has more layers than its config");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].in_dim() != config.layer_sizes[l] || layers[l].out_dim() != config.layer_sizes[l + 1]) {
      throw FormatError("layer " + std::to_string(l) + ": dimensions disagree with layer_sizes");
    }
  }
}

namespace {

LayerParams glorot(Index in, Index out, Rng& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(in + out));
  LayerParams p = LayerParams::zeros(in, out);
  // column-major fill order is part of the reproducibility contract
  for (Index j = 0; j < in; ++j) {
    for (Index i = 0; i < out; ++i) p.weights(i, j) = rng.uniform(-r, r);
  }
  return p;
}

bool is_hidden(const ModelParameters& m, std::size_t l) {
  return static_cast<Index>(l) < m.config.hidden_layers();
}

}  // namespace

ModelParameters init_network(const NetworkConfig& cfg) {
  cfg.validate();
  ModelParameters m;
  m.config = cfg;
  for (std::size_t l = 0; l + 1 < cfg.layer_sizes.size(); ++l) {
    Rng rng(derive_seed(cfg.seed, streams::kInit, l));
    m.layers.push_back(glorot(cfg.layer_sizes[l], cfg.layer_sizes[l + 1], rng));
  }
  return m;
}

namespace {

Vector forward_impl(const ModelParameters& model, const Eigen::Ref<const Vector>& x, const std::vector<Vector>* masks) {
  if (x.size() != model.input_dim()) {
    throw DimensionError("forward: input length " + std::to_string(x.size()) + " but model expects " +
                         std::to_string(model.input_dim()));
  }
  Vector a = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const LayerParams& p = model.layers[l];
    Vector z = p.weights * a + p.bias;
    if (is_hidden(model, l)) {
      a = sigmoid(z.array()).matrix();
      if (masks) a.array() *= (*masks)[l].array();
    } else {
      a = std::move(z);
    }
  }
  return a;
}

}  // namespace

Vector forward(const ModelParameters& model, const Eigen::Ref<const Vector>& x) { return forward_impl(model, x, nullptr); }

Vector forward_masked(const ModelParameters& model, const Eigen::Ref<const Vector>& x, const std::vector<Vector>& masks) {
  if (static_cast<Index>(masks.size()) != model.config.hidden_layers()) {
    throw DimensionError("forward_masked: need one mask per hidden layer");
  }
  for (std::size_t l = 0; l < masks.size(); ++l) {
    if (masks[l].size() != model.layers[l].out_dim()) throw DimensionError("forward_masked: mask length mismatch");
  }
  return forward_impl(model, x, &masks);
}

Spectrum forward(const ModelParameters& model, const Spectrum& x) {
  if (x.size() != model.input_dim() || model.output_dim() != x.size()) {
    throw DimensionError("forward: spectrum grid length " + std::to_string(x.size()) + " does not match model (" +
                         std::to_string(model.input_dim()) + " -> " + std::to_string(model.output_dim()) + ")");
  }
  return Spectrum(x.grid_ptr(), forward(model, x.absorbance()));
}

namespace {

// Post-activation values per layer; `sigma` (when given) receives the
// unmasked sigmoid outputs of the hidden layers.
std::vector<Matrix> trace(const ModelParameters& model, const Eigen::Ref<const Matrix>& x,
                          const std::vector<Matrix>* hidden_masks, std::vector<Matrix>* sigma) {
  if (x.rows() != model.input_dim()) throw DimensionError("forward: input rows do not match model input size");
  std::vector<Matrix> acts;
  acts.reserve(model.layers.size() + 1);
  acts.emplace_back(x);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const LayerParams& p = model.layers[l];
    Matrix z = p.weights * acts.back();
    z.colwise() += p.bias;
    if (is_hidden(model, l)) {
      z = sigmoid(z.array()).matrix();
      if (hidden_masks) {
        if (sigma) sigma->push_back(z);
        z.array() *= (*hidden_masks)[l].array();
      }
    }
    acts.push_back(std::move(z));
  }
  return acts;
}

}  // namespace

std::vector<Matrix> forward_trace(const ModelParameters& model, const Eigen::Ref<const Matrix>& x,
                                  const std::vector<Matrix>* hidden_masks) {
  return trace(model, x, hidden_masks, nullptr);
}

Matrix forward_batch(const ModelParameters& model, const Eigen::Ref<const Matrix>& x) {
  return std::move(forward_trace(model, x).back());
}

namespace {

void check_targets(const ModelParameters& model, const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& t) {
  if (t.rows() != model.output_dim() || t.cols() != x.cols()) throw DimensionError("targets do not match the batch");
}

double loss_from_output(const Matrix& y, const Eigen::Ref<const Matrix>& t, Loss loss) {
  const double sse = (y - t).squaredNorm();
  if (loss == Loss::sum_squared) return sse;
  return std::sqrt(sse / static_cast<double>(y.size()));
}

}  // namespace

double loss_value(const ModelParameters& model, const Eigen::Ref<const Matrix>& x,
                  const Eigen::Ref<const Matrix>& targets, Loss loss) {
  check_targets(model, x, targets);
  return loss_from_output(forward_batch(model, x), targets, loss);
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& g : layers) s += g.weights.squaredNorm() + g.bias.squaredNorm();
  return s;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.layers.size() != layers.size()) throw DimensionError("gradient structures differ");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weights += other.layers[l].weights;
    layers[l].bias += other.layers[l].bias;
  }
  return *this;
}

Gradients backprop_gradients(const ModelParameters& model, const Eigen::Ref<const Matrix>& x,
                             const Eigen::Ref<const Matrix>& targets, Loss loss,
                             const std::vector<Matrix>* hidden_masks) {
  check_targets(model, x, targets);
  std::vector<Matrix> sigma;
  const std::vector<Matrix> acts = trace(model, x, hidden_masks, &sigma);
  const Matrix& y = acts.back();
  Matrix delta = y - targets;
  if (loss == Loss::sum_squared) {
    delta *= 2.0;
  } else {
    const double value = loss_from_output(y, targets, Loss::rmse);
    // sqrt is not differentiable at 0; the minimum is stationary there.
    delta *= value > 0.0 ? 1.0 / (static_cast<double>(y.size()) * value) : 0.0;
  }
  Gradients g;
  g.layers.resize(model.layers.size());
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    g.layers[l].weights.noalias() = delta * acts[l].transpose();
    g.layers[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Matrix back = model.layers[l].weights.transpose() * delta;
    if (hidden_masks) {
      const auto s = sigma[l - 1].array();
      delta = (back.array() * (*hidden_masks)[l - 1].array() * s * (1.0 - s)).matrix();
    } else {
      delta = (back.array() * acts[l].array() * (1.0 - acts[l].array())).matrix();
    }
  }
  return g;
}

// ---- contractive autoencoder ------------------------------------------------

namespace {

struct CaeForward {
  Matrix h;  // hid x n
  Matrix e;  // reconstruction error, in x n
};

CaeForward cae_forward(const LayerParams& enc, const LayerParams& dec, const Eigen::Ref<const Matrix>& x) {
  if (x.rows() != enc.in_dim() || dec.in_dim() != enc.out_dim() || dec.out_dim() != enc.in_dim()) {
    throw ConfigError("cae: encoder/decoder/input dimensions disagree");
  }
  CaeForward f;
  Matrix z = enc.weights * x;
  z.colwise() += enc.bias;
  f.h = sigmoid(z.array()).matrix();
  f.e = dec.weights * f.h;
  f.e.colwise() += dec.bias;
  f.e -= x;
  return f;
}

}  // namespace

CaeLoss cae_loss(const LayerParams& encoder, const LayerParams& decoder, const Eigen::Ref<const Matrix>& x) {
  const CaeForward f = cae_forward(encoder, decoder, x);
  const auto n = static_cast<double>(x.cols());
  const Vector w = encoder.weights.rowwise().squaredNorm();
  const Matrix s2 = (f.h.array() * (1.0 - f.h.array())).square().matrix();
  return {f.e.squaredNorm() / n, (s2.transpose() * w).sum() / n};
}

CaeGradients cae_gradients(const LayerParams& encoder, const LayerParams& decoder, const Eigen::Ref<const Matrix>& x,
                           double lambda) {
  const CaeForward f = cae_forward(encoder, decoder, x);
  const auto n = static_cast<double>(x.cols());
  const Eigen::ArrayXXd s = f.h.array() * (1.0 - f.h.array());
  const Vector w = encoder.weights.rowwise().squaredNorm();

  CaeGradients g;
  const Matrix d_out = (2.0 / n) * f.e;
  g.decoder.weights.noalias() = d_out * f.h.transpose();
  g.decoder.bias = d_out.rowwise().sum();

  Matrix dz = ((decoder.weights.transpose() * d_out).array() * s).matrix();
  if (lambda != 0.0) {
    // d/dz_j of w_j s_j^2 is 2 w_j s_j^2 (1 - 2 h_j)
    const Eigen::ArrayXXd s2 = s.square();
    dz.array() += (2.0 * lambda / n) * ((s2 * (1.0 - 2.0 * f.h.array())).colwise() * w.array());
    g.encoder.weights.noalias() = dz * x.transpose();
    g.encoder.weights += (2.0 * lambda / n) * (s2.matrix().rowwise().sum().asDiagonal() * encoder.weights);
  } else {
    g.encoder.weights.noalias() = dz * x.transpose();
  }
  g.encoder.bias = dz.rowwise().sum();
  return g;
}

namespace {

std::vector<Index> shuffled_order(Index n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(derive_seed(seed, streams::kShuffle, epoch));
  rng.shuffle(order);
  return order;
}

Matrix gather(const Eigen::Ref<const Matrix>& m, const std::vector<Index>& order, std::size_t begin, std::size_t end) {
  Matrix out(m.rows(), static_cast<Index>(end - begin));
  for (std::size_t k = begin; k < end; ++k) out.col(static_cast<Index>(k - begin)) = m.col(order[k]);
  return out;
}

// Per-layer parameter update: plain gradient descent, or Adam
// (beta1 = 0.9, beta2 = 0.999, eps = 1e-8) with bias correction.
class Updater {
 public:
  Updater(Optimizer kind, double lr) : kind_(kind), lr_(lr) {}

  void step(std::size_t slot, LayerParams& p, const LayerParams& g) {
    if (kind_ == Optimizer::sgd) {
      p.weights -= lr_ * g.weights;
      p.bias -= lr_ * g.bias;
      return;
    }
    if (slot >= state_.size()) state_.resize(slot + 1);
    State& s = state_[slot];
    if (s.mw.size() == 0) {
      s.mw = Matrix::Zero(g.weights.rows(), g.weights.cols());
      s.vw = s.mw;
      s.mb = Vector::Zero(g.bias.size());
      s.vb = s.mb;
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(s.t));
    auto apply = [&](auto& param, auto& m, auto& v, const auto& grad) {
      m = kBeta1 * m + (1.0 - kBeta1) * grad;
      v = kBeta2 * v + (1.0 - kBeta2) * grad.cwiseAbs2();
      param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + kEps);
    };
    apply(p.weights, s.mw, s.vw, g.weights);
    apply(p.bias, s.mb, s.vb, g.bias);
  }

 private:
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  struct State {
    Matrix mw, vw;
    Vector mb, vb;
    long t = 0;
  };
  Optimizer kind_;
  double lr_;
  std::vector<State> state_;
};

}  // namespace

CaeResult cae_pretrain_layer(const Eigen::Ref<const Matrix>& inputs, Index in_dim, Index hid_dim,
                             const CaeOptions& opts) {
  if (inputs.rows() != in_dim) throw ConfigError("cae: in_dim does not match input rows");
  if (hid_dim < 1 || inputs.cols() < 1) throw ConfigError("cae: need hid_dim >= 1 and at least one example");
  if (!(opts.lambda >= 0.0)) throw ConfigError("cae: lambda must be >= 0");
  if (opts.epochs < 0 || opts.batch_size < 1 || !(opts.learning_rate > 0.0)) throw ConfigError("cae: invalid options");

  CaeResult r;
  Rng rng(derive_seed(opts.seed, streams::kInit, 0));
  r.encoder = glorot(in_dim, hid_dim, rng);
  r.decoder = glorot(hid_dim, in_dim, rng);
  r.loss_trace.push_back(cae_loss(r.encoder, r.decoder, inputs).total(opts.lambda));
  const Index n = inputs.cols();
  Updater updater(opts.optimizer, opts.learning_rate);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    const auto order = shuffled_order(n, opts.seed, static_cast<std::uint64_t>(epoch));
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(opts.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(opts.batch_size));
      const Matrix batch = gather(inputs, order, b, e);
      const CaeGradients g = cae_gradients(r.encoder, r.decoder, batch, opts.lambda);
      updater.step(0, r.encoder, g.encoder);
      updater.step(1, r.decoder, g.decoder);
    }
    r.loss_trace.push_back(cae_loss(r.encoder, r.decoder, inputs).total(opts.lambda));
  }
  return r;
}

std::string fingerprint(const Eigen::Ref<const Matrix>& m) {
  const std::int64_t dims[2] = {m.rows(), m.cols()};
  std::uint64_t h = fnv1a(dims, sizeof dims);
  for (Index j = 0; j < m.cols(); ++j) h = fnv1a(m.col(j).data(), static_cast<std::size_t>(m.rows()) * sizeof(double), h);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ModelParameters stack_pretrain(const RawSpectra& raw, const NetworkConfig& cfg,
                               std::vector<std::vector<double>>* loss_traces) {
  cfg.validate();
  const SpectraMatrix& x = raw.matrix();
  if (x.rows() != cfg.input_dim()) throw ConfigError("stack_pretrain: spectra length does not match the input layer");
  ModelParameters m;
  m.config = cfg;
  Matrix level = x;
  for (Index l = 0; l < cfg.hidden_layers(); ++l) {
    const auto ul = static_cast<std::size_t>(l);
    CaeOptions opts{cfg.contraction_lambda, cfg.epochs_pretrain, cfg.pretrain_learning_rate, cfg.batch_size,
                    derive_seed(cfg.seed, streams::kPretrain, ul), cfg.optimizer};
    CaeResult r = cae_pretrain_layer(level, cfg.layer_sizes[ul], cfg.layer_sizes[ul + 1], opts);
    Matrix next = r.encoder.weights * level;
    next.colwise() += r.encoder.bias;
    level = sigmoid(next.array()).matrix();
    m.layers.push_back(std::move(r.encoder));
    if (loss_traces) loss_traces->push_back(std::move(r.loss_trace));
  }
  m.provenance.pretrained = true;
  m.provenance.pretrain_fingerprint = fingerprint(x);
  return m;
}

namespace {

// Output layer from ridge-regularised least squares on the hidden
// activations H: min ||W H + b - T||^2 + ridge * n * ||W||^2 (bias unpenalised).
LayerParams least_squares_output(const Matrix& hidden, const Matrix& targets, double ridge) {
  const Index n = hidden.cols();
  const Index h = hidden.rows();
  const Index extra = ridge > 0.0 ? h : 0;
  Matrix design = Matrix::Zero(n + extra, h + 1);
  design.topLeftCorner(n, h) = hidden.transpose();
  design.col(h).head(n).setOnes();
  Matrix rhs = Matrix::Zero(n + extra, targets.rows());
  rhs.topRows(n) = targets.transpose();
  if (extra > 0) design.bottomLeftCorner(h, h).diagonal().setConstant(std::sqrt(ridge * static_cast<double>(n)));
  const Matrix sol = design.colPivHouseholderQr().solve(rhs);
  return {sol.topRows(h).transpose(), sol.row(h).transpose()};
}

std::vector<Matrix> dropout_masks(const ModelParameters& m, Index cols, double p, std::uint64_t seed) {
  std::vector<Matrix> masks;
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - p);
  for (Index l = 0; l < m.config.hidden_layers(); ++l) {
    Matrix mask(m.layers[static_cast<std::size_t>(l)].out_dim(), cols);
    for (Index j = 0; j < cols; ++j) {
      for (Index i = 0; i < mask.rows(); ++i) mask(i, j) = rng.bernoulli(p) ? 0.0 : keep_scale;
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

}  // namespace

ModelParameters finetune_regression(const ModelParameters& model, const LabeledDataset& data,
                                    const NetworkConfig& cfg, std::vector<double>* loss_trace) {
  cfg.validate();
  data.validate();
  if (!data.corrected) throw ConfigError("finetune: dataset has no corrected targets");
  if (data.raw.rows() != cfg.input_dim()) throw ConfigError("finetune: spectra length does not match the input layer");
  if (model.layers.empty()) throw ConfigError("finetune: model has no layers");
  if (model.config.layer_sizes != cfg.layer_sizes) throw ConfigError("finetune: model architecture differs from config");
  ModelParameters out = model;
  out.config = cfg;
  out.provenance.finetuned = true;
  out.provenance.finetune_fingerprint = fingerprint(data.raw) + fingerprint(*data.corrected);
  if (cfg.epochs_finetune == 0) return out;

  const Matrix& x = data.raw;
  const Matrix& t = *data.corrected;
  if (!out.complete() || !model.provenance.finetuned) {
    ModelParameters encoder = out;
    if (encoder.complete()) encoder.layers.pop_back();
    Matrix hidden = x;
    for (const LayerParams& p : encoder.layers) {
      Matrix z = p.weights * hidden;
      z.colwise() += p.bias;
      hidden = sigmoid(z.array()).matrix();
    }
    LayerParams head = least_squares_output(hidden, t, cfg.output_ridge);
    if (out.complete()) {
      out.layers.back() = std::move(head);
    } else {
      if (static_cast<Index>(out.layers.size()) != cfg.hidden_layers()) {
        throw ConfigError("finetune: partial model must hold every hidden layer");
      }
      out.layers.push_back(std::move(head));
    }
  }
  out.validate();

  if (loss_trace) loss_trace->push_back(loss_value(out, x, t, Loss::rmse));
  const Index n = x.cols();
  Updater updater(cfg.optimizer, cfg.learning_rate);
  for (int epoch = 0; epoch < cfg.epochs_finetune; ++epoch) {
    const auto ue = static_cast<std::uint64_t>(epoch);
    const auto order = shuffled_order(n, cfg.seed, ue);
    std::uint64_t batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const Matrix xb = gather(x, order, b, e);
      const Matrix tb = gather(t, order, b, e);
      Gradients g;
      if (cfg.dropout_in_training && cfg.dropout_p > 0.0) {
        const auto masks = dropout_masks(out, xb.cols(), cfg.dropout_p,
                                         derive_seed(cfg.seed, streams::kDropout, ue * 1000003ull + batch_index));
        g = backprop_gradients(out, xb, tb, Loss::rmse, &masks);
      } else {
        g = backprop_gradients(out, xb, tb, Loss::rmse);
      }
      for (std::size_t l = 0; l < out.layers.size(); ++l) updater.step(l, out.layers[l], g.layers[l]);
    }
    if (loss_trace) loss_trace->push_back(loss_value(out, x, t, Loss::rmse));
  }
  return out;
}

// ---- persistence --------------------------------------------------------------

namespace {

json config_json(const NetworkConfig& c) {
  return {{"layer_sizes", c.layer_sizes},
          {"hidden_activation", "sigmoid"},
          {"output_activation", "linear"},
          {"contraction_lambda", c.contraction_lambda},
          {"dropout_p", c.dropout_p},
          {"dropout_in_training", c.dropout_in_training},
          {"learning_rate", c.learning_rate},
          {"pretrain_learning_rate", c.pretrain_learning_rate},
          {"epochs_pretrain", c.epochs_pretrain},
          {"epochs_finetune", c.epochs_finetune},
          {"batch_size", c.batch_size},
          {"output_ridge", c.output_ridge},
          {"optimizer", to_string(c.optimizer)},
          {"seed", c.seed}};
}

NetworkConfig config_from_json(const json& j) {
  NetworkConfig c;
  c.layer_sizes = j.at("layer_sizes").get<std::vector<Index>>();
  if (j.at("hidden_activation") != "sigmoid" || j.at("output_activation") != "linear") {
    throw FormatError("model: unsupported activation");
  }
  c.contraction_lambda = j.at("contraction_lambda").get<double>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.dropout_in_training = j.at("dropout_in_training").get<bool>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.pretrain_learning_rate = j.at("pretrain_learning_rate").get<double>();
  c.epochs_pretrain = j.at("epochs_pretrain").get<int>();
  c.epochs_finetune = j.at("epochs_finetune").get<int>();
  c.batch_size = j.at("batch_size").get<Index>();
  c.output_ridge = j.at("output_ridge").get<double>();
  try {
    c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

std::string model_to_json(const ModelParameters& model) {
  model.validate();
  json layers = json::array();
  for (const LayerParams& p : model.layers) {
    std::vector<double> w(static_cast<std::size_t>(p.weights.size()));
    // row-major: weights[i * in + j] = W(i, j)
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(), p.out_dim(),
                                                                                       p.in_dim()) = p.weights;
    layers.push_back({{"in", p.in_dim()},
                      {"out", p.out_dim()},
                      {"weights", w},
                      {"bias", std::vector<double>(p.bias.data(), p.bias.data() + p.bias.size())}});
  }
  json doc = {{"format", "rmies-surrogate"},
              {"version", kModelFormatVersion},
              {"config", config_json(model.config)},
              {"provenance",
               {{"pretrained", model.provenance.pretrained},
                {"finetuned", model.provenance.finetuned},
                {"pretrain_fingerprint", model.provenance.pretrain_fingerprint},
                {"finetune_fingerprint", model.provenance.finetune_fingerprint}}},
              {"layers", layers}};
  return doc.dump(1) + "\n";
}

ModelParameters model_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.at("format") != "rmies-surrogate") throw FormatError("model: unknown format tag");
    if (doc.at("version").get<int>() != kModelFormatVersion) {
      throw FormatError("model: unsupported format version " + doc.at("version").dump());
    }
    ModelParameters m;
    m.config = config_from_json(doc.at("config"));
    const json& pv = doc.at("provenance");
    m.provenance.pretrained = pv.at("pretrained").get<bool>();
    m.provenance.finetuned = pv.at("finetuned").get<bool>();
    m.provenance.pretrain_fingerprint = pv.at("pretrain_fingerprint").get<std::string>();
    m.provenance.finetune_fingerprint = pv.at("finetune_fingerprint").get<std::string>();
    for (const json& jl : doc.at("layers")) {
      const auto in = jl.at("in").get<Index>();
      const auto out = jl.at("out").get<Index>();
      const auto w = jl.at("weights").get<std::vector<double>>();
      const auto b = jl.at("bias").get<std::vector<double>>();
      if (in < 1 || out < 1 || static_cast<Index>(w.size()) != in * out || static_cast<Index>(b.size()) != out) {
        throw FormatError("model: layer dimension fields do not match the stored arrays");
      }
      LayerParams p;
      p.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(), out, in);
      p.bias = Eigen::Map<const Vector>(b.data(), out);
      m.layers.push_back(std::move(p));
    }
    try {
      m.config.validate();
    } catch (const ConfigError& e) {
      throw FormatError(std::string("model: invalid config: ") + e.what());
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: malformed document: ") + e.what());
  }
}

void save_model(const ModelParameters& model, const std::filesystem::path& path) {
  io::write_text_file(path, model_to_json(model));
}

ModelParameters load_model(const std::filesystem::path& path) { return model_from_json(io::read_text_file(path)); }

}  // namespace rmies::nn
