// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rmies/config.hpp"
#include "rmies/spectrum.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rmies::nn {

/// Logistic function, elementwise.
template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  return Scalar(1) / (Scalar(1) + (-z).exp());
}

struct LayerParams {
  Matrix weights;  // out x in
  Vector bias;     // out

  Index in_dim() const { return weights.cols(); }
  Index out_dim() const { return weights.rows(); }
  static LayerParams zeros(Index in, Index out) { return {Matrix::Zero(out, in), Vector::Zero(out)}; }
};

enum class Optimizer { sgd, adam };
std::string to_string(Optimizer o);
/// ConfigError on an unknown name.
Optimizer parse_optimizer(const std::string& name);

/// Hidden layers are sigmoid, the output layer is linear.
struct NetworkConfig {
  std::vector<Index> layer_sizes{426, 256, 128, 256, 426};
  double contraction_lambda = 1e-3;
  double dropout_p = 0.5;              // used by MC-dropout inference
  bool dropout_in_training = false;
  Optimizer optimizer = Optimizer::adam;
  double learning_rate = 1e-3;         // finetuning
  double pretrain_learning_rate = 1e-2;
  int epochs_pretrain = 10;
  int epochs_finetune = 60;
  Index batch_size = 32;
  double output_ridge = 1e-4;          // least-squares output init, relative to n
  std::uint64_t seed = 1;

  Index input_dim() const { return layer_sizes.front(); }
  Index output_dim() const { return layer_sizes.back(); }
  Index hidden_layers() const { return static_cast<Index>(layer_sizes.size()) - 2; }
  /// ConfigError unless there are >= 1 hidden layers, input == output size and
  /// every hyper-parameter is in range.
  void validate() const;

  /// Reads the `[network]` section, falling back to the defaults above.
  static NetworkConfig from_config(const KeyValueConfig& cfg);
  void to_config(KeyValueConfig& cfg) const;
};

struct Provenance {
  bool pretrained = false;
  bool finetuned = false;
  std::string pretrain_fingerprint;
  std::string finetune_fingerprint;
};

struct ModelParameters {
  std::vector<LayerParams> layers;
  NetworkConfig config;
  Provenance provenance;

  Index input_dim() const { return layers.front().in_dim(); }
  Index output_dim() const { return layers.back().out_dim(); }
  /// True once the linear output layer exists.
  bool complete() const { return static_cast<Index>(layers.size()) == config.hidden_layers() + 1; }
  /// FormatError on broken layer chaining or non-finite parameters.
  void validate() const;
};

/// Glorot-uniform weights (+-sqrt(6 / (fan_in + fan_out))), zero biases, for
/// every layer including the output.
ModelParameters init_network(const NetworkConfig& cfg);

/// Deterministic inference: sigmoid hidden layers, linear output. The
/// DimensionError checks happen here rather than at load time.
Vector forward(const ModelParameters& model, const Eigen::Ref<const Vector>& x);
Spectrum forward(const ModelParameters& model, const Spectrum& x);
/// forward() with each hidden activation multiplied by its mask. All-ones
/// masks reproduce forward() bit for bit (same code path).
Vector forward_masked(const ModelParameters& model, const Eigen::Ref<const Vector>& x, const std::vector<Vector>& masks);
/// Column-wise forward pass over a bands x n batch.
Matrix forward_batch(const ModelParameters& model, const Eigen::Ref<const Matrix>& x);

/// Activations after every layer for a batch; element 0 is the input.
std::vector<Matrix> forward_trace(const ModelParameters& model, const Eigen::Ref<const Matrix>& x,
                                  const std::vector<Matrix>* hidden_masks = nullptr);

enum class Loss {
  rmse,         // sqrt(mean over batch and outputs of (y - t)^2)
  sum_squared,  // sum over batch and outputs of (y - t)^2
};

double loss_value(const ModelParameters& model, const Eigen::Ref<const Matrix>& x,
                  const Eigen::Ref<const Matrix>& targets, Loss loss);

struct Gradients {
  std::vector<LayerParams> layers;

  double squared_norm() const;
  Gradients& operator+=(const Gradients& other);
};

/// Exact gradient of `loss` with respect to every weight and bias. With
/// `hidden_masks` (one 0/scale matrix per hidden layer, inverted dropout)
/// the masked network is differentiated.
Gradients backprop_gradients(const ModelParameters& model, const Eigen::Ref<const Matrix>& x,
                             const Eigen::Ref<const Matrix>& targets, Loss loss,
                             const std::vector<Matrix>* hidden_masks = nullptr);

// ---- contractive autoencoder ------------------------------------------------

struct CaeOptions {
  double lambda = 1e-3;
  int epochs = 10;
  double learning_rate = 0.01;
  Index batch_size = 32;
  std::uint64_t seed = 1;
  Optimizer optimizer = Optimizer::sgd;
};

struct CaeLoss {
  double reconstruction = 0.0;  // mean ||x - dec(enc(x))||^2
  double penalty = 0.0;         // mean ||J_enc(x)||_F^2, before lambda
  double total(double lambda) const { return reconstruction + lambda * penalty; }
};

/// Sigmoid encoder h = s(W x + b), linear decoder r = V h + c.
CaeLoss cae_loss(const LayerParams& encoder, const LayerParams& decoder, const Eigen::Ref<const Matrix>& x);

struct CaeGradients {
  LayerParams encoder;
  LayerParams decoder;
};

/// Gradient of mean(reconstruction) + lambda * mean(penalty) over the batch.
CaeGradients cae_gradients(const LayerParams& encoder, const LayerParams& decoder, const Eigen::Ref<const Matrix>& x,
                           double lambda);

struct CaeResult {
  LayerParams encoder;
  LayerParams decoder;
  std::vector<double> loss_trace;  // total loss on the training set, before epoch 1 and after each epoch
};

/// Minibatch gradient descent on one autoencoder layer. `inputs` is in_dim x n.
CaeResult cae_pretrain_layer(const Eigen::Ref<const Matrix>& inputs, Index in_dim, Index hid_dim,
                             const CaeOptions& opts);

/// Raw (uncorrected) spectra only. The type exists so pretraining cannot be
/// handed corrected targets by accident.
class RawSpectra {
 public:
  explicit RawSpectra(SpectraMatrix raw) : raw_(std::move(raw)) {}
  static RawSpectra of(const LabeledDataset& ds) { return RawSpectra(ds.raw); }
  const SpectraMatrix& matrix() const { return raw_; }

 private:
  SpectraMatrix raw_;
};

/// Layer-wise CAE pretraining of every hidden layer; layer l + 1 is trained
/// on the encodings of layer l. Decoders are dropped. The result holds the
/// encoder stack only (no output layer) and has provenance.pretrained set.
ModelParameters stack_pretrain(const RawSpectra& raw, const NetworkConfig& cfg,
                               std::vector<std::vector<double>>* loss_traces = nullptr);

/// Supervised regression from raw to corrected spectra with the RMSE loss.
/// A model without an output layer (or one not finetuned before) gets its
/// output layer from a least-squares fit of the targets on the last hidden
/// activations. `cfg.epochs_finetune == 0` returns the model unchanged apart
/// from provenance.
ModelParameters finetune_regression(const ModelParameters& model, const LabeledDataset& data,
                                    const NetworkConfig& cfg, std::vector<double>* loss_trace = nullptr);

/// Hex fingerprint of a matrix's shape and bytes.
std::string fingerprint(const Eigen::Ref<const Matrix>& m);

// ---- persistence --------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

std::string model_to_json(const ModelParameters& model);
/// FormatError on a wrong format tag or version, missing fields, or layer
/// dimensions that disagree with the stored arrays.
ModelParameters model_from_json(const std::string& text);
void save_model(const ModelParameters& model, const std::filesystem::path& path);
ModelParameters load_model(const std::filesystem::path& path);

}  // namespace rmies::nn
