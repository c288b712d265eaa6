#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "davots/codec.hpp"
#include "davots/ingest.hpp"

namespace davots::model {

enum class LayerKind { conv1d, relu, sigmoid, global_average_pool, dense, softmax };

std::string_view to_string(LayerKind kind) noexcept;
LayerKind layer_kind_from_string(std::string_view name);

/// One layer of a 1D CNN. Convolutions use stride 1 and zero "same" padding
/// (left pad (k-1)/2), so every time step keeps its index.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t kernel = 0;    // conv1d only
  std::size_t channels = 0;  // conv1d only
  std::size_t units = 0;     // dense only

  static LayerSpec conv1d(std::size_t kernel, std::size_t channels) {
    return {LayerKind::conv1d, kernel, channels, 0};
  }
  static LayerSpec dense(std::size_t units) { return {LayerKind::dense, 0, 0, units}; }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec sigmoid() { return {LayerKind::sigmoid}; }
  static LayerSpec global_average_pool() { return {LayerKind::global_average_pool}; }
  static LayerSpec softmax() { return {LayerKind::softmax}; }

  bool has_parameters() const { return kind == LayerKind::conv1d || kind == LayerKind::dense; }
  bool operator==(const LayerSpec&) const = default;
};

/// Activation tensor shape: channels x length. Dense outputs have length 1.
struct Shape {
  std::size_t channels = 0;
  std::size_t length = 0;
  std::size_t size() const { return channels * length; }
  bool operator==(const Shape&) const = default;
};

/// Weights are stored as float32; all arithmetic runs in double.
struct LayerParams {
  std::vector<std::size_t> weight_shape;  // conv: {out, in, k}; dense: {units, inputs}
  std::vector<float> weight;
  std::vector<float> bias;
};

enum class ActivationKind { relu, sigmoid };

struct ModelBundle {
  std::size_t input_length = 0;
  std::size_t class_count = 0;
  std::vector<LayerSpec> layers;
  std::vector<LayerParams> params;  // one entry per layer, empty for parameter-free layers
  /// Index of the hidden dense layer whose post-activation output is exported.
  std::optional<std::size_t> capture_layer;

  /// Output shape of every layer, validating the chain. Throws invalid_argument.
  std::vector<Shape> shapes() const;
  void validate() const;
  std::size_t capture_width() const;
  ActivationKind capture_activation() const;
  std::size_t parameter_count() const;
};

struct ForwardRecord {
  std::vector<double> probabilities;
  std::vector<double> captured_activations;
  std::vector<double> logits;
};

/// Per-layer outputs of one forward pass; outputs[0] is the input and
/// outputs[k + 1] is the output of layer k.
struct Trace {
  std::vector<std::vector<double>> outputs;
};

ModelBundle build_default_model(std::size_t input_length, std::size_t class_count, std::uint64_t seed);

/// Builds a model from an explicit layer list with the default initializer.
ModelBundle build_model(std::size_t input_length, std::size_t class_count, std::vector<LayerSpec> layers,
                        std::optional<std::size_t> capture_layer, std::uint64_t seed);

Trace run(const ModelBundle& m, std::span<const double> x);
ForwardRecord forward(const ModelBundle& m, std::span<const double> x);
std::vector<double> logits(const ModelBundle& m, std::span<const double> x);
std::size_t predicted_class(const ForwardRecord& record);

/// d logit[class_index] / d x via reverse mode.
std::vector<double> input_gradient(const ModelBundle& m, std::span<const double> x, std::size_t class_index);

/// Gradients of every parameter, laid out like ModelBundle::params.
struct ParamGrads {
  std::vector<std::vector<double>> weight;
  std::vector<std::vector<double>> bias;
};

/// Backpropagates `grad_logits` through the network recorded in `trace`.
/// Returns the input gradient; accumulates into `grads` when given.
std::vector<double> backward(const ModelBundle& m, const Trace& trace, std::span<const double> grad_logits,
                             ParamGrads* grads);

std::vector<double> softmax(std::span<const double> logits);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  /// Called after every epoch; returning false stops training early.
  std::function<bool(const struct EpochLog&)> on_epoch;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean cross-entropy over the epoch's samples
  double train_acc = 0.0;
  std::optional<double> test_acc;
  bool operator==(const EpochLog&) const = default;
};

struct TrainResult {
  ModelBundle model;
  std::vector<EpochLog> log;
};

/// Plain minibatch SGD on cross-entropy. Deterministic given the model, the
/// dataset and cfg.
TrainResult train(const ModelBundle& m, const ingest::Dataset& d, const TrainConfig& cfg);

double accuracy(const ModelBundle& m, const std::vector<ingest::Sample>& samples);

/// CSV with header `epoch,loss,train_acc,test_acc`.
std::string training_log_csv(const std::vector<EpochLog>& log);

/// Manifest-plus-blob weights format:
///   "DAVW" | u32 manifest length | manifest JSON | float32 LE blob | u32 CRC32(blob)
Bytes save_weights(const ModelBundle& m);
ModelBundle load_weights(std::span<const std::uint8_t> bytes);

/// SHA-256 of the serialized weights; identifies a model in cache keys.
std::string model_checksum(const ModelBundle& m);

}  // namespace davots::model
