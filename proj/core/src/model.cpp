#include "davots/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "davots/error.hpp"
#include "davots/parallel.hpp"

namespace davots::model {

using nlohmann::json;

std::string_view to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::global_average_pool: return "global_average_pool";
    case LayerKind::dense: return "dense";
    case LayerKind::softmax: return "softmax";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (auto k : {LayerKind::conv1d, LayerKind::relu, LayerKind::sigmoid, LayerKind::global_average_pool,
                 LayerKind::dense, LayerKind::softmax}) {
    if (to_string(k) == name) return k;
  }
  fail(ErrorKind::invalid_argument, "unknown layer kind '" + std::string(name) + "'");
}

namespace {

std::string layer_name(const ModelBundle& m, std::size_t k) {
  return "layer " + std::to_string(k) + " (" + std::string(to_string(m.layers[k].kind)) + ")";
}

std::vector<std::size_t> expected_weight_shape(const LayerSpec& spec, const Shape& in) {
  if (spec.kind == LayerKind::conv1d) return {spec.channels, in.channels, spec.kernel};
  if (spec.kind == LayerKind::dense) return {spec.units, in.size()};
  return {};
}

std::size_t product(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::vector<Shape> ModelBundle::shapes() const {
  if (input_length == 0) fail(ErrorKind::invalid_argument, "input length must be positive");
  if (params.size() != layers.size()) fail(ErrorKind::invalid_argument, "parameter list does not match layer list");
  std::vector<Shape> out;
  Shape cur{1, input_length};
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& spec = layers[k];
    switch (spec.kind) {
      case LayerKind::conv1d:
        if (spec.kernel < 1 || spec.channels < 1) fail(ErrorKind::invalid_argument, layer_name(*this, k) + ": kernel and channels must be >= 1");
        if (spec.kernel > cur.length) fail(ErrorKind::invalid_argument, layer_name(*this, k) + ": kernel longer than input");
        cur = {spec.channels, cur.length};
        break;
      case LayerKind::dense:
        if (spec.units < 1) fail(ErrorKind::invalid_argument, layer_name(*this, k) + ": units must be >= 1");
        cur = {spec.units, 1};
        break;
      case LayerKind::global_average_pool:
        cur = {cur.channels, 1};
        break;
      case LayerKind::relu:
      case LayerKind::sigmoid:
      case LayerKind::softmax:
        break;
    }
    out.push_back(cur);
  }
  return out;
}

void ModelBundle::validate() const {
  const auto out_shapes = shapes();
  if (layers.empty() || layers.back().kind != LayerKind::softmax) {
    fail(ErrorKind::invalid_argument, "final layer must be softmax");
  }
  if (out_shapes.back().size() != class_count) {
    fail(ErrorKind::invalid_argument, "final layer outputs " + std::to_string(out_shapes.back().size()) +
                                          " values, expected " + std::to_string(class_count));
  }
  for (std::size_t k = 0; k + 1 < layers.size(); ++k) {
    if (layers[k].kind == LayerKind::softmax) fail(ErrorKind::invalid_argument, "softmax must be the final layer");
  }
  Shape in{1, input_length};
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto expected = expected_weight_shape(layers[k], in);
    const auto& p = params[k];
    if (p.weight_shape != expected) {
      fail(ErrorKind::invalid_argument, layer_name(*this, k) + ": weight shape mismatch");
    }
    if (p.weight.size() != product(expected) * (expected.empty() ? 0 : 1)) {
      fail(ErrorKind::invalid_argument, layer_name(*this, k) + ": weight count mismatch");
    }
    const std::size_t bias_count = expected.empty() ? 0 : expected[0];
    if (p.bias.size() != bias_count) fail(ErrorKind::invalid_argument, layer_name(*this, k) + ": bias count mismatch");
    in = out_shapes[k];
  }
  if (capture_layer) {
    const std::size_t c = *capture_layer;
    if (c + 1 >= layers.size() || layers[c].kind != LayerKind::dense ||
        (layers[c + 1].kind != LayerKind::relu && layers[c + 1].kind != LayerKind::sigmoid)) {
      fail(ErrorKind::invalid_argument, "capture layer must be a dense layer followed by relu or sigmoid");
    }
  }
}

std::size_t ModelBundle::capture_width() const {
  if (!capture_layer) return 0;
  return layers.at(*capture_layer).units;
}

ActivationKind ModelBundle::capture_activation() const {
  if (!capture_layer) return ActivationKind::relu;
  return layers.at(*capture_layer + 1).kind == LayerKind::sigmoid ? ActivationKind::sigmoid : ActivationKind::relu;
}

std::size_t ModelBundle::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : params) total += p.weight.size() + p.bias.size();
  return total;
}

ModelBundle build_model(std::size_t input_length, std::size_t class_count, std::vector<LayerSpec> layers,
                        std::optional<std::size_t> capture_layer, std::uint64_t seed) {
  ModelBundle m;
  m.input_length = input_length;
  m.class_count = class_count;
  m.layers = std::move(layers);
  m.capture_layer = capture_layer;
  m.params.resize(m.layers.size());
  const auto out_shapes = m.shapes();

  Rng rng(seed);
  Shape in{1, input_length};
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const auto& spec = m.layers[k];
    auto& p = m.params[k];
    p.weight_shape = expected_weight_shape(spec, in);
    if (!p.weight_shape.empty()) {
      std::size_t fan_in = 0, fan_out = 0;
      if (spec.kind == LayerKind::conv1d) {
        fan_in = in.channels * spec.kernel;
        fan_out = spec.channels * spec.kernel;
      } else {
        fan_in = in.size();
        fan_out = spec.units;
      }
      const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      p.weight.resize(product(p.weight_shape));
      for (auto& w : p.weight) w = static_cast<float>(rng.uniform(-s, s));
      p.bias.assign(p.weight_shape[0], 0.0f);
    }
    in = out_shapes[k];
  }
  m.validate();
  return m;
}

ModelBundle build_default_model(std::size_t input_length, std::size_t class_count, std::uint64_t seed) {
  if (input_length < 16) {
    fail(ErrorKind::invalid_argument,
         "input length " + std::to_string(input_length) + " too short for the kernel chain (need >= 16)");
  }
  if (class_count < 1) fail(ErrorKind::invalid_argument, "class count must be >= 1");
  std::vector<LayerSpec> layers{
      LayerSpec::conv1d(8, 16), LayerSpec::relu(),       LayerSpec::conv1d(5, 32),
      LayerSpec::relu(),        LayerSpec::global_average_pool(), LayerSpec::dense(64),
      LayerSpec::relu(),        LayerSpec::dense(class_count),    LayerSpec::softmax(),
  };
  return build_model(input_length, class_count, std::move(layers), 5, seed);
}

namespace {

void conv_forward(const LayerParams& p, const Shape& in, std::span<const double> x, std::vector<double>& out) {
  const std::size_t co_n = p.weight_shape[0], ci_n = p.weight_shape[1], k = p.weight_shape[2];
  const std::size_t len = in.length;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  out.assign(co_n * len, 0.0);
  for (std::size_t co = 0; co < co_n; ++co) {
    double* o = out.data() + co * len;
    const double b = p.bias[co];
    for (std::size_t t = 0; t < len; ++t) o[t] = b;
    for (std::size_t ci = 0; ci < ci_n; ++ci) {
      const double* xi = x.data() + ci * len;
      const float* w = p.weight.data() + (co * ci_n + ci) * k;
      for (std::size_t j = 0; j < k; ++j) {
        const double wj = w[j];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
        const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
        const std::size_t t1 = shift > 0 ? len - static_cast<std::size_t>(shift) : len;
        for (std::size_t t = t0; t < t1; ++t) o[t] += wj * xi[static_cast<std::ptrdiff_t>(t) + shift];
      }
    }
  }
}

void conv_backward(const LayerParams& p, const Shape& in, std::span<const double> x, std::span<const double> g_out,
                   std::vector<double>& g_in, std::vector<double>* g_w, std::vector<double>* g_b) {
  const std::size_t co_n = p.weight_shape[0], ci_n = p.weight_shape[1], k = p.weight_shape[2];
  const std::size_t len = in.length;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  g_in.assign(ci_n * len, 0.0);
  for (std::size_t co = 0; co < co_n; ++co) {
    const double* go = g_out.data() + co * len;
    if (g_b) {
      double s = 0.0;
      for (std::size_t t = 0; t < len; ++t) s += go[t];
      (*g_b)[co] += s;
    }
    for (std::size_t ci = 0; ci < ci_n; ++ci) {
      const double* xi = x.data() + ci * len;
      double* gi = g_in.data() + ci * len;
      const std::size_t wbase = (co * ci_n + ci) * k;
      for (std::size_t j = 0; j < k; ++j) {
        const double wj = p.weight[wbase + j];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
        const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
        const std::size_t t1 = shift > 0 ? len - static_cast<std::size_t>(shift) : len;
        double gw = 0.0;
        for (std::size_t t = t0; t < t1; ++t) {
          const std::size_t src = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(t) + shift);
          gi[src] += wj * go[t];
          gw += go[t] * xi[src];
        }
        if (g_w) (*g_w)[wbase + j] += gw;
      }
    }
  }
}

void dense_forward(const LayerParams& p, std::span<const double> x, std::vector<double>& out) {
  const std::size_t units = p.weight_shape[0], inputs = p.weight_shape[1];
  out.assign(units, 0.0);
  for (std::size_t u = 0; u < units; ++u) {
    const float* w = p.weight.data() + u * inputs;
    double s = p.bias[u];
    for (std::size_t i = 0; i < inputs; ++i) s += static_cast<double>(w[i]) * x[i];
    out[u] = s;
  }
}

void dense_backward(const LayerParams& p, std::span<const double> x, std::span<const double> g_out,
                    std::vector<double>& g_in, std::vector<double>* g_w, std::vector<double>* g_b) {
  const std::size_t units = p.weight_shape[0], inputs = p.weight_shape[1];
  g_in.assign(inputs, 0.0);
  for (std::size_t u = 0; u < units; ++u) {
    const double g = g_out[u];
    if (g == 0.0) continue;
    const float* w = p.weight.data() + u * inputs;
    for (std::size_t i = 0; i < inputs; ++i) g_in[i] += static_cast<double>(w[i]) * g;
    if (g_w) {
      double* gw = g_w->data() + u * inputs;
      for (std::size_t i = 0; i < inputs; ++i) gw[i] += g * x[i];
    }
    if (g_b) (*g_b)[u] += g;
  }
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> p(z.size());
  if (z.empty()) return p;
  const double zmax = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += (p[i] = std::exp(z[i] - zmax));
  for (auto& v : p) v /= total;
  return p;
}

Trace run(const ModelBundle& m, std::span<const double> x) {
  if (x.size() != m.input_length) {
    fail(ErrorKind::invalid_argument, "shape mismatch: input has " + std::to_string(x.size()) +
                                          " values, model expects " + std::to_string(m.input_length));
  }
  const auto out_shapes = m.shapes();
  Trace trace;
  trace.outputs.reserve(m.layers.size() + 1);
  trace.outputs.emplace_back(x.begin(), x.end());
  Shape in{1, m.input_length};
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const auto& cur = trace.outputs.back();
    std::vector<double> out;
    switch (m.layers[k].kind) {
      case LayerKind::conv1d: conv_forward(m.params[k], in, cur, out); break;
      case LayerKind::dense: dense_forward(m.params[k], cur, out); break;
      case LayerKind::relu:
        out.resize(cur.size());
        for (std::size_t i = 0; i < cur.size(); ++i) out[i] = cur[i] > 0.0 ? cur[i] : 0.0;
        break;
      case LayerKind::sigmoid:
        out.resize(cur.size());
        for (std::size_t i = 0; i < cur.size(); ++i) out[i] = sigmoid(cur[i]);
        break;
      case LayerKind::global_average_pool:
        out.assign(in.channels, 0.0);
        for (std::size_t c = 0; c < in.channels; ++c) {
          double s = 0.0;
          for (std::size_t t = 0; t < in.length; ++t) s += cur[c * in.length + t];
          out[c] = s / static_cast<double>(in.length);
        }
        break;
      case LayerKind::softmax: out = softmax(cur); break;
    }
    trace.outputs.push_back(std::move(out));
    in = out_shapes[k];
  }
  return trace;
}

namespace {

// Index of the trace entry holding the pre-softmax logits.
std::size_t logits_slot(const ModelBundle& m) { return m.layers.size() - 1; }

}  // namespace

ForwardRecord forward(const ModelBundle& m, std::span<const double> x) {
  const Trace trace = run(m, x);
  ForwardRecord r;
  r.logits = trace.outputs[logits_slot(m)];
  r.probabilities = trace.outputs.back();
  if (m.capture_layer) r.captured_activations = trace.outputs[*m.capture_layer + 2];
  return r;
}

std::vector<double> logits(const ModelBundle& m, std::span<const double> x) {
  return run(m, x).outputs[logits_slot(m)];
}

std::size_t predicted_class(const ForwardRecord& record) {
  const auto& z = record.logits;
  return static_cast<std::size_t>(std::distance(z.begin(), std::max_element(z.begin(), z.end())));
}

std::vector<double> backward(const ModelBundle& m, const Trace& trace, std::span<const double> grad_logits,
                             ParamGrads* grads) {
  if (grad_logits.size() != m.class_count) fail(ErrorKind::invalid_argument, "gradient size mismatch at logits");
  const auto out_shapes = m.shapes();
  std::vector<double> g(grad_logits.begin(), grad_logits.end());
  std::vector<double> g_in;
  // softmax is the final layer; the incoming gradient already sits at its input
  for (std::size_t idx = m.layers.size() - 1; idx-- > 0;) {
    const auto& spec = m.layers[idx];
    const auto& x = trace.outputs[idx];
    const auto& y = trace.outputs[idx + 1];
    const Shape in = idx == 0 ? Shape{1, m.input_length} : out_shapes[idx - 1];
    auto* gw = grads ? &grads->weight[idx] : nullptr;
    auto* gb = grads ? &grads->bias[idx] : nullptr;
    switch (spec.kind) {
      case LayerKind::conv1d: conv_backward(m.params[idx], in, x, g, g_in, gw, gb); break;
      case LayerKind::dense: dense_backward(m.params[idx], x, g, g_in, gw, gb); break;
      case LayerKind::relu:
        g_in.resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) g_in[i] = x[i] > 0.0 ? g[i] : 0.0;
        break;
      case LayerKind::sigmoid:
        g_in.resize(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) g_in[i] = g[i] * y[i] * (1.0 - y[i]);
        break;
      case LayerKind::global_average_pool:
        g_in.assign(in.size(), 0.0);
        for (std::size_t c = 0; c < in.channels; ++c) {
          const double share = g[c] / static_cast<double>(in.length);
          for (std::size_t t = 0; t < in.length; ++t) g_in[c * in.length + t] = share;
        }
        break;
      case LayerKind::softmax: fail(ErrorKind::invalid_argument, "softmax must be the final layer");
    }
    std::swap(g, g_in);
  }
  return g;
}

std::vector<double> input_gradient(const ModelBundle& m, std::span<const double> x, std::size_t class_index) {
  if (class_index >= m.class_count) {
    fail(ErrorKind::invalid_argument, "class index " + std::to_string(class_index) + " out of range");
  }
  const Trace trace = run(m, x);
  std::vector<double> seed(m.class_count, 0.0);
  seed[class_index] = 1.0;
  return backward(m, trace, seed, nullptr);
}

namespace {

ParamGrads zero_grads(const ModelBundle& m) {
  ParamGrads g;
  g.weight.resize(m.params.size());
  g.bias.resize(m.params.size());
  for (std::size_t k = 0; k < m.params.size(); ++k) {
    g.weight[k].assign(m.params[k].weight.size(), 0.0);
    g.bias[k].assign(m.params[k].bias.size(), 0.0);
  }
  return g;
}

double cross_entropy(std::span<const double> z, std::size_t label) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - zmax);
  return zmax + std::log(total) - z[label];
}

}  // namespace

double accuracy(const ModelBundle& m, const std::vector<ingest::Sample>& samples) {
  if (samples.empty()) return 0.0;
  std::vector<unsigned char> correct(samples.size(), 0);
  parallel_for(samples.size(), [&](std::size_t i) {
    correct[i] = predicted_class(forward(m, samples[i].values)) == static_cast<std::size_t>(samples[i].label);
  });
  return static_cast<double>(std::count(correct.begin(), correct.end(), 1)) / static_cast<double>(samples.size());
}

TrainResult train(const ModelBundle& initial, const ingest::Dataset& d, const TrainConfig& cfg) {
  if (!d.has_stage(ingest::kTrain)) fail(ErrorKind::invalid_argument, "dataset has no train stage");
  if (cfg.batch_size == 0) fail(ErrorKind::invalid_argument, "batch size must be >= 1");
  if (!std::isfinite(cfg.learning_rate) || cfg.learning_rate < 0.0) {
    fail(ErrorKind::invalid_argument, "learning rate must be finite and non-negative");
  }
  initial.validate();
  if (d.series_length != initial.input_length || d.class_count != initial.class_count) {
    fail(ErrorKind::invalid_argument, "model shape does not match dataset");
  }
  const auto& samples = d.stage(ingest::kTrain);
  const std::vector<ingest::Sample>* test = d.has_stage(ingest::kTest) ? &d.stage(ingest::kTest) : nullptr;

  TrainResult result{initial, {}};
  ModelBundle& m = result.model;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(samples.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      // Per-sample gradients are summed in batch order so the result does not
      // depend on how parallel_for schedules the samples.
      std::vector<ParamGrads> per_sample(count);
      std::vector<double> losses(count, 0.0);
      parallel_for(count, [&](std::size_t b) {
        const auto& s = samples[order[start + b]];
        const Trace trace = run(m, s.values);
        const auto& z = trace.outputs[logits_slot(m)];
        const auto label = static_cast<std::size_t>(s.label);
        losses[b] = cross_entropy(z, label);
        std::vector<double> g = trace.outputs.back();
        g[label] -= 1.0;
        per_sample[b] = zero_grads(m);
        backward(m, trace, g, &per_sample[b]);
      });
      ParamGrads total = zero_grads(m);
      double batch_loss = 0.0;
      for (std::size_t b = 0; b < count; ++b) {
        batch_loss += losses[b];
        for (std::size_t k = 0; k < total.weight.size(); ++k) {
          for (std::size_t i = 0; i < total.weight[k].size(); ++i) total.weight[k][i] += per_sample[b].weight[k][i];
          for (std::size_t i = 0; i < total.bias[k].size(); ++i) total.bias[k][i] += per_sample[b].bias[k][i];
        }
      }
      if (!std::isfinite(batch_loss)) {
        fail(ErrorKind::compute, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batch_index));
      }
      loss_sum += batch_loss;
      const double step = cfg.learning_rate / static_cast<double>(count);
      if (step != 0.0) {
        for (std::size_t k = 0; k < m.params.size(); ++k) {
          auto& p = m.params[k];
          for (std::size_t i = 0; i < p.weight.size(); ++i) {
            p.weight[i] = static_cast<float>(static_cast<double>(p.weight[i]) - step * total.weight[k][i]);
          }
          for (std::size_t i = 0; i < p.bias.size(); ++i) {
            p.bias[i] = static_cast<float>(static_cast<double>(p.bias[i]) - step * total.bias[k][i]);
          }
        }
      }
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = samples.empty() ? 0.0 : loss_sum / static_cast<double>(samples.size());
    entry.train_acc = accuracy(m, samples);
    if (test) entry.test_acc = accuracy(m, *test);
    result.log.push_back(entry);
    if (cfg.on_epoch && !cfg.on_epoch(entry)) break;
  }
  return result;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,loss,train_acc,test_acc\n";
  for (const auto& e : log) {
    out << e.epoch << ',' << e.loss << ',' << e.train_acc << ',';
    if (e.test_acc) out << *e.test_acc;
    out << '\n';
  }
  return out.str();
}

Bytes save_weights(const ModelBundle& m) {
  m.validate();
  Bytes blob;
  json layers = json::array();
  for (std::size_t k = 0; k < m.layers.size(); ++k) {
    const auto& spec = m.layers[k];
    const auto& p = m.params[k];
    json entry{{"kind", to_string(spec.kind)}};
    if (spec.kind == LayerKind::conv1d) {
      entry["kernel"] = spec.kernel;
      entry["channels"] = spec.channels;
    }
    if (spec.kind == LayerKind::dense) entry["units"] = spec.units;
    if (!p.weight_shape.empty()) {
      entry["weight_shape"] = p.weight_shape;
      entry["weight_offset"] = blob.size();
      append_f32_le(blob, p.weight);
      entry["bias_shape"] = json::array({p.bias.size()});
      entry["bias_offset"] = blob.size();
      append_f32_le(blob, p.bias);
    }
    layers.push_back(std::move(entry));
  }
  json manifest{
      {"format", "davots-weights"},
      {"version", 1},
      {"dtype", "float32"},
      {"endianness", "little"},
      {"input_length", m.input_length},
      {"class_count", m.class_count},
      {"capture_layer", m.capture_layer ? json(*m.capture_layer) : json(nullptr)},
      {"blob_bytes", blob.size()},
      {"layers", std::move(layers)},
  };
  const std::string text = manifest.dump();
  Bytes out{'D', 'A', 'V', 'W'};
  append_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blob.begin(), blob.end());
  append_u32_le(out, crc32(blob));
  return out;
}

ModelBundle load_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "DAVW", 4) != 0) {
    fail(ErrorKind::integrity, "checksum error: weights file truncated or not a weights file");
  }
  const std::size_t manifest_len = read_u32_le(bytes.subspan(4, 4));
  if (8 + manifest_len + 4 > bytes.size()) {
    fail(ErrorKind::integrity, "checksum error: weights file truncated");
  }
  const auto blob = bytes.subspan(8 + manifest_len, bytes.size() - 8 - manifest_len - 4);
  const std::uint32_t stored_crc = read_u32_le(bytes.subspan(bytes.size() - 4, 4));
  if (crc32(blob) != stored_crc) fail(ErrorKind::integrity, "checksum error: CRC32 mismatch in weights blob");

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(manifest_len));
  } catch (const json::exception& e) {
    fail(ErrorKind::integrity, std::string("weights manifest is not valid JSON: ") + e.what());
  }
  try {
    if (manifest.at("format") != "davots-weights" || manifest.at("version") != 1) {
      fail(ErrorKind::integrity, "unsupported weights format");
    }
    if (manifest.at("blob_bytes").get<std::size_t>() != blob.size()) {
      fail(ErrorKind::integrity, "checksum error: blob size does not match manifest");
    }
    ModelBundle m;
    m.input_length = manifest.at("input_length").get<std::size_t>();
    m.class_count = manifest.at("class_count").get<std::size_t>();
    if (!manifest.at("capture_layer").is_null()) m.capture_layer = manifest["capture_layer"].get<std::size_t>();
    const auto& layers = manifest.at("layers");
    for (const auto& entry : layers) {
      LayerSpec spec;
      spec.kind = layer_kind_from_string(entry.at("kind").get<std::string>());
      if (spec.kind == LayerKind::conv1d) {
        spec.kernel = entry.at("kernel").get<std::size_t>();
        spec.channels = entry.at("channels").get<std::size_t>();
      }
      if (spec.kind == LayerKind::dense) spec.units = entry.at("units").get<std::size_t>();
      m.layers.push_back(spec);
    }
    m.params.resize(m.layers.size());
    const auto out_shapes = m.shapes();
    Shape in{1, m.input_length};
    for (std::size_t k = 0; k < m.layers.size(); ++k) {
      const auto& entry = layers[k];
      const auto expected = expected_weight_shape(m.layers[k], in);
      if (!expected.empty()) {
        auto shape = entry.at("weight_shape").get<std::vector<std::size_t>>();
        auto bias_shape = entry.at("bias_shape").get<std::vector<std::size_t>>();
        if (shape != expected || bias_shape != std::vector<std::size_t>{expected[0]}) {
          std::ostringstream msg;
          msg << "shape error in layer " << k << " (" << to_string(m.layers[k].kind) << "): manifest says [";
          for (std::size_t i = 0; i < shape.size(); ++i) msg << (i ? "," : "") << shape[i];
          msg << "], expected [";
          for (std::size_t i = 0; i < expected.size(); ++i) msg << (i ? "," : "") << expected[i];
          msg << "]";
          fail(ErrorKind::integrity, msg.str());
        }
        auto slice = [&](std::size_t offset, std::size_t count) {
          if (offset + 4 * count > blob.size()) {
            fail(ErrorKind::integrity, "shape error in layer " + std::to_string(k) + ": tensor exceeds blob");
          }
          return read_f32_le(blob.subspan(offset, 4 * count));
        };
        auto& p = m.params[k];
        p.weight_shape = expected;
        p.weight = slice(entry.at("weight_offset").get<std::size_t>(), product(expected));
        p.bias = slice(entry.at("bias_offset").get<std::size_t>(), expected[0]);
      }
      in = out_shapes[k];
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::integrity, std::string("malformed weights manifest: ") + e.what());
  }
}

std::string model_checksum(const ModelBundle& m) { return sha256_hex(save_weights(m)); }

}  // namespace davots::model
