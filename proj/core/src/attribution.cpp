#include "davots/attribution.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "davots/error.hpp"
#include "davots/parallel.hpp"

namespace davots::attribution {

using nlohmann::json;

std::string_view to_string(Method method) noexcept {
  switch (method) {
    case Method::saliency: return "saliency";
    case Method::gradient_x_input: return "gradient_x_input";
    case Method::integrated_gradients: return "integrated_gradients";
    case Method::occlusion: return "occlusion";
  }
  return "unknown";
}

Method method_from_string(std::string_view name) {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  fail(ErrorKind::invalid_argument, "unknown attribution method '" + std::string(name) + "'");
}

std::string Params::canonical(Method method) const {
  switch (method) {
    case Method::integrated_gradients: return "steps=" + std::to_string(ig_steps) + ";baseline=zero";
    case Method::occlusion: {
      char fill[64];
      std::snprintf(fill, sizeof fill, "%.17g", occlusion_fill);
      return "window=" + std::to_string(occlusion_window) + ";stride=" + std::to_string(occlusion_stride) +
             ";fill=" + fill;
    }
    default: return "";
  }
}

namespace {

std::size_t target_class(const model::ModelBundle& m, std::span<const double> x) {
  return model::predicted_class(model::forward(m, x));
}

}  // namespace

std::vector<double> saliency(const model::ModelBundle& m, std::span<const double> x) {
  auto g = model::input_gradient(m, x, target_class(m, x));
  for (auto& v : g) v = std::abs(v);
  return g;
}

std::vector<double> gradient_x_input(const model::ModelBundle& m, std::span<const double> x) {
  auto g = model::input_gradient(m, x, target_class(m, x));
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= x[i];
  return g;
}

std::vector<double> integrated_gradients(const model::ModelBundle& m, std::span<const double> x,
                                         std::span<const double> baseline, std::size_t steps) {
  if (steps < 1) fail(ErrorKind::invalid_argument, "integrated gradients needs steps >= 1");
  const std::size_t n = x.size();
  std::vector<double> base(n, 0.0);
  if (!baseline.empty()) {
    if (baseline.size() != n) fail(ErrorKind::invalid_argument, "baseline length mismatch");
    base.assign(baseline.begin(), baseline.end());
  }
  const std::size_t target = target_class(m, x);
  std::vector<double> sum(n, 0.0), point(n);
  for (std::size_t t = 1; t <= steps; ++t) {
    const double alpha = (static_cast<double>(t) - 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < n; ++i) point[i] = base[i] + alpha * (x[i] - base[i]);
    const auto g = model::input_gradient(m, point, target);
    for (std::size_t i = 0; i < n; ++i) sum[i] += g[i];
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (x[i] - base[i]) * (sum[i] / static_cast<double>(steps));
  return out;
}

std::vector<double> occlusion(const model::ModelBundle& m, std::span<const double> x, std::size_t window,
                              std::size_t stride, double fill) {
  const std::size_t n = x.size();
  if (window < 1 || window > n) {
    fail(ErrorKind::invalid_argument, "occlusion window " + std::to_string(window) + " must be in [1, " +
                                          std::to_string(n) + "]");
  }
  if (stride < 1) fail(ErrorKind::invalid_argument, "occlusion stride must be >= 1");
  const auto reference = model::logits(m, x);
  const std::size_t target = static_cast<std::size_t>(
      std::distance(reference.begin(), std::max_element(reference.begin(), reference.end())));
  std::vector<double> total(n, 0.0);
  std::vector<std::size_t> hits(n, 0);
  std::vector<double> occluded(x.begin(), x.end());
  for (std::size_t start = 0; start + window <= n; start += stride) {
    for (std::size_t i = start; i < start + window; ++i) occluded[i] = fill;
    const double drop = reference[target] - model::logits(m, occluded)[target];
    for (std::size_t i = start; i < start + window; ++i) {
      total[i] += drop;
      ++hits[i];
      occluded[i] = x[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (hits[i]) total[i] /= static_cast<double>(hits[i]);
  }
  return total;
}

std::vector<double> attribute(const model::ModelBundle& m, std::span<const double> x, Method method,
                              const Params& params) {
  switch (method) {
    case Method::saliency: return saliency(m, x);
    case Method::gradient_x_input: return gradient_x_input(m, x);
    case Method::integrated_gradients: return integrated_gradients(m, x, {}, params.ig_steps);
    case Method::occlusion:
      return occlusion(m, x, params.occlusion_window, params.occlusion_stride, params.occlusion_fill);
  }
  fail(ErrorKind::invalid_argument, "unknown attribution method");
}

AttributionMatrix attribute_stage(const model::ModelBundle& m, const ingest::Dataset& d, std::string_view stage,
                                  Method method, const Params& params) {
  const auto& samples = d.stage(stage);
  AttributionMatrix a;
  a.method = method;
  a.params = params;
  a.stage = std::string(stage);
  a.series_length = d.series_length;
  a.values.assign(samples.size() * d.series_length, 0.0f);
  parallel_for(samples.size(), [&](std::size_t i) {
    const auto row = attribute(m, samples[i].values, method, params);
    for (std::size_t t = 0; t < row.size(); ++t) {
      const double v = row[t];
      if (!std::isfinite(v)) {
        fail(ErrorKind::compute, "non-finite attribution for sample " + std::to_string(i));
      }
      a.values[i * a.series_length + t] = static_cast<float>(v);
    }
  });
  return a;
}

Bytes serialize(const AttributionMatrix& a) {
  json manifest{
      {"artifact", "attribution"},
      {"method", to_string(a.method)},
      {"params", a.params.canonical(a.method)},
      {"ig_steps", a.params.ig_steps},
      {"occlusion_window", a.params.occlusion_window},
      {"occlusion_stride", a.params.occlusion_stride},
      {"occlusion_fill", a.params.occlusion_fill},
      {"stage", a.stage},
      {"target_policy", a.target_policy},
      {"rows", a.rows()},
      {"series_length", a.series_length},
      {"dtype", "float32"},
      {"endianness", "little"},
  };
  const std::string text = manifest.dump();
  Bytes out;
  append_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  append_f32_le(out, a.values);
  return out;
}

AttributionMatrix deserialize_attribution(std::span<const std::uint8_t> bytes) {
  try {
    const std::size_t len = read_u32_le(bytes);
    if (4 + len > bytes.size()) fail(ErrorKind::integrity, "attribution artifact truncated");
    const json manifest = json::parse(bytes.begin() + 4, bytes.begin() + 4 + static_cast<std::ptrdiff_t>(len));
    AttributionMatrix a;
    a.method = method_from_string(manifest.at("method").get<std::string>());
    a.params.ig_steps = manifest.at("ig_steps").get<std::size_t>();
    a.params.occlusion_window = manifest.at("occlusion_window").get<std::size_t>();
    a.params.occlusion_stride = manifest.at("occlusion_stride").get<std::size_t>();
    a.params.occlusion_fill = manifest.at("occlusion_fill").get<double>();
    a.stage = manifest.at("stage").get<std::string>();
    a.target_policy = manifest.at("target_policy").get<std::string>();
    a.series_length = manifest.at("series_length").get<std::size_t>();
    a.values = read_f32_le(bytes.subspan(4 + len));
    if (a.values.size() != manifest.at("rows").get<std::size_t>() * a.series_length) {
      fail(ErrorKind::integrity, "attribution blob size does not match manifest");
    }
    return a;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::integrity, std::string("malformed attribution manifest: ") + e.what());
  }
}

}  // namespace davots::attribution
