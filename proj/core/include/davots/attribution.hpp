#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "davots/ingest.hpp"
#include "davots/model.hpp"

namespace davots::attribution {

enum class Method { saliency, gradient_x_input, integrated_gradients, occlusion };

inline constexpr Method kAllMethods[] = {Method::saliency, Method::gradient_x_input, Method::integrated_gradients,
                                         Method::occlusion};

std::string_view to_string(Method method) noexcept;
/// Throws invalid_argument for unknown names.
Method method_from_string(std::string_view name);

struct Params {
  std::size_t ig_steps = 50;
  std::size_t occlusion_window = 8;
  std::size_t occlusion_stride = 1;
  double occlusion_fill = 0.0;

  /// Canonical text of the parameters that `method` actually uses; part of cache keys.
  std::string canonical(Method method) const;
  bool operator==(const Params&) const = default;
};

std::vector<double> saliency(const model::ModelBundle& m, std::span<const double> x);
std::vector<double> gradient_x_input(const model::ModelBundle& m, std::span<const double> x);

/// Midpoint Riemann approximation of the path integral from `baseline` to x,
/// targeting the predicted class at x. An empty baseline means all zeros.
std::vector<double> integrated_gradients(const model::ModelBundle& m, std::span<const double> x,
                                         std::span<const double> baseline = {}, std::size_t steps = 50);

/// Sliding-window occlusion: each window's logit drop is averaged onto the
/// time points it covers. Points covered by no window score 0.
std::vector<double> occlusion(const model::ModelBundle& m, std::span<const double> x, std::size_t window = 8,
                              std::size_t stride = 1, double fill = 0.0);

std::vector<double> attribute(const model::ModelBundle& m, std::span<const double> x, Method method,
                              const Params& params);

struct AttributionMatrix {
  Method method = Method::saliency;
  Params params;
  std::string stage;
  std::string target_policy = "predicted-class";
  std::size_t series_length = 0;
  /// Row-major scores, one row per sample in stage order, stored as float32.
  std::vector<float> values;

  std::size_t rows() const { return series_length ? values.size() / series_length : 0; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values).subspan(i * series_length, series_length);
  }
};

AttributionMatrix attribute_stage(const model::ModelBundle& m, const ingest::Dataset& d, std::string_view stage,
                                  Method method, const Params& params);

Bytes serialize(const AttributionMatrix& a);
AttributionMatrix deserialize_attribution(std::span<const std::uint8_t> bytes);

}  // namespace davots::attribution
