#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "davots/codec.hpp"

namespace davots::metrics {

enum class DistanceKind { euclidean, norm_euclidean, pearson };

inline constexpr DistanceKind kAllKinds[] = {DistanceKind::euclidean, DistanceKind::norm_euclidean,
                                             DistanceKind::pearson};

std::string_view to_string(DistanceKind kind) noexcept;
DistanceKind distance_kind_from_string(std::string_view name);

double euclidean(std::span<const double> x, std::span<const double> y);

/// Each series is divided by its maximum absolute value (left as is when that
/// is below 1e-12), then the root mean squared difference is taken.
double norm_euclidean(std::span<const double> x, std::span<const double> y);

/// 1 - r. Both constant: 0; exactly one constant: 1.
double pearson(std::span<const double> x, std::span<const double> y);

double distance(DistanceKind kind, std::span<const double> x, std::span<const double> y);

/// Condensed upper-triangular pairwise distances, stored as float32.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  DistanceMatrix(DistanceKind kind, std::size_t size);
  DistanceMatrix(DistanceKind kind, std::size_t size, std::vector<float> condensed);

  DistanceKind kind() const { return kind_; }
  std::size_t size() const { return size_; }
  std::span<const float> condensed() const { return values_; }

  /// Position of (i, j), i < j, in the condensed array.
  static std::size_t offset(std::size_t size, std::size_t i, std::size_t j) {
    return i * size - i * (i + 1) / 2 + (j - i - 1);
  }
  /// Symmetric lookup; at(i, i) is 0.
  double at(std::size_t i, std::size_t j) const;
  void set(std::size_t i, std::size_t j, float value);

 private:
  DistanceKind kind_ = DistanceKind::euclidean;
  std::size_t size_ = 0;
  std::vector<float> values_;
};

/// Rows are stored row-major in `rows` with `width` values each.
DistanceMatrix distance_matrix(std::span<const double> rows, std::size_t width, DistanceKind kind);
DistanceMatrix distance_matrix(const std::vector<std::vector<double>>& rows, DistanceKind kind);

Bytes serialize(const DistanceMatrix& dm);
DistanceMatrix deserialize_distance_matrix(std::span<const std::uint8_t> bytes);

}  // namespace davots::metrics
