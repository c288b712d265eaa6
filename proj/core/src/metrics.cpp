#include "davots/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "davots/error.hpp"
#include "davots/parallel.hpp"

namespace davots::metrics {

std::string_view to_string(DistanceKind kind) noexcept {
  switch (kind) {
    case DistanceKind::euclidean: return "euclidean";
    case DistanceKind::norm_euclidean: return "norm_euclidean";
    case DistanceKind::pearson: return "pearson";
  }
  return "unknown";
}

DistanceKind distance_kind_from_string(std::string_view name) {
  for (auto k : kAllKinds) {
    if (to_string(k) == name) return k;
  }
  fail(ErrorKind::invalid_argument, "unknown distance kind '" + std::string(name) + "'");
}

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    fail(ErrorKind::invalid_argument, "length mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
}

void check_finite(std::span<const double> v) {
  for (double e : v) {
    if (!std::isfinite(e)) fail(ErrorKind::invalid_argument, "non-finite input to distance");
  }
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double e : v) m = std::max(m, std::abs(e));
  return m;
}

constexpr double kFlat = 1e-12;

}  // namespace

double euclidean(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  check_finite(x);
  check_finite(y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double norm_euclidean(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  if (x.empty()) fail(ErrorKind::invalid_argument, "norm_euclidean needs at least one time point");
  check_finite(x);
  check_finite(y);
  const double mx = max_abs(x), my = max_abs(y);
  const double sx = mx < kFlat ? 1.0 : mx;
  const double sy = my < kFlat ? 1.0 : my;
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] / sx - y[i] / sy;
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(x.size()));
}

double pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  if (x.size() < 2) fail(ErrorKind::invalid_argument, "pearson needs at least two time points");
  check_finite(x);
  check_finite(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const bool flat_x = std::sqrt(sxx / n) < kFlat;
  const bool flat_y = std::sqrt(syy / n) < kFlat;
  if (flat_x && flat_y) return 0.0;
  if (flat_x || flat_y) return 1.0;
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  return 1.0 - r;
}

double distance(DistanceKind kind, std::span<const double> x, std::span<const double> y) {
  switch (kind) {
    case DistanceKind::euclidean: return euclidean(x, y);
    case DistanceKind::norm_euclidean: return norm_euclidean(x, y);
    case DistanceKind::pearson: return pearson(x, y);
  }
  fail(ErrorKind::invalid_argument, "unknown distance kind");
}

DistanceMatrix::DistanceMatrix(DistanceKind kind, std::size_t size)
    : kind_(kind), size_(size), values_(size < 2 ? 0 : size * (size - 1) / 2, 0.0f) {}

DistanceMatrix::DistanceMatrix(DistanceKind kind, std::size_t size, std::vector<float> condensed)
    : kind_(kind), size_(size), values_(std::move(condensed)) {
  if (values_.size() != (size < 2 ? 0 : size * (size - 1) / 2)) {
    fail(ErrorKind::invalid_argument, "condensed matrix has wrong length for size " + std::to_string(size));
  }
}

double DistanceMatrix::at(std::size_t i, std::size_t j) const {
  if (i == j) return 0.0;
  if (i > j) std::swap(i, j);
  return values_[offset(size_, i, j)];
}

void DistanceMatrix::set(std::size_t i, std::size_t j, float value) {
  if (i == j) return;
  if (i > j) std::swap(i, j);
  values_[offset(size_, i, j)] = value;
}

DistanceMatrix distance_matrix(std::span<const double> rows, std::size_t width, DistanceKind kind) {
  if (width == 0 || rows.size() % width != 0) fail(ErrorKind::invalid_argument, "ragged input to distance_matrix");
  const std::size_t m = rows.size() / width;
  if (m < 2) fail(ErrorKind::invalid_argument, "distance_matrix needs at least two rows");
  if (kind == DistanceKind::pearson && width < 2) {
    fail(ErrorKind::invalid_argument, "pearson needs at least two time points");
  }
  check_finite(rows);
  // per-row preprocessing; the pair loop repeats the exact arithmetic of distance()
  std::vector<double> prepared(rows.begin(), rows.end());
  std::vector<double> spread(m, 0.0);
  const double n = static_cast<double>(width);
  for (std::size_t i = 0; i < m; ++i) {
    auto r = std::span<double>(prepared).subspan(i * width, width);
    if (kind == DistanceKind::norm_euclidean) {
      const double mx = max_abs(r);
      const double sx = mx < kFlat ? 1.0 : mx;
      for (double& v : r) v /= sx;
    } else if (kind == DistanceKind::pearson) {
      double mean = 0.0;
      for (double v : r) mean += v;
      mean /= n;
      for (double& v : r) v -= mean;
      for (double v : r) spread[i] += v * v;
    }
  }
  auto row = [&](std::size_t i) { return std::span<const double>(prepared).subspan(i * width, width); };
  auto pair = [&](std::size_t i, std::size_t j) {
    const auto x = row(i), y = row(j);
    double s = 0.0;
    if (kind == DistanceKind::pearson) {
      const bool flat_x = std::sqrt(spread[i] / n) < kFlat;
      const bool flat_y = std::sqrt(spread[j] / n) < kFlat;
      if (flat_x && flat_y) return 0.0;
      if (flat_x || flat_y) return 1.0;
      for (std::size_t k = 0; k < width; ++k) s += x[k] * y[k];
      return 1.0 - std::clamp(s / std::sqrt(spread[i] * spread[j]), -1.0, 1.0);
    }
    for (std::size_t k = 0; k < width; ++k) {
      const double d = x[k] - y[k];
      s += d * d;
    }
    return kind == DistanceKind::norm_euclidean ? std::sqrt(s / n) : std::sqrt(s);
  };
  // one task per row i filling (i, j > i); each entry has a single writer
  std::vector<float> out(m * (m - 1) / 2);
  parallel_for(m - 1, [&](std::size_t i) {
    std::size_t pos = DistanceMatrix::offset(m, i, i + 1);
    for (std::size_t j = i + 1; j < m; ++j) {
      const double d = pair(i, j);
      if (!std::isfinite(d)) fail(ErrorKind::compute, "non-finite distance");
      out[pos++] = static_cast<float>(d);
    }
  });
  return DistanceMatrix(kind, m, std::move(out));
}

DistanceMatrix distance_matrix(const std::vector<std::vector<double>>& rows, DistanceKind kind) {
  if (rows.empty()) fail(ErrorKind::invalid_argument, "distance_matrix needs at least two rows");
  const std::size_t width = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * width);
  for (const auto& r : rows) {
    if (r.size() != width) fail(ErrorKind::invalid_argument, "ragged input to distance_matrix");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return distance_matrix(flat, width, kind);
}

Bytes serialize(const DistanceMatrix& dm) {
  const nlohmann::json manifest{{"artifact", "distance_matrix"},
                                {"kind", to_string(dm.kind())},
                                {"size", dm.size()},
                                {"dtype", "float32"},
                                {"endianness", "little"},
                                {"layout", "condensed-upper"}};
  const std::string text = manifest.dump();
  Bytes out;
  append_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  append_f32_le(out, dm.condensed());
  return out;
}

DistanceMatrix deserialize_distance_matrix(std::span<const std::uint8_t> bytes) {
  try {
    const std::size_t len = read_u32_le(bytes);
    if (4 + len > bytes.size()) fail(ErrorKind::integrity, "distance matrix artifact truncated");
    const auto manifest = nlohmann::json::parse(bytes.begin() + 4, bytes.begin() + 4 + static_cast<std::ptrdiff_t>(len));
    return DistanceMatrix(distance_kind_from_string(manifest.at("kind").get<std::string>()),
                          manifest.at("size").get<std::size_t>(), read_f32_le(bytes.subspan(4 + len)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::integrity, std::string("malformed distance matrix manifest: ") + e.what());
  }
}

}  // namespace davots::metrics
