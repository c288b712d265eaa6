#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "davots/attribution.hpp"
#include "davots/codec.hpp"
#include "davots/hclust.hpp"
#include "davots/ingest.hpp"
#include "davots/model.hpp"

namespace davots::vizdata {

/// Column groups in display order, left to right.
enum class Group { raw, raw_hist, activations, act_hist, attributions, attr_hist, prediction };

inline constexpr std::size_t kGroupCount = 7;
inline constexpr Group kAllGroups[kGroupCount] = {Group::raw,          Group::raw_hist,  Group::activations,
                                                  Group::act_hist,     Group::attributions, Group::attr_hist,
                                                  Group::prediction};
inline constexpr std::size_t kDefaultBins = 32;

std::string_view to_string(Group group) noexcept;
Group group_from_string(std::string_view name);

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct ColorScaleSpec {
  enum class Kind { diverging, sequential };
  Kind kind = Kind::sequential;
  double lo = 0.0;
  double mid = 0.5;  // diverging only
  double hi = 1.0;
  Rgb low;
  Rgb middle;  // diverging only
  Rgb high;

  static ColorScaleSpec sequential(double lo, double hi, Rgb low, Rgb high);
  static ColorScaleSpec diverging(double lo, double mid, double hi, Rgb low, Rgb middle, Rgb high);

  void validate() const;
  /// Maps a data value into [0, 1]; diverging scales put `mid` at exactly 0.5.
  /// Values outside the domain are clamped.
  double normalize(double value) const;
  /// Linear RGB interpolation between the anchors at normalized position t.
  Rgb color(double t) const;
  bool operator==(const ColorScaleSpec&) const = default;
};

std::string_view to_string(ColorScaleSpec::Kind kind) noexcept;

struct ColumnGroupSpec {
  Group name = Group::raw;
  std::size_t width = 0;
  ColorScaleSpec scale;
  bool operator==(const ColumnGroupSpec&) const = default;
};

using Scales = std::array<ColorScaleSpec, kGroupCount>;

/// Stage-wide magnitudes that fix the scale domains.
struct DataStats {
  double max_abs_raw = 0.0;
  double max_activation = 0.0;
  double max_abs_attribution = 0.0;
};

DataStats compute_stats(const std::vector<ingest::Sample>& samples, const std::vector<model::ForwardRecord>& records,
                        const attribution::AttributionMatrix& attributions);

Scales default_scales(const DataStats& stats, model::ActivationKind activation);

struct Histogram {
  std::vector<std::size_t> counts;
  std::vector<double> normalized;  // counts / max count, all zero when empty
};

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi);

struct SliceRow {
  std::size_t position = 0;  // position within the ordering
  std::size_t index = 0;     // stable sample index
  int label = 0;
  std::array<std::vector<float>, kGroupCount> groups;  // normalized to [0, 1]
  bool operator==(const SliceRow&) const = default;
};

struct PixelMatrixSlice {
  std::string ordering_id;
  hclust::OrderingSource source;
  std::string attribution_method;
  std::size_t offset = 0;
  std::size_t total = 0;  // sample count of the stage
  std::array<ColumnGroupSpec, kGroupCount> groups;
  std::vector<SliceRow> rows;

  std::size_t row_width() const;
};

struct SliceInputs {
  const ingest::Dataset& dataset;
  std::string_view stage;
  const std::vector<model::ForwardRecord>& records;  // stage order
  const attribution::AttributionMatrix& attributions;
  const hclust::Ordering& ordering;
  const Scales& scales;
  std::size_t bins = kDefaultBins;
};

/// Rows [offset, offset + count) of the ordering. Throws out_of_range past the
/// end and invalid_argument when the ordering was built for another stage.
PixelMatrixSlice assemble_slice(const SliceInputs& in, std::size_t offset, std::size_t count);

/// Population stddev of every row, listed in ordering order.
std::vector<double> stddev_series(std::span<const double> rows, std::size_t width,
                                  std::span<const std::size_t> permutation);

/// Binary PPM (P6). Each cell is a w x h block; 1-pixel white gutters separate groups.
Bytes render_image(const PixelMatrixSlice& slice, std::size_t cell_width, std::size_t cell_height);

}  // namespace davots::vizdata
