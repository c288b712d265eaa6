#include "davots/vizdata.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "davots/error.hpp"

namespace davots::vizdata {

std::string_view to_string(Group group) noexcept {
  switch (group) {
    case Group::raw: return "raw";
    case Group::raw_hist: return "raw_hist";
    case Group::activations: return "activations";
    case Group::act_hist: return "act_hist";
    case Group::attributions: return "attributions";
    case Group::attr_hist: return "attr_hist";
    case Group::prediction: return "prediction";
  }
  return "unknown";
}

Group group_from_string(std::string_view name) {
  for (auto g : kAllGroups) {
    if (to_string(g) == name) return g;
  }
  fail(ErrorKind::invalid_argument, "unknown data group '" + std::string(name) + "'");
}

std::string_view to_string(ColorScaleSpec::Kind kind) noexcept {
  return kind == ColorScaleSpec::Kind::diverging ? "diverging" : "sequential";
}

ColorScaleSpec ColorScaleSpec::sequential(double lo, double hi, Rgb low, Rgb high) {
  ColorScaleSpec s;
  s.kind = Kind::sequential;
  s.lo = lo;
  s.mid = 0.5 * (lo + hi);
  s.hi = hi;
  s.low = low;
  s.middle = Rgb{};
  s.high = high;
  s.validate();
  return s;
}

ColorScaleSpec ColorScaleSpec::diverging(double lo, double mid, double hi, Rgb low, Rgb middle, Rgb high) {
  ColorScaleSpec s;
  s.kind = Kind::diverging;
  s.lo = lo;
  s.mid = mid;
  s.hi = hi;
  s.low = low;
  s.middle = middle;
  s.high = high;
  s.validate();
  return s;
}

void ColorScaleSpec::validate() const {
  if (!(lo < hi)) fail(ErrorKind::invalid_argument, "color scale requires lo < hi");
  if (kind == Kind::diverging && !(lo <= mid && mid <= hi)) {
    fail(ErrorKind::invalid_argument, "diverging color scale requires lo <= mid <= hi");
  }
}

double ColorScaleSpec::normalize(double value) const {
  if (std::isnan(value)) return kind == Kind::diverging ? 0.5 : 0.0;
  double t = 0.0;
  if (kind == Kind::sequential) {
    t = (value - lo) / (hi - lo);
  } else if (value <= mid) {
    t = mid > lo ? 0.5 * (value - lo) / (mid - lo) : 0.5;
  } else {
    t = hi > mid ? 0.5 + 0.5 * (value - mid) / (hi - mid) : 0.5;
  }
  return std::clamp(t, 0.0, 1.0);
}

namespace {

std::uint8_t lerp_channel(std::uint8_t a, std::uint8_t b, double u) {
  const double v = static_cast<double>(a) + (static_cast<double>(b) - static_cast<double>(a)) * u;
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

Rgb lerp(Rgb a, Rgb b, double u) {
  return {lerp_channel(a.r, b.r, u), lerp_channel(a.g, b.g, u), lerp_channel(a.b, b.b, u)};
}

}  // namespace

Rgb ColorScaleSpec::color(double t) const {
  t = std::isnan(t) ? 0.0 : std::clamp(t, 0.0, 1.0);
  if (kind == Kind::sequential) return lerp(low, high, t);
  if (t <= 0.5) return lerp(low, middle, t / 0.5);
  return lerp(middle, high, (t - 0.5) / 0.5);
}

namespace palette {
constexpr Rgb white{255, 255, 255};
constexpr Rgb black{0, 0, 0};
constexpr Rgb blue{59, 76, 192};
constexpr Rgb red{180, 4, 38};
constexpr Rgb orange{230, 85, 13};
constexpr Rgb purple{94, 60, 153};
constexpr Rgb gray{150, 150, 150};
constexpr Rgb yellow{253, 231, 37};
}  // namespace palette

DataStats compute_stats(const std::vector<ingest::Sample>& samples, const std::vector<model::ForwardRecord>& records,
                        const attribution::AttributionMatrix& attributions) {
  DataStats s;
  for (const auto& sample : samples) {
    for (double v : sample.values) s.max_abs_raw = std::max(s.max_abs_raw, std::abs(v));
  }
  for (const auto& r : records) {
    for (double v : r.captured_activations) s.max_activation = std::max(s.max_activation, v);
  }
  for (float v : attributions.values) s.max_abs_attribution = std::max(s.max_abs_attribution, std::abs(static_cast<double>(v)));
  return s;
}

Scales default_scales(const DataStats& stats, model::ActivationKind activation) {
  using namespace palette;
  // a zero-width domain would make the scale invalid; fall back to unit width
  auto extent = [](double v) { return v < 1e-12 ? 1.0 : v; };
  const double a = extent(stats.max_abs_raw);
  const double b = extent(stats.max_abs_attribution);
  const auto hist = ColorScaleSpec::sequential(0.0, 1.0, white, black);
  Scales s;
  s[0] = ColorScaleSpec::diverging(-a, 0.0, a, blue, white, red);
  s[1] = hist;
  s[2] = activation == model::ActivationKind::relu
             ? ColorScaleSpec::sequential(0.0, extent(stats.max_activation), white, orange)
             : ColorScaleSpec::diverging(0.0, 0.5, 1.0, blue, white, red);
  s[3] = hist;
  s[4] = ColorScaleSpec::diverging(-b, 0.0, b, blue, white, red);
  s[5] = hist;
  s[6] = ColorScaleSpec::diverging(0.0, 0.5, 1.0, purple, gray, yellow);
  return s;
}

Histogram histogram(std::span<const double> values, std::size_t bins, double lo, double hi) {
  if (bins < 1) fail(ErrorKind::invalid_argument, "histogram needs at least one bin");
  if (!(lo < hi)) fail(ErrorKind::invalid_argument, "histogram range requires lo < hi");
  Histogram h;
  h.counts.assign(bins, 0);
  h.normalized.assign(bins, 0.0);
  const double width = hi - lo;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    const double pos = std::floor((v - lo) / width * static_cast<double>(bins));
    const double clamped = std::clamp(pos, 0.0, static_cast<double>(bins - 1));
    ++h.counts[static_cast<std::size_t>(clamped)];
  }
  const std::size_t peak = *std::max_element(h.counts.begin(), h.counts.end());
  if (peak > 0) {
    for (std::size_t i = 0; i < bins; ++i) {
      h.normalized[i] = static_cast<double>(h.counts[i]) / static_cast<double>(peak);
    }
  }
  return h;
}

std::size_t PixelMatrixSlice::row_width() const {
  std::size_t w = 0;
  for (const auto& g : groups) w += g.width;
  return w;
}

namespace {

void push_normalized(std::vector<float>& out, std::span<const double> values, const ColorScaleSpec& scale) {
  out.reserve(values.size());
  for (double v : values) out.push_back(static_cast<float>(scale.normalize(v)));
}

}  // namespace

PixelMatrixSlice assemble_slice(const SliceInputs& in, std::size_t offset, std::size_t count) {
  const auto& samples = in.dataset.stage(in.stage);
  const std::size_t m = samples.size();
  const auto& ord = in.ordering;
  if (ord.source.stage != in.stage || (!ord.source.dataset.empty() && ord.source.dataset != in.dataset.id) ||
      ord.permutation.size() != m) {
    fail(ErrorKind::invalid_argument, "stale ordering: built for dataset '" + ord.source.dataset + "' stage '" +
                                          ord.source.stage + "', requested '" + in.dataset.id + "' stage '" +
                                          std::string(in.stage) + "'");
  }
  if (in.attributions.stage != in.stage || in.attributions.rows() != m) {
    fail(ErrorKind::invalid_argument, "attribution matrix does not belong to stage '" + std::string(in.stage) + "'");
  }
  if (in.records.size() != m) fail(ErrorKind::invalid_argument, "forward records do not match stage size");
  if (count < 1) fail(ErrorKind::invalid_argument, "slice count must be >= 1");
  if (offset >= m || count > m - offset) {
    fail(ErrorKind::out_of_range, "slice [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
                                      ") exceeds sample count " + std::to_string(m));
  }

  const std::size_t n = in.dataset.series_length;
  const std::size_t activation_width = in.records.front().captured_activations.size();
  const std::size_t classes = in.dataset.class_count;

  PixelMatrixSlice slice;
  slice.source = ord.source;
  slice.attribution_method = std::string(attribution::to_string(in.attributions.method));
  slice.offset = offset;
  slice.total = m;
  const std::array<std::size_t, kGroupCount> widths{n, in.bins, activation_width, in.bins, n, in.bins, classes};
  for (std::size_t g = 0; g < kGroupCount; ++g) slice.groups[g] = {kAllGroups[g], widths[g], in.scales[g]};

  slice.rows.reserve(count);
  std::vector<double> attr(n);
  for (std::size_t pos = offset; pos < offset + count; ++pos) {
    const std::size_t idx = ord.permutation[pos];
    if (idx >= m) fail(ErrorKind::invalid_argument, "ordering index out of range");
    const auto& sample = samples[idx];
    const auto& rec = in.records[idx];
    if (rec.captured_activations.size() != activation_width || rec.probabilities.size() != classes) {
      fail(ErrorKind::invalid_argument, "forward record shape mismatch for sample " + std::to_string(idx));
    }
    const auto attr_row = in.attributions.row(idx);
    std::copy(attr_row.begin(), attr_row.end(), attr.begin());

    SliceRow row;
    row.position = pos;
    row.index = sample.index;
    row.label = sample.label;
    const auto& sc = in.scales;
    push_normalized(row.groups[0], sample.values, sc[0]);
    push_normalized(row.groups[1], histogram(sample.values, in.bins, sc[0].lo, sc[0].hi).normalized, sc[1]);
    push_normalized(row.groups[2], rec.captured_activations, sc[2]);
    push_normalized(row.groups[3], histogram(rec.captured_activations, in.bins, sc[2].lo, sc[2].hi).normalized, sc[3]);
    push_normalized(row.groups[4], attr, sc[4]);
    push_normalized(row.groups[5], histogram(attr, in.bins, sc[4].lo, sc[4].hi).normalized, sc[5]);
    push_normalized(row.groups[6], rec.probabilities, sc[6]);
    slice.rows.push_back(std::move(row));
  }
  return slice;
}

std::vector<double> stddev_series(std::span<const double> rows, std::size_t width,
                                  std::span<const std::size_t> permutation) {
  if (width == 0 || rows.size() % width != 0) fail(ErrorKind::invalid_argument, "ragged base data");
  const std::size_t m = rows.size() / width;
  if (permutation.size() != m) fail(ErrorKind::invalid_argument, "ordering does not match base data");
  std::vector<double> out;
  out.reserve(m);
  for (std::size_t idx : permutation) {
    if (idx >= m) fail(ErrorKind::invalid_argument, "ordering index out of range");
    const auto row = rows.subspan(idx * width, width);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    out.push_back(std::sqrt(var / static_cast<double>(width)));
  }
  return out;
}

Bytes render_image(const PixelMatrixSlice& slice, std::size_t cell_width, std::size_t cell_height) {
  if (cell_width == 0 || cell_height == 0) fail(ErrorKind::invalid_argument, "cell size must be positive");
  const std::size_t gutters = kGroupCount - 1;
  const std::size_t width = slice.row_width() * cell_width + gutters;
  const std::size_t height = slice.rows.size() * cell_height;
  const std::string header = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  Bytes out(header.begin(), header.end());
  out.reserve(header.size() + 3 * width * height);

  std::vector<std::uint8_t> line(3 * width);
  for (const auto& row : slice.rows) {
    std::size_t x = 0;
    for (std::size_t g = 0; g < kGroupCount; ++g) {
      const auto& spec = slice.groups[g];
      const auto& values = row.groups[g];
      if (values.size() != spec.width) fail(ErrorKind::invalid_argument, "slice row does not match group width");
      for (float v : values) {
        const Rgb c = spec.scale.color(v);
        for (std::size_t px = 0; px < cell_width; ++px, ++x) {
          line[3 * x] = c.r;
          line[3 * x + 1] = c.g;
          line[3 * x + 2] = c.b;
        }
      }
      if (g + 1 < kGroupCount) {
        line[3 * x] = line[3 * x + 1] = line[3 * x + 2] = 255;
        ++x;
      }
    }
    for (std::size_t py = 0; py < cell_height; ++py) out.insert(out.end(), line.begin(), line.end());
  }
  return out;
}

}  // namespace davots::vizdata
