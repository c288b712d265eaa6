#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numbers>

#include "davots/codec.hpp"

namespace davots::testing {

namespace fs = std::filesystem;

fs::path data_dir() { return DAVOTS_TEST_DATA; }
fs::path gunpoint_dir() { return data_dir() / "GunPoint"; }

TempDir::TempDir(const std::string& tag) {
  static std::atomic<unsigned> counter{0};
  Rng rng(static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()) + counter++);
  path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rng.next() % 1000000000ULL));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

ingest::Dataset wave_dataset(std::size_t per_class_train, std::size_t per_class_test, std::size_t length,
                             double noise, std::uint64_t seed) {
  Rng rng(seed);
  ingest::Dataset d;
  d.id = "waves";
  d.series_length = length;
  d.class_count = 2;
  d.original_labels = {1.0, 2.0};
  auto make = [&](std::size_t per_class) {
    std::vector<ingest::Sample> out;
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
      const int label = static_cast<int>(i % 2);
      const double cycles = (label == 0 ? 2.0 : 6.0) * rng.uniform(0.85, 1.15);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      std::vector<double> v(length);
      for (std::size_t t = 0; t < length; ++t) {
        const double u = static_cast<double>(t) / static_cast<double>(length);
        v[t] = std::sin(2.0 * std::numbers::pi * cycles * u + phase) + noise * rng.normal();
      }
      out.push_back({out.size(), ingest::znormalize(v), label});
    }
    return out;
  };
  d.stages[std::string(ingest::kTrain)] = make(per_class_train);
  d.stages[std::string(ingest::kTest)] = make(per_class_test);
  d.validate();
  return d;
}

std::vector<std::vector<double>> random_rows(std::size_t count, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> rows(count, std::vector<double>(width));
  for (auto& r : rows) {
    for (auto& v : r) v = rng.uniform(-1.0, 1.0);
  }
  return rows;
}

std::vector<double> flatten(const std::vector<std::vector<double>>& rows) {
  std::vector<double> out;
  for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

model::ModelBundle tiny_model(std::size_t length, std::size_t classes, std::uint64_t seed, bool sigmoid) {
  using model::LayerSpec;
  std::vector<LayerSpec> layers{
      LayerSpec::conv1d(4, 3), sigmoid ? LayerSpec::sigmoid() : LayerSpec::relu(), LayerSpec::conv1d(3, 4),
      LayerSpec::relu(),       LayerSpec::global_average_pool(),                   LayerSpec::dense(5),
      LayerSpec::relu(),       LayerSpec::dense(classes),                          LayerSpec::softmax(),
  };
  auto m = model::build_model(length, classes, std::move(layers), 5, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& p : m.params) {
    for (auto& b : p.bias) b = static_cast<float>(rng.uniform(-0.3, 0.3));
  }
  return m;
}

std::vector<hclust::Merge> naive_agglomerate(const metrics::DistanceMatrix& dm, hclust::Linkage linkage) {
  struct Cluster {
    std::size_t node;
    std::vector<std::size_t> leaves;  // sorted
  };
  const std::size_t m = dm.size();
  std::vector<Cluster> live;
  for (std::size_t i = 0; i < m; ++i) live.push_back({i, {i}});

  auto between = [&](const Cluster& a, const Cluster& b) {
    const double na = static_cast<double>(a.leaves.size()), nb = static_cast<double>(b.leaves.size());
    double lo = INFINITY, hi = -INFINITY, sum = 0.0, sq = 0.0;
    for (auto i : a.leaves) {
      for (auto j : b.leaves) {
        const double d = dm.at(i, j);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
        sum += d;
        sq += d * d;
      }
    }
    switch (linkage) {
      case hclust::Linkage::single: return lo;
      case hclust::Linkage::complete: return hi;
      case hclust::Linkage::average: return sum / (na * nb);
      case hclust::Linkage::ward: {
        auto within = [&](const Cluster& c) {
          double w = 0.0;
          for (auto i : c.leaves) {
            for (auto j : c.leaves) w += dm.at(i, j) * dm.at(i, j);
          }
          return w / static_cast<double>(c.leaves.size() * c.leaves.size());
        };
        const double v = 2.0 * na * nb / (na + nb) * (sq / (na * nb) - within(a) / 2.0 - within(b) / 2.0);
        return std::sqrt(std::max(v, 0.0));
      }
    }
    return 0.0;
  };

  std::vector<hclust::Merge> merges;
  for (std::size_t step = 0; step + 1 < m; ++step) {
    std::size_t best_a = 0, best_b = 1;
    double best = INFINITY;
    for (std::size_t a = 0; a < live.size(); ++a) {
      for (std::size_t b = a + 1; b < live.size(); ++b) {
        const double d = between(live[a], live[b]);
        // live stays sorted by smallest leaf, so (a, b) already orders the tie-break key
        if (d < best) {
          best = d;
          best_a = a;
          best_b = b;
        }
      }
    }
    Cluster merged{m + step, live[best_a].leaves};
    merged.leaves.insert(merged.leaves.end(), live[best_b].leaves.begin(), live[best_b].leaves.end());
    std::sort(merged.leaves.begin(), merged.leaves.end());
    merges.push_back({live[best_a].node, live[best_b].node, best, merged.leaves.size()});
    live.erase(live.begin() + static_cast<std::ptrdiff_t>(best_b));
    live[best_a] = std::move(merged);
  }
  return merges;
}

std::vector<std::vector<double>> gaussian_clusters(std::size_t count, std::size_t clusters, std::size_t width,
                                                   double spread, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> centres(clusters, std::vector<double>(width));
  for (auto& c : centres) {
    for (auto& v : c) v = rng.uniform(-5.0, 5.0);
  }
  std::vector<std::vector<double>> rows(count, std::vector<double>(width));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t t = 0; t < width; ++t) rows[i][t] = centres[i % clusters][t] + spread * rng.normal();
  }
  return rows;
}

}  // namespace davots::testing
