#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "davots/attribution.hpp"
#include "davots/config.hpp"
#include "davots/hclust.hpp"
#include "davots/ingest.hpp"
#include "davots/metrics.hpp"
#include "davots/model.hpp"
#include "davots/store.hpp"
#include "davots/vizdata.hpp"

namespace davots::pipeline {

/// Data group a clustering can be computed on. Prediction exists only so it
/// can be rejected with a clear message.
enum class Base { raw, activations, attributions, prediction };

std::string_view to_string(Base base) noexcept;
/// Throws invalid_argument ("invalid clustering base") for unknown names.
Base base_from_string(std::string_view name);

inline constexpr attribution::Method kDefaultMethod = attribution::Method::saliency;

struct OrderingRequest {
  std::string dataset;
  std::string stage;
  Base base = Base::raw;
  std::optional<attribution::Method> method;
  metrics::DistanceKind distance = metrics::DistanceKind::norm_euclidean;
  hclust::Linkage linkage = hclust::Linkage::ward;

  /// Rejects prediction bases and attribution bases without a method.
  void validate() const;
};

struct OrderingResult {
  std::string ordering_id;
  hclust::Ordering ordering;
  hclust::OrderingScore score;
  std::string model_checksum;  // empty for raw bases
};

/// Row-major matrix of the clustering base for one stage.
struct BaseRows {
  std::vector<double> values;
  std::size_t width = 0;
  std::size_t rows() const { return width ? values.size() / width : 0; }
};

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
};

/// Shared compute path for the CLI and the HTTP service. Every artifact goes
/// through the store, keyed by all of its inputs, so batch and interactive
/// runs agree on cache keys. Safe for concurrent use.
class Workspace {
 public:
  explicit Workspace(Config config);

  const Config& config() const { return config_; }
  const store::Store& store() const { return store_; }

  /// Loads a UCR directory, z-normalizes it and registers it under `id`.
  std::shared_ptr<const ingest::Dataset> ingest(const std::filesystem::path& path, const std::string& id);
  /// Registers an already prepared dataset (tests, synthetic data).
  std::shared_ptr<const ingest::Dataset> register_dataset(ingest::Dataset dataset);

  std::vector<std::string> dataset_ids() const;
  std::shared_ptr<const ingest::Dataset> dataset(std::string_view id) const;

  /// Trains the default model and makes it the dataset's active model.
  model::TrainResult train(const std::string& id, const TrainOptions& options);
  void set_model(const std::string& id, const model::ModelBundle& m);
  std::shared_ptr<const model::ModelBundle> model(std::string_view id) const;
  bool has_model(std::string_view id) const;

  /// Forward records for every sample of a stage, rounded to float32 so cached
  /// and fresh results are identical.
  std::shared_ptr<const std::vector<model::ForwardRecord>> forward_records(std::string_view id, std::string_view stage);

  std::shared_ptr<const attribution::AttributionMatrix> attributions(std::string_view id, std::string_view stage,
                                                                     attribution::Method method,
                                                                     const attribution::Params& params = {});

  BaseRows base_rows(std::string_view id, std::string_view stage, Base base,
                     std::optional<attribution::Method> method = std::nullopt);

  std::shared_ptr<const metrics::DistanceMatrix> distance_matrix(const OrderingRequest& request);

  OrderingResult ordering(const OrderingRequest& request);
  /// Looks up a previously computed ordering; nullopt if unknown.
  std::optional<OrderingResult> find_ordering(std::string_view ordering_id) const;

  hclust::LinkageChoice measure(const OrderingRequest& request);

  vizdata::PixelMatrixSlice slice(std::string_view ordering_id, std::size_t offset, std::size_t count,
                                  std::optional<attribution::Method> method = std::nullopt);
  std::vector<double> stddev(std::string_view ordering_id, Base base,
                             std::optional<attribution::Method> method = std::nullopt);
  Bytes render(std::string_view ordering_id, std::size_t offset, std::size_t count, std::size_t cell_width = 1,
               std::size_t cell_height = 1);

  /// Key under which an ordering request is cached; equals its ordering_id.
  store::ArtifactKey ordering_key(const OrderingRequest& request);

 private:
  struct Registration {
    std::filesystem::path directory;
    std::string content_hash;
    std::string weights_fingerprint;
  };

  void load_registry();
  void save_registry_locked() const;
  Registration registration(std::string_view id) const;
  std::string model_checksum(std::string_view id) const;
  store::KeyBuilder key(std::string kind, std::string_view id) const;
  attribution::Method resolve_method(const hclust::OrderingSource& source,
                                     std::optional<attribution::Method> method) const;

  Config config_;
  store::Store store_;
  mutable std::mutex mutex_;
  std::map<std::string, Registration, std::less<>> registry_;
  mutable std::map<std::string, std::shared_ptr<const ingest::Dataset>, std::less<>> datasets_;
  mutable std::map<std::string, std::shared_ptr<const model::ModelBundle>, std::less<>> models_;
  std::map<std::string, std::shared_ptr<const std::vector<model::ForwardRecord>>, std::less<>> forward_cache_;
  std::map<std::string, std::shared_ptr<const attribution::AttributionMatrix>, std::less<>> attribution_cache_;
};

Bytes serialize_forward_records(const std::vector<model::ForwardRecord>& records);
std::vector<model::ForwardRecord> deserialize_forward_records(std::span<const std::uint8_t> bytes);

std::string serialize_ordering(const OrderingResult& result);
OrderingResult deserialize_ordering(std::string_view text);

}  // namespace davots::pipeline
