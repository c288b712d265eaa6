#include "davots/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "davots/error.hpp"
#include "davots/parallel.hpp"

namespace davots::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using davots::to_string;

std::string_view to_string(Base base) noexcept {
  switch (base) {
    case Base::raw: return "raw";
    case Base::activations: return "activations";
    case Base::attributions: return "attributions";
    case Base::prediction: return "prediction";
  }
  return "unknown";
}

Base base_from_string(std::string_view name) {
  for (auto b : {Base::raw, Base::activations, Base::attributions, Base::prediction}) {
    if (to_string(b) == name) return b;
  }
  fail(ErrorKind::invalid_argument, "invalid clustering base '" + std::string(name) + "'");
}

void OrderingRequest::validate() const {
  if (base == Base::prediction) {
    fail(ErrorKind::invalid_argument, "invalid clustering base 'prediction': clustering prediction probabilities is not supported");
  }
  if (base == Base::attributions && !method) {
    fail(ErrorKind::invalid_argument, "clustering base 'attributions' requires an attribution method");
  }
}

namespace {

void check_id(std::string_view id) {
  if (id.empty() || id.size() > 64) fail(ErrorKind::invalid_argument, "dataset id must be 1-64 characters");
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    if (!ok) fail(ErrorKind::invalid_argument, "dataset id '" + std::string(id) + "' may only contain [A-Za-z0-9_-]");
  }
}

std::vector<model::ForwardRecord> round_to_f32(std::vector<model::ForwardRecord> records) {
  auto round = [](std::vector<double>& v) {
    for (auto& e : v) e = static_cast<double>(static_cast<float>(e));
  };
  for (auto& r : records) {
    round(r.probabilities);
    round(r.captured_activations);
    round(r.logits);
  }
  return records;
}

}  // namespace

Bytes serialize_forward_records(const std::vector<model::ForwardRecord>& records) {
  const std::size_t h = records.empty() ? 0 : records.front().captured_activations.size();
  const std::size_t c = records.empty() ? 0 : records.front().probabilities.size();
  const json manifest{{"artifact", "forward_records"}, {"rows", records.size()}, {"activation_width", h},
                      {"class_count", c}, {"dtype", "float32"}, {"endianness", "little"},
                      {"row_layout", {"activations", "probabilities", "logits"}}};
  const std::string text = manifest.dump();
  Bytes out;
  append_u32_le(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  std::vector<float> row;
  for (const auto& r : records) {
    if (r.captured_activations.size() != h || r.probabilities.size() != c || r.logits.size() != c) {
      fail(ErrorKind::invalid_argument, "ragged forward records");
    }
    row.clear();
    for (double v : r.captured_activations) row.push_back(static_cast<float>(v));
    for (double v : r.probabilities) row.push_back(static_cast<float>(v));
    for (double v : r.logits) row.push_back(static_cast<float>(v));
    append_f32_le(out, row);
  }
  return out;
}

std::vector<model::ForwardRecord> deserialize_forward_records(std::span<const std::uint8_t> bytes) {
  try {
    const std::size_t len = read_u32_le(bytes);
    if (4 + len > bytes.size()) fail(ErrorKind::integrity, "forward records artifact truncated");
    const auto manifest = json::parse(bytes.begin() + 4, bytes.begin() + 4 + static_cast<std::ptrdiff_t>(len));
    const auto rows = manifest.at("rows").get<std::size_t>();
    const auto h = manifest.at("activation_width").get<std::size_t>();
    const auto c = manifest.at("class_count").get<std::size_t>();
    const auto values = read_f32_le(bytes.subspan(4 + len));
    const std::size_t stride = h + 2 * c;
    if (values.size() != rows * stride) fail(ErrorKind::integrity, "forward records blob size mismatch");
    std::vector<model::ForwardRecord> out(rows);
    for (std::size_t i = 0; i < rows; ++i) {
      const float* p = values.data() + i * stride;
      out[i].captured_activations.assign(p, p + h);
      out[i].probabilities.assign(p + h, p + h + c);
      out[i].logits.assign(p + h + c, p + stride);
    }
    return out;
  } catch (const json::exception& e) {
    fail(ErrorKind::integrity, std::string("malformed forward records manifest: ") + e.what());
  }
}

std::string serialize_ordering(const OrderingResult& r) {
  const auto& s = r.ordering.source;
  return json{{"artifact", "ordering"},
              {"ordering_id", r.ordering_id},
              {"source",
               {{"dataset", s.dataset},
                {"stage", s.stage},
                {"base", s.base},
                {"method", s.method},
                {"distance", metrics::to_string(s.distance)},
                {"linkage", hclust::to_string(s.linkage)}}},
              {"model_checksum", r.model_checksum},
              {"score", r.score.mean_neighbor_distance},
              {"score_kind", metrics::to_string(r.score.kind)},
              {"permutation", r.ordering.permutation}}
      .dump();
}

OrderingResult deserialize_ordering(std::string_view text) {
  try {
    const auto doc = json::parse(text);
    OrderingResult r;
    r.ordering_id = doc.at("ordering_id").get<std::string>();
    const auto& s = doc.at("source");
    r.ordering.source.dataset = s.at("dataset").get<std::string>();
    r.ordering.source.stage = s.at("stage").get<std::string>();
    r.ordering.source.base = s.at("base").get<std::string>();
    r.ordering.source.method = s.at("method").get<std::string>();
    r.ordering.source.distance = metrics::distance_kind_from_string(s.at("distance").get<std::string>());
    r.ordering.source.linkage = hclust::linkage_from_string(s.at("linkage").get<std::string>());
    r.model_checksum = doc.at("model_checksum").get<std::string>();
    r.score.mean_neighbor_distance = doc.at("score").get<double>();
    r.score.kind = metrics::distance_kind_from_string(doc.at("score_kind").get<std::string>());
    r.ordering.permutation = doc.at("permutation").get<std::vector<std::size_t>>();
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::integrity, std::string("malformed ordering document: ") + e.what());
  }
}

Workspace::Workspace(Config config) : config_(std::move(config)), store_(config_.cache_dir) {
  load_registry();
  for (const auto& entry : config_.datasets) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::invalid_argument, "config dataset entry '" + entry + "' must be id=path");
    }
    ingest(entry.substr(eq + 1), entry.substr(0, eq));
  }
}

void Workspace::load_registry() {
  const fs::path file = store_.root() / "registry.json";
  if (!fs::exists(file)) return;
  try {
    const auto doc = json::parse(to_string(store::read_file(file)));
    for (const auto& [id, entry] : doc.at("datasets").items()) {
      registry_[id] = Registration{entry.at("directory").get<std::string>(), entry.at("content_hash").get<std::string>(),
                                   entry.value("weights", std::string())};
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::integrity, "malformed registry " + file.string() + ": " + e.what());
  }
}

void Workspace::save_registry_locked() const {
  json datasets = json::object();
  for (const auto& [id, reg] : registry_) {
    datasets[id] = {{"directory", reg.directory.string()}, {"content_hash", reg.content_hash}, {"weights", reg.weights_fingerprint}};
  }
  store::write_file_atomic(store_.root() / "registry.json", to_bytes(json{{"datasets", datasets}}.dump(2)));
}

std::shared_ptr<const ingest::Dataset> Workspace::ingest(const fs::path& path, const std::string& id) {
  check_id(id);
  return register_dataset(ingest::znormalize(ingest::load_ucr(path, id)));
}

std::shared_ptr<const ingest::Dataset> Workspace::register_dataset(ingest::Dataset dataset) {
  check_id(dataset.id);
  dataset.validate();
  const std::string hash = dataset.content_hash();
  const fs::path dir = store_.root() / "datasets" / dataset.id;
  auto shared = std::make_shared<const ingest::Dataset>(std::move(dataset));

  std::lock_guard lock(mutex_);
  auto it = registry_.find(shared->id);
  if (it != registry_.end() && it->second.content_hash == hash && fs::exists(dir)) {
    datasets_[shared->id] = shared;
    return shared;
  }
  if (it != registry_.end()) {
    // content changed: drop every artifact derived from the old data
    store_.invalidate(shared->id);
    models_.erase(shared->id);
    std::erase_if(forward_cache_, [&](const auto& kv) { return kv.first.starts_with(shared->id + "/"); });
    std::erase_if(attribution_cache_, [&](const auto& kv) { return kv.first.starts_with(shared->id + "/"); });
  }
  ingest::export_ucr(*shared, dir, shared->id);
  registry_[shared->id] = Registration{dir, hash, ""};
  datasets_[shared->id] = shared;
  save_registry_locked();
  return shared;
}

std::vector<std::string> Workspace::dataset_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, _] : registry_) ids.push_back(id);
  return ids;
}

Workspace::Registration Workspace::registration(std::string_view id) const {
  std::lock_guard lock(mutex_);
  auto it = registry_.find(id);
  if (it == registry_.end()) fail(ErrorKind::not_found, "unknown dataset '" + std::string(id) + "'");
  return it->second;
}

std::shared_ptr<const ingest::Dataset> Workspace::dataset(std::string_view id) const {
  const Registration reg = registration(id);
  {
    std::lock_guard lock(mutex_);
    if (auto it = datasets_.find(id); it != datasets_.end()) return it->second;
  }
  // the cached copy is already normalized; load it verbatim
  auto loaded = std::make_shared<const ingest::Dataset>(ingest::load_ucr(reg.directory, std::string(id)));
  if (loaded->content_hash() != reg.content_hash) {
    fail(ErrorKind::integrity, "dataset '" + std::string(id) + "' on disk does not match its registered content hash");
  }
  std::lock_guard lock(mutex_);
  return datasets_.emplace(std::string(id), loaded).first->second;
}

store::KeyBuilder Workspace::key(std::string kind, std::string_view id) const {
  const Registration reg = registration(id);
  return store::KeyBuilder(std::move(kind), std::string(id), reg.content_hash);
}

model::TrainResult Workspace::train(const std::string& id, const TrainOptions& options) {
  const auto data = dataset(id);
  auto builder = key("weights", id);
  builder.add("architecture", "default")
      .add("seed", std::to_string(options.seed))
      .add("epochs", std::to_string(options.epochs))
      .add("batch_size", std::to_string(options.batch_size));
  char lr[64];
  std::snprintf(lr, sizeof lr, "%.17g", options.learning_rate);
  builder.add("learning_rate", lr);
  const auto weights_key = builder.build();
  auto log_builder = builder;
  auto log_key = store::KeyBuilder(log_builder).build();
  log_key.kind = "training_log";

  model::TrainResult result;
  const auto cached_weights = store_.get(weights_key);
  const auto cached_log = store_.get(log_key);
  if (cached_weights && cached_log) {
    result.model = model::load_weights(*cached_weights);
    const auto doc = json::parse(to_string(*cached_log));
    for (const auto& e : doc) {
      model::EpochLog entry;
      entry.epoch = e.at("epoch").get<std::size_t>();
      entry.loss = e.at("loss").get<double>();
      entry.train_acc = e.at("train_acc").get<double>();
      if (!e.at("test_acc").is_null()) entry.test_acc = e.at("test_acc").get<double>();
      result.log.push_back(entry);
    }
  } else {
    const auto initial = model::build_default_model(data->series_length, data->class_count, options.seed);
    model::TrainConfig cfg;
    cfg.epochs = options.epochs;
    cfg.batch_size = options.batch_size;
    cfg.learning_rate = options.learning_rate;
    cfg.seed = options.seed;
    result = model::train(initial, *data, cfg);
    json log = json::array();
    for (const auto& e : result.log) {
      log.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"train_acc", e.train_acc},
                     {"test_acc", e.test_acc ? json(*e.test_acc) : json(nullptr)}});
    }
    store_.put(weights_key, model::save_weights(result.model));
    store_.put(log_key, to_bytes(log.dump()));
  }
  std::lock_guard lock(mutex_);
  registry_[id].weights_fingerprint = weights_key.fingerprint;
  models_[id] = std::make_shared<const model::ModelBundle>(result.model);
  save_registry_locked();
  return result;
}

void Workspace::set_model(const std::string& id, const model::ModelBundle& m) {
  const auto data = dataset(id);
  if (m.input_length != data->series_length || m.class_count != data->class_count) {
    fail(ErrorKind::invalid_argument, "model shape does not match dataset '" + id + "'");
  }
  const Bytes bytes = model::save_weights(m);
  const auto k = key("weights", id).add("checksum", sha256_hex(bytes)).build();
  store_.put(k, bytes);
  std::lock_guard lock(mutex_);
  registry_[id].weights_fingerprint = k.fingerprint;
  models_[id] = std::make_shared<const model::ModelBundle>(model::load_weights(bytes));
  save_registry_locked();
}

bool Workspace::has_model(std::string_view id) const { return !registration(id).weights_fingerprint.empty(); }

std::shared_ptr<const model::ModelBundle> Workspace::model(std::string_view id) const {
  const Registration reg = registration(id);
  if (reg.weights_fingerprint.empty()) {
    fail(ErrorKind::invalid_argument, "dataset '" + std::string(id) + "' has no trained model; run train first");
  }
  {
    std::lock_guard lock(mutex_);
    if (auto it = models_.find(id); it != models_.end()) return it->second;
  }
  const auto bytes = store_.get("weights", reg.weights_fingerprint);
  if (!bytes) fail(ErrorKind::not_found, "weights for dataset '" + std::string(id) + "' are missing from the cache");
  auto loaded = std::make_shared<const model::ModelBundle>(model::load_weights(*bytes));
  std::lock_guard lock(mutex_);
  return models_.emplace(std::string(id), loaded).first->second;
}

std::string Workspace::model_checksum(std::string_view id) const { return model::model_checksum(*model(id)); }

std::shared_ptr<const std::vector<model::ForwardRecord>> Workspace::forward_records(std::string_view id,
                                                                                    std::string_view stage) {
  const auto data = dataset(id);
  const auto& samples = data->stage(stage);
  const auto m = model(id);
  const auto k = key("forward", id).add("stage", std::string(stage)).add("model", model::model_checksum(*m)).build();
  const std::string mem_key = std::string(id) + "/" + k.fingerprint;
  {
    std::lock_guard lock(mutex_);
    if (auto it = forward_cache_.find(mem_key); it != forward_cache_.end()) return it->second;
  }
  std::shared_ptr<const std::vector<model::ForwardRecord>> records;
  if (auto bytes = store_.get(k)) {
    records = std::make_shared<const std::vector<model::ForwardRecord>>(deserialize_forward_records(*bytes));
  } else {
    std::vector<model::ForwardRecord> fresh(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) { fresh[i] = model::forward(*m, samples[i].values); });
    auto rounded = round_to_f32(std::move(fresh));
    store_.put(k, serialize_forward_records(rounded));
    records = std::make_shared<const std::vector<model::ForwardRecord>>(std::move(rounded));
  }
  std::lock_guard lock(mutex_);
  return forward_cache_.emplace(mem_key, records).first->second;
}

std::shared_ptr<const attribution::AttributionMatrix> Workspace::attributions(std::string_view id,
                                                                              std::string_view stage,
                                                                              attribution::Method method,
                                                                              const attribution::Params& params) {
  const auto data = dataset(id);
  data->stage(stage);
  const auto m = model(id);
  const auto k = key("attribution", id)
                     .add("stage", std::string(stage))
                     .add("model", model::model_checksum(*m))
                     .add("method", std::string(attribution::to_string(method)))
                     .add("params", params.canonical(method))
                     .build();
  const std::string mem_key = std::string(id) + "/" + k.fingerprint;
  {
    std::lock_guard lock(mutex_);
    if (auto it = attribution_cache_.find(mem_key); it != attribution_cache_.end()) return it->second;
  }
  std::shared_ptr<const attribution::AttributionMatrix> matrix;
  if (auto bytes = store_.get(k)) {
    matrix = std::make_shared<const attribution::AttributionMatrix>(attribution::deserialize_attribution(*bytes));
  } else {
    auto fresh = attribution::attribute_stage(*m, *data, stage, method, params);
    store_.put(k, attribution::serialize(fresh));
    matrix = std::make_shared<const attribution::AttributionMatrix>(std::move(fresh));
  }
  std::lock_guard lock(mutex_);
  return attribution_cache_.emplace(mem_key, matrix).first->second;
}

BaseRows Workspace::base_rows(std::string_view id, std::string_view stage, Base base,
                              std::optional<attribution::Method> method) {
  const auto data = dataset(id);
  const auto& samples = data->stage(stage);
  BaseRows out;
  switch (base) {
    case Base::raw:
      out.width = data->series_length;
      out.values.reserve(samples.size() * out.width);
      for (const auto& s : samples) out.values.insert(out.values.end(), s.values.begin(), s.values.end());
      break;
    case Base::activations: {
      const auto records = forward_records(id, stage);
      out.width = records->empty() ? 0 : records->front().captured_activations.size();
      if (out.width == 0) fail(ErrorKind::invalid_argument, "model has no capture layer");
      for (const auto& r : *records) {
        out.values.insert(out.values.end(), r.captured_activations.begin(), r.captured_activations.end());
      }
      break;
    }
    case Base::attributions: {
      const auto matrix = attributions(id, stage, method.value_or(kDefaultMethod));
      out.width = matrix->series_length;
      out.values.assign(matrix->values.begin(), matrix->values.end());
      break;
    }
    case Base::prediction: {
      const auto records = forward_records(id, stage);
      out.width = data->class_count;
      for (const auto& r : *records) out.values.insert(out.values.end(), r.probabilities.begin(), r.probabilities.end());
      break;
    }
  }
  return out;
}

namespace {

std::string method_field(const OrderingRequest& r) {
  return r.base == Base::attributions ? std::string(attribution::to_string(*r.method)) : std::string();
}

}  // namespace

std::shared_ptr<const metrics::DistanceMatrix> Workspace::distance_matrix(const OrderingRequest& request) {
  request.validate();
  dataset(request.dataset)->stage(request.stage);
  const std::string model_field = request.base == Base::raw ? std::string() : model_checksum(request.dataset);
  const auto k = key("distance_matrix", request.dataset)
                     .add("stage", request.stage)
                     .add("base", std::string(to_string(request.base)))
                     .add("method", method_field(request))
                     .add("model", model_field)
                     .add("distance", std::string(metrics::to_string(request.distance)))
                     .build();
  if (auto bytes = store_.get(k)) {
    return std::make_shared<const metrics::DistanceMatrix>(metrics::deserialize_distance_matrix(*bytes));
  }
  const auto rows = base_rows(request.dataset, request.stage, request.base, request.method);
  auto dm = metrics::distance_matrix(rows.values, rows.width, request.distance);
  store_.put(k, metrics::serialize(dm));
  return std::make_shared<const metrics::DistanceMatrix>(std::move(dm));
}

store::ArtifactKey Workspace::ordering_key(const OrderingRequest& request) {
  request.validate();
  const std::string model_field = request.base == Base::raw ? std::string() : model_checksum(request.dataset);
  return key("ordering", request.dataset)
      .add("stage", request.stage)
      .add("base", std::string(to_string(request.base)))
      .add("method", method_field(request))
      .add("model", model_field)
      .add("distance", std::string(metrics::to_string(request.distance)))
      .add("linkage", std::string(hclust::to_string(request.linkage)))
      .build();
}

OrderingResult Workspace::ordering(const OrderingRequest& request) {
  request.validate();
  const auto data = dataset(request.dataset);
  data->stage(request.stage);
  if (data->stage(request.stage).size() < 2) {
    fail(ErrorKind::invalid_argument, "stage '" + request.stage + "' needs at least two samples to cluster");
  }
  const auto k = ordering_key(request);
  if (auto bytes = store_.get(k)) return deserialize_ordering(to_string(*bytes));

  const auto dm = distance_matrix(request);
  auto dendrogram_key = k;
  dendrogram_key.kind = "dendrogram";
  hclust::Dendrogram dg;
  if (auto bytes = store_.get(dendrogram_key)) {
    dg = hclust::deserialize_dendrogram(to_string(*bytes));
  } else {
    dg = hclust::agglomerate(*dm, request.linkage);
    store_.put(dendrogram_key, to_bytes(hclust::serialize(dg)));
  }

  OrderingResult result;
  result.ordering_id = k.fingerprint;
  result.ordering = hclust::leaf_order(dg);
  result.ordering.source = hclust::OrderingSource{request.dataset,
                                                  request.stage,
                                                  std::string(to_string(request.base)),
                                                  method_field(request),
                                                  request.distance,
                                                  request.linkage};
  result.model_checksum = request.base == Base::raw ? std::string() : model_checksum(request.dataset);
  const auto rows = base_rows(request.dataset, request.stage, request.base, request.method);
  result.score = hclust::ordering_score(result.ordering.permutation, rows.values, rows.width, request.distance);
  if (!std::isfinite(result.score.mean_neighbor_distance)) {
    fail(ErrorKind::compute, "ordering score is not finite");
  }
  store_.put(k, to_bytes(serialize_ordering(result)));
  return result;
}

std::optional<OrderingResult> Workspace::find_ordering(std::string_view ordering_id) const {
  if (ordering_id.size() != 64 ||
      ordering_id.find_first_not_of("0123456789abcdef") != std::string_view::npos) {
    return std::nullopt;
  }
  auto bytes = store_.get("ordering", ordering_id);
  if (!bytes) return std::nullopt;
  return deserialize_ordering(to_string(*bytes));
}

hclust::LinkageChoice Workspace::measure(const OrderingRequest& request) {
  request.validate();
  const auto dm = distance_matrix(request);
  const auto rows = base_rows(request.dataset, request.stage, request.base, request.method);
  return hclust::best_linkage(*dm, rows.values, rows.width, request.distance);
}

attribution::Method Workspace::resolve_method(const hclust::OrderingSource& source,
                                              std::optional<attribution::Method> method) const {
  if (method) return *method;
  if (!source.method.empty()) return attribution::method_from_string(source.method);
  return kDefaultMethod;
}

vizdata::PixelMatrixSlice Workspace::slice(std::string_view ordering_id, std::size_t offset, std::size_t count,
                                           std::optional<attribution::Method> method) {
  const auto found = find_ordering(ordering_id);
  if (!found) fail(ErrorKind::not_found, "unknown ordering '" + std::string(ordering_id) + "'");
  const auto& source = found->ordering.source;
  const auto data = dataset(source.dataset);
  const auto m = model(source.dataset);
  const auto records = forward_records(source.dataset, source.stage);
  const auto attr = attributions(source.dataset, source.stage, resolve_method(source, method));
  const auto stats = vizdata::compute_stats(data->stage(source.stage), *records, *attr);
  const auto scales = vizdata::default_scales(stats, m->capture_activation());
  vizdata::SliceInputs in{*data, source.stage, *records, *attr, found->ordering, scales, config_.histogram_bins};
  auto slice = vizdata::assemble_slice(in, offset, count);
  slice.ordering_id = std::string(ordering_id);
  return slice;
}

std::vector<double> Workspace::stddev(std::string_view ordering_id, Base base,
                                      std::optional<attribution::Method> method) {
  const auto found = find_ordering(ordering_id);
  if (!found) fail(ErrorKind::not_found, "unknown ordering '" + std::string(ordering_id) + "'");
  const auto& source = found->ordering.source;
  const auto rows = base_rows(source.dataset, source.stage, base,
                              base == Base::attributions ? std::optional(resolve_method(source, method)) : std::nullopt);
  return vizdata::stddev_series(rows.values, rows.width, found->ordering.permutation);
}

Bytes Workspace::render(std::string_view ordering_id, std::size_t offset, std::size_t count, std::size_t cell_width,
                        std::size_t cell_height) {
  return vizdata::render_image(slice(ordering_id, offset, count), cell_width, cell_height);
}

}  // namespace davots::pipeline
