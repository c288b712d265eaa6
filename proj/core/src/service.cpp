#include "davots/service.hpp"

#include <charconv>
#include <iostream>

#include "davots/error.hpp"
#include "httplib.h"

namespace davots::service {

using nlohmann::json;

int http_status(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return 400;
    case ErrorKind::not_found: return 404;
    case ErrorKind::out_of_range: return 416;
    case ErrorKind::io:
    case ErrorKind::integrity:
    case ErrorKind::compute: return 500;
  }
  return 500;
}

namespace {

json rgb(vizdata::Rgb c) { return json::array({c.r, c.g, c.b}); }
vizdata::Rgb rgb_from(const json& j) {
  return {j.at(0).get<std::uint8_t>(), j.at(1).get<std::uint8_t>(), j.at(2).get<std::uint8_t>()};
}

std::string encode_floats(std::span<const float> values) {
  Bytes bytes;
  append_f32_le(bytes, values);
  return base64_encode(bytes);
}

Response error_response(int status, ErrorKind kind, std::string_view message) {
  return {status, "application/json", json{{"error", {{"kind", to_string(kind)}, {"message", message}}}}.dump()};
}

std::size_t parse_size(const Query& q, std::string_view name, std::optional<std::size_t> fallback = std::nullopt) {
  auto it = q.find(name);
  if (it == q.end()) {
    if (fallback) return *fallback;
    fail(ErrorKind::invalid_argument, "missing query parameter '" + std::string(name) + "'");
  }
  const auto& text = it->second;
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || v < 0) {
    fail(ErrorKind::invalid_argument, "query parameter '" + std::string(name) + "' must be a non-negative integer");
  }
  return static_cast<std::size_t>(v);
}

std::string require(const Query& q, std::string_view name) {
  auto it = q.find(name);
  if (it == q.end() || it->second.empty()) {
    fail(ErrorKind::invalid_argument, "missing query parameter '" + std::string(name) + "'");
  }
  return it->second;
}

std::optional<attribution::Method> optional_method(const Query& q, std::string_view name) {
  auto it = q.find(name);
  if (it == q.end() || it->second.empty()) return std::nullopt;
  return attribution::method_from_string(it->second);
}

}  // namespace

json scale_to_json(const vizdata::ColorScaleSpec& s) {
  json doc{{"kind", vizdata::to_string(s.kind)}};
  if (s.kind == vizdata::ColorScaleSpec::Kind::diverging) {
    doc["domain"] = {s.lo, s.mid, s.hi};
    doc["colors"] = {rgb(s.low), rgb(s.middle), rgb(s.high)};
  } else {
    doc["domain"] = {s.lo, s.hi};
    doc["colors"] = {rgb(s.low), rgb(s.high)};
  }
  return doc;
}

vizdata::ColorScaleSpec scale_from_json(const json& doc) {
  const auto& d = doc.at("domain");
  const auto& c = doc.at("colors");
  if (doc.at("kind") == "diverging") {
    return vizdata::ColorScaleSpec::diverging(d.at(0), d.at(1), d.at(2), rgb_from(c.at(0)), rgb_from(c.at(1)),
                                              rgb_from(c.at(2)));
  }
  return vizdata::ColorScaleSpec::sequential(d.at(0), d.at(1), rgb_from(c.at(0)), rgb_from(c.at(1)));
}

json slice_to_json(const vizdata::PixelMatrixSlice& slice) {
  json groups = json::array();
  for (const auto& g : slice.groups) {
    groups.push_back({{"name", vizdata::to_string(g.name)}, {"width", g.width}, {"scale", scale_to_json(g.scale)}});
  }
  json rows = json::array();
  for (const auto& r : slice.rows) {
    json values = json::object();
    for (std::size_t g = 0; g < vizdata::kGroupCount; ++g) {
      values[std::string(vizdata::to_string(vizdata::kAllGroups[g]))] = encode_floats(r.groups[g]);
    }
    rows.push_back({{"position", r.position}, {"index", r.index}, {"label", r.label}, {"values", values}});
  }
  const auto& s = slice.source;
  return json{{"ordering_id", slice.ordering_id},
              {"source",
               {{"dataset", s.dataset},
                {"stage", s.stage},
                {"base", s.base},
                {"method", s.method},
                {"distance", metrics::to_string(s.distance)},
                {"linkage", hclust::to_string(s.linkage)}}},
              {"attribution_method", slice.attribution_method},
              {"offset", slice.offset},
              {"count", slice.rows.size()},
              {"total", slice.total},
              {"dtype", "float32"},
              {"endianness", "little"},
              {"encoding", "base64"},
              {"groups", groups},
              {"rows", rows}};
}

vizdata::PixelMatrixSlice slice_from_json(const json& doc) {
  try {
    vizdata::PixelMatrixSlice slice;
    slice.ordering_id = doc.at("ordering_id").get<std::string>();
    const auto& s = doc.at("source");
    slice.source = {s.at("dataset").get<std::string>(),
                    s.at("stage").get<std::string>(),
                    s.at("base").get<std::string>(),
                    s.at("method").get<std::string>(),
                    metrics::distance_kind_from_string(s.at("distance").get<std::string>()),
                    hclust::linkage_from_string(s.at("linkage").get<std::string>())};
    slice.attribution_method = doc.at("attribution_method").get<std::string>();
    slice.offset = doc.at("offset").get<std::size_t>();
    slice.total = doc.at("total").get<std::size_t>();
    const auto& groups = doc.at("groups");
    if (groups.size() != vizdata::kGroupCount) fail(ErrorKind::invalid_argument, "slice must carry 7 groups");
    for (std::size_t g = 0; g < vizdata::kGroupCount; ++g) {
      slice.groups[g] = {vizdata::group_from_string(groups[g].at("name").get<std::string>()),
                         groups[g].at("width").get<std::size_t>(), scale_from_json(groups[g].at("scale"))};
    }
    for (const auto& r : doc.at("rows")) {
      vizdata::SliceRow row;
      row.position = r.at("position").get<std::size_t>();
      row.index = r.at("index").get<std::size_t>();
      row.label = r.at("label").get<int>();
      for (std::size_t g = 0; g < vizdata::kGroupCount; ++g) {
        const auto name = std::string(vizdata::to_string(vizdata::kAllGroups[g]));
        row.groups[g] = read_f32_le(base64_decode(r.at("values").at(name).get<std::string>()));
      }
      slice.rows.push_back(std::move(row));
    }
    return slice;
  } catch (const json::exception& e) {
    fail(ErrorKind::invalid_argument, std::string("malformed slice document: ") + e.what());
  }
}

Response Api::meta() {
  json datasets = json::array();
  for (const auto& id : ws_.dataset_ids()) {
    const auto d = ws_.dataset(id);
    json stages = json::array();
    for (const auto& name : d->stage_names()) {
      stages.push_back({{"name", name}, {"samples", d->stage(name).size()}});
    }
    datasets.push_back({{"id", id},
                        {"series_length", d->series_length},
                        {"class_count", d->class_count},
                        {"stages", d->stage_names()},
                        {"stage_sizes", stages},
                        {"has_model", ws_.has_model(id)}});
  }
  json methods = json::array();
  for (auto m : attribution::kAllMethods) methods.push_back(attribution::to_string(m));
  json distances = json::array();
  for (auto k : metrics::kAllKinds) distances.push_back(metrics::to_string(k));
  json linkages = json::array();
  for (auto l : hclust::kAllLinkages) linkages.push_back(hclust::to_string(l));
  json groups = json::array();
  for (auto g : vizdata::kAllGroups) groups.push_back(vizdata::to_string(g));
  const json doc{
      {"datasets", datasets},
      {"attribution_methods", methods},
      {"distances", distances},
      {"linkages", linkages},
      {"clustering_bases", {"raw", "activations", "attributions"}},
      {"stddev_bases", {"raw", "activations", "attributions", "prediction"}},
      {"column_groups", groups},
      {"defaults",
       {{"window", ws_.config().default_window},
        {"attribution_method", attribution::to_string(pipeline::kDefaultMethod)},
        {"base", "raw"},
        {"distance", "norm_euclidean"},
        {"linkage", "ward"},
        {"histogram_bins", ws_.config().histogram_bins}}},
  };
  return {200, "application/json", doc.dump()};
}

Response Api::post_ordering(std::string_view body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception&) {
    fail(ErrorKind::invalid_argument, "request body is not valid JSON");
  }
  if (!doc.is_object()) fail(ErrorKind::invalid_argument, "request body must be a JSON object");
  pipeline::OrderingRequest req;
  try {
    req.dataset = doc.at("dataset").get<std::string>();
    req.stage = doc.at("stage").get<std::string>();
    req.base = pipeline::base_from_string(doc.at("base").get<std::string>());
    if (doc.contains("method") && !doc["method"].is_null()) {
      req.method = attribution::method_from_string(doc["method"].get<std::string>());
    }
    req.distance = metrics::distance_kind_from_string(doc.at("distance").get<std::string>());
    req.linkage = hclust::linkage_from_string(doc.at("linkage").get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorKind::invalid_argument, std::string("malformed ordering request: ") + e.what());
  }
  req.validate();
  const auto result = ws_.ordering(req);
  const json out{{"ordering_id", result.ordering_id},
                 {"permutation", result.ordering.permutation},
                 {"score", result.score.mean_neighbor_distance},
                 {"score_kind", metrics::to_string(result.score.kind)}};
  return {200, "application/json", out.dump()};
}

Response Api::slice(const Query& q) {
  const auto id = require(q, "ordering_id");
  const auto offset = parse_size(q, "offset", 0);
  const auto count = parse_size(q, "count", ws_.config().default_window);
  if (count < 1) fail(ErrorKind::invalid_argument, "count must be >= 1");
  const auto s = ws_.slice(id, offset, count, optional_method(q, "attribution"));
  return {200, "application/json", slice_to_json(s).dump()};
}

Response Api::stddev(const Query& q) {
  const auto id = require(q, "ordering_id");
  const auto base_name = require(q, "base");
  const auto base = pipeline::base_from_string(base_name);
  const auto found = ws_.find_ordering(id);
  if (!found) fail(ErrorKind::not_found, "unknown ordering '" + id + "'");
  const auto values = ws_.stddev(id, base, optional_method(q, "attribution"));
  const json out{{"ordering_id", id}, {"base", base_name}, {"permutation", found->ordering.permutation}, {"values", values}};
  return {200, "application/json", out.dump()};
}

Response Api::render(const Query& q) {
  const auto id = require(q, "ordering_id");
  const auto offset = parse_size(q, "offset", 0);
  const auto count = parse_size(q, "count", ws_.config().default_window);
  const auto cw = parse_size(q, "cell_width", 1);
  const auto ch = parse_size(q, "cell_height", 1);
  if (count < 1) fail(ErrorKind::invalid_argument, "count must be >= 1");
  const auto bytes = ws_.render(id, offset, count, cw, ch);
  return {200, "image/x-portable-pixmap", to_string(bytes)};
}

Response Api::handle(std::string_view method, std::string_view path, const Query& query, std::string_view body) {
  try {
    if (method == "GET" && path == "/api/meta") return meta();
    if (method == "POST" && path == "/api/orderings") return post_ordering(body);
    if (method == "GET" && path == "/api/slice") return slice(query);
    if (method == "GET" && path == "/api/stddev") return stddev(query);
    if (method == "GET" && path == "/api/render") return render(query);
    return error_response(404, ErrorKind::not_found, "no route for " + std::string(method) + " " + std::string(path));
  } catch (const Error& e) {
    return error_response(http_status(e.kind()), e.kind(), e.what());
  } catch (const std::exception& e) {
    return error_response(500, ErrorKind::compute, e.what());
  }
}

struct HttpServer::Impl {
  explicit Impl(pipeline::Workspace& ws) : workspace(ws), api(ws) {}
  pipeline::Workspace& workspace;
  Api api;
  httplib::Server server;
};

HttpServer::HttpServer(pipeline::Workspace& workspace) : impl_(std::make_unique<Impl>(workspace)) {
  auto& server = impl_->server;
  const auto& cfg = workspace.config();
  server.set_read_timeout(cfg.request_timeout_seconds, 0);
  server.set_write_timeout(cfg.request_timeout_seconds, 0);
  server.set_default_headers({{"Access-Control-Allow-Origin", cfg.cors_origin},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    Query query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const auto out = impl_->api.handle(req.method, req.path, query, req.body);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  for (const char* route : {"/api/meta", "/api/slice", "/api/stddev", "/api/render"}) server.Get(route, dispatch);
  server.Post("/api/orderings", dispatch);
  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(int port) {
  const auto& address = impl_->workspace.config().bind_address;
  const int bound = port == 0 ? impl_->server.bind_to_any_port(address) : (impl_->server.bind_to_port(address, port) ? port : -1);
  if (bound < 0) fail(ErrorKind::io, "cannot listen on " + address + ":" + std::to_string(port));
  return bound;
}

void HttpServer::run() {
  if (!impl_->server.listen_after_bind()) fail(ErrorKind::io, "HTTP server stopped with an error");
}

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void serve(pipeline::Workspace& workspace) {
  HttpServer server(workspace);
  const auto& cfg = workspace.config();
  const int port = server.bind(cfg.port);
  std::cerr << "davots: listening on " << cfg.bind_address << ":" << port << "\n";
  server.run();
}

}  // namespace davots::service
