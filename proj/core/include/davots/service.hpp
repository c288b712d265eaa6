#pragma once

#include <map>
#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "davots/error.hpp"
#include "davots/pipeline.hpp"
#include "davots/vizdata.hpp"

namespace davots::service {

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

using Query = std::map<std::string, std::string, std::less<>>;

/// Slice wire document. Float arrays are base64 of little-endian float32.
nlohmann::json slice_to_json(const vizdata::PixelMatrixSlice& slice);
vizdata::PixelMatrixSlice slice_from_json(const nlohmann::json& doc);

nlohmann::json scale_to_json(const vizdata::ColorScaleSpec& scale);
vizdata::ColorScaleSpec scale_from_json(const nlohmann::json& doc);

/// Transport-independent request handling; the HTTP server and the tests both
/// go through handle().
class Api {
 public:
  explicit Api(pipeline::Workspace& workspace) : ws_(workspace) {}

  Response handle(std::string_view method, std::string_view path, const Query& query, std::string_view body);

  Response meta();
  Response post_ordering(std::string_view body);
  Response slice(const Query& query);
  Response stddev(const Query& query);
  Response render(const Query& query);

 private:
  pipeline::Workspace& ws_;
};

/// HTTP/1.1 front end for Api.
class HttpServer {
 public:
  explicit HttpServer(pipeline::Workspace& workspace);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds the configured address; port 0 picks a free port. Returns the bound port.
  int bind(int port);
  /// Serves until stop() is called.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Binds the configured port and blocks serving requests.
void serve(pipeline::Workspace& workspace);

/// Maps an ErrorKind onto an HTTP status code.
int http_status(ErrorKind kind) noexcept;

}  // namespace davots::service
