#include "davots/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string_view>

#include "davots/error.hpp"

namespace davots {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string unquote(std::string_view v, std::size_t line) {
  v = trim(v);
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return std::string(v.substr(1, v.size() - 2));
  }
  if (v.find_first_of("\"'") != std::string_view::npos) {
    fail(ErrorKind::invalid_argument, "config line " + std::to_string(line) + ": unbalanced quotes");
  }
  return std::string(v);
}

long parse_int(std::string_view v, std::size_t line) {
  v = trim(v);
  long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    fail(ErrorKind::invalid_argument, "config line " + std::to_string(line) + ": expected an integer");
  }
  return out;
}

std::vector<std::string> parse_list(std::string_view v, std::size_t line) {
  v = trim(v);
  if (v.size() < 2 || v.front() != '[' || v.back() != ']') {
    fail(ErrorKind::invalid_argument, "config line " + std::to_string(line) + ": expected a [\"...\"] list");
  }
  v = v.substr(1, v.size() - 2);
  std::vector<std::string> out;
  while (!trim(v).empty()) {
    const auto comma = v.find(',');
    const auto item = trim(v.substr(0, comma));
    if (!item.empty()) out.push_back(unquote(item, line));
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

Config parse_config(const std::string& text, Config config) {
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(ErrorKind::invalid_argument, "config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key == "cache_dir") config.cache_dir = unquote(value, line_no);
    else if (key == "port") config.port = static_cast<int>(parse_int(value, line_no));
    else if (key == "bind_address") config.bind_address = unquote(value, line_no);
    else if (key == "datasets") config.datasets = parse_list(value, line_no);
    else if (key == "cors_origin") config.cors_origin = unquote(value, line_no);
    else if (key == "request_timeout_seconds") config.request_timeout_seconds = static_cast<int>(parse_int(value, line_no));
    else if (key == "histogram_bins") config.histogram_bins = static_cast<std::size_t>(parse_int(value, line_no));
    else if (key == "default_window") config.default_window = static_cast<std::size_t>(parse_int(value, line_no));
    else fail(ErrorKind::invalid_argument, "config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  if (config.port < 0 || config.port > 65535) fail(ErrorKind::invalid_argument, "config: port out of range");
  if (config.histogram_bins < 1) fail(ErrorKind::invalid_argument, "config: histogram_bins must be >= 1");
  if (config.default_window < 1) fail(ErrorKind::invalid_argument, "config: default_window must be >= 1");
  return config;
}

Config load_config(const std::optional<std::filesystem::path>& file) {
  Config config;
  if (file) {
    std::ifstream in(*file);
    if (!in) fail(ErrorKind::io, "cannot read config file " + file->string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    config = parse_config(buffer.str(), config);
  }
  apply_environment(config);
  return config;
}

void apply_environment(Config& config) {
  if (const char* cache = std::getenv("DAVOTS_CACHE"); cache && *cache) config.cache_dir = cache;
  if (const char* port = std::getenv("DAVOTS_PORT"); port && *port) {
    config.port = static_cast<int>(parse_int(port, 0));
    if (config.port < 0 || config.port > 65535) fail(ErrorKind::invalid_argument, "DAVOTS_PORT out of range");
  }
}

}  // namespace davots
