#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace davots {

/// Runtime settings. Read from a `key = value` file (davots.toml style), then
/// overridden by DAVOTS_PORT / DAVOTS_CACHE, then by explicit flags.
struct Config {
  std::filesystem::path cache_dir = "cache";
  int port = 8080;
  std::string bind_address = "127.0.0.1";
  /// Datasets loaded at startup, each "id=path/to/ucr/dir".
  std::vector<std::string> datasets;
  std::string cors_origin = "*";
  int request_timeout_seconds = 300;
  std::size_t histogram_bins = 32;
  std::size_t default_window = 100;
};

/// Parses the config file format. Unknown keys are rejected.
Config parse_config(const std::string& text, Config base = {});
Config load_config(const std::optional<std::filesystem::path>& file);
void apply_environment(Config& config);

}  // namespace davots
