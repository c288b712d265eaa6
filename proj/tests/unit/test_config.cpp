#include <cstdlib>
#include <fstream>

#include "davots/config.hpp"
#include "davots/error.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace davots;

TEST_CASE("defaults") {
  const Config c;
  CHECK(c.port == 8080);
  CHECK(c.default_window == 100);
  CHECK(c.histogram_bins == 32);
  CHECK(c.cache_dir == "cache");
}

TEST_CASE("parse key value file") {
  const auto c = parse_config(R"(# comment
port = 9000
cache_dir = "/tmp/davots-cache"
datasets = ["gp=/data/GunPoint", "forda=/data/FordA"]
bind_address = "0.0.0.0"
cors_origin = "http://localhost:5173"
request_timeout_seconds = 60
histogram_bins = 16
default_window = 50
)");
  CHECK(c.port == 9000);
  CHECK(c.cache_dir == "/tmp/davots-cache");
  CHECK(c.datasets == std::vector<std::string>{"gp=/data/GunPoint", "forda=/data/FordA"});
  CHECK(c.bind_address == "0.0.0.0");
  CHECK(c.cors_origin == "http://localhost:5173");
  CHECK(c.request_timeout_seconds == 60);
  CHECK(c.histogram_bins == 16);
  CHECK(c.default_window == 50);
}

TEST_CASE("bad config files") {
  CHECK_THROWS_AS(parse_config("colour = 3\n"), Error);
  CHECK_THROWS_AS(parse_config("port = abc\n"), Error);
  CHECK_THROWS_AS(parse_config("port\n"), Error);
  CHECK_THROWS_AS(parse_config("port = 70000\n"), Error);
  CHECK_THROWS_AS(load_config(std::filesystem::path("/nonexistent/davots.toml")), Error);
}

TEST_CASE("environment overrides the file") {
  testing::TempDir dir;
  const auto file = dir.path() / "davots.toml";
  std::ofstream(file) << "port = 9000\ncache_dir = \"a\"\n";
  ::setenv("DAVOTS_PORT", "9100", 1);
  ::setenv("DAVOTS_CACHE", "/tmp/elsewhere", 1);
  const auto c = load_config(file);
  CHECK(c.port == 9100);
  CHECK(c.cache_dir == "/tmp/elsewhere");
  ::setenv("DAVOTS_PORT", "nope", 1);
  CHECK_THROWS_AS(load_config(file), Error);
  ::unsetenv("DAVOTS_PORT");
  ::unsetenv("DAVOTS_CACHE");
  const auto plain = load_config(file);
  CHECK(plain.port == 9000);
  CHECK(plain.cache_dir == "a");
}
