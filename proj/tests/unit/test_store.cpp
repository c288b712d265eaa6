#include <fstream>
#include <thread>

#include "davots/error.hpp"
#include "davots/store.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace davots;
namespace fs = std::filesystem;

TEST_CASE("keys are canonical") {
  const auto a = store::KeyBuilder("forward", "gp", "h1").add("stage", "test").build();
  const auto b = store::KeyBuilder("forward", "gp", "h1").add("stage", "test").build();
  CHECK(a.fingerprint == b.fingerprint);
  CHECK(a.fingerprint.size() == 64);
  CHECK(store::KeyBuilder("forward", "gp", "h2").add("stage", "test").build().fingerprint != a.fingerprint);
  CHECK(store::KeyBuilder("forward", "gp", "h1").add("stage", "train").build().fingerprint != a.fingerprint);
  CHECK(store::KeyBuilder("weights", "gp", "h1").add("stage", "test").build().fingerprint != a.fingerprint);
  // length prefixes keep field boundaries unambiguous
  CHECK(store::KeyBuilder("k", "d", "h").add("ab", "c").build().fingerprint !=
        store::KeyBuilder("k", "d", "h").add("a", "bc").build().fingerprint);
}

TEST_CASE("put and get") {
  testing::TempDir dir;
  const store::Store s(dir.path());
  const auto key = store::KeyBuilder("blob", "gp", "h").add("x", "1").build();
  CHECK_FALSE(s.get(key).has_value());
  CHECK_FALSE(s.contains("blob", key.fingerprint));
  const Bytes payload{1, 2, 3, 0, 255};
  s.put(key, payload);
  CHECK(s.get(key) == payload);
  CHECK(s.contains("blob", key.fingerprint));
  const auto path = s.object_path("blob", key.fingerprint);
  CHECK(path == dir.path() / "blob" / key.fingerprint.substr(0, 2) / key.fingerprint);
  CHECK(fs::exists(path.string() + ".manifest.json"));
  s.put(key, payload);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path() / "blob")) files += e.is_regular_file();
  CHECK(files == 2);
}

TEST_CASE("corruption is detected on read") {
  testing::TempDir dir;
  const store::Store s(dir.path());
  const auto key = store::KeyBuilder("blob", "gp", "h").build();
  s.put(key, to_bytes("hello"));
  {
    std::ofstream out(s.object_path("blob", key.fingerprint), std::ios::binary | std::ios::trunc);
    out << "hellO";
  }
  try {
    (void)s.get(key);
    FAIL("expected integrity error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::integrity);
    CHECK(std::string(e.what()).find(key.fingerprint) != std::string::npos);
  }
}

TEST_CASE("concurrent puts of one key leave one valid artifact") {
  testing::TempDir dir;
  const store::Store s(dir.path());
  const auto key = store::KeyBuilder("blob", "gp", "h").add("n", "big").build();
  Bytes payload(1 << 20);
  for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<std::uint8_t>(i * 7);
  std::vector<std::jthread> workers;
  for (int w = 0; w < 8; ++w) workers.emplace_back([&] { s.put(key, payload); });
  workers.clear();
  CHECK(s.get(key) == payload);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path() / "blob")) files += e.is_regular_file();
  CHECK(files == 2);
}

TEST_CASE("invalidate removes only the named dataset") {
  testing::TempDir dir;
  const store::Store s(dir.path());
  const auto a1 = store::KeyBuilder("x", "a", "h").add("i", "1").build();
  const auto a2 = store::KeyBuilder("y", "a", "h").add("i", "2").build();
  const auto b1 = store::KeyBuilder("x", "b", "h").add("i", "1").build();
  for (const auto& k : {a1, a2, b1}) s.put(k, to_bytes(k.fingerprint));
  CHECK(s.invalidate("a") == 2);
  CHECK_FALSE(s.get(a1).has_value());
  CHECK_FALSE(s.get(a2).has_value());
  CHECK(s.get(b1).has_value());
  CHECK(s.invalidate("a") == 0);
}

TEST_CASE("atomic file writes") {
  testing::TempDir dir;
  const auto p = dir.path() / "sub" / "f.bin";
  store::write_file_atomic(p, to_bytes("one"));
  store::write_file_atomic(p, to_bytes("two"));
  CHECK(to_string(store::read_file(p)) == "two");
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir.path() / "sub")) files += e.is_regular_file();
  CHECK(files == 1);
  try {
    (void)store::read_file(dir.path() / "missing");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("missing") != std::string::npos);
  }
}
