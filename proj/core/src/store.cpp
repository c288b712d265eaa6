#include "davots/store.hpp"

#include <unistd.h>

#include <atomic>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <system_error>
#include <thread>

#include "davots/error.hpp"

namespace davots::store {

namespace fs = std::filesystem;
using nlohmann::json;

KeyBuilder::KeyBuilder(std::string kind, std::string dataset_id, std::string dataset_hash) {
  if (kind.empty() || kind.find_first_of("/\\.") != std::string::npos) {
    fail(ErrorKind::invalid_argument, "malformed artifact kind '" + kind + "'");
  }
  key_.kind = std::move(kind);
  key_.dataset = dataset_id;
  key_.fields.emplace_back("dataset", std::move(dataset_id));
  key_.fields.emplace_back("dataset_hash", std::move(dataset_hash));
}

KeyBuilder& KeyBuilder::add(std::string name, std::string value) {
  key_.fields.emplace_back(std::move(name), std::move(value));
  return *this;
}

ArtifactKey KeyBuilder::build() const {
  // length-prefixed so no field value can forge a separator
  std::string canonical = "davots-key-v1\n" + std::to_string(key_.kind.size()) + ":" + key_.kind + "\n";
  for (const auto& [name, value] : key_.fields) {
    canonical += std::to_string(name.size()) + ":" + name + "=" + std::to_string(value.size()) + ":" + value + "\n";
  }
  ArtifactKey key = key_;
  key.fingerprint = sha256_hex(canonical);
  return key;
}

namespace {

bool well_formed(std::string_view kind, std::string_view fingerprint) {
  if (kind.empty() || fingerprint.size() != 64) return false;
  for (char c : kind) {
    if (c == '/' || c == '\\' || c == '.') return false;
  }
  for (char c : fingerprint) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

fs::path manifest_path(const fs::path& object) { return fs::path(object.string() + ".manifest.json"); }

}  // namespace

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorKind::io, "read failed: " + path.string());
  return data;
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  static std::atomic<unsigned long> counter{0};
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorKind::io, "cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid()) + "." +
                       std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + "." +
                       std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      fs::remove(tmp, ec);
      fail(ErrorKind::io, "write failed: " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorKind::io, "cannot rename into " + path.string());
  }
}

Store::Store(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) fail(ErrorKind::io, "cannot create cache root " + root_.string() + ": " + ec.message());
}

fs::path Store::object_path(std::string_view kind, std::string_view fingerprint) const {
  if (!well_formed(kind, fingerprint)) {
    fail(ErrorKind::invalid_argument, "malformed artifact key " + std::string(kind) + "/" + std::string(fingerprint));
  }
  return root_ / std::string(kind) / std::string(fingerprint.substr(0, 2)) / std::string(fingerprint);
}

void Store::put(const ArtifactKey& key, std::span<const std::uint8_t> bytes) const {
  const fs::path object = object_path(key.kind, key.fingerprint);
  const std::string digest = sha256_hex(bytes);
  if (fs::exists(object) && fs::exists(manifest_path(object))) {
    try {
      const auto existing = json::parse(to_string(read_file(manifest_path(object))));
      if (existing.at("sha256") == digest) return;
    } catch (const std::exception&) {
      // unreadable sidecar: rewrite both files below
    }
  }
  json fields = json::object();
  for (const auto& [name, value] : key.fields) fields[name] = value;
  const json manifest{{"kind", key.kind},     {"fingerprint", key.fingerprint}, {"dataset", key.dataset},
                      {"fields", fields},     {"sha256", digest},               {"size", bytes.size()}};
  // sidecar first: a visible object always has its manifest
  write_file_atomic(manifest_path(object), to_bytes(manifest.dump(2)));
  write_file_atomic(object, bytes);
}

std::optional<Bytes> Store::get(std::string_view kind, std::string_view fingerprint) const {
  const fs::path object = object_path(kind, fingerprint);
  if (!fs::exists(object)) return std::nullopt;
  Bytes data = read_file(object);
  const fs::path sidecar = manifest_path(object);
  if (!fs::exists(sidecar)) fail(ErrorKind::integrity, "missing manifest for " + object.string());
  std::string expected;
  try {
    expected = json::parse(to_string(read_file(sidecar))).at("sha256").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::integrity, "malformed manifest " + sidecar.string() + ": " + e.what());
  }
  if (sha256_hex(data) != expected) fail(ErrorKind::integrity, "checksum mismatch reading " + object.string());
  return data;
}

std::optional<Bytes> Store::get(const ArtifactKey& key) const { return get(key.kind, key.fingerprint); }

bool Store::contains(std::string_view kind, std::string_view fingerprint) const {
  return fs::exists(object_path(kind, fingerprint));
}

std::size_t Store::invalidate(std::string_view dataset_id) const {
  std::size_t removed = 0;
  std::error_code ec;
  if (!fs::exists(root_)) return 0;
  std::vector<fs::path> sidecars;
  for (auto it = fs::recursive_directory_iterator(root_, ec); it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) break;
    const auto& p = it->path();
    if (it->is_regular_file() && p.string().ends_with(".manifest.json")) sidecars.push_back(p);
  }
  for (const auto& sidecar : sidecars) {
    try {
      const auto manifest = json::parse(to_string(read_file(sidecar)));
      if (manifest.value("dataset", std::string()) != dataset_id) continue;
    } catch (const std::exception&) {
      continue;
    }
    const std::string s = sidecar.string();
    const fs::path object = s.substr(0, s.size() - std::string(".manifest.json").size());
    if (fs::remove(object, ec)) ++removed;
    fs::remove(sidecar, ec);
  }
  return removed;
}

}  // namespace davots::store
