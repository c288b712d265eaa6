#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "davots/codec.hpp"

namespace davots::store {

/// Identifies a cached artifact. The fingerprint is the SHA-256 of the
/// canonical, field-ordered serialization of every input.
struct ArtifactKey {
  std::string kind;
  std::string fingerprint;
  std::string dataset;  // owning dataset id, used by invalidate()
  std::vector<std::pair<std::string, std::string>> fields;

  bool operator==(const ArtifactKey& o) const { return kind == o.kind && fingerprint == o.fingerprint; }
};

class KeyBuilder {
 public:
  KeyBuilder(std::string kind, std::string dataset_id, std::string dataset_hash);

  KeyBuilder& add(std::string name, std::string value);
  ArtifactKey build() const;

 private:
  ArtifactKey key_;
};

/// Content-addressed file store laid out as `<root>/<kind>/<fp[0:2]>/<fp>` with
/// a `<fp>.manifest.json` sidecar. Writers go through temp-file-then-rename,
/// so readers see either nothing or a complete artifact.
class Store {
 public:
  explicit Store(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  void put(const ArtifactKey& key, std::span<const std::uint8_t> bytes) const;
  /// Absent keys yield nullopt. Checksum mismatches throw integrity errors.
  std::optional<Bytes> get(const ArtifactKey& key) const;
  std::optional<Bytes> get(std::string_view kind, std::string_view fingerprint) const;
  bool contains(std::string_view kind, std::string_view fingerprint) const;

  /// Removes every artifact whose key names `dataset_id`; returns the count.
  std::size_t invalidate(std::string_view dataset_id) const;

  std::filesystem::path object_path(std::string_view kind, std::string_view fingerprint) const;

 private:
  std::filesystem::path root_;
};

/// Writes `bytes` to `path` via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
Bytes read_file(const std::filesystem::path& path);

}  // namespace davots::store
