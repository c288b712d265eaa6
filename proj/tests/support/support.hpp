#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "davots/hclust.hpp"
#include "davots/ingest.hpp"
#include "davots/model.hpp"

namespace davots::testing {

std::filesystem::path data_dir();
std::filesystem::path gunpoint_dir();

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "davots");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Two classes: slow versus fast sine waves with random phase, plus noise.
ingest::Dataset wave_dataset(std::size_t per_class_train, std::size_t per_class_test, std::size_t length,
                             double noise, std::uint64_t seed);

/// Random matrix rows with values in [-1, 1).
std::vector<std::vector<double>> random_rows(std::size_t count, std::size_t width, std::uint64_t seed);

/// Flattens rows into one row-major buffer.
std::vector<double> flatten(const std::vector<std::vector<double>>& rows);

/// Small model with every layer kind, for gradient checks.
model::ModelBundle tiny_model(std::size_t length, std::size_t classes, std::uint64_t seed, bool sigmoid = false);

/// Reference agglomeration: every step recomputes all inter-cluster
/// distances from the leaf-level matrix. Ward uses the closed form
///   D(A,B) = 2|A||B|/(|A|+|B|) * (mean_AB d^2 - mean_AA d^2 / 2 - mean_BB d^2 / 2)
/// and reports sqrt(D). Clusters are named by their smallest leaf for tie-breaks.
std::vector<hclust::Merge> naive_agglomerate(const metrics::DistanceMatrix& dm, hclust::Linkage linkage);

/// `clusters` Gaussian blobs with well separated random centres; rows are
/// assigned to blobs round-robin.
std::vector<std::vector<double>> gaussian_clusters(std::size_t count, std::size_t clusters, std::size_t width,
                                                   double spread, std::uint64_t seed);

}  // namespace davots::testing
