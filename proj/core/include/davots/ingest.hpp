#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace davots::ingest {

inline constexpr std::string_view kTrain = "train";
inline constexpr std::string_view kTest = "test";

struct Sample {
  std::size_t index = 0;  // stable id within the stage; never changes under reordering
  std::vector<double> values;
  int label = 0;
};

/// Labeled univariate series partitioned into named stages. Labels are
/// contiguous 0-based class ids; `original_labels[c]` is the value class c had
/// in the source files.
struct Dataset {
  std::string id;
  std::size_t series_length = 0;
  std::size_t class_count = 0;
  std::map<std::string, std::vector<Sample>, std::less<>> stages;
  std::vector<double> original_labels;

  bool has_stage(std::string_view name) const { return stages.find(name) != stages.end(); }
  /// Throws not_found for unknown stages.
  const std::vector<Sample>& stage(std::string_view name) const;
  std::vector<std::string> stage_names() const;

  /// SHA-256 over a canonical encoding of every stage, label and value.
  std::string content_hash() const;

  /// Throws invalid_argument when a structural invariant is broken.
  void validate() const;
};

/// Loads `<NAME>_TRAIN.tsv` / `<NAME>_TEST.tsv` from `directory`. Rows are
/// `label v1 ... vn`, tab or comma separated.
Dataset load_ucr(const std::filesystem::path& directory, std::string id);

/// Parses one UCR file; used by load_ucr and exposed for tests.
struct RawRows {
  std::vector<double> labels;
  std::vector<std::vector<double>> rows;
};
RawRows parse_ucr_file(const std::filesystem::path& file);

/// Writes the dataset back in UCR TSV layout using the original label values.
/// Values are printed with round-trip precision.
void export_ucr(const Dataset& dataset, const std::filesystem::path& directory, std::string_view name);

/// Population z-normalization; series with stddev < 1e-12 become all zero.
std::vector<double> znormalize(std::span<const double> values);
Dataset znormalize(const Dataset& dataset);

}  // namespace davots::ingest
