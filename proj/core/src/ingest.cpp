#include "davots/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "davots/codec.hpp"
#include "davots/error.hpp"

namespace davots::ingest {

namespace fs = std::filesystem;

const std::vector<Sample>& Dataset::stage(std::string_view name) const {
  auto it = stages.find(name);
  if (it == stages.end()) fail(ErrorKind::not_found, "unknown stage '" + std::string(name) + "'");
  return it->second;
}

std::vector<std::string> Dataset::stage_names() const {
  std::vector<std::string> names;
  // train and test first, anything else afterwards in key order
  for (auto preferred : {kTrain, kTest}) {
    if (has_stage(preferred)) names.emplace_back(preferred);
  }
  for (const auto& [name, _] : stages) {
    if (name != kTrain && name != kTest) names.push_back(name);
  }
  return names;
}

std::string Dataset::content_hash() const {
  Bytes buffer;
  auto put_u64 = [&](std::uint64_t v) {
    append_u32_le(buffer, static_cast<std::uint32_t>(v));
    append_u32_le(buffer, static_cast<std::uint32_t>(v >> 32));
  };
  auto put_f64 = [&](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u64(bits);
  };
  put_u64(series_length);
  put_u64(class_count);
  for (double l : original_labels) put_f64(l);
  for (const auto& [name, samples] : stages) {
    put_u64(name.size());
    buffer.insert(buffer.end(), name.begin(), name.end());
    put_u64(samples.size());
    for (const auto& s : samples) {
      put_u64(s.index);
      put_u64(static_cast<std::uint64_t>(s.label));
      for (double v : s.values) put_f64(v);
    }
  }
  return sha256_hex(buffer);
}

void Dataset::validate() const {
  if (stages.empty()) fail(ErrorKind::invalid_argument, "dataset '" + id + "' has no stages");
  if (series_length == 0) fail(ErrorKind::invalid_argument, "series length must be positive");
  if (class_count == 0) fail(ErrorKind::invalid_argument, "class count must be positive");
  for (const auto& [name, samples] : stages) {
    if (name.empty()) fail(ErrorKind::invalid_argument, "empty stage name");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      if (s.index != i) fail(ErrorKind::invalid_argument, "stage '" + name + "': sample indices must enumerate 0..count-1");
      if (s.values.size() != series_length) {
        fail(ErrorKind::invalid_argument, "stage '" + name + "' sample " + std::to_string(i) + " has wrong length");
      }
      if (s.label < 0 || static_cast<std::size_t>(s.label) >= class_count) {
        fail(ErrorKind::invalid_argument, "stage '" + name + "' sample " + std::to_string(i) + " has label out of range");
      }
      for (double v : s.values) {
        if (!std::isfinite(v)) {
          fail(ErrorKind::invalid_argument, "stage '" + name + "' sample " + std::to_string(i) + " has non-finite value");
        }
      }
    }
  }
}

namespace {

double parse_number(std::string_view token, const fs::path& file, std::size_t line) {
  // from_chars does not accept a leading '+'
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) {
    fail(ErrorKind::invalid_argument,
         file.string() + ":" + std::to_string(line) + ": non-numeric token '" + std::string(token) + "'");
  }
  if (!std::isfinite(value)) {
    fail(ErrorKind::invalid_argument, file.string() + ":" + std::to_string(line) + ": non-finite value");
  }
  return value;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == '\t' || line[pos] == ',' || line[pos] == ' ')) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && line[end] != '\t' && line[end] != ',' && line[end] != ' ') ++end;
    fields.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return fields;
}

fs::path find_split(const fs::path& directory, std::string_view suffix) {
  if (!fs::is_directory(directory)) {
    fail(ErrorKind::not_found, "dataset directory not found: " + directory.string());
  }
  std::vector<fs::path> matches;
  for (const auto& entry : fs::directory_iterator(directory)) {
    const std::string name = entry.path().filename().string();
    for (std::string_view ext : {".tsv", ".csv", ".txt"}) {
      const std::string wanted = std::string(suffix) + std::string(ext);
      if (name.size() > wanted.size() && name.ends_with(wanted)) matches.push_back(entry.path());
    }
  }
  if (matches.empty()) {
    fail(ErrorKind::not_found, "missing file *" + std::string(suffix) + ".tsv in " + directory.string());
  }
  std::sort(matches.begin(), matches.end());
  return matches.front();
}

}  // namespace

RawRows parse_ucr_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::not_found, "missing file " + file.string());
  RawRows raw;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (fields.size() < 2) {
      fail(ErrorKind::invalid_argument, file.string() + ":" + std::to_string(line_no) + ": row has no values");
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      fail(ErrorKind::invalid_argument, file.string() + ":" + std::to_string(line_no) + ": ragged row (" +
                                            std::to_string(fields.size() - 1) + " values, expected " +
                                            std::to_string(width - 1) + ")");
    }
    raw.labels.push_back(parse_number(fields[0], file, line_no));
    std::vector<double> values;
    values.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) values.push_back(parse_number(fields[i], file, line_no));
    raw.rows.push_back(std::move(values));
  }
  if (raw.rows.empty()) fail(ErrorKind::invalid_argument, file.string() + ": no samples");
  return raw;
}

Dataset load_ucr(const fs::path& directory, std::string id) {
  const fs::path train_file = find_split(directory, "_TRAIN");
  const fs::path test_file = find_split(directory, "_TEST");
  RawRows train = parse_ucr_file(train_file);
  RawRows test = parse_ucr_file(test_file);

  const std::size_t n = train.rows.front().size();
  if (test.rows.front().size() != n) {
    fail(ErrorKind::invalid_argument, "ragged rows: train length " + std::to_string(n) + ", test length " +
                                          std::to_string(test.rows.front().size()));
  }

  // The class set comes from the training split; the model's output layer is sized by it.
  const std::set<double> classes(train.labels.begin(), train.labels.end());

  Dataset d;
  d.id = std::move(id);
  d.series_length = n;
  d.class_count = classes.size();
  d.original_labels.assign(classes.begin(), classes.end());

  auto remap = [&](double original, const fs::path& file) {
    auto it = classes.find(original);
    if (it == classes.end()) {
      std::ostringstream msg;
      msg << file.string() << ": unknown label " << original << " (not present in training split)";
      fail(ErrorKind::invalid_argument, msg.str());
    }
    return static_cast<int>(std::distance(classes.begin(), it));
  };

  auto fill = [&](RawRows& raw, const fs::path& file) {
    std::vector<Sample> samples;
    samples.reserve(raw.rows.size());
    for (std::size_t i = 0; i < raw.rows.size(); ++i) {
      samples.push_back(Sample{i, std::move(raw.rows[i]), remap(raw.labels[i], file)});
    }
    return samples;
  };
  d.stages.emplace(std::string(kTrain), fill(train, train_file));
  d.stages.emplace(std::string(kTest), fill(test, test_file));
  d.validate();
  return d;
}

void export_ucr(const Dataset& dataset, const fs::path& directory, std::string_view name) {
  fs::create_directories(directory);
  auto write_stage = [&](std::string_view stage, std::string_view suffix) {
    if (!dataset.has_stage(stage)) return;
    const fs::path file = directory / (std::string(name) + std::string(suffix));
    std::ofstream out(file, std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + file.string());
    char buffer[64];
    auto emit = [&](double v) {
      const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof buffer, v);
      out.write(buffer, ptr - buffer);
    };
    for (const auto& s : dataset.stage(stage)) {
      emit(dataset.original_labels.at(static_cast<std::size_t>(s.label)));
      for (double v : s.values) {
        out.put('\t');
        emit(v);
      }
      out.put('\n');
    }
    if (!out) fail(ErrorKind::io, "write failed: " + file.string());
  };
  write_stage(kTrain, "_TRAIN.tsv");
  write_stage(kTest, "_TEST.tsv");
}

std::vector<double> znormalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  if (sd < 1e-12) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mean) / sd;
  return out;
}

Dataset znormalize(const Dataset& dataset) {
  if (dataset.series_length < 2) fail(ErrorKind::invalid_argument, "z-normalization needs series length >= 2");
  Dataset out = dataset;
  for (auto& [_, samples] : out.stages) {
    for (auto& s : samples) s.values = znormalize(s.values);
  }
  return out;
}

}  // namespace davots::ingest
