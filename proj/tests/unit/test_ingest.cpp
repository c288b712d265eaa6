#include <cmath>
#include <fstream>

#include "davots/error.hpp"
#include "davots/ingest.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace davots;
namespace fs = std::filesystem;

namespace {

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

ErrorKind error_kind(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::compute;
}

}  // namespace

TEST_CASE("labels are remapped by sorted original value") {
  testing::TempDir dir;
  write(dir.path() / "Tiny_TRAIN.tsv", "1\t0.1\t0.2\n-1\t0.3\t0.4\n");
  write(dir.path() / "Tiny_TEST.tsv", "-1\t0.5\t0.6\n");
  const auto d = ingest::load_ucr(dir.path(), "tiny");
  CHECK(d.series_length == 2);
  CHECK(d.class_count == 2);
  REQUIRE(d.stage("train").size() == 2);
  CHECK(d.stage("train")[0].label == 1);
  CHECK(d.stage("train")[1].label == 0);
  CHECK(d.stage("test")[0].label == 0);
  CHECK(d.original_labels == std::vector<double>{-1.0, 1.0});
  CHECK(d.stage_names() == std::vector<std::string>{"train", "test"});
}

TEST_CASE("comma, space and scientific notation are accepted") {
  testing::TempDir dir;
  write(dir.path() / "C_TRAIN.csv", "2,1e-1,-2.5E+1\n3,0,1\n");
  write(dir.path() / "C_TEST.csv", "3 4 5\n");
  const auto d = ingest::load_ucr(dir.path(), "c");
  CHECK(d.stage("train")[0].values == std::vector<double>{0.1, -25.0});
  CHECK(d.stage("test")[0].values == std::vector<double>{4.0, 5.0});
}

TEST_CASE("malformed inputs") {
  testing::TempDir dir;
  write(dir.path() / "E_TRAIN.tsv", "");
  write(dir.path() / "E_TEST.tsv", "1\t0\t0\n");
  try {
    (void)ingest::load_ucr(dir.path(), "e");
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("no samples") != std::string::npos);
  }
  write(dir.path() / "E_TRAIN.tsv", "1\t0\t0\n2\t0\n");
  CHECK(error_kind([&] { (void)ingest::load_ucr(dir.path(), "e"); }) == ErrorKind::invalid_argument);
  write(dir.path() / "E_TRAIN.tsv", "1\t0\tabc\n");
  CHECK(error_kind([&] { (void)ingest::load_ucr(dir.path(), "e"); }) == ErrorKind::invalid_argument);
  write(dir.path() / "E_TRAIN.tsv", "1\t0\t1\n");
  write(dir.path() / "E_TEST.tsv", "7\t0\t0\n");
  CHECK(error_kind([&] { (void)ingest::load_ucr(dir.path(), "e"); }) == ErrorKind::invalid_argument);
  fs::remove(dir.path() / "E_TEST.tsv");
  CHECK(error_kind([&] { (void)ingest::load_ucr(dir.path(), "e"); }) == ErrorKind::not_found);
}

TEST_CASE("znormalize examples") {
  CHECK(ingest::znormalize(std::vector<double>{1, 3}) == std::vector<double>{-1, 1});
  CHECK(ingest::znormalize(std::vector<double>{5, 5, 5}) == std::vector<double>{0, 0, 0});
  for (const auto& row : testing::random_rows(20, 37, 4)) {
    auto z = ingest::znormalize(row);
    double mean = 0.0, var = 0.0;
    for (double v : z) mean += v;
    mean /= static_cast<double>(z.size());
    for (double v : z) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(z.size()));
    CHECK(std::abs(mean) <= 1e-9);
    CHECK(std::abs(sd - 1.0) <= 1e-9);
    const auto twice = ingest::znormalize(z);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(twice[i] - z[i]) <= 1e-9);
  }
}

TEST_CASE("export then load round trips") {
  testing::TempDir dir;
  const auto d = ingest::znormalize(ingest::load_ucr(testing::gunpoint_dir(), "gp"));
  ingest::export_ucr(d, dir.path(), "gp");
  const auto back = ingest::load_ucr(dir.path(), "gp");
  CHECK(back.content_hash() == d.content_hash());
  for (const auto& stage : d.stage_names()) {
    REQUIRE(back.stage(stage).size() == d.stage(stage).size());
    for (std::size_t i = 0; i < d.stage(stage).size(); ++i) {
      CHECK(back.stage(stage)[i].values == d.stage(stage)[i].values);
      CHECK(back.stage(stage)[i].label == d.stage(stage)[i].label);
      CHECK(back.stage(stage)[i].index == i);
    }
  }
}

TEST_CASE("gunpoint metadata") {
  const auto d = ingest::load_ucr(testing::gunpoint_dir(), "gunpoint");
  CHECK(d.series_length == 150);
  CHECK(d.class_count == 2);
  CHECK(d.stage("train").size() == 50);
  CHECK(d.stage("test").size() == 150);
  CHECK_THROWS_AS(d.stage("valid"), Error);
}

TEST_CASE("forda metadata when available") {
  const char* dir = std::getenv("DAVOTS_FORDA_DIR");
  if (!dir) return;
  const auto d = ingest::load_ucr(dir, "forda");
  CHECK(d.series_length == 500);
  CHECK(d.class_count == 2);
  CHECK(d.stage("train").size() == 3601);
  CHECK(d.stage("test").size() == 1320);
}

TEST_CASE("dataset validation") {
  auto d = testing::wave_dataset(2, 2, 8, 0.1, 1);
  CHECK_NOTHROW(d.validate());
  d.stages[std::string(ingest::kTrain)][0].label = 5;
  CHECK_THROWS_AS(d.validate(), Error);
  d = testing::wave_dataset(2, 2, 8, 0.1, 1);
  d.stages[std::string(ingest::kTrain)][1].values.pop_back();
  CHECK_THROWS_AS(d.validate(), Error);
  d = testing::wave_dataset(2, 2, 8, 0.1, 1);
  d.stages[std::string(ingest::kTest)][0].values[0] = NAN;
  CHECK_THROWS_AS(d.validate(), Error);
}
