// davots: batch driver for the dense-pixel pipeline and the HTTP service.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
// Errors go to stderr as a single line: `error: <kind>: <message>`.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "davots/config.hpp"
#include "davots/error.hpp"
#include "davots/pipeline.hpp"
#include "davots/service.hpp"
#include "davots/store.hpp"

namespace {

using namespace davots;

int report(ErrorKind kind, const std::string& message) {
  std::string line = message;
  for (auto& c : line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error: " << to_string(kind) << ": " << line << "\n";
  return kind == ErrorKind::invalid_argument || kind == ErrorKind::not_found || kind == ErrorKind::out_of_range ? 2 : 1;
}

struct Flags {
  std::string config_file;
  std::string cache_dir;
  int verbosity = 0;

  std::string path, id, stage = "test", weights, method, base, distance = "norm_euclidean", linkage = "ward";
  std::string ordering, out;
  std::optional<std::uint64_t> seed;
  std::size_t epochs = pipeline::TrainOptions{}.epochs, batch_size = pipeline::TrainOptions{}.batch_size, offset = 0, count = 100, cell_width = 1, cell_height = 1;
  double lr = pipeline::TrainOptions{}.learning_rate;
  std::optional<int> port;
};

Config make_config(const Flags& f) {
  Config cfg = load_config(f.config_file.empty() ? std::nullopt : std::optional<std::filesystem::path>(f.config_file));
  if (!f.cache_dir.empty()) cfg.cache_dir = f.cache_dir;
  if (f.port) cfg.port = *f.port;
  return cfg;
}

pipeline::OrderingRequest make_request(const Flags& f) {
  pipeline::OrderingRequest req;
  req.dataset = f.id;
  req.stage = f.stage;
  req.base = pipeline::base_from_string(f.base);
  if (!f.method.empty()) req.method = attribution::method_from_string(f.method);
  if (req.base == pipeline::Base::attributions && !req.method) req.method = pipeline::kDefaultMethod;
  req.distance = metrics::distance_kind_from_string(f.distance);
  req.linkage = hclust::linkage_from_string(f.linkage);
  req.validate();
  return req;
}

void log(const Flags& f, const std::string& message) {
  if (f.verbosity > 0) std::cerr << "davots: " << message << "\n";
}

int run_ingest(const Flags& f) {
  pipeline::Workspace ws(make_config(f));
  const auto d = ws.ingest(f.path, f.id);
  std::cout << "dataset " << d->id << ": n=" << d->series_length << " classes=" << d->class_count;
  for (const auto& name : d->stage_names()) std::cout << " " << name << "=" << d->stage(name).size();
  std::cout << "\n";
  return 0;
}

int run_train(const Flags& f) {
  pipeline::Workspace ws(make_config(f));
  pipeline::TrainOptions options;
  options.seed = *f.seed;
  options.epochs = f.epochs;
  options.batch_size = f.batch_size;
  options.learning_rate = f.lr;
  log(f, "training default model on '" + f.id + "'");
  const auto result = ws.train(f.id, options);
  const auto bytes = model::save_weights(result.model);
  store::write_file_atomic(f.out, bytes);
  std::filesystem::path log_path = f.out;
  log_path += ".log.csv";
  store::write_file_atomic(log_path, to_bytes(model::training_log_csv(result.log)));
  const auto& last = result.log.back();
  std::cout << "weights " << f.out << " checksum " << sha256_hex(bytes) << "\n";
  std::cout << "log " << log_path.string() << " final loss " << last.loss << " train_acc " << last.train_acc;
  if (last.test_acc) std::cout << " test_acc " << *last.test_acc;
  std::cout << "\n";
  return 0;
}

int run_attribute(const Flags& f) {
  pipeline::Workspace ws(make_config(f));
  const auto model = model::load_weights(store::read_file(f.weights));
  ws.set_model(f.id, model);
  const auto method = attribution::method_from_string(f.method);
  log(f, "attributing stage '" + f.stage + "' with " + f.method);
  const auto matrix = ws.attributions(f.id, f.stage, method);
  std::cout << "attribution " << attribution::to_string(method) << " stage " << f.stage << " rows " << matrix->rows()
            << " length " << matrix->series_length << "\n";
  return 0;
}

int run_cluster(const Flags& f) {
  const auto req = make_request(f);
  pipeline::Workspace ws(make_config(f));
  const auto result = ws.ordering(req);
  std::cout << "ordering " << result.ordering_id << "\n";
  std::printf("score %.9g (%s mean neighbor distance)\n", result.score.mean_neighbor_distance,
              std::string(metrics::to_string(result.score.kind)).c_str());
  return 0;
}

int run_measure(const Flags& f) {
  auto req = make_request(f);
  pipeline::Workspace ws(make_config(f));
  const auto choice = ws.measure(req);
  std::printf("%-10s %s\n", "linkage", "score");
  for (std::size_t i = 0; i < std::size(hclust::kAllLinkages); ++i) {
    const auto l = hclust::kAllLinkages[i];
    std::printf("%-10s %.9g%s\n", std::string(hclust::to_string(l)).c_str(), choice.scores[i],
                l == choice.best ? " *" : "");
  }
  return 0;
}

int run_render(const Flags& f) {
  pipeline::Workspace ws(make_config(f));
  const auto bytes = ws.render(f.ordering, f.offset, f.count, f.cell_width, f.cell_height);
  store::write_file_atomic(f.out, bytes);
  std::cout << "wrote " << f.out << " (" << bytes.size() << " bytes)\n";
  return 0;
}

int run_serve(const Flags& f) {
  pipeline::Workspace ws(make_config(f));
  service::serve(ws);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"davots: dense-pixel views of time series, activations and attributions"};
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config_file, "Config file (key = value)");
  app.add_option("--cache", f.cache_dir, "Cache directory (overrides config and DAVOTS_CACHE)");
  app.add_flag("-v,--verbose", f.verbosity, "Progress output on stderr");

  auto* ingest = app.add_subcommand("ingest", "Load, validate, z-normalize and register a UCR dataset");
  ingest->add_option("--path", f.path, "Directory with <NAME>_TRAIN.tsv and <NAME>_TEST.tsv")->required();
  ingest->add_option("--id", f.id, "Dataset id")->required();

  auto* train = app.add_subcommand("train", "Train the default 1D CNN");
  train->add_option("--id", f.id)->required();
  train->add_option("--seed", f.seed, "Seed for initialization and shuffling")->required();
  train->add_option("--epochs", f.epochs)->check(CLI::PositiveNumber);
  train->add_option("--batch-size", f.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--lr", f.lr)->check(CLI::NonNegativeNumber);
  train->add_option("--out", f.out, "Weights file to write")->required();

  auto* attribute = app.add_subcommand("attribute", "Compute an attribution matrix into the cache");
  attribute->add_option("--id", f.id)->required();
  attribute->add_option("--stage", f.stage)->required();
  attribute->add_option("--weights", f.weights)->required()->check(CLI::ExistingFile);
  attribute->add_option("--method", f.method)->required();

  auto* cluster = app.add_subcommand("cluster", "Cluster a stage and store the leaf ordering");
  cluster->add_option("--id", f.id)->required();
  cluster->add_option("--stage", f.stage)->required();
  cluster->add_option("--base", f.base, "raw | activations | attributions")->required();
  cluster->add_option("--method", f.method, "Attribution method for --base attributions");
  cluster->add_option("--distance", f.distance)->required();
  cluster->add_option("--linkage", f.linkage)->required();

  auto* measure = app.add_subcommand("measure", "Score every linkage's leaf order");
  measure->add_option("--id", f.id)->required();
  measure->add_option("--stage", f.stage)->required();
  measure->add_option("--base", f.base)->required();
  measure->add_option("--method", f.method);
  measure->add_option("--distance", f.distance)->required();

  auto* render = app.add_subcommand("render", "Render an ordering window as a binary PPM");
  render->add_option("--ordering", f.ordering)->required();
  render->add_option("--offset", f.offset);
  render->add_option("--count", f.count)->check(CLI::PositiveNumber);
  render->add_option("--out", f.out)->required();
  render->add_option("--cell-width", f.cell_width)->check(CLI::PositiveNumber);
  render->add_option("--cell-height", f.cell_height)->check(CLI::PositiveNumber);

  auto* serve = app.add_subcommand("serve", "Start the HTTP service");
  serve->add_option("--port", f.port);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(ErrorKind::invalid_argument, e.what());
  }

  try {
    if (ingest->parsed()) return run_ingest(f);
    if (train->parsed()) return run_train(f);
    if (attribute->parsed()) return run_attribute(f);
    if (cluster->parsed()) return run_cluster(f);
    if (measure->parsed()) return run_measure(f);
    if (render->parsed()) return run_render(f);
    if (serve->parsed()) return run_serve(f);
  } catch (const Error& e) {
    return report(e.kind(), e.what());
  } catch (const std::exception& e) {
    return report(ErrorKind::compute, e.what());
  }
  return 2;
}
