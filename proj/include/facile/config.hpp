#pragma once

// Run configuration as a flat JSON object with dotted keys, e.g.
//
//   {"seed": 7, "data.dim": 64, "pretrain.method": "facile_fsp", "eval.tasks": 200}
//
// Every key is optional; unknown keys and ill-typed values are ConfigErrors.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "facile/datasets.hpp"
#include "facile/diagnostics.hpp"
#include "facile/fewshot_eval.hpp"
#include "facile/pipeline.hpp"

namespace facile {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | cifar100
  int num_super = 20;
  int fine_per_super = 5;
  std::size_t per_class = 60;
  std::size_t test_per_class = 20;
  std::size_t dim = 64;
  double sigma_fine = 1.0;
  double sigma_super = 1.0;
  std::string cifar_train;
  std::string cifar_test;
};

struct CoarseConfig {
  CoarseTask task = CoarseTask::most_frequent;
  std::size_t num_sets = 2000;
  SizeRange sizes;
};

struct EvalConfig {
  ProtocolOptions protocol;
  int la_prototypes = 16;
};

struct RiskConfig {
  Growth growth = Growth::linear;
  std::vector<std::size_t> n_grid{10, 20, 40};
  double m0 = 1.0;
  std::size_t tasks = 200;
};

struct DiagnoseConfig {
  double eta = 1.0;
  std::size_t pairs = 500;
  double tolerance = 1e-9;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  DataConfig data;
  CoarseConfig coarse;
  PretrainSpec pretrain;
  EvalConfig eval;
  RiskConfig risk;
  DiagnoseConfig diagnose;

  // Applies every key of a flat object on top of the defaults.
  static RunConfig from_json(const nlohmann::json& flat);
  // Flat object with every key; from_json(to_json()) reproduces the config.
  nlohmann::json to_json() const;

  // Sub-seeds derived from `seed`.
  std::uint64_t data_seed() const;
  std::uint64_t coarse_seed() const;
  std::uint64_t pretrain_seed() const;
  std::uint64_t eval_seed() const;
};

// ConfigError naming the path when the file is missing or not a JSON object.
RunConfig load_run_config(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Workspace data file written by gen-data and read by later subcommands.

struct DataBundle {
  DatasetPtr train;
  DatasetPtr test;
};

// Synthetic data or CIFAR-100, per config.data.
DataBundle make_data(const RunConfig& config);

// Synthetic splits are stored inline (bit-exact doubles); CIFAR-100 splits
// are stored as file paths and re-read on load.
void write_data_file(const std::filesystem::path& path, const RunConfig& config,
                     const DataBundle& data);
DataBundle read_data_file(const std::filesystem::path& path);

nlohmann::json dataset_to_json(const Dataset& data);
Dataset dataset_from_json(const nlohmann::json& j);

// Writes `doc` with two-space indentation and a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace facile
