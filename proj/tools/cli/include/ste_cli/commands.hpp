#pragma once

#include <array>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "ste_cli/config.hpp"

namespace ste::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kOther = 1,
  kConfig = 2,
  kSimulation = 3,
  kTraining = 4,
  kInference = 5,
};

int exit_code_for(const std::exception& e);

/// Wall-clock seconds per stage. Kept out of every hashed artifact.
using Timings = std::map<std::string, double>;

struct GenDataOptions {
  fs::path out = "data.csv";
};
json cmd_gen_data(const RunConfig& cfg, const GenDataOptions& opts);

struct SimulateOptions {
  Scenario scenario;
  fs::path out = "measurements.csv";
};
json cmd_simulate(const RunConfig& cfg, const SimulateOptions& opts);

struct TrainOptions {
  std::string model = "regression";  // regression | classification | bnn
  fs::path data = "data.csv";
  fs::path out = "model.json";
};
json cmd_train(const RunConfig& cfg, const TrainOptions& opts);

struct EvaluateOptions {
  fs::path model = "model.json";
  fs::path data = "data.csv";
  fs::path report = "report.json";
  /// Which part of the data file to score: "test", "val", "train" or "all".
  std::string split = "test";
  bool per_row = false;
};
json cmd_evaluate(const RunConfig& cfg, const EvaluateOptions& opts);

struct InferOptions {
  fs::path model = "bnn.json";
  fs::path measurements = "measurements.csv";
  fs::path out = "samples.csv";
  std::string mode = "combined";  // epistemic | combined
};
json cmd_infer(const RunConfig& cfg, const InferOptions& opts);

struct DramOptions {
  fs::path measurements = "measurements.csv";
  fs::path out = "chain.csv";
  std::optional<fs::path> summary;
};
json cmd_dram(const RunConfig& cfg, const DramOptions& opts);

struct CompareOptions {
  std::optional<fs::path> dram;
  std::optional<fs::path> bnn;
  std::optional<fs::path> bnn_epistemic;
  std::optional<fs::path> classification;
  std::optional<fs::path> timings;
  std::array<double, 3> truth{-389.0, 185.37, 1.83};
  /// Chain samples to drop; negative uses the burn-in recorded with the chain.
  int burn_in = -1;
  double bandwidth = 0.0;
  fs::path out = "report.json";
  std::optional<fs::path> plots;
};
json cmd_compare(const CompareOptions& opts);

struct ReferenceOptions {
  fs::path models = "models";
  fs::path out = "reference";
  /// Train any missing model from this dataset instead of failing.
  std::optional<fs::path> train_data;
};
json cmd_reproduce_reference(const RunConfig& cfg, const ReferenceOptions& opts, Timings& timings);

struct PipelineOptions {
  fs::path out = "run";
};
/// gen-data, train x3, evaluate, reproduce-reference; writes manifest.json
/// (hashes and seeds, deterministic) and timings.json (wall clock).
json cmd_pipeline(const RunConfig& cfg, const PipelineOptions& opts);

}  // namespace ste::cli
