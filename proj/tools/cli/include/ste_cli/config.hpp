#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "ste/bnn.hpp"
#include "ste/dram.hpp"
#include "ste/nn.hpp"
#include "ste/scenario.hpp"

namespace ste::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct TrainerSettings {
  int epochs = 100;
  int batch_size = 128;
  double learning_rate = 1e-3;
};

struct BnnSettings {
  TrainerSettings trainer{200, 128, 1e-3};
  bnn::NoiseModel noise = bnn::NoiseModel::learned;
  double sigma0 = 0.05;
  double kl_scale = 1.0;
};

/// Per-stage seeds. Unset entries are derived from the master seed.
struct Seeds {
  std::uint64_t master = 7;
  std::uint64_t data() const { return master; }
  std::uint64_t train() const { return master + 1; }
  std::uint64_t measurement() const { return master + 2; }
  std::uint64_t chain() const { return master + 3; }
  std::uint64_t inference() const { return master + 4; }
};

/// Everything a pipeline run needs. Loaded from a JSON file; command-line
/// flags override individual keys afterwards.
struct RunConfig {
  Seeds seeds;
  unsigned threads = 1;

  DatagenConfig datagen;
  std::size_t rows = 40000;
  SplitRatios split;

  TrainerSettings regression{100, 128, 1e-3};
  TrainerSettings classification{100, 128, 1e-3};
  BnnSettings bnn;

  dram::DramConfig dram;
  int dram_grid_points = 201;

  Scenario reference{-389.0, 185.37, 1.83, 2.44, 0.74, 5.0, 5.0, 500.0};
  std::size_t inference_samples = 10000;
  int evaluation_repeats = 10;
};

/// Paper-sized run: 400k rows, 500 epochs, 1001-point grids.
void apply_paper_scale(RunConfig& c);

RunConfig config_from_json(const json& j);
json to_json(const RunConfig& c);
RunConfig load_config(const fs::path& path);

/// SHA-256 of the canonical JSON form; recorded in every output.
std::string config_hash(const RunConfig& c);

nn::TrainConfig train_config(const TrainerSettings& s, std::uint64_t seed);
bnn::BnnTrainConfig bnn_train_config(const BnnSettings& s, std::uint64_t seed);

}  // namespace ste::cli
