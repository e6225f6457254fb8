#include "ste_cli/config.hpp"

#include <cmath>

#include "ste/error.hpp"
#include "ste/io.hpp"

namespace ste::cli {

namespace {

json trainer_json(const TrainerSettings& s) {
  return {{"epochs", s.epochs}, {"batch_size", s.batch_size}, {"learning_rate", s.learning_rate}};
}

TrainerSettings trainer_from(const json& j, TrainerSettings s) {
  s.epochs = j.value("epochs", s.epochs);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.learning_rate = j.value("learning_rate", s.learning_rate);
  return s;
}

const char* noise_name(bnn::NoiseModel n) { return n == bnn::NoiseModel::learned ? "learned" : "fixed"; }

bnn::NoiseModel noise_from(const std::string& s) {
  if (s == "learned") return bnn::NoiseModel::learned;
  if (s == "fixed") return bnn::NoiseModel::fixed_unit;
  throw ConfigError("bnn.noise must be \"learned\" or \"fixed\", got \"" + s + "\"");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key \"" + key + "\" in " + where);
  }
}

}  // namespace

void apply_paper_scale(RunConfig& c) {
  c.rows = 400000;
  c.regression.epochs = 500;
  c.classification.epochs = 500;
  c.bnn.trainer.epochs = 500;
  c.datagen.grid.n_points = 1001;
  c.dram_grid_points = 1001;
  c.inference_samples = 100000;
}

json to_json(const RunConfig& c) {
  const auto& d = c.dram;
  return {
      {"seed", c.seeds.master},
      {"threads", c.threads},
      {"data",
       {{"rows", c.rows},
        {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
        {"bounds", io::to_json(c.datagen.bounds)},
        {"physics", io::to_json(c.datagen.physics)},
        {"detector", io::to_json(c.datagen.detector)},
        {"grid", io::to_json(c.datagen.grid)},
        {"layout", io::to_json(c.datagen.layout)}}},
      {"regression", trainer_json(c.regression)},
      {"classification", trainer_json(c.classification)},
      {"bnn",
       {{"trainer", trainer_json(c.bnn.trainer)},
        {"noise", noise_name(c.bnn.noise)},
        {"sigma0", c.bnn.sigma0},
        {"kl_scale", c.bnn.kl_scale}}},
      {"dram",
       {{"iterations", d.iterations},
        {"burn_in", d.burn_in},
        {"adapt_start", d.adapt_start},
        {"adapt_interval", d.adapt_interval},
        {"dr_scale", d.dr_scale},
        {"initial_sd", {std::sqrt(d.initial_cov(0, 0)), std::sqrt(d.initial_cov(1, 1)), std::sqrt(d.initial_cov(2, 2))}},
        {"grid_points", c.dram_grid_points}}},
      {"reference", io::to_json(c.reference)},
      {"inference", {{"samples", c.inference_samples}, {"evaluation_repeats", c.evaluation_repeats}}},
  };
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  try {
    check_keys(j, {"seed", "threads", "paper_scale", "data", "regression", "classification", "bnn", "dram", "reference",
                   "inference"},
               "config");
    if (j.value("paper_scale", false)) apply_paper_scale(c);
    c.seeds.master = j.value("seed", c.seeds.master);
    c.threads = j.value("threads", c.threads);
    if (j.contains("data")) {
      const json& d = j.at("data");
      check_keys(d, {"rows", "split", "bounds", "physics", "detector", "grid", "layout"}, "data");
      c.rows = d.value("rows", c.rows);
      if (d.contains("split")) {
        c.split.train = d["split"].value("train", c.split.train);
        c.split.val = d["split"].value("val", c.split.val);
        c.split.test = d["split"].value("test", c.split.test);
      }
      if (d.contains("bounds")) c.datagen.bounds = io::bounds_from_json(d["bounds"]);
      if (d.contains("physics")) c.datagen.physics = io::physics_from_json(d["physics"]);
      if (d.contains("detector")) c.datagen.detector = io::detector_from_json(d["detector"]);
      if (d.contains("grid")) c.datagen.grid = io::grid_from_json(d["grid"]);
      if (d.contains("layout")) c.datagen.layout = io::layout_from_json(d["layout"]);
    }
    if (j.contains("regression")) c.regression = trainer_from(j["regression"], c.regression);
    if (j.contains("classification")) c.classification = trainer_from(j["classification"], c.classification);
    if (j.contains("bnn")) {
      const json& b = j.at("bnn");
      check_keys(b, {"trainer", "noise", "sigma0", "kl_scale"}, "bnn");
      if (b.contains("trainer")) c.bnn.trainer = trainer_from(b["trainer"], c.bnn.trainer);
      if (b.contains("noise")) c.bnn.noise = noise_from(b["noise"].get<std::string>());
      c.bnn.sigma0 = b.value("sigma0", c.bnn.sigma0);
      c.bnn.kl_scale = b.value("kl_scale", c.bnn.kl_scale);
    }
    if (j.contains("dram")) {
      const json& d = j.at("dram");
      check_keys(d, {"iterations", "burn_in", "adapt_start", "adapt_interval", "dr_scale", "initial_sd", "grid_points"},
                 "dram");
      c.dram.iterations = d.value("iterations", c.dram.iterations);
      c.dram.burn_in = d.value("burn_in", c.dram.burn_in);
      c.dram.adapt_start = d.value("adapt_start", c.dram.adapt_start);
      c.dram.adapt_interval = d.value("adapt_interval", c.dram.adapt_interval);
      c.dram.dr_scale = d.value("dr_scale", c.dram.dr_scale);
      if (d.contains("initial_sd")) {
        const auto sd = d["initial_sd"].get<std::vector<double>>();
        if (sd.size() != 3) throw ConfigError("dram.initial_sd needs three entries");
        c.dram.initial_cov = Eigen::Vector3d(sd[0] * sd[0], sd[1] * sd[1], sd[2] * sd[2]).asDiagonal();
      }
      c.dram_grid_points = d.value("grid_points", c.dram_grid_points);
    }
    if (j.contains("reference")) c.reference = io::scenario_from_json(j["reference"]);
    if (j.contains("inference")) {
      c.inference_samples = j["inference"].value("samples", c.inference_samples);
      c.evaluation_repeats = j["inference"].value("evaluation_repeats", c.evaluation_repeats);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (c.rows < 8) throw ConfigError("data.rows must be at least 8");
  if (c.inference_samples == 0) throw ConfigError("inference.samples must be positive");
  dram::validate(c.dram);
  return c;
}

RunConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = io::read_json(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const RunConfig& c) { return io::sha256_hex(to_json(c).dump()); }

nn::TrainConfig train_config(const TrainerSettings& s, std::uint64_t seed) {
  if (s.epochs < 1 || s.batch_size < 1 || !(s.learning_rate > 0)) {
    throw ConfigError("epochs, batch size and learning rate must be positive");
  }
  nn::TrainConfig t;
  t.epochs = s.epochs;
  t.batch_size = s.batch_size;
  t.optimizer.learning_rate = s.learning_rate;
  t.seed = seed;
  return t;
}

bnn::BnnTrainConfig bnn_train_config(const BnnSettings& s, std::uint64_t seed) {
  bnn::BnnTrainConfig b;
  b.base = train_config(s.trainer, seed);
  b.noise = s.noise;
  b.sigma0 = s.sigma0;
  b.kl_scale = s.kl_scale;
  return b;
}

}  // namespace ste::cli
