#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include "ste/error.hpp"
#include "ste/parallel.hpp"
#include "ste_cli/commands.hpp"

using namespace ste::cli;

namespace {

std::array<double, 3> parse_truth(const std::string& s) {
  std::array<double, 3> t{};
  std::stringstream in(s);
  std::string part;
  for (double& v : t) {
    if (!std::getline(in, part, ',')) throw ste::ConfigError("--truth expects x,y,m");
    try {
      v = std::stod(part);
    } catch (const std::exception&) {
      throw ste::ConfigError("--truth: bad number \"" + part + "\"");
    }
  }
  return t;
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Source-term estimation for instantaneous radiological releases"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> config_path;
  bool paper_scale = false;
  app.add_option("--seed", seed, "Master seed; per-stage seeds are derived from it");
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_flag("--paper-scale", paper_scale, "400k rows, 500 epochs, 1001-point grids");

  // Overrides shared by several subcommands.
  std::optional<int> grid_points, epochs, batch, iterations, burn_in;
  std::optional<double> lr;
  std::optional<std::size_t> count, samples;

  auto* gen = app.add_subcommand("gen-data", "Simulate a labelled dataset");
  GenDataOptions gen_opts;
  gen->add_option("--count", count, "Rows to generate");
  gen->add_option("--out", gen_opts.out, "Output CSV")->capture_default_str();
  gen->add_option("--grid-points", grid_points, "Integration grid points per side (odd)");

  auto* sim = app.add_subcommand("simulate", "Simulate one measurement snapshot (defaults to the reference release)");
  SimulateOptions sim_opts;
  std::optional<double> sx, sy, sm, su, sv;
  sim->add_option("--x", sx, "Release x_c (m)");
  sim->add_option("--y", sy, "Release y_c (m)");
  sim->add_option("--mass", sm, "Released mass (g)");
  sim->add_option("--u", su, "Mean wind u (m/s)");
  sim->add_option("--v", sv, "Mean wind v (m/s)");
  sim->add_option("--grid-points", grid_points, "Integration grid points per side (odd)");
  sim->add_option("--out", sim_opts.out, "Output CSV")->capture_default_str();

  auto* train = app.add_subcommand("train", "Train a regression, classification or Bayesian network");
  TrainOptions train_opts;
  train->add_option("--model", train_opts.model, "regression | classification | bnn")
      ->check(CLI::IsMember({"regression", "classification", "bnn"}))
      ->required();
  train->add_option("--data", train_opts.data, "Dataset CSV (split internally)")->required();
  train->add_option("--out", train_opts.out, "Model JSON")->capture_default_str();
  train->add_option("--epochs", epochs, "Training epochs");
  train->add_option("--batch", batch, "Mini-batch size");
  train->add_option("--lr", lr, "Nadam learning rate");

  auto* eval = app.add_subcommand("evaluate", "Score a model on a dataset split");
  EvaluateOptions eval_opts;
  eval->add_option("--model", eval_opts.model, "Model JSON")->required();
  eval->add_option("--data", eval_opts.data, "Dataset CSV")->required();
  eval->add_option("--report", eval_opts.report, "Report JSON")->capture_default_str();
  eval->add_option("--split", eval_opts.split, "train | val | test | all")->capture_default_str();
  eval->add_flag("--per-row", eval_opts.per_row, "Include per-row errors");

  auto* infer = app.add_subcommand("infer", "Predict from a measurement file");
  InferOptions infer_opts;
  infer->add_option("--model", infer_opts.model, "Model JSON")->required();
  infer->add_option("--measurements", infer_opts.measurements, "Measurement CSV")->required();
  infer->add_option("--mode", infer_opts.mode, "epistemic | combined (Bayesian model only)")
      ->check(CLI::IsMember({"epistemic", "combined"}))
      ->capture_default_str();
  infer->add_option("--samples", samples, "Number of posterior draws");
  infer->add_option("--out", infer_opts.out, "Samples (or probabilities) CSV")->capture_default_str();

  auto* dram = app.add_subcommand("dram", "Delayed-rejection adaptive Metropolis on a measurement file");
  DramOptions dram_opts;
  std::string dram_summary;
  dram->add_option("--measurements", dram_opts.measurements, "Measurement CSV")->required();
  dram->add_option("--iterations", iterations, "Chain length");
  dram->add_option("--burn-in", burn_in, "Samples discarded from the summary");
  dram->add_option("--grid-points", grid_points, "Forward-model grid points per side (201 or 1001)");
  dram->add_option("--out", dram_opts.out, "Chain CSV")->capture_default_str();
  dram->add_option("--summary", dram_summary, "Posterior summary JSON");

  auto* cmp = app.add_subcommand("compare", "Compare posterior sample sets");
  CompareOptions cmp_opts;
  std::string dram_path, bnn_path, epi_path, cls_path, timing_path, plots_path, truth = "-389,185.37,1.83";
  cmp->add_option("--dram", dram_path, "DRAM chain CSV");
  cmp->add_option("--bnn", bnn_path, "Combined-density samples CSV");
  cmp->add_option("--bnn-epistemic", epi_path, "Epistemic samples CSV");
  cmp->add_option("--classification", cls_path, "Classification probabilities CSV");
  cmp->add_option("--timings", timing_path, "JSON of seconds per source tag");
  cmp->add_option("--truth", truth, "x,y,m")->capture_default_str();
  cmp->add_option("--burn-in", cmp_opts.burn_in, "Chain burn-in (default: recorded with the chain)");
  cmp->add_option("--bandwidth", cmp_opts.bandwidth, "KDE bandwidth (default Silverman)");
  cmp->add_option("--out", cmp_opts.out, "Report JSON")->capture_default_str();
  cmp->add_option("--plots", plots_path, "Directory for plot-ready CSVs");

  auto* ref = app.add_subcommand("reproduce-reference", "Run every method on the reference release");
  ReferenceOptions ref_opts;
  bool ref_train = false;
  std::string ref_data;
  ref->add_option("--models", ref_opts.models, "Directory with regression.json, classification.json, bnn.json")
      ->capture_default_str();
  ref->add_option("--out", ref_opts.out, "Output directory")->capture_default_str();
  ref->add_flag("--train", ref_train, "Train missing models from --data");
  ref->add_option("--data", ref_data, "Dataset CSV used with --train");
  ref->add_option("--samples", samples, "Posterior draws per density");
  ref->add_option("--iterations", iterations, "DRAM chain length");
  ref->add_option("--burn-in", burn_in, "DRAM burn-in");
  ref->add_option("--grid-points", grid_points, "DRAM forward-model grid points per side");

  auto* pipe = app.add_subcommand("pipeline", "gen-data, train x3, evaluate, reproduce-reference, manifest");
  PipelineOptions pipe_opts;
  pipe->add_option("--out", pipe_opts.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    RunConfig cfg = config_path ? load_config(*config_path) : RunConfig{};
    if (paper_scale) apply_paper_scale(cfg);
    if (seed) cfg.seeds.master = *seed;
    if (threads) cfg.threads = *threads;
    if (count) cfg.rows = *count;
    if (samples) cfg.inference_samples = *samples;
    if (iterations) cfg.dram.iterations = *iterations;
    if (burn_in) cfg.dram.burn_in = *burn_in;
    if (grid_points) {
      if (gen->parsed() || sim->parsed()) cfg.datagen.grid.n_points = *grid_points;
      cfg.dram_grid_points = *grid_points;
    }
    if (epochs || batch || lr) {
      TrainerSettings& t = train_opts.model == "regression"       ? cfg.regression
                           : train_opts.model == "classification" ? cfg.classification
                                                                  : cfg.bnn.trainer;
      if (epochs) t.epochs = *epochs;
      if (batch) t.batch_size = *batch;
      if (lr) t.learning_rate = *lr;
    }
    if (cfg.dram.burn_in >= cfg.dram.iterations) throw ste::ConfigError("--burn-in must be below --iterations");
    if (cfg.inference_samples == 0) throw ste::ConfigError("--samples must be positive");
    ste::set_thread_count(cfg.threads);

    if (gen->parsed()) {
      print(cmd_gen_data(cfg, gen_opts));
    } else if (sim->parsed()) {
      sim_opts.scenario = cfg.reference;
      if (sx) sim_opts.scenario.x_c = *sx;
      if (sy) sim_opts.scenario.y_c = *sy;
      if (sm) sim_opts.scenario.mass = *sm;
      if (su) sim_opts.scenario.u = *su;
      if (sv) sim_opts.scenario.v = *sv;
      print(cmd_simulate(cfg, sim_opts));
    } else if (train->parsed()) {
      print(cmd_train(cfg, train_opts));
    } else if (eval->parsed()) {
      print(cmd_evaluate(cfg, eval_opts));
    } else if (infer->parsed()) {
      print(cmd_infer(cfg, infer_opts));
    } else if (dram->parsed()) {
      if (!dram_summary.empty()) dram_opts.summary = dram_summary;
      print(cmd_dram(cfg, dram_opts));
    } else if (cmp->parsed()) {
      if (!dram_path.empty()) cmp_opts.dram = dram_path;
      if (!bnn_path.empty()) cmp_opts.bnn = bnn_path;
      if (!epi_path.empty()) cmp_opts.bnn_epistemic = epi_path;
      if (!cls_path.empty()) cmp_opts.classification = cls_path;
      if (!timing_path.empty()) cmp_opts.timings = timing_path;
      if (!plots_path.empty()) cmp_opts.plots = plots_path;
      cmp_opts.truth = parse_truth(truth);
      print(cmd_compare(cmp_opts));
    } else if (ref->parsed()) {
      if (ref_train) {
        if (ref_data.empty()) throw ste::ConfigError("--train needs --data data.csv");
        ref_opts.train_data = ref_data;
      }
      Timings timings;
      json out = cmd_reproduce_reference(cfg, ref_opts, timings);
      out["timings_s"] = timings;
      print(out);
    } else if (pipe->parsed()) {
      const json manifest = cmd_pipeline(cfg, pipe_opts);
      std::cout << "wrote " << manifest.at("files").size() << " files to " << pipe_opts.out.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ste: error: %s\n", e.what());
    return exit_code_for(e);
  }
  return kOk;
}
