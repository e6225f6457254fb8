#include "ste_cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

#include "ste/error.hpp"
#include "ste/io.hpp"
#include "ste/posterior.hpp"

namespace ste::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

io::Provenance provenance(const RunConfig& cfg, std::uint64_t seed) { return {seed, config_hash(cfg)}; }

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

Dataset select_split(const Dataset& d, const SplitRatios& ratios, const std::string& which) {
  if (which == "all") return d;
  Splits s = split_dataset(d, ratios);
  if (which == "train") return s.train;
  if (which == "val") return s.val;
  if (which == "test") return s.test;
  throw ConfigError("split must be train, val, test or all; got \"" + which + "\"");
}

json load_model_json(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("model file not found: " + path.string());
  return io::read_json(path);
}

dram::InferenceProblem make_problem(const io::MeasurementFile& m, int grid_points) {
  dram::InferenceProblem p;
  for (auto c : m.measurement.counts) p.observations.push_back(static_cast<double>(c));
  p.detectors = m.detectors;
  p.physics = m.physics;
  p.u = m.u;
  p.v = m.v;
  p.k_x = m.k_x;
  p.k_y = m.k_y;
  p.t_obs = m.measurement.t_obs;
  p.grid = m.grid;
  p.grid.n_points = grid_points;
  return p;
}

std::vector<double> raw_features(const io::MeasurementFile& m) {
  return make_features(m.measurement, m.u, m.v);
}

Eigen::MatrixXd feature_row(const io::MeasurementFile& m) {
  const auto f = raw_features(m);
  return Eigen::Map<const Eigen::RowVectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
}

json samples_meta(const RunConfig& cfg, const std::string& tag, std::uint64_t seed, const fs::path& model,
                  const fs::path& measurements) {
  return {{"kind", "samples"},
          {"source", tag},
          {"model", model.filename().string()},
          {"model_sha256", io::sha256_file(model)},
          {"measurements", measurements.filename().string()},
          {"provenance", io::provenance_json(provenance(cfg, seed))}};
}

// Mean counts for the combined density: the recorded truth when the file
// carries one, otherwise the observed counts as a plug-in estimate.
std::vector<double> combined_means(const io::MeasurementFile& m, const char*& origin) {
  if (m.truth) {
    origin = "truth";
    return expected_array(*m.truth, m.detectors, m.physics, m.grid);
  }
  origin = "observed";
  std::vector<double> means;
  for (auto c : m.measurement.counts) means.push_back(static_cast<double>(c));
  return means;
}

posterior::DensityEstimate marginal_density(const std::vector<double>& values, double bandwidth) {
  const auto st = posterior::describe(values);
  if (!(st.sd > 0.0)) return posterior::histogram(values, 1);
  posterior::KdeOptions o;
  o.bandwidth = bandwidth;
  return posterior::gaussian_kde(values, o);
}

std::vector<double> column(const Eigen::MatrixXd& m, int c) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(r)] = m(r, c);
  return out;
}

// 100 x 100 histogram of (x_c, y_c) over the release box; empty cells omitted.
void append_joint(std::string& out, const Eigen::MatrixXd& s, const std::string& source) {
  constexpr int kBins = 100;
  const nn::BinGrid bx = nn::default_x_bins(), by = nn::default_y_bins();
  std::vector<double> counts(kBins * kBins, 0.0);
  std::size_t inside = 0;
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double x = s(r, 0), y = s(r, 1);
    if (x < bx.lo || x > bx.hi || y < by.lo || y > by.hi) continue;
    counts[static_cast<std::size_t>(by.index(y) * kBins + bx.index(x))] += 1.0;
    ++inside;
  }
  if (inside == 0) return;
  const double norm = 1.0 / (static_cast<double>(inside) * bx.width() * by.width());
  for (int j = 0; j < kBins; ++j) {
    for (int i = 0; i < kBins; ++i) {
      const double c = counts[static_cast<std::size_t>(j * kBins + i)];
      if (c == 0.0) continue;
      out += io::format_double(bx.midpoint(i)) + ',' + io::format_double(by.midpoint(j)) + ',' +
             io::format_double(c * norm) + ',' + source + '\n';
    }
  }
}

void write_model(const fs::path& out, const json& j) {
  ensure_parent(out);
  io::write_json(out, j);
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->kind()) {
      case ErrorKind::config: return kConfig;
      case ErrorKind::domain:
      case ErrorKind::simulation: return kSimulation;
      case ErrorKind::training: return kTraining;
      case ErrorKind::inference: return kInference;
      case ErrorKind::io: return kOther;
    }
  }
  return kOther;
}

json cmd_gen_data(const RunConfig& cfg, const GenDataOptions& opts) {
  const auto t0 = Clock::now();
  const Dataset d = generate_dataset(cfg.rows, cfg.seeds.data(), cfg.datagen);
  ensure_parent(opts.out);
  io::write_dataset(opts.out, d, cfg.datagen, provenance(cfg, cfg.seeds.data()));
  return {{"rows", d.size()}, {"out", opts.out.string()}, {"seed", cfg.seeds.data()}, {"elapsed_s", seconds_since(t0)}};
}

json cmd_simulate(const RunConfig& cfg, const SimulateOptions& opts) {
  validate(opts.scenario);
  io::MeasurementFile m;
  m.detectors = make_detectors(cfg.datagen.layout, cfg.datagen.detector);
  m.physics = cfg.datagen.physics;
  m.grid = cfg.datagen.grid;
  m.u = opts.scenario.u;
  m.v = opts.scenario.v;
  m.k_x = opts.scenario.k_x;
  m.k_y = opts.scenario.k_y;
  m.seed = cfg.seeds.measurement();
  m.truth = opts.scenario;
  m.measurement = observe_array(opts.scenario, m.detectors, m.physics, m.grid, m.seed);
  ensure_parent(opts.out);
  io::write_measurements(opts.out, m, provenance(cfg, m.seed));
  return {{"out", opts.out.string()}, {"seed", m.seed}, {"counts", m.measurement.counts}};
}

json cmd_train(const RunConfig& cfg, const TrainOptions& opts) {
  if (!fs::exists(opts.data)) throw ConfigError("dataset not found: " + opts.data.string());
  const Dataset all = io::read_dataset(opts.data);
  const Splits s = split_dataset(all, cfg.split);
  const std::uint64_t seed = cfg.seeds.train();
  io::TrainingInfo info;
  info.provenance = provenance(cfg, seed);
  const auto t0 = Clock::now();
  json model;
  json summary = {{"model", opts.model}, {"train_rows", s.train.size()}, {"val_rows", s.val.size()}, {"seed", seed}};

  if (opts.model == "regression" || opts.model == "classification") {
    const bool reg = opts.model == "regression";
    const TrainerSettings& ts = reg ? cfg.regression : cfg.classification;
    const nn::TrainConfig tc = train_config(ts, seed);
    auto r = nn::fit_model(reg ? nn::OutputKind::regression : nn::OutputKind::classification, s.train, s.val, tc);
    info.config = {{"epochs", tc.epochs},
                   {"batch_size", tc.batch_size},
                   {"learning_rate", tc.optimizer.learning_rate},
                   {"optimizer", "nadam"},
                   {"split", {{"train", s.train.size()}, {"val", s.val.size()}, {"test", s.test.size()}}}};
    info.history = {{"train_loss", r.history.train_loss}, {"val_loss", r.history.val_loss}};
    model = io::model_to_json(r.model, info);
    summary["final_train_loss"] = r.history.train_loss.back();
    summary["final_val_loss"] = r.history.val_loss.back();
  } else if (opts.model == "bnn") {
    const bnn::BnnTrainConfig bc = bnn_train_config(cfg.bnn, seed);
    auto r = bnn::fit_bnn(s.train, s.val, bc);
    info.config = {{"epochs", bc.base.epochs},
                   {"batch_size", bc.base.batch_size},
                   {"learning_rate", bc.base.optimizer.learning_rate},
                   {"optimizer", "nadam"},
                   {"sigma0", bc.sigma0},
                   {"kl_scale", bc.kl_scale},
                   {"split", {{"train", s.train.size()}, {"val", s.val.size()}, {"test", s.test.size()}}}};
    info.history = {{"train_loss", r.history.train_loss},
                    {"val_nll", r.history.val_nll},
                    {"initial_val_nll", r.history.initial_val_nll}};
    model = io::model_to_json(r.model, info);
    summary["final_train_loss"] = r.history.train_loss.back();
    summary["final_val_nll"] = r.history.val_nll.back();
  } else {
    throw ConfigError("--model must be regression, classification or bnn; got \"" + opts.model + "\"");
  }
  write_model(opts.out, model);
  summary["out"] = opts.out.string();
  summary["elapsed_s"] = seconds_since(t0);
  return summary;
}

json cmd_evaluate(const RunConfig& cfg, const EvaluateOptions& opts) {
  const json mj = load_model_json(opts.model);
  if (!fs::exists(opts.data)) throw ConfigError("dataset not found: " + opts.data.string());
  const Dataset test = select_split(io::read_dataset(opts.data), cfg.split, opts.split);
  const std::string kind = io::model_kind(mj);
  json report = {{"schema_version", io::kReportSchemaVersion},
                 {"model", opts.model.filename().string()},
                 {"kind", kind},
                 {"split", opts.split},
                 {"rows", test.size()}};
  if (kind == "bnn") {
    const auto m = io::bnn_from_json(mj);
    report["mean_network"] = io::to_json(nn::score(bnn::predict_mean(m, test.features()), test.targets()), opts.per_row);
    json runs = json::array();
    std::vector<double> loc;
    for (int r = 0; r < cfg.evaluation_repeats; ++r) {
      const std::uint64_t seed = cfg.seeds.inference() + static_cast<std::uint64_t>(r);
      const auto met = bnn::evaluate_stochastic(m, test, seed);
      loc.push_back(met.location_error);
      json one = io::to_json(met, false);
      one["seed"] = seed;
      runs.push_back(one);
    }
    report["stochastic"] = runs;
    if (!loc.empty()) {
      const auto [lo, hi] = std::minmax_element(loc.begin(), loc.end());
      const auto st = posterior::describe(loc);
      report["stochastic_location_error"] = {
          {"mean", st.mean}, {"min", *lo}, {"max", *hi}, {"relative_spread", (*hi - *lo) / st.mean}};
    }
  } else {
    const auto m = io::model_from_json(mj);
    report["metrics"] = io::to_json(nn::evaluate(m, test), opts.per_row);
  }
  ensure_parent(opts.report);
  io::write_json(opts.report, report);
  return report;
}

json cmd_infer(const RunConfig& cfg, const InferOptions& opts) {
  const json mj = load_model_json(opts.model);
  if (!fs::exists(opts.measurements)) throw ConfigError("measurement file not found: " + opts.measurements.string());
  const io::MeasurementFile meas = io::read_measurements(opts.measurements);
  const std::string kind = io::model_kind(mj);
  const std::uint64_t seed = cfg.seeds.inference();
  const auto t0 = Clock::now();
  ensure_parent(opts.out);
  json result = {{"model", kind}, {"out", opts.out.string()}, {"seed", seed}};

  if (kind == "classification") {
    const auto m = io::model_from_json(mj);
    const Eigen::MatrixXd p = nn::predict_probabilities(m, feature_row(meas));
    const Eigen::RowVectorXd row = p.row(0);
    json meta = samples_meta(cfg, "classification", seed, opts.model, opts.measurements);
    meta["kind"] = "probabilities";
    io::write_probabilities(opts.out, m, std::span(row.data(), static_cast<std::size_t>(row.size())), meta);
    const Eigen::MatrixXd e = nn::predict(m, feature_row(meas));
    result["expectation"] = {e(0, 0), e(0, 1)};
  } else if (kind == "regression") {
    const auto m = io::model_from_json(mj);
    const Eigen::MatrixXd e = nn::predict(m, feature_row(meas));
    io::write_samples(opts.out, e, samples_meta(cfg, "regression", seed, opts.model, opts.measurements));
    result["prediction"] = {e(0, 0), e(0, 1), e(0, 2)};
  } else {
    const auto m = io::bnn_from_json(mj);
    if (cfg.inference_samples == 0) throw InferenceError("sample count must be positive");
    bnn::PosteriorSampleSet set;
    json meta;
    if (opts.mode == "epistemic") {
      const auto f = raw_features(meas);
      set = bnn::epistemic_density(m, f, cfg.inference_samples, seed);
      meta = samples_meta(cfg, "bnn-epistemic", seed, opts.model, opts.measurements);
    } else if (opts.mode == "combined") {
      const char* origin = "";
      const auto means = combined_means(meas, origin);
      set = bnn::combined_density(m, means, meas.u, meas.v, meas.measurement.t_obs, cfg.inference_samples, seed);
      meta = samples_meta(cfg, "bnn-combined", seed, opts.model, opts.measurements);
      meta["poisson_means"] = origin;
    } else {
      throw ConfigError("--mode must be epistemic or combined; got \"" + opts.mode + "\"");
    }
    meta["samples"] = set.samples.rows();
    io::write_samples(opts.out, set.samples, meta);
    result["samples"] = set.samples.rows();
  }
  result["elapsed_s"] = seconds_since(t0);
  return result;
}

json cmd_dram(const RunConfig& cfg, const DramOptions& opts) {
  if (!fs::exists(opts.measurements)) throw ConfigError("measurement file not found: " + opts.measurements.string());
  const io::MeasurementFile meas = io::read_measurements(opts.measurements);
  const dram::InferenceProblem p = make_problem(meas, cfg.dram_grid_points);
  const std::uint64_t seed = cfg.seeds.chain();
  const auto t0 = Clock::now();
  const dram::Chain chain = dram::dram_run(p, cfg.dram, seed);
  const double elapsed = seconds_since(t0);
  ensure_parent(opts.out);
  io::write_chain(opts.out, chain, cfg.dram, provenance(cfg, seed));
  json summary = io::to_json(dram::burn_and_summarize(chain, static_cast<std::size_t>(cfg.dram.burn_in)));
  summary["start"] = {chain.start[0], chain.start[1], chain.start[2]};
  summary["grid_points"] = cfg.dram_grid_points;
  summary["seed"] = seed;
  if (opts.summary) {
    ensure_parent(*opts.summary);
    io::write_json(*opts.summary, summary);
  }
  json result = summary;
  result["elapsed_s"] = elapsed;
  return result;
}

json cmd_compare(const CompareOptions& opts) {
  std::vector<posterior::Source> sources;
  std::map<std::string, Eigen::MatrixXd> sample_sets;
  if (opts.dram) {
    const dram::Chain chain = io::read_chain(*opts.dram);
    int burn = opts.burn_in;
    if (burn < 0) burn = io::read_json(io::sidecar_path(*opts.dram)).value("burn_in", 0);
    if (static_cast<std::size_t>(burn) >= chain.samples.size()) throw ConfigError("burn-in exceeds the chain length");
    sample_sets["dram"] = dram::chain_matrix(chain, static_cast<std::size_t>(burn));
  }
  if (opts.bnn) sample_sets["bnn-combined"] = io::read_samples(*opts.bnn);
  if (opts.bnn_epistemic) sample_sets["bnn-epistemic"] = io::read_samples(*opts.bnn_epistemic);
  for (const auto& [tag, s] : sample_sets) {
    if (s.rows() == 0) throw InferenceError("source " + tag + " has no samples");
    sources.push_back(posterior::source_from_samples(tag, s));
  }
  std::optional<io::ProbabilityTable> probs;
  if (opts.classification) {
    probs = io::read_probabilities(*opts.classification);
    sources.push_back(posterior::source_from_probabilities("classification", probs->x_mid, probs->p_x, probs->y_mid,
                                                           probs->p_y));
  }
  if (sources.size() < 2) throw ConfigError("compare needs at least two sources");

  std::map<std::string, double> timings;
  if (opts.timings) {
    for (const auto& [k, v] : io::read_json(*opts.timings).items()) {
      if (v.is_number()) timings[k] = v.get<double>();
    }
  }
  const auto report = posterior::compare(sources, opts.truth, timings);
  const json j = io::to_json(report);
  ensure_parent(opts.out);
  io::write_json(opts.out, j);

  if (opts.plots) {
    fs::create_directories(*opts.plots);
    std::vector<io::PlotSeries> series;
    for (const auto& [tag, s] : sample_sets) {
      for (int c = 0; c < 3; ++c) {
        series.push_back({posterior::kParameterNames[static_cast<std::size_t>(c)], tag,
                          marginal_density(column(s, c), opts.bandwidth)});
      }
    }
    if (probs) {
      auto discrete = [](const std::vector<double>& mid, const std::vector<double>& p) {
        posterior::DensityEstimate d;
        d.kind = posterior::DensityKind::discrete;
        d.grid = mid;
        const double w = mid.size() > 1 ? mid[1] - mid[0] : 1.0;
        for (double v : p) d.density.push_back(v / w);
        d.source = "classification";
        d.sample_count = p.size();
        return d;
      };
      series.push_back({"x_c", "classification", discrete(probs->x_mid, probs->p_x)});
      series.push_back({"y_c", "classification", discrete(probs->y_mid, probs->p_y)});
    }
    io::write_plot_csv(*opts.plots / "marginals.csv", series);
    std::string joint = "x_mid,y_mid,density,source\n";
    for (const auto& [tag, s] : sample_sets) append_joint(joint, s, tag);
    io::write_text(*opts.plots / "joint_xy.csv", joint);
  }
  return j;
}

json cmd_reproduce_reference(const RunConfig& cfg, const ReferenceOptions& opts, Timings& timings) {
  const fs::path reg = opts.models / "regression.json";
  const fs::path cls = opts.models / "classification.json";
  const fs::path bnn = opts.models / "bnn.json";
  for (const auto& [path, kind] : {std::pair{reg, "regression"}, {cls, "classification"}, {bnn, "bnn"}}) {
    if (fs::exists(path)) continue;
    if (!opts.train_data) {
      throw ConfigError("missing model " + path.string() + "; run `ste train --model " + kind + " --data data.csv --out " +
                        path.string() + "` or pass --train --data data.csv");
    }
    const json r = cmd_train(cfg, {kind, *opts.train_data, path});
    timings[std::string("train-") + kind] = r.at("elapsed_s").get<double>();
  }

  fs::create_directories(opts.out);
  const fs::path meas = opts.out / "measurements.csv";
  json result;
  result["measurements"] = cmd_simulate(cfg, {cfg.reference, meas});

  const json r_reg = cmd_infer(cfg, {reg, meas, opts.out / "regression_prediction.csv", "combined"});
  const json r_cls = cmd_infer(cfg, {cls, meas, opts.out / "classification_probabilities.csv", "combined"});
  const json r_epi = cmd_infer(cfg, {bnn, meas, opts.out / "bnn_epistemic.csv", "epistemic"});
  const json r_cmb = cmd_infer(cfg, {bnn, meas, opts.out / "bnn_combined.csv", "combined"});
  result["regression"] = r_reg.at("prediction");
  result["classification_expectation"] = r_cls.at("expectation");
  timings["regression"] = r_reg.at("elapsed_s").get<double>();
  timings["classification"] = r_cls.at("elapsed_s").get<double>();
  timings["bnn-epistemic"] = r_epi.at("elapsed_s").get<double>();
  timings["bnn-combined"] = r_cmb.at("elapsed_s").get<double>();

  json r_dram = cmd_dram(cfg, {meas, opts.out / "chain.csv", opts.out / "dram_summary.json"});
  timings["dram"] = r_dram.at("elapsed_s").get<double>();
  r_dram.erase("elapsed_s");
  result["dram"] = r_dram;

  CompareOptions c;
  c.dram = opts.out / "chain.csv";
  c.bnn = opts.out / "bnn_combined.csv";
  c.bnn_epistemic = opts.out / "bnn_epistemic.csv";
  c.classification = opts.out / "classification_probabilities.csv";
  c.truth = {cfg.reference.x_c, cfg.reference.y_c, cfg.reference.mass};
  c.out = opts.out / "report.json";
  c.plots = opts.out / "plots";
  result["report"] = cmd_compare(c);

  // Wall-clock numbers stay out of report.json so the report is reproducible.
  json t(timings);
  if (timings.at("bnn-combined") > 0.0) t["speedup_dram_over_bnn_combined"] = timings.at("dram") / timings.at("bnn-combined");
  io::write_json(opts.out / "timings.json", t);
  return result;
}

json cmd_pipeline(const RunConfig& cfg, const PipelineOptions& opts) {
  Timings timings;
  std::string stage;
  auto run = [&](const std::string& name, auto&& fn) {
    stage = name;
    const auto t0 = Clock::now();
    fn();
    timings[name] = seconds_since(t0);
  };
  const fs::path data = opts.out / "data.csv";
  const fs::path models = opts.out / "models";
  const fs::path reference = opts.out / "reference";
  json evaluation = json::object();
  try {
    fs::create_directories(models);
    run("gen-data", [&] { cmd_gen_data(cfg, {data}); });
    for (const char* kind : {"regression", "classification", "bnn"}) {
      run(std::string("train-") + kind, [&] { cmd_train(cfg, {kind, data, models / (std::string(kind) + ".json")}); });
    }
    run("evaluate", [&] {
      for (const char* kind : {"regression", "classification", "bnn"}) {
        const fs::path rep = opts.out / "evaluation" / (std::string(kind) + ".json");
        evaluation[kind] = cmd_evaluate(cfg, {models / (std::string(kind) + ".json"), data, rep, "test", false});
      }
    });
    run("reproduce-reference", [&] {
      Timings inner;
      cmd_reproduce_reference(cfg, {models, reference, std::nullopt}, inner);
      for (const auto& [k, v] : inner) timings["reference/" + k] = v;
    });
  } catch (const Error& e) {
    io::write_json(opts.out / "timings.json", json(timings));
    throw Error(e.kind(), "pipeline stage " + stage + ": " + e.what());
  }

  // Every artifact except timings, which are the only nondeterministic output.
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(opts.out)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), opts.out);
    const std::string name = rel.filename().string();
    if (name == "manifest.json" || name == "timings.json") continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  json listed = json::array();
  for (const auto& rel : files) {
    listed.push_back({{"path", rel.generic_string()},
                      {"sha256", io::sha256_file(opts.out / rel)},
                      {"bytes", fs::file_size(opts.out / rel)}});
  }
  const json manifest = {{"schema_version", io::kReportSchemaVersion},
                         {"artifact_version", io::kArtifactVersion},
                         {"config_hash", config_hash(cfg)},
                         {"config", to_json(cfg)},
                         {"seeds",
                          {{"master", cfg.seeds.master},
                           {"data", cfg.seeds.data()},
                           {"train", cfg.seeds.train()},
                           {"measurement", cfg.seeds.measurement()},
                           {"chain", cfg.seeds.chain()},
                           {"inference", cfg.seeds.inference()}}},
                         {"files", listed}};
  io::write_json(opts.out / "manifest.json", manifest);
  io::write_json(opts.out / "timings.json", json(timings));
  return manifest;
}

}  // namespace ste::cli
