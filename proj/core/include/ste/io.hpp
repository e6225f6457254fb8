#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "ste/bnn.hpp"
#include "ste/dram.hpp"
#include "ste/nn.hpp"
#include "ste/posterior.hpp"
#include "ste/scenario.hpp"

namespace ste::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kArtifactVersion = "0.3.0";
inline constexpr int kModelFormatVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

/// Seed and configuration fingerprint written into every output's metadata.
struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;
};

json provenance_json(const Provenance& p);

/// "data.csv" -> "data.meta.json"
fs::path sidecar_path(const fs::path& csv);

/// Shortest round-trip decimal form.
std::string format_double(double x);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);

std::string base64_encode(std::span<const double> values);
std::vector<double> base64_decode(const std::string& text);

std::string read_text(const fs::path& path);
/// Writes through a temporary file and renames, so readers never see a partial file.
void write_text(const fs::path& path, const std::string& content);
json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& j);

// Conversions for configuration structs.
json to_json(const PhysicsConstants& pc);
PhysicsConstants physics_from_json(const json& j);
json to_json(const DetectorSpec& d);
DetectorSpec detector_from_json(const json& j);
json to_json(const GridConfig& g);
GridConfig grid_from_json(const json& j);
json to_json(const ScenarioBounds& b);
ScenarioBounds bounds_from_json(const json& j);
json to_json(const Scenario& s);
Scenario scenario_from_json(const json& j);
json to_json(const DetectorLayout& layout);
DetectorLayout layout_from_json(const json& j);

/// CSV `u,v,d1..dn,x_c,y_c,m_c` with raw counts, plus `<stem>.meta.json`.
void write_dataset(const fs::path& csv, const Dataset& d, const DatagenConfig& cfg, const Provenance& prov);
Dataset read_dataset(const fs::path& csv);

/// A measurement snapshot with the context needed to invert it.
struct MeasurementFile {
  MeasurementVector measurement;
  std::vector<DetectorSpec> detectors;
  PhysicsConstants physics;
  GridConfig grid;
  double u = 0.0;
  double v = 0.0;
  double k_x = 5.0;
  double k_y = 5.0;
  std::uint64_t seed = 0;
  std::optional<Scenario> truth;
};

/// CSV `detector_id,x,y,counts` plus sidecar (t_obs, winds, seed, constants).
void write_measurements(const fs::path& csv, const MeasurementFile& m, const Provenance& prov);
MeasurementFile read_measurements(const fs::path& csv);

struct TrainingInfo {
  json config;
  json history;
  Provenance provenance;
};

json model_to_json(const nn::MlpModel& m, const TrainingInfo& info);
nn::MlpModel model_from_json(const json& j);
json model_to_json(const bnn::VariationalMlpModel& m, const TrainingInfo& info);
bnn::VariationalMlpModel bnn_from_json(const json& j);
/// "regression", "classification" or "bnn".
std::string model_kind(const json& j);

/// CSV `iter,x_c,y_c,m_c,sigma2,stage,accepted` plus sidecar.
void write_chain(const fs::path& csv, const dram::Chain& chain, const dram::DramConfig& cfg, const Provenance& prov);
dram::Chain read_chain(const fs::path& csv);

/// CSV `x_c,y_c,m_c` plus sidecar.
void write_samples(const fs::path& csv, const Eigen::MatrixXd& samples, const json& meta);
Eigen::MatrixXd read_samples(const fs::path& csv);

/// CSV `bin,x_mid,p_x,y_mid,p_y` for one classification prediction.
void write_probabilities(const fs::path& csv, const nn::MlpModel& m, std::span<const double> probs, const json& meta);
struct ProbabilityTable {
  std::vector<double> x_mid, p_x, y_mid, p_y;
};
ProbabilityTable read_probabilities(const fs::path& csv);

/// Plot-ready CSV `param,grid,density,source`.
struct PlotSeries {
  std::string param;
  std::string source;
  posterior::DensityEstimate density;
};
void write_plot_csv(const fs::path& csv, const std::vector<PlotSeries>& series);

json to_json(const nn::Metrics& m, bool per_row);
json to_json(const posterior::ComparisonReport& r);
json to_json(const dram::PosteriorSummary& s);

/// Minimal CSV reader: header names and numeric rows.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::size_t column(const std::string& name) const;
};
CsvTable read_csv(const fs::path& path);

}  // namespace ste::io
