#include "ste/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ste/error.hpp"

namespace ste::io {

namespace {

const char* activation_name(nn::Activation a) {
  switch (a) {
    case nn::Activation::swish: return "swish";
    case nn::Activation::linear: return "linear";
    case nn::Activation::softmax: return "softmax";
  }
  return "linear";
}

nn::Activation activation_from(const std::string& s) {
  if (s == "swish") return nn::Activation::swish;
  if (s == "linear") return nn::Activation::linear;
  if (s == "softmax") return nn::Activation::softmax;
  throw IoError("unknown activation '" + s + "'");
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json scaler_json(const ColumnScaler& s) { return {{"mean", vector_json(s.mean())}, {"scale", vector_json(s.scale())}}; }
ColumnScaler scaler_from(const json& j) { return ColumnScaler(vector_from(j.at("mean")), vector_from(j.at("scale"))); }

json bins_json(const nn::BinGrid& b) { return {{"lo", b.lo}, {"hi", b.hi}, {"bins", b.bins}}; }
nn::BinGrid bins_from(const json& j) { return {j.at("lo").get<double>(), j.at("hi").get<double>(), j.at("bins").get<int>()}; }

void append(std::vector<double>& out, const double* data, Eigen::Index n) { out.insert(out.end(), data, data + n); }

class Reader {
 public:
  explicit Reader(std::vector<double> values) : values_(std::move(values)) {}
  void take(double* out, Eigen::Index n) {
    if (pos_ + static_cast<std::size_t>(n) > values_.size()) throw IoError("parameter block is shorter than the architecture");
    std::memcpy(out, values_.data() + pos_, sizeof(double) * static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
  }
  void finish() const {
    if (pos_ != values_.size()) throw IoError("parameter block is longer than the architecture");
  }

 private:
  std::vector<double> values_;
  std::size_t pos_ = 0;
};

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, const fs::path& path) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && *begin == ' ') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || (ptr != end && *ptr != '\r')) throw IoError(path.string() + ": cannot parse number '" + s + "'");
  return v;
}

std::int64_t as_count(double v) {
  if (!(v >= 0.0) || v != std::floor(v)) throw IoError("counts must be non-negative integers");
  return static_cast<std::int64_t>(v);
}

}  // namespace

json provenance_json(const Provenance& p) {
  return {{"seed", p.seed}, {"config_hash", p.config_hash}, {"artifact_version", kArtifactVersion}};
}

fs::path sidecar_path(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".meta.json");
  return p;
}

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw IoError("cannot format number");
  return std::string(buf, ptr);
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) throw IoError("SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

std::string base64_encode(std::span<const double> values) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
  const std::size_t n = values.size() * sizeof(double);
  std::string out(4 * ((n + 2) / 3), '\0');
  const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes, static_cast<int>(n));
  out.resize(static_cast<std::size_t>(written));
  return out;
}

std::vector<double> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw IoError("malformed base64 parameter block");
  std::vector<unsigned char> bytes(3 * (text.size() / 4));
  const int n = EVP_DecodeBlock(bytes.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) throw IoError("malformed base64 parameter block");
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  if (!text.empty() && text.back() == '=') --len;
  if (text.size() > 1 && text[text.size() - 2] == '=') --len;
  if (len % sizeof(double) != 0) throw IoError("parameter block is not a whole number of doubles");
  std::vector<double> out(len / sizeof(double));
  std::memcpy(out.data(), bytes.data(), len);
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("write failed for " + path.string());
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json to_json(const PhysicsConstants& pc) {
  return {{"specific_activity", pc.specific_activity}, {"attenuation", pc.attenuation}};
}

PhysicsConstants physics_from_json(const json& j) {
  PhysicsConstants pc;
  pc.specific_activity = j.value("specific_activity", pc.specific_activity);
  pc.attenuation = j.value("attenuation", pc.attenuation);
  return pc;
}

json to_json(const DetectorSpec& d) {
  return {{"face_area", d.face_area},
          {"efficiency", d.efficiency},
          {"dwell_time", d.dwell_time},
          {"background_rate", d.background_rate}};
}

DetectorSpec detector_from_json(const json& j) {
  DetectorSpec d;
  d.face_area = j.value("face_area", d.face_area);
  d.efficiency = j.value("efficiency", d.efficiency);
  d.dwell_time = j.value("dwell_time", d.dwell_time);
  d.background_rate = j.value("background_rate", d.background_rate);
  return d;
}

json to_json(const GridConfig& g) { return {{"extent", g.extent}, {"n_points", g.n_points}}; }

GridConfig grid_from_json(const json& j) {
  GridConfig g;
  g.extent = j.value("extent", g.extent);
  g.n_points = j.value("n_points", g.n_points);
  return g;
}

json to_json(const ScenarioBounds& b) {
  auto iv = [](const Interval& i) { return json::array({i.lo, i.hi}); };
  return {{"x_c", iv(b.x_c)}, {"y_c", iv(b.y_c)}, {"mass", iv(b.mass)}, {"u", iv(b.u)},
          {"v", iv(b.v)},     {"k_x", b.k_x},     {"k_y", b.k_y},       {"t_obs", b.t_obs}};
}

ScenarioBounds bounds_from_json(const json& j) {
  ScenarioBounds b;
  auto iv = [&](const char* key, Interval& out) {
    if (j.contains(key)) out = {j.at(key).at(0).get<double>(), j.at(key).at(1).get<double>()};
  };
  iv("x_c", b.x_c);
  iv("y_c", b.y_c);
  iv("mass", b.mass);
  iv("u", b.u);
  iv("v", b.v);
  b.k_x = j.value("k_x", b.k_x);
  b.k_y = j.value("k_y", b.k_y);
  b.t_obs = j.value("t_obs", b.t_obs);
  return b;
}

json to_json(const Scenario& s) {
  return {{"x_c", s.x_c}, {"y_c", s.y_c}, {"mass", s.mass}, {"u", s.u},
          {"v", s.v},     {"k_x", s.k_x}, {"k_y", s.k_y},   {"t_obs", s.t_obs}};
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  s.x_c = j.at("x_c").get<double>();
  s.y_c = j.at("y_c").get<double>();
  s.mass = j.at("mass").get<double>();
  s.u = j.value("u", 0.0);
  s.v = j.value("v", 0.0);
  s.k_x = j.value("k_x", 5.0);
  s.k_y = j.value("k_y", 5.0);
  s.t_obs = j.value("t_obs", 500.0);
  return s;
}

json to_json(const DetectorLayout& layout) {
  json a = json::array();
  for (const auto& p : layout) a.push_back({p.x, p.y});
  return a;
}

DetectorLayout layout_from_json(const json& j) {
  DetectorLayout layout;
  for (const auto& p : j) layout.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return layout;
}

void write_dataset(const fs::path& csv, const Dataset& d, const DatagenConfig& cfg, const Provenance& prov) {
  std::string out;
  out.reserve(d.size() * 200);
  out += "u,v";
  for (std::size_t k = 0; k < d.n_detectors(); ++k) out += ",d" + std::to_string(k + 1);
  out += ",x_c,y_c,m_c\n";
  for (const auto& r : d.rows) {
    out += format_double(r.u);
    out += ',';
    out += format_double(r.v);
    for (auto c : r.counts) {
      out += ',';
      out += std::to_string(c);
    }
    out += ',' + format_double(r.x_c) + ',' + format_double(r.y_c) + ',' + format_double(r.mass) + '\n';
  }
  write_text(csv, out);

  json meta = {{"kind", "dataset"},
               {"rows", d.size()},
               {"split", d.split},
               {"seed", d.seed},
               {"layout", to_json(d.layout)},
               {"physics", to_json(cfg.physics)},
               {"detector", to_json(cfg.detector)},
               {"grid", to_json(cfg.grid)},
               {"bounds", to_json(cfg.bounds)},
               {"features", "u, v, ln(max(count, 1)) per detector; counts stored raw"},
               {"provenance", provenance_json(prov)}};
  write_json(sidecar_path(csv), meta);
}

Dataset read_dataset(const fs::path& csv) {
  const CsvTable t = read_csv(csv);
  Dataset d;
  const fs::path meta_path = sidecar_path(csv);
  std::size_t n_det = 0;
  for (const auto& h : t.header)
    if (h.size() > 1 && h[0] == 'd' && std::isdigit(static_cast<unsigned char>(h[1]))) ++n_det;
  if (fs::exists(meta_path)) {
    const json meta = read_json(meta_path);
    d.seed = meta.value("seed", std::uint64_t{0});
    d.split = meta.value("split", std::string("all"));
    if (meta.contains("layout")) d.layout = layout_from_json(meta.at("layout"));
  }
  if (d.layout.size() != n_det) throw IoError(csv.string() + ": detector columns do not match the layout");

  const std::size_t iu = t.column("u"), iv = t.column("v"), ix = t.column("x_c"), iy = t.column("y_c"), im = t.column("m_c");
  std::vector<std::size_t> idet(n_det);
  for (std::size_t k = 0; k < n_det; ++k) idet[k] = t.column("d" + std::to_string(k + 1));
  d.rows.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    Record r;
    r.u = row[iu];
    r.v = row[iv];
    r.counts.resize(n_det);
    for (std::size_t k = 0; k < n_det; ++k) r.counts[k] = as_count(row[idet[k]]);
    r.x_c = row[ix];
    r.y_c = row[iy];
    r.mass = row[im];
    d.rows.push_back(std::move(r));
  }
  return d;
}

void write_measurements(const fs::path& csv, const MeasurementFile& m, const Provenance& prov) {
  if (m.detectors.size() != m.measurement.counts.size()) throw IoError("measurement/detector count mismatch");
  std::string out = "detector_id,x,y,counts\n";
  for (std::size_t k = 0; k < m.detectors.size(); ++k) {
    const int id = k < m.measurement.detector_ids.size() ? m.measurement.detector_ids[k] : static_cast<int>(k) + 1;
    out += std::to_string(id) + ',' + format_double(m.detectors[k].position.x) + ',' +
           format_double(m.detectors[k].position.y) + ',' + std::to_string(m.measurement.counts[k]) + '\n';
  }
  write_text(csv, out);

  json meta = {{"kind", "measurements"},
               {"t_obs", m.measurement.t_obs},
               {"wind", {{"u", m.u}, {"v", m.v}}},
               {"diffusivity", {{"k_x", m.k_x}, {"k_y", m.k_y}}},
               {"seed", m.seed},
               {"physics", to_json(m.physics)},
               {"detector", to_json(m.detectors.empty() ? DetectorSpec{} : m.detectors.front())},
               {"grid", to_json(m.grid)},
               {"provenance", provenance_json(prov)}};
  if (m.truth) meta["scenario"] = to_json(*m.truth);
  write_json(sidecar_path(csv), meta);
}

MeasurementFile read_measurements(const fs::path& csv) {
  const CsvTable t = read_csv(csv);
  const fs::path meta_path = sidecar_path(csv);
  if (!fs::exists(meta_path)) throw IoError(csv.string() + ": missing metadata sidecar " + meta_path.string());
  const json meta = read_json(meta_path);

  MeasurementFile m;
  m.measurement.t_obs = meta.at("t_obs").get<double>();
  m.u = meta.at("wind").at("u").get<double>();
  m.v = meta.at("wind").at("v").get<double>();
  if (meta.contains("diffusivity")) {
    m.k_x = meta["diffusivity"].value("k_x", 5.0);
    m.k_y = meta["diffusivity"].value("k_y", 5.0);
  }
  m.seed = meta.value("seed", std::uint64_t{0});
  m.physics = physics_from_json(meta.value("physics", json::object()));
  m.grid = grid_from_json(meta.value("grid", json::object()));
  const DetectorSpec proto = detector_from_json(meta.value("detector", json::object()));
  if (meta.contains("scenario")) m.truth = scenario_from_json(meta.at("scenario"));

  const std::size_t iid = t.column("detector_id"), ix = t.column("x"), iy = t.column("y"), ic = t.column("counts");
  for (const auto& row : t.rows) {
    DetectorSpec d = proto;
    d.position = {row[ix], row[iy]};
    m.detectors.push_back(d);
    m.measurement.detector_ids.push_back(static_cast<int>(row[iid]));
    m.measurement.counts.push_back(as_count(row[ic]));
  }
  return m;
}

namespace {

json model_header(const char* kind, const TrainingInfo& info) {
  return {{"format", "ste-model"},
          {"format_version", kModelFormatVersion},
          {"artifact_version", kArtifactVersion},
          {"kind", kind},
          {"training", info.config},
          {"history", info.history},
          {"provenance", provenance_json(info.provenance)}};
}

void check_header(const json& j) {
  if (j.value("format", std::string()) != "ste-model") throw IoError("not a model file");
  if (j.value("format_version", 0) != kModelFormatVersion) throw IoError("unsupported model format version");
}

}  // namespace

std::string model_kind(const json& j) {
  check_header(j);
  return j.at("kind").get<std::string>();
}

json model_to_json(const nn::MlpModel& m, const TrainingInfo& info) {
  const bool regression = m.kind == nn::OutputKind::regression;
  json j = model_header(regression ? "regression" : "classification", info);
  std::vector<int> widths{static_cast<int>(m.input_width())};
  json acts = json::array();
  std::vector<double> params;
  for (const auto& l : m.layers) {
    widths.push_back(static_cast<int>(l.fan_out()));
    acts.push_back(activation_name(l.activation));
    append(params, l.weights.data(), l.weights.size());
    append(params, l.biases.data(), l.biases.size());
  }
  j["architecture"] = {{"widths", widths}, {"activations", acts}, {"softmax_blocks", m.softmax_blocks}};
  j["bins"] = {{"x", bins_json(m.x_bins)}, {"y", bins_json(m.y_bins)}};
  j["normalizer"] = {{"features", scaler_json(m.normalizer.features)}, {"targets", scaler_json(m.normalizer.targets)}};
  j["target_encoding"] = regression ? "z-score" : "one-hot bins";
  j["loss"] = regression ? "mae" : "cce";
  j["parameters"] = {{"encoding", "base64-f64le"},
                     {"order", "per layer: weights (column-major, fan_in x fan_out), biases"},
                     {"count", params.size()},
                     {"data", base64_encode(params)}};
  return j;
}

nn::MlpModel model_from_json(const json& j) {
  const std::string kind = model_kind(j);
  if (kind != "regression" && kind != "classification") throw IoError("model kind '" + kind + "' is not a deterministic MLP");
  nn::MlpModel m;
  m.kind = kind == "regression" ? nn::OutputKind::regression : nn::OutputKind::classification;
  const auto& arch = j.at("architecture");
  const auto widths = arch.at("widths").get<std::vector<int>>();
  const auto acts = arch.at("activations").get<std::vector<std::string>>();
  if (acts.size() + 1 != widths.size()) throw IoError("architecture widths/activations mismatch");
  m.softmax_blocks = arch.value("softmax_blocks", 1);
  m.x_bins = bins_from(j.at("bins").at("x"));
  m.y_bins = bins_from(j.at("bins").at("y"));
  m.normalizer = {scaler_from(j.at("normalizer").at("features")), scaler_from(j.at("normalizer").at("targets"))};
  Reader r(base64_decode(j.at("parameters").at("data").get<std::string>()));
  for (std::size_t l = 0; l < acts.size(); ++l) {
    nn::DenseLayer layer;
    layer.weights.resize(widths[l], widths[l + 1]);
    layer.biases.resize(widths[l + 1]);
    r.take(layer.weights.data(), layer.weights.size());
    r.take(layer.biases.data(), layer.biases.size());
    layer.activation = activation_from(acts[l]);
    m.layers.push_back(std::move(layer));
  }
  r.finish();
  return m;
}

json model_to_json(const bnn::VariationalMlpModel& m, const TrainingInfo& info) {
  json j = model_header("bnn", info);
  std::vector<int> widths{static_cast<int>(m.input_width())};
  json acts = json::array();
  std::vector<double> params;
  for (const auto& l : m.layers) {
    widths.push_back(static_cast<int>(l.w_mu.cols()));
    acts.push_back(activation_name(l.activation));
    append(params, l.w_mu.data(), l.w_mu.size());
    append(params, l.w_rho.data(), l.w_rho.size());
    append(params, l.b_mu.data(), l.b_mu.size());
    append(params, l.b_rho.data(), l.b_rho.size());
  }
  j["architecture"] = {{"widths", widths}, {"activations", acts}};
  j["normalizer"] = {{"features", scaler_json(m.normalizer.features)}, {"targets", scaler_json(m.normalizer.targets)}};
  j["target_encoding"] = "z-score";
  j["variational"] = {{"family", "mean-field gaussian"},
                      {"sigma", "softplus(rho)"},
                      {"prior", {{"mean", 0.0}, {"sd", 1.0}}},
                      {"likelihood", m.noise == bnn::NoiseModel::learned ? "gaussian, learned variance per output"
                                                                          : "gaussian, unit variance"},
                      {"log_noise_var", vector_json(m.log_noise_var)}};
  j["parameters"] = {{"encoding", "base64-f64le"},
                     {"order", "per layer: w_mu, w_rho (column-major), b_mu, b_rho"},
                     {"count", params.size()},
                     {"data", base64_encode(params)}};
  return j;
}

bnn::VariationalMlpModel bnn_from_json(const json& j) {
  if (model_kind(j) != "bnn") throw IoError("model file does not hold a Bayesian network");
  bnn::VariationalMlpModel m;
  const auto widths = j.at("architecture").at("widths").get<std::vector<int>>();
  const auto acts = j.at("architecture").at("activations").get<std::vector<std::string>>();
  if (acts.size() + 1 != widths.size()) throw IoError("architecture widths/activations mismatch");
  m.normalizer = {scaler_from(j.at("normalizer").at("features")), scaler_from(j.at("normalizer").at("targets"))};
  const auto& var = j.at("variational");
  m.noise = var.at("likelihood").get<std::string>().find("learned") != std::string::npos ? bnn::NoiseModel::learned
                                                                                          : bnn::NoiseModel::fixed_unit;
  m.log_noise_var = vector_from(var.at("log_noise_var"));
  Reader r(base64_decode(j.at("parameters").at("data").get<std::string>()));
  for (std::size_t l = 0; l < acts.size(); ++l) {
    bnn::VariationalLayer layer;
    layer.w_mu.resize(widths[l], widths[l + 1]);
    layer.w_rho.resize(widths[l], widths[l + 1]);
    layer.b_mu.resize(widths[l + 1]);
    layer.b_rho.resize(widths[l + 1]);
    r.take(layer.w_mu.data(), layer.w_mu.size());
    r.take(layer.w_rho.data(), layer.w_rho.size());
    r.take(layer.b_mu.data(), layer.b_mu.size());
    r.take(layer.b_rho.data(), layer.b_rho.size());
    layer.activation = activation_from(acts[l]);
    m.layers.push_back(std::move(layer));
  }
  r.finish();
  return m;
}

void write_chain(const fs::path& csv, const dram::Chain& chain, const dram::DramConfig& cfg, const Provenance& prov) {
  std::string out = "iter,x_c,y_c,m_c,sigma2,stage,accepted\n";
  out.reserve(chain.samples.size() * 90);
  for (std::size_t i = 0; i < chain.samples.size(); ++i) {
    const auto& s = chain.samples[i];
    out += std::to_string(i + 1) + ',' + format_double(s.theta[0]) + ',' + format_double(s.theta[1]) + ',' +
           format_double(s.theta[2]) + ',' + format_double(s.sigma2) + ',' + std::to_string(static_cast<int>(s.stage)) +
           ',' + (s.accepted ? "1" : "0") + '\n';
  }
  write_text(csv, out);
  json meta = {{"kind", "dram-chain"},
               {"iterations", cfg.iterations},
               {"burn_in", cfg.burn_in},
               {"adapt_start", cfg.adapt_start},
               {"adapt_interval", cfg.adapt_interval},
               {"dr_scale", cfg.dr_scale},
               {"delayed_rejection", cfg.delayed_rejection},
               {"start", {chain.start[0], chain.start[1], chain.start[2]}},
               {"accepted_first_stage", chain.accepted_first},
               {"accepted_second_stage", chain.accepted_second},
               {"seed", chain.seed},
               {"provenance", provenance_json(prov)}};
  write_json(sidecar_path(csv), meta);
}

dram::Chain read_chain(const fs::path& csv) {
  const CsvTable t = read_csv(csv);
  const std::size_t ix = t.column("x_c"), iy = t.column("y_c"), im = t.column("m_c"), is = t.column("sigma2"),
                    ist = t.column("stage"), ia = t.column("accepted");
  dram::Chain c;
  for (const auto& row : t.rows) {
    dram::ChainSample s;
    s.theta = dram::Theta(row[ix], row[iy], row[im]);
    s.sigma2 = row[is];
    s.stage = static_cast<dram::Stage>(static_cast<int>(row[ist]));
    s.accepted = row[ia] != 0.0;
    if (s.stage == dram::Stage::first) ++c.accepted_first;
    if (s.stage == dram::Stage::second) ++c.accepted_second;
    c.samples.push_back(s);
  }
  const fs::path meta = sidecar_path(csv);
  if (fs::exists(meta)) c.seed = read_json(meta).value("seed", std::uint64_t{0});
  return c;
}

void write_samples(const fs::path& csv, const Eigen::MatrixXd& samples, const json& meta) {
  if (samples.cols() != 3) throw IoError("sample matrix must have 3 columns");
  std::string out = "x_c,y_c,m_c\n";
  out.reserve(static_cast<std::size_t>(samples.rows()) * 60);
  for (Eigen::Index r = 0; r < samples.rows(); ++r) {
    out += format_double(samples(r, 0)) + ',' + format_double(samples(r, 1)) + ',' + format_double(samples(r, 2)) + '\n';
  }
  write_text(csv, out);
  write_json(sidecar_path(csv), meta);
}

Eigen::MatrixXd read_samples(const fs::path& csv) {
  const CsvTable t = read_csv(csv);
  const std::size_t ix = t.column("x_c"), iy = t.column("y_c"), im = t.column("m_c");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(t.rows.size()), 3);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    out(static_cast<Eigen::Index>(r), 0) = t.rows[r][ix];
    out(static_cast<Eigen::Index>(r), 1) = t.rows[r][iy];
    out(static_cast<Eigen::Index>(r), 2) = t.rows[r][im];
  }
  return out;
}

void write_probabilities(const fs::path& csv, const nn::MlpModel& m, std::span<const double> probs, const json& meta) {
  const int bx = m.x_bins.bins, by = m.y_bins.bins;
  if (static_cast<int>(probs.size()) != bx + by || bx != by) throw IoError("probability vector does not match the model bins");
  std::string out = "bin,x_mid,p_x,y_mid,p_y\n";
  for (int j = 0; j < bx; ++j) {
    out += std::to_string(j + 1) + ',' + format_double(m.x_bins.midpoint(j)) + ',' + format_double(probs[j]) + ',' +
           format_double(m.y_bins.midpoint(j)) + ',' + format_double(probs[bx + j]) + '\n';
  }
  write_text(csv, out);
  write_json(sidecar_path(csv), meta);
}

ProbabilityTable read_probabilities(const fs::path& csv) {
  const CsvTable t = read_csv(csv);
  const std::size_t a = t.column("x_mid"), b = t.column("p_x"), c = t.column("y_mid"), d = t.column("p_y");
  ProbabilityTable p;
  for (const auto& row : t.rows) {
    p.x_mid.push_back(row[a]);
    p.p_x.push_back(row[b]);
    p.y_mid.push_back(row[c]);
    p.p_y.push_back(row[d]);
  }
  return p;
}

void write_plot_csv(const fs::path& csv, const std::vector<PlotSeries>& series) {
  std::string out = "param,grid,density,source\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.density.grid.size(); ++i) {
      out += s.param + ',' + format_double(s.density.grid[i]) + ',' + format_double(s.density.density[i]) + ',' +
             s.source + '\n';
    }
  }
  write_text(csv, out);
}

json to_json(const nn::Metrics& m, bool per_row) {
  json j = {{"mean_location_error_m", m.location_error}};
  j["mass_mae_g"] = std::isnan(m.mass_mae) ? json(nullptr) : json(m.mass_mae);
  if (per_row) {
    j["row_location_error_m"] = m.row_location_error;
    if (!m.row_mass_error.empty()) j["row_mass_error_g"] = m.row_mass_error;
  }
  return j;
}

json to_json(const posterior::ComparisonReport& r) {
  json j = {{"schema_version", kReportSchemaVersion},
            {"truth", {{"x_c", r.truth[0]}, {"y_c", r.truth[1]}, {"m_c", r.truth[2]}}}};
  json sources = json::array();
  for (const auto& s : r.sources) {
    json params = json::object();
    for (int p = 0; p < 3; ++p) {
      if (!s.params[p]) continue;
      const auto& ps = *s.params[p];
      params[posterior::kParameterNames[p]] = {{"mean", ps.mean},
                                               {"sd", ps.sd},
                                               {"variance", ps.variance},
                                               {"interval95", {ps.interval95.lo, ps.interval95.hi}},
                                               {"contains_truth", ps.contains_truth}};
    }
    sources.push_back({{"source", s.tag}, {"samples", s.samples}, {"parameters", params}});
  }
  j["sources"] = sources;
  json ratios = json::array();
  for (const auto& v : r.variance_ratios) {
    ratios.push_back({{"numerator", v.numerator}, {"denominator", v.denominator}, {"parameter", v.parameter}, {"ratio", v.ratio}});
  }
  j["variance_ratios"] = ratios;
  j["timings_s"] = r.timings;
  json tr = json::array();
  for (const auto& t : r.timing_ratios) tr.push_back({{"numerator", t.numerator}, {"denominator", t.denominator}, {"ratio", t.ratio}});
  j["timing_ratios"] = tr;
  return j;
}

json to_json(const dram::PosteriorSummary& s) {
  json params = json::object();
  for (int p = 0; p < 3; ++p) {
    const auto& ps = s.params[p];
    params[posterior::kParameterNames[p]] = {{"mean", ps.mean}, {"sd", ps.sd}, {"interval95", {ps.lo95, ps.hi95}}};
  }
  return {{"samples", s.samples}, {"acceptance", s.acceptance}, {"parameters", params}};
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw IoError("missing CSV column '" + name + "'");
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split_line(line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != t.header.size()) throw IoError(path.string() + ": row width does not match header");
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) row[i] = parse_double(cells[i], path);
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace ste::io
