#include "ste/plume.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ste/error.hpp"

namespace ste {

namespace {

void require_time(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("time must be positive, got " + std::to_string(t));
}

// Simpson weights for a 3-node panel divided by 6, so the weighted sum of the
// three node values is the mean over the panel.
constexpr double kSimpsonMean[3] = {1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0};

}  // namespace

void validate(const Scenario& s) {
  if (!(s.k_x > 0.0) || !(s.k_y > 0.0)) throw DomainError("eddy diffusivities must be positive");
  if (!(s.mass > 0.0)) throw DomainError("released mass must be positive");
  if (!(s.t_obs > 0.0)) throw DomainError("observation time must be positive");
  for (double v : {s.x_c, s.y_c, s.mass, s.u, s.v, s.k_x, s.k_y, s.t_obs}) {
    if (!std::isfinite(v)) throw DomainError("scenario contains a non-finite value");
  }
}

double concentration_at(const Scenario& s, double x, double y, double t) {
  require_time(t);
  if (!(s.k_x > 0.0) || !(s.k_y > 0.0)) throw DomainError("eddy diffusivities must be positive");
  const double dx = x - s.x_c - s.u * t;
  const double dy = y - s.y_c - s.v * t;
  const double norm = s.mass / (4.0 * std::numbers::pi * t * std::sqrt(s.k_x * s.k_y));
  return norm * std::exp(-dx * dx / (4.0 * s.k_x * t) - dy * dy / (4.0 * s.k_y * t));
}

Point plume_center(const Scenario& s, double t) { return {s.x_c + s.u * t, s.y_c + s.v * t}; }

Grid::Grid(Point center, double extent, int n_points) : center_(center), extent_(extent), n_points_(n_points) {}

Grid build_grid(Point center, double extent, int n_points) {
  if (n_points < 3 || n_points % 2 == 0) {
    throw ConfigError("grid needs an odd number of points >= 3, got " + std::to_string(n_points));
  }
  if (!(extent > 0.0) || !std::isfinite(extent)) throw ConfigError("grid extent must be positive");
  return Grid(center, extent, n_points);
}

double ConcentrationField::total_mass() const {
  double sum = 0.0;
  for (double c : density) sum += c;
  return sum * cell_area();
}

namespace {

ConcentrationField empty_field(const Grid& g) {
  const int n = g.cells_per_side();
  ConcentrationField field{g, std::vector<double>(static_cast<std::size_t>(n) * n), {}, {}};
  field.center_x.resize(n);
  field.center_y.resize(n);
  for (int i = 0; i < n; ++i) {
    field.center_x[i] = g.cell_center_x(i);
    field.center_y[i] = g.cell_center_y(i);
  }
  return field;
}

}  // namespace

ConcentrationField cell_concentrations(const Scenario& s, const Grid& g, double t) {
  require_time(t);
  if (!(s.k_x > 0.0) || !(s.k_y > 0.0)) throw DomainError("eddy diffusivities must be positive");

  // c(x, y) = norm * gx(x) * gy(y), so the 3x3 Simpson mean factors into the
  // product of two 1-D panel means.
  const int np = g.n_points();
  const double xc = s.x_c + s.u * t;
  const double yc = s.y_c + s.v * t;
  std::vector<double> gx(np), gy(np);
  for (int i = 0; i < np; ++i) {
    const double dx = g.node_x(i) - xc;
    const double dy = g.node_y(i) - yc;
    gx[i] = std::exp(-dx * dx / (4.0 * s.k_x * t));
    gy[i] = std::exp(-dy * dy / (4.0 * s.k_y * t));
  }

  ConcentrationField field = empty_field(g);
  const int n = g.cells_per_side();
  std::vector<double> ax(n), ay(n);
  for (int i = 0; i < n; ++i) {
    ax[i] = kSimpsonMean[0] * gx[2 * i] + kSimpsonMean[1] * gx[2 * i + 1] + kSimpsonMean[2] * gx[2 * i + 2];
    ay[i] = kSimpsonMean[0] * gy[2 * i] + kSimpsonMean[1] * gy[2 * i + 1] + kSimpsonMean[2] * gy[2 * i + 2];
  }
  const double norm = s.mass / (4.0 * std::numbers::pi * t * std::sqrt(s.k_x * s.k_y));
  for (int j = 0; j < n; ++j) {
    const double row = norm * ay[j];
    double* out = field.density.data() + static_cast<std::size_t>(j) * n;
    for (int i = 0; i < n; ++i) out[i] = row * ax[i];
  }
  return field;
}

ConcentrationField integrate_cells(const Grid& g, const std::function<double(double, double)>& f) {
  ConcentrationField field = empty_field(g);
  const int n = g.cells_per_side();
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int b = 0; b < 3; ++b) {
        const double y = g.node_y(2 * j + b);
        for (int a = 0; a < 3; ++a) acc += kSimpsonMean[a] * kSimpsonMean[b] * f(g.node_x(2 * i + a), y);
      }
      field.density[static_cast<std::size_t>(j) * n + i] = acc;
    }
  }
  return field;
}

}  // namespace ste
