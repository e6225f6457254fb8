#pragma once

#include <functional>
#include <vector>

namespace ste {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Release hypothesis for an instantaneous 2-D puff.
/// Units: meters, grams, m/s, m^2/s, seconds.
struct Scenario {
  double x_c = 0.0;
  double y_c = 0.0;
  double mass = 1.0;
  double u = 0.0;
  double v = 0.0;
  double k_x = 5.0;
  double k_y = 5.0;
  double t_obs = 500.0;
};

/// Throws DomainError unless diffusivities, mass and t_obs are positive and finite.
void validate(const Scenario& s);

/// Mean surface concentration (g/m^2) of the puff at (x, y) and time t.
double concentration_at(const Scenario& s, double x, double y, double t);

/// Advected puff center (x_c + U t, y_c + V t).
Point plume_center(const Scenario& s, double t);

/// Square grid of n_points x n_points nodes centered on `center`.
///
/// Cells are 3x3 node stencils: node 2i, 2i+1, 2i+2 along each axis make up
/// cell i, so there are (n_points - 1) / 2 cells per side of width
/// 2 * spacing, and the cell center is the middle node.
class Grid {
 public:
  Grid(Point center, double extent, int n_points);

  Point center() const { return center_; }
  double extent() const { return extent_; }
  int n_points() const { return n_points_; }
  double spacing() const { return extent_ / (n_points_ - 1); }
  int cells_per_side() const { return (n_points_ - 1) / 2; }
  double cell_width() const { return 2.0 * spacing(); }
  double cell_area() const { return cell_width() * cell_width(); }

  double node_x(int i) const { return center_.x - 0.5 * extent_ + i * spacing(); }
  double node_y(int j) const { return center_.y - 0.5 * extent_ + j * spacing(); }
  double cell_center_x(int i) const { return node_x(2 * i + 1); }
  double cell_center_y(int j) const { return node_y(2 * j + 1); }

 private:
  Point center_;
  double extent_;
  int n_points_;
};

/// Throws ConfigError for even or too-small n_points and non-positive extent.
Grid build_grid(Point center, double extent, int n_points);

/// Per-cell mean concentration on a Grid. Storage is row-major with y as the
/// slow index: density[j * cells_per_side + i] is the cell at (x_i, y_j).
struct ConcentrationField {
  Grid grid;
  std::vector<double> density;
  std::vector<double> center_x;  // per x-cell
  std::vector<double> center_y;  // per y-cell

  double cell_area() const { return grid.cell_area(); }
  /// Sum of c_i * dx * dy.
  double total_mass() const;
};

/// Cell averages of the puff concentration by 2-D Simpson's rule on each 3x3
/// stencil. Uses the separable form of the Gaussian so only O(n_points)
/// exponentials are evaluated.
ConcentrationField cell_concentrations(const Scenario& s, const Grid& g, double t);

/// Same quadrature for an arbitrary integrand f(x, y). Used for verification
/// and as the reference path for cell_concentrations.
ConcentrationField integrate_cells(const Grid& g, const std::function<double(double, double)>& f);

}  // namespace ste
