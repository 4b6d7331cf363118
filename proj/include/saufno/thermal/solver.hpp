#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "saufno/thermal/stack.hpp"

namespace saufno::thermal {

// Tensor-product finite-volume mesh. The die is covered by W x H uniform
// columns; each wider layer adds `ring_cells` cells per side per annulus.
// Cells whose centre lies outside their layer's lateral extent are void.
struct ThermalGrid {
  std::vector<double> x_edges, y_edges, z_edges;
  int die_x0 = 0, die_y0 = 0;      // first die column / row
  std::vector<int> layer_of_z;     // stack layer index per z cell
  std::vector<int> layer_z_begin;  // first z cell of each stack layer
  std::vector<std::int32_t> index;  // dense (z, y, x) -> unknown id, -1 for void
  int unknowns = 0;

  int nx() const { return static_cast<int>(x_edges.size()) - 1; }
  int ny() const { return static_cast<int>(y_edges.size()) - 1; }
  int nz() const { return static_cast<int>(z_edges.size()) - 1; }
  double dx(int i) const { return x_edges[i + 1] - x_edges[i]; }
  double dy(int j) const { return y_edges[j + 1] - y_edges[j]; }
  double dz(int k) const { return z_edges[k + 1] - z_edges[k]; }
  std::size_t flat(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * ny() + j) * nx() + i;
  }
  std::int32_t id(int i, int j, int k) const { return index[flat(i, j, k)]; }
};

ThermalGrid build_grid(const ChipStack& stack);

// Per device layer, H x W volumetric heat generation (W/m^3), row-major with
// rows along y. Device layers are ordered bottom to top.
struct PowerMap {
  int layers = 0, H = 0, W = 0;
  std::vector<double> q;
  std::vector<double> block_power;  // W, in stack/block order over powered blocks

  double at(int l, int r, int c) const { return q[(static_cast<std::size_t>(l) * H + r) * W + c]; }
};

struct TemperatureField {
  int layers = 0, H = 0, W = 0;
  std::vector<double> t;  // K, device-layer mid-plane slices, same layout as PowerMap::q
  double t_max = 0;       // over every cell of the stack
  double t_min = 0;
};

struct CsrMatrix {
  int n = 0;
  std::vector<std::int64_t> row_ptr;
  std::vector<std::int32_t> col;
  std::vector<double> val;

  void multiply(const double* x, double* y) const;
  double at(int r, int c) const;
};

// A T = b for absolute temperature. `source` holds Q*dV alone, so that
// A (T - t_a) = source.
struct LinearSystem {
  CsrMatrix A;
  std::vector<double> b;
  std::vector<double> source;
  std::vector<double> robin;  // boundary conductance on each unknown's diagonal (W/K)
};

// Total power of the die region of each device layer (W).
double total_power(const ChipStack& stack, const PowerMap& pmap);

// Draws per-block powers, scales them to a total uniform in p_range and
// rasterizes them by area overlap, so the grid total equals the drawn total.
PowerMap sample_power_map(const ChipStack& stack, std::uint64_t seed, std::pair<double, double> p_range);

// Seven-point stencil. Interior faces use the series (harmonic) conductance of
// the two half cells. A Robin face adds the series conductance of the half
// cell and the film, dA / (1/eta + dz/(2k)), to the diagonal.
LinearSystem assemble_system(const ChipStack& stack, const ThermalGrid& grid, const PowerMap& pmap);

struct SolveOptions {
  double tol = 1e-8;
  int max_iterations = 0;  // 0: 20 * sqrt(unknowns)
};

struct SteadyResult {
  TemperatureField field;
  std::vector<double> cells;  // absolute temperature per unknown
  int iterations = 0;
  double relative_residual = 0;
};

struct PcgResult {
  int iterations = 0;
  double relative_residual = 0;
  bool converged = false;
};

// Jacobi-preconditioned conjugate gradients from a zero initial guess.
PcgResult pcg(const CsrMatrix& A, const std::vector<double>& b, std::vector<double>& x, double tol, int max_iterations);

SteadyResult solve_steady(const ChipStack& stack, const PowerMap& pmap, const SolveOptions& opts = {});
SteadyResult solve_steady(const ChipStack& stack, const ThermalGrid& grid, const PowerMap& pmap,
                          const SolveOptions& opts = {});

// Slab insulated at z = 0, uniformly heated, Robin-cooled at z = L.
double analytic_slab(double k, double L, double q_vol, double eta, double t_a, double z);

}  // namespace saufno::thermal
