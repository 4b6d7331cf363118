#include "saufno/thermal/solver.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "saufno/error.hpp"

namespace saufno::thermal {

namespace {

// Edges along one axis, centred on 0: n uniform die cells, then ring cells
// out to each wider extent.
std::vector<double> axis_edges(double die_extent, int n, std::vector<double> extents, int ring_cells, int& die_begin) {
  std::sort(extents.begin(), extents.end());
  std::vector<double> outer;
  double prev = die_extent / 2;
  for (double e : extents) {
    const double half = e / 2;
    if (half <= prev * (1 + 1e-9)) continue;
    const double step = (half - prev) / ring_cells;
    for (int r = 1; r <= ring_cells; ++r) outer.push_back(r == ring_cells ? half : prev + r * step);
    prev = half;
  }
  std::vector<double> edges;
  for (auto it = outer.rbegin(); it != outer.rend(); ++it) edges.push_back(-*it);
  die_begin = static_cast<int>(edges.size());
  for (int i = 0; i <= n; ++i) edges.push_back(-die_extent / 2 + die_extent * i / n);
  for (double e : outer) edges.push_back(e);
  return edges;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double overlap(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

}  // namespace

ThermalGrid build_grid(const ChipStack& stack) {
  stack.validate();
  ThermalGrid g;
  std::vector<double> xs, ys;
  for (const auto& l : stack.layers) {
    xs.push_back(l.width);
    ys.push_back(l.height);
  }
  g.x_edges = axis_edges(stack.die_width, stack.W, xs, stack.ring_cells, g.die_x0);
  g.y_edges = axis_edges(stack.die_height, stack.H, ys, stack.ring_cells, g.die_y0);
  g.z_edges = {0.0};
  for (std::size_t li = 0; li < stack.layers.size(); ++li) {
    const auto& l = stack.layers[li];
    g.layer_z_begin.push_back(static_cast<int>(g.layer_of_z.size()));
    const double z0 = g.z_edges.back();
    for (int c = 1; c <= l.cells; ++c) {
      g.z_edges.push_back(c == l.cells ? z0 + l.thickness : z0 + l.thickness * c / l.cells);
      g.layer_of_z.push_back(static_cast<int>(li));
    }
  }
  g.index.assign(static_cast<std::size_t>(g.nx()) * g.ny() * g.nz(), -1);
  for (int k = 0; k < g.nz(); ++k) {
    const auto& l = stack.layers[g.layer_of_z[k]];
    for (int j = 0; j < g.ny(); ++j) {
      const double yc = 0.5 * (g.y_edges[j] + g.y_edges[j + 1]);
      for (int i = 0; i < g.nx(); ++i) {
        const double xc = 0.5 * (g.x_edges[i] + g.x_edges[i + 1]);
        if (std::abs(xc) < l.width / 2 && std::abs(yc) < l.height / 2) g.index[g.flat(i, j, k)] = g.unknowns++;
      }
    }
  }
  return g;
}

void CsrMatrix::multiply(const double* x, double* y) const {
  for (int r = 0; r < n; ++r) {
    double acc = 0;
    for (auto p = row_ptr[r]; p < row_ptr[r + 1]; ++p) acc += val[p] * x[col[p]];
    y[r] = acc;
  }
}

double CsrMatrix::at(int r, int c) const {
  for (auto p = row_ptr[r]; p < row_ptr[r + 1]; ++p)
    if (col[p] == c) return val[p];
  return 0.0;
}

double total_power(const ChipStack& stack, const PowerMap& pmap) {
  const auto dev = stack.device_layers();
  const double cell_area = (stack.die_width / stack.W) * (stack.die_height / stack.H);
  double total = 0;
  for (int l = 0; l < pmap.layers; ++l) {
    const double dv = cell_area * stack.layers[dev[l]].thickness;
    for (int r = 0; r < pmap.H; ++r)
      for (int c = 0; c < pmap.W; ++c) total += pmap.at(l, r, c) * dv;
  }
  return total;
}

PowerMap sample_power_map(const ChipStack& stack, std::uint64_t seed, std::pair<double, double> p_range) {
  const auto [p_min, p_max] = p_range;
  if (!(p_min >= 0 && p_max >= p_min)) throw Error("InvalidPowerRange", "power range must satisfy 0 <= min <= max");
  const auto dev = stack.device_layers();
  std::vector<std::pair<int, const Block*>> blocks;
  for (std::size_t l = 0; l < dev.size(); ++l)
    for (const auto& b : stack.layers[dev[l]].blocks)
      if (b.powered) blocks.emplace_back(static_cast<int>(l), &b);
  if (blocks.empty()) throw Error("EmptyBlockList", "stack has no powered blocks");

  std::mt19937_64 rng(seed);
  const double total = p_min + (p_max - p_min) * uniform01(rng);
  std::vector<double> weights(blocks.size());
  double wsum = 0;
  for (auto& w : weights) {
    w = uniform01(rng) + 1e-12;
    wsum += w;
  }

  PowerMap pm;
  pm.layers = static_cast<int>(dev.size());
  pm.H = stack.H;
  pm.W = stack.W;
  pm.q.assign(static_cast<std::size_t>(pm.layers) * pm.H * pm.W, 0.0);
  const double cw = stack.die_width / stack.W, ch = stack.die_height / stack.H;
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    const auto [l, b] = blocks[bi];
    const double p = total * weights[bi] / wsum;
    pm.block_power.push_back(p);
    const double area = (b->x1 - b->x0) * (b->y1 - b->y0);
    const double cell_volume = cw * ch * stack.layers[dev[l]].thickness;
    const int c0 = std::max(0, static_cast<int>(std::floor(b->x0 / cw)));
    const int c1 = std::min(pm.W - 1, static_cast<int>(std::ceil(b->x1 / cw)));
    const int r0 = std::max(0, static_cast<int>(std::floor(b->y0 / ch)));
    const int r1 = std::min(pm.H - 1, static_cast<int>(std::ceil(b->y1 / ch)));
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) {
        const double ov = overlap(c * cw, (c + 1) * cw, b->x0, b->x1) * overlap(r * ch, (r + 1) * ch, b->y0, b->y1);
        if (ov > 0) pm.q[(static_cast<std::size_t>(l) * pm.H + r) * pm.W + c] += p * (ov / area) / cell_volume;
      }
  }
  return pm;
}

LinearSystem assemble_system(const ChipStack& stack, const ThermalGrid& g, const PowerMap& pmap) {
  const auto dev = stack.device_layers();
  if (pmap.H != stack.H || pmap.W != stack.W || pmap.layers != static_cast<int>(dev.size()) ||
      pmap.q.size() != static_cast<std::size_t>(pmap.layers) * pmap.H * pmap.W)
    throw Error("ResolutionMismatch", "power map does not match the stack grid");
  for (int i = 0; i < g.nx(); ++i)
    if (!(g.dx(i) > 0)) throw Error("DegenerateCell", "zero-width cell along x");
  for (int j = 0; j < g.ny(); ++j)
    if (!(g.dy(j) > 0)) throw Error("DegenerateCell", "zero-width cell along y");
  for (int k = 0; k < g.nz(); ++k)
    if (!(g.dz(k) > 0)) throw Error("DegenerateCell", "zero-height cell along z");

  const int n = g.unknowns;
  const double eta = stack.boundary.eta, t_a = stack.boundary.t_a;
  const bool side_robin = stack.boundary.side_bottom == SideCondition::Robin;
  std::vector<int> device_slot(stack.layers.size(), -1);
  for (std::size_t d = 0; d < dev.size(); ++d) device_slot[dev[d]] = static_cast<int>(d);

  struct Entry {
    std::int32_t col;
    double val;
  };
  std::vector<std::vector<Entry>> rows(n);
  std::vector<double> diag(n, 0.0);
  LinearSystem sys;
  sys.source.assign(n, 0.0);
  sys.robin.assign(n, 0.0);

  auto k_lat = [&](int k) { return stack.layers[g.layer_of_z[k]].material.k; };
  auto k_ver = [&](int k) { return stack.k_vertical(stack.layers[g.layer_of_z[k]]); };
  auto couple = [&](std::int32_t a, std::int32_t b, double G) {
    diag[a] += G;
    diag[b] += G;
    rows[a].push_back({b, -G});
    rows[b].push_back({a, -G});
  };
  auto film = [&](std::int32_t a, double area, double half, double k) {
    const double G = area / (1.0 / eta + half / k);
    diag[a] += G;
    sys.robin[a] += G;
  };

  for (int k = 0; k < g.nz(); ++k)
    for (int j = 0; j < g.ny(); ++j)
      for (int i = 0; i < g.nx(); ++i) {
        const auto a = g.id(i, j, k);
        if (a < 0) continue;
        const double dx = g.dx(i), dy = g.dy(j), dz = g.dz(k);
        if (i + 1 < g.nx()) {
          if (const auto b = g.id(i + 1, j, k); b >= 0)
            couple(a, b, dy * dz / (dx / (2 * k_lat(k)) + g.dx(i + 1) / (2 * k_lat(k))));
        }
        if (j + 1 < g.ny()) {
          if (const auto b = g.id(i, j + 1, k); b >= 0)
            couple(a, b, dx * dz / (dy / (2 * k_lat(k)) + g.dy(j + 1) / (2 * k_lat(k))));
        }
        if (k + 1 < g.nz()) {
          if (const auto b = g.id(i, j, k + 1); b >= 0)
            couple(a, b, dx * dy / (dz / (2 * k_ver(k)) + g.dz(k + 1) / (2 * k_ver(k + 1))));
        } else {
          film(a, dx * dy, dz / 2, k_ver(k));
        }
        if (side_robin) {
          if (k == 0) film(a, dx * dy, dz / 2, k_ver(k));
          if (i == 0) film(a, dy * dz, dx / 2, k_lat(k));
          if (i + 1 == g.nx()) film(a, dy * dz, dx / 2, k_lat(k));
          if (j == 0) film(a, dx * dz, dy / 2, k_lat(k));
          if (j + 1 == g.ny()) film(a, dx * dz, dy / 2, k_lat(k));
        }
        const int slot = device_slot[g.layer_of_z[k]];
        const int r = j - g.die_y0, c = i - g.die_x0;
        if (slot >= 0 && r >= 0 && r < stack.H && c >= 0 && c < stack.W)
          sys.source[a] = pmap.at(slot, r, c) * dx * dy * dz;
      }

  auto& A = sys.A;
  A.n = n;
  A.row_ptr.assign(n + 1, 0);
  for (int r = 0; r < n; ++r) {
    rows[r].push_back({r, diag[r]});
    std::sort(rows[r].begin(), rows[r].end(), [](const Entry& x, const Entry& y) { return x.col < y.col; });
    A.row_ptr[r + 1] = A.row_ptr[r] + static_cast<std::int64_t>(rows[r].size());
  }
  A.col.reserve(A.row_ptr[n]);
  A.val.reserve(A.row_ptr[n]);
  for (auto& row : rows)
    for (const auto& e : row) {
      A.col.push_back(e.col);
      A.val.push_back(e.val);
    }
  sys.b.resize(n);
  for (int r = 0; r < n; ++r) sys.b[r] = sys.source[r] + sys.robin[r] * t_a;
  return sys;
}

PcgResult pcg(const CsrMatrix& A, const std::vector<double>& b, std::vector<double>& x, double tol, int max_iterations) {
  const int n = A.n;
  x.assign(n, 0.0);
  PcgResult res;
  double bnorm = 0;
  for (double v : b) bnorm += v * v;
  bnorm = std::sqrt(bnorm);
  if (bnorm == 0) {
    res.converged = true;
    return res;
  }
  std::vector<double> inv_diag(n), r(b), z(n), p(n), Ap(n);
  for (int i = 0; i < n; ++i) inv_diag[i] = 1.0 / A.at(i, i);
  double rz = 0;
  for (int i = 0; i < n; ++i) {
    z[i] = inv_diag[i] * r[i];
    p[i] = z[i];
    rz += r[i] * z[i];
  }
  for (int it = 1; it <= max_iterations; ++it) {
    A.multiply(p.data(), Ap.data());
    double pAp = 0;
    for (int i = 0; i < n; ++i) pAp += p[i] * Ap[i];
    const double alpha = rz / pAp;
    double rr = 0;
    for (int i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
      rr += r[i] * r[i];
    }
    res.iterations = it;
    res.relative_residual = std::sqrt(rr) / bnorm;
    if (res.relative_residual <= tol) {
      res.converged = true;
      return res;
    }
    double rz_new = 0;
    for (int i = 0; i < n; ++i) {
      z[i] = inv_diag[i] * r[i];
      rz_new += r[i] * z[i];
    }
    const double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  return res;
}

SteadyResult solve_steady(const ChipStack& stack, const PowerMap& pmap, const SolveOptions& opts) {
  return solve_steady(stack, build_grid(stack), pmap, opts);
}

SteadyResult solve_steady(const ChipStack& stack, const ThermalGrid& g, const PowerMap& pmap, const SolveOptions& opts) {
  const auto sys = assemble_system(stack, g, pmap);
  const int max_it =
      opts.max_iterations > 0 ? opts.max_iterations : static_cast<int>(std::ceil(20.0 * std::sqrt(double(g.unknowns))));
  // Solve for the rise above ambient; the source alone is the right-hand side.
  std::vector<double> theta;
  const auto pr = pcg(sys.A, sys.source, theta, opts.tol, max_it);
  if (!pr.converged)
    throw Error("SolverDiverged", "CG did not converge in " + std::to_string(pr.iterations) +
                                      " iterations (relative residual " + std::to_string(pr.relative_residual) + ")");

  const double t_a = stack.boundary.t_a;
  SteadyResult out;
  out.iterations = pr.iterations;
  out.relative_residual = pr.relative_residual;
  out.cells.resize(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) out.cells[i] = t_a + theta[i];
  if (!out.cells.empty()) {
    auto [lo, hi] = std::minmax_element(out.cells.begin(), out.cells.end());
    out.field.t_min = *lo;
    out.field.t_max = *hi;
  }

  const auto dev = stack.device_layers();
  auto& f = out.field;
  f.layers = static_cast<int>(dev.size());
  f.H = stack.H;
  f.W = stack.W;
  f.t.assign(static_cast<std::size_t>(f.layers) * f.H * f.W, 0.0);
  for (int l = 0; l < f.layers; ++l) {
    const auto& layer = stack.layers[dev[l]];
    const int z0 = g.layer_z_begin[dev[l]], nzl = layer.cells;
    const int ka = z0 + (nzl - 1) / 2, kb = z0 + nzl / 2;  // equal when the count is odd
    for (int r = 0; r < f.H; ++r)
      for (int c = 0; c < f.W; ++c) {
        const int i = g.die_x0 + c, j = g.die_y0 + r;
        f.t[(static_cast<std::size_t>(l) * f.H + r) * f.W + c] =
            0.5 * (out.cells[g.id(i, j, ka)] + out.cells[g.id(i, j, kb)]);
      }
  }
  return out;
}

double analytic_slab(double k, double L, double q_vol, double eta, double t_a, double z) {
  return t_a + q_vol * L / eta + q_vol * (L * L - z * z) / (2.0 * k);
}

}  // namespace saufno::thermal
