#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "saufno/error.hpp"
#include "saufno/thermal/dataset.hpp"
#include "saufno/thermal/solver.hpp"
#include "saufno/thermal/stack.hpp"
#include "support/energy.hpp"
#include "support/slab.hpp"
#include "support/tempdir.hpp"

using namespace saufno;
using namespace saufno::thermal;
using saufno::testing::map_power;
using saufno::testing::robin_outflow;

namespace {

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST_CASE("build_stack presets") {
  auto s1 = build_stack("chip1", 16);
  auto dev = s1.device_layers();
  REQUIRE(dev.size() == 2);
  for (int d : dev) {
    const auto& l = s1.layers[d];
    CHECK(l.width == doctest::Approx(16e-3));
    CHECK(l.height == doctest::Approx(16e-3));
    CHECK(l.thickness == doctest::Approx(0.15e-3));
    CHECK(l.material.k == 100.0);
    CHECK(l.material.c_vol == 1.75e6);
  }
  const auto& tim = s1.layers[2];
  CHECK(tim.name == "tim");
  CHECK(tim.width == doctest::Approx(16e-3));
  CHECK(tim.thickness == doctest::Approx(0.02e-3));
  CHECK(tim.material.k == 4.0);
  CHECK(s1.layers[3].width == doctest::Approx(30e-3));
  CHECK(s1.layers[3].thickness == doctest::Approx(1e-3));
  CHECK(s1.layers[3].material.k == 400.0);
  CHECK(s1.layers[4].width == doctest::Approx(60e-3));
  CHECK(s1.layers[4].thickness == doctest::Approx(6.9e-3));

  auto s3 = build_stack("chip3", 16);
  for (int d : s3.device_layers()) {
    CHECK(s3.layers[d].width == doctest::Approx(10e-3));
    CHECK(s3.layers[d].thickness == doctest::Approx(0.1e-3));
  }
  CHECK(s3.layers[2].thickness == doctest::Approx(0.052e-3));

  auto s2 = build_stack("chip2", 16);
  CHECK(s2.device_layer_count() == 3);
  CHECK(s2.die_width == doctest::Approx(12.4e-3));
  CHECK(s2.die_height == doctest::Approx(12.76e-3));

  CHECK(code_of([] { build_stack("chipX", 16); }) == "UnknownChip");
  CHECK(code_of([] { build_stack("chip1", 4); }) == "InvalidResolution");
}

TEST_CASE("TSV homogenization") {
  CHECK(tsv_area_fraction(0.01e-3, 0.02e-3) == doctest::Approx(M_PI / 16));
  auto s = build_stack("chip1", 16);
  auto& l = s.layers[0];
  s.tsv.k = 400;
  l.tsv_fraction = 0.25;
  CHECK(s.k_vertical(l) == doctest::Approx(0.75 * 100 + 0.25 * 400));
  CHECK(s.k_vertical(s.layers[2]) == 4.0);
}

TEST_CASE("stack json round trip") {
  for (const char* id : {"chip1", "chip2", "chip3"}) {
    auto s = build_stack(id, 24, 16);
    auto back = stack_from_json(stack_to_json(s));
    CHECK(back.chip_id == s.chip_id);
    CHECK(back.H == 24);
    CHECK(back.W == 16);
    REQUIRE(back.layers.size() == s.layers.size());
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
      CHECK(back.layers[i].thickness == doctest::Approx(s.layers[i].thickness).epsilon(1e-12));
      CHECK(back.layers[i].blocks.size() == s.layers[i].blocks.size());
      CHECK(back.layers[i].cells == s.layers[i].cells);
    }
    auto a = sample_power_map(s, 3, {10, 60});
    auto b = sample_power_map(back, 3, {10, 60});
    for (std::size_t i = 0; i < a.q.size(); ++i) CHECK(a.q[i] == doctest::Approx(b.q[i]).epsilon(1e-9));
  }
  CHECK(code_of([] { stack_from_json(nlohmann::json{{"die", 3}}); }) == "InvalidStack");
}

TEST_CASE("sample_power_map") {
  auto s = build_stack("chip1", 16);
  SUBCASE("deterministic") {
    auto a = sample_power_map(s, 42, {10, 60});
    auto b = sample_power_map(s, 42, {10, 60});
    CHECK(a.q == b.q);
    CHECK(a.block_power == b.block_power);
    CHECK(sample_power_map(s, 43, {10, 60}).q != a.q);
  }
  SUBCASE("zero range gives a zero map") {
    auto a = sample_power_map(s, 1, {0, 0});
    CHECK(std::all_of(a.q.begin(), a.q.end(), [](double v) { return v == 0.0; }));
  }
  SUBCASE("rasterized totals stay in range") {
    for (const char* id : {"chip1", "chip2", "chip3"})
      for (int res : {16, 20, 32}) {
        auto st = build_stack(id, res);
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
          auto pm = sample_power_map(st, seed, {10, 60});
          const double p = map_power(st, pm);
          CHECK(p >= 10 * (1 - 1e-3));
          CHECK(p <= 60 * (1 + 1e-3));
          double blocks = 0;
          for (double v : pm.block_power) blocks += v;
          CHECK(p == doctest::Approx(blocks).epsilon(1e-9));
          CHECK(std::all_of(pm.q.begin(), pm.q.end(), [](double v) { return v >= 0.0; }));
        }
      }
  }
  SUBCASE("errors") {
    CHECK(code_of([&] { sample_power_map(s, 1, {5, 1}); }) == "InvalidPowerRange");
    auto bare = s;
    for (auto& l : bare.layers) l.blocks.clear();
    CHECK(code_of([&] { sample_power_map(bare, 1, {1, 2}); }) == "EmptyBlockList");
  }
}

TEST_CASE("assemble_system") {
  SUBCASE("single cell with a Robin top") {
    for (double k : {1.0, 100.0, 1e12}) {
      ChipStack s = testing::single_cell_stack(k);
      ThermalGrid g = testing::single_cell_grid(s);
      PowerMap pm{1, 1, 1, {0.0}, {}};
      const double P = 2.5;
      const double area = s.die_width * s.die_height, dz = s.layers[0].thickness;
      pm.q[0] = P / (area * dz);
      auto res = solve_steady(s, g, pm, {.tol = 1e-14});
      const double series = s.boundary.t_a + P * (1.0 / s.boundary.eta + dz / (2 * k)) / area;
      CHECK(res.cells[0] == doctest::Approx(series).epsilon(1e-12));
      if (k == 1e12) CHECK(res.cells[0] == doctest::Approx(s.boundary.t_a + P / (s.boundary.eta * area)).epsilon(1e-10));
    }
  }
  SUBCASE("structure") {
    auto s = build_stack("chip2", 12);
    auto g = build_grid(s);
    auto pm = sample_power_map(s, 5, {10, 60});
    auto sys = assemble_system(s, g, pm);
    const auto& A = sys.A;
    for (int r = 0; r < A.n; ++r) {
      CHECK_MESSAGE(A.at(r, r) > 0, "row " << r);
      for (auto p = A.row_ptr[r]; p < A.row_ptr[r + 1]; ++p) {
        if (A.col[p] == r) continue;
        if (!(A.val[p] <= 0)) FAIL("positive off-diagonal");
        if (A.at(A.col[p], r) != A.val[p]) FAIL("asymmetric entry " << r << "," << A.col[p]);
      }
    }
  }
  SUBCASE("zero power is consistent with a uniform ambient field") {
    auto s = build_stack("chip1", 8);
    auto g = build_grid(s);
    auto pm = sample_power_map(s, 0, {0, 0});
    auto sys = assemble_system(s, g, pm);
    std::vector<double> ta(sys.A.n, s.boundary.t_a), y(sys.A.n);
    sys.A.multiply(ta.data(), y.data());
    for (int i = 0; i < sys.A.n; ++i) CHECK(std::abs(y[i] - sys.b[i]) <= 1e-9 * std::max(1.0, std::abs(sys.b[i])));
    auto res = solve_steady(s, g, pm);
    for (double t : res.cells) CHECK(std::abs(t - s.boundary.t_a) < 1e-9);
  }
  SUBCASE("resolution mismatch") {
    auto s = build_stack("chip1", 16);
    auto pm = sample_power_map(build_stack("chip1", 8), 0, {1, 2});
    CHECK(code_of([&] { assemble_system(s, build_grid(s), pm); }) == "ResolutionMismatch");
  }
}

TEST_CASE("analytic_slab") {
  CHECK(analytic_slab(100, 1e-3, 1e8, 1e4, 300, 0) == doctest::Approx(310.5).epsilon(1e-12));
  CHECK(analytic_slab(100, 1e-3, 1e8, 1e4, 300, 1e-3) == doctest::Approx(300 + 1e8 * 1e-3 / 1e4).epsilon(1e-12));
  double prev = 1e300;
  for (int i = 0; i <= 20; ++i) {
    const double t = analytic_slab(50, 2e-3, 3e7, 5e3, 290, 2e-3 * i / 20);
    CHECK(t < prev);
    prev = t;
  }
}

TEST_CASE("slab discretization converges at second order") {
  const auto e32 = testing::slab_error(32);
  const auto e64 = testing::slab_error(64);
  MESSAGE("slab max relative error: 32 cells " << e32 << ", 64 cells " << e64);
  CHECK(e64 <= 1e-3);
  CHECK(e32 / e64 >= 3.0);
}

TEST_CASE("steady solutions on a chip stack") {
  auto s = build_stack("chip1", 16);
  auto g = build_grid(s);
  SUBCASE("energy balance and maximum principle") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto pm = sample_power_map(s, seed, {10, 60});
      auto res = solve_steady(s, g, pm);
      const double gen = map_power(s, pm);
      CHECK(std::abs(gen - robin_outflow(s, g, res)) <= 1e-6 * gen);
      CHECK(res.field.t_min >= s.boundary.t_a - 1e-6);
      CHECK(res.field.t_max >= res.field.t_min);
      CHECK(*std::max_element(res.field.t.begin(), res.field.t.end()) <= res.field.t_max);
    }
  }
  SUBCASE("linear in the source") {
    auto pm = sample_power_map(s, 9, {10, 60});
    auto scaled = pm;
    for (auto& q : scaled.q) q *= 2.5;
    auto a = solve_steady(s, g, pm, {.tol = 1e-12});
    auto b = solve_steady(s, g, scaled, {.tol = 1e-12});
    const double t_a = s.boundary.t_a;
    for (std::size_t i = 0; i < a.cells.size(); ++i)
      CHECK(std::abs((b.cells[i] - t_a) - 2.5 * (a.cells[i] - t_a)) <= 1e-6 * (b.cells[i] - t_a));
  }
  SUBCASE("mirroring the power map mirrors the field") {
    auto pm = sample_power_map(s, 11, {10, 60});
    auto mirrored = pm;
    for (int l = 0; l < pm.layers; ++l)
      for (int r = 0; r < pm.H; ++r)
        for (int c = 0; c < pm.W; ++c)
          mirrored.q[(static_cast<std::size_t>(l) * pm.H + r) * pm.W + c] = pm.at(l, r, pm.W - 1 - c);
    auto a = solve_steady(s, g, pm, {.tol = 1e-12});
    auto b = solve_steady(s, g, mirrored, {.tol = 1e-12});
    for (int l = 0; l < pm.layers; ++l)
      for (int r = 0; r < pm.H; ++r)
        for (int c = 0; c < pm.W; ++c) {
          const auto ia = (static_cast<std::size_t>(l) * pm.H + r) * pm.W + c;
          const auto ib = (static_cast<std::size_t>(l) * pm.H + r) * pm.W + (pm.W - 1 - c);
          CHECK(std::abs(a.field.t[ia] - b.field.t[ib]) < 1e-6);
        }
  }
  SUBCASE("iteration cap is reported") {
    auto pm = sample_power_map(s, 1, {10, 60});
    CHECK(code_of([&] { solve_steady(s, g, pm, {.tol = 1e-8, .max_iterations = 3}); }) == "SolverDiverged");
  }
  SUBCASE("mid-plane slice of a device layer") {
    auto pm = sample_power_map(s, 2, {10, 60});
    auto res = solve_steady(s, g, pm);
    const int d = s.device_layers()[1];
    const int z0 = g.layer_z_begin[d];
    const int i = g.die_x0 + 3, j = g.die_y0 + 5;
    CHECK(res.field.t[(1 * 16 + 5) * 16 + 3] ==
          doctest::Approx(0.5 * (res.cells[g.id(i, j, z0)] + res.cells[g.id(i, j, z0 + 1)])).epsilon(1e-15));
  }
}

TEST_CASE("grid geometry") {
  auto s = build_stack("chip1", 16);
  auto g = build_grid(s);
  CHECK(g.nx() == 16 + 2 * 2 * s.ring_cells);
  CHECK(g.x_edges.front() == doctest::Approx(-30e-3));
  CHECK(g.x_edges.back() == doctest::Approx(30e-3));
  CHECK(g.dx(g.die_x0) == doctest::Approx(1e-3));
  CHECK(g.z_edges.back() == doctest::Approx(0.15e-3 * 2 + 0.02e-3 + 1e-3 + 6.9e-3));
  // device layers only exist above the die
  CHECK(g.id(0, 0, 0) == -1);
  CHECK(g.id(g.die_x0, g.die_y0, 0) >= 0);
  CHECK(g.id(0, 0, g.nz() - 1) >= 0);
}

TEST_CASE("THRM datasets") {
  testing::TempDir tmp;
  auto s = build_stack("chip1", 16);
  GenerateOptions opts;
  opts.seed = 7;
  auto ds = generate_dataset(s, 5, opts);
  CHECK(ds.header.count == 5);
  CHECK(ds.train_count() == 4);
  for (float t : ds.temperature) CHECK(t >= s.boundary.t_a - 1e-6);

  const auto p1 = tmp.path("a.thrm"), p2 = tmp.path("b.thrm");
  write_dataset(ds, p1);
  write_dataset(generate_dataset(s, 5, opts), p2);
  CHECK(testing::file_bytes(p1) == testing::file_bytes(p2));

  opts.threads = 3;
  auto threaded = generate_dataset(s, 5, opts);
  CHECK(threaded.temperature == ds.temperature);
  CHECK(threaded.power == ds.power);

  auto back = read_dataset(p1);
  CHECK(back.header.count == 5);
  CHECK(back.header.chip_id == "chip1");
  CHECK(back.header.split_ratio == std::array<int, 2>{4, 1});
  CHECK(back.power == ds.power);
  CHECK(back.temperature == ds.temperature);
  CHECK(back.slice(1, 3).header.count == 2);

  auto bytes = testing::file_bytes(p1);
  {
    std::ofstream out(tmp.path("bad.thrm"), std::ios::binary);
    auto copy = bytes;
    copy[0] = 'X';
    out.write(copy.data(), static_cast<std::streamsize>(copy.size()));
  }
  CHECK(code_of([&] { read_dataset(tmp.path("bad.thrm")); }) == "BadMagic");
  {
    std::ofstream out(tmp.path("short.thrm"), std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 10));
  }
  CHECK(code_of([&] { read_dataset(tmp.path("short.thrm")); }) == "TruncatedFile");
  CHECK(code_of([&] { read_dataset(tmp.path("missing.thrm")); }) == "FileNotFound");
  CHECK(code_of([&] { write_dataset(ds, tmp.path("no/such/dir/x.thrm")); }) == "UnwritablePath");
  CHECK(code_of([&] { generate_dataset(s, 0, opts); }) == "InvalidCount");
}
