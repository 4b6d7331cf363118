#include <doctest.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <random>
#include <sstream>

#include "saufno/error.hpp"
#include "saufno/eval/benchmark.hpp"
#include "saufno/eval/cli.hpp"
#include "saufno/eval/heatmap.hpp"
#include "saufno/eval/metrics.hpp"
#include "saufno/thermal/dataset.hpp"
#include "saufno/thermal/stack.hpp"
#include "support/random.hpp"
#include "support/tempdir.hpp"

using namespace saufno;
using namespace saufno::eval;
using saufno::testing::file_bytes;
using saufno::testing::TempDir;

namespace {

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Test-side reference: straight from the definitions, in long double.
SampleMetrics reference_sample(const std::vector<float>& p, const std::vector<float>& t) {
  long double sq = 0, ape = 0, peak = 0, abs_sum = 0;
  long double pmax = p[0], tmax = t[0];
  for (std::size_t i = 0; i < p.size(); ++i) {
    const long double e = static_cast<long double>(p[i]) - t[i];
    sq += e * e;
    abs_sum += std::fabs(e);
    const long double rel = std::fabs(e) / t[i];
    ape += rel;
    peak = std::max(peak, rel);
    pmax = std::max<long double>(pmax, p[i]);
    tmax = std::max<long double>(tmax, t[i]);
  }
  const auto n = static_cast<long double>(p.size());
  return {static_cast<double>(std::sqrt(sq / n)), static_cast<double>(ape / n * 100),
          static_cast<double>(peak * 100), static_cast<double>(std::fabs(pmax - tmax)),
          static_cast<double>(abs_sum / n)};
}

struct Ppm {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
};

Ppm read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int maxval = 0;
  Ppm p;
  in >> magic >> p.width >> p.height >> maxval;
  in.get();
  REQUIRE(magic == "P6");
  REQUIRE(maxval == 255);
  p.rgb.resize(static_cast<std::size_t>(p.width) * p.height * 3);
  in.read(reinterpret_cast<char*>(p.rgb.data()), static_cast<std::streamsize>(p.rgb.size()));
  REQUIRE(in.gcount() == static_cast<std::streamsize>(p.rgb.size()));
  return p;
}

}  // namespace

TEST_CASE("metrics: hand-computed two-cell case") {
  const std::vector<float> truth{300, 400}, pred{301, 398};
  const auto r = compute_metrics(pred, truth, 1, {1, 2});
  CHECK(r.rmse == doctest::Approx(std::sqrt(2.5)).epsilon(1e-12));
  CHECK(std::abs(r.mape - (1.0 / 300 + 2.0 / 400) / 2 * 100) < 1e-9);
  CHECK(std::abs(r.pape - 0.5) < 1e-9);
  CHECK(std::abs(r.max_err - 2.0) < 1e-9);
  CHECK(std::abs(r.mean_err - 1.5) < 1e-9);
  CHECK(r.n_samples == 1);
}

TEST_CASE("metrics: constant offset closed form") {
  for (int n : {1, 3}) {
    const std::vector<float> truth(static_cast<std::size_t>(n) * 64, 350.0f);
    std::vector<float> pred(truth.size(), 351.0f);
    const auto r = compute_metrics(pred, truth, n, {8, 8});
    CHECK(std::abs(r.rmse - 1) < 1e-9);
    CHECK(std::abs(r.mean_err - 1) < 1e-9);
    CHECK(std::abs(r.max_err - 1) < 1e-9);
    CHECK(std::abs(r.mape - 100.0 / 350) < 1e-9);
    CHECK(std::abs(r.pape - 100.0 / 350) < 1e-9);
    CHECK_FALSE(r.pooled_diverges);
  }
}

TEST_CASE("metrics: pred == truth gives zeros") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(300, 400);
  std::vector<float> t(2 * 50);
  for (auto& x : t) x = u(rng);
  const auto r = compute_metrics(t, t, 2, {5, 10});
  CHECK(r.rmse == 0);
  CHECK(r.mape == 0);
  CHECK(r.pape == 0);
  CHECK(r.max_err == 0);
  CHECK(r.mean_err == 0);
}

TEST_CASE("metrics: random batches against the reference") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<float> u(300, 420), noise(-3, 3);
  const int n = 4, cells = 37;
  std::vector<float> t(n * cells), p(n * cells);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = u(rng);
    p[i] = t[i] + noise(rng);
  }
  const auto r = compute_metrics(p, t, n, {1, cells});
  REQUIRE(r.per_sample.size() == static_cast<std::size_t>(n));
  SampleMetrics mean;
  for (int s = 0; s < n; ++s) {
    const std::vector<float> ps(p.begin() + s * cells, p.begin() + (s + 1) * cells);
    const std::vector<float> ts(t.begin() + s * cells, t.begin() + (s + 1) * cells);
    const auto ref = reference_sample(ps, ts);
    CHECK(r.per_sample[s].rmse == doctest::Approx(ref.rmse).epsilon(1e-9));
    CHECK(r.per_sample[s].mape == doctest::Approx(ref.mape).epsilon(1e-9));
    CHECK(r.per_sample[s].pape == doctest::Approx(ref.pape).epsilon(1e-9));
    CHECK(r.per_sample[s].max_err == doctest::Approx(ref.max_err).epsilon(1e-9));
    CHECK(r.per_sample[s].mean_err == doctest::Approx(ref.mean_err).epsilon(1e-9));
    mean.rmse += ref.rmse / n;
    mean.mape += ref.mape / n;
    mean.mean_err += ref.mean_err / n;
  }
  CHECK(r.rmse == doctest::Approx(mean.rmse).epsilon(1e-9));
  CHECK(r.mape == doctest::Approx(mean.mape).epsilon(1e-9));
  CHECK(r.mean_err == doctest::Approx(mean.mean_err).epsilon(1e-9));
  const auto pooled = reference_sample(p, t);
  CHECK(r.pooled.rmse == doctest::Approx(pooled.rmse).epsilon(1e-9));
  CHECK(r.pooled.pape == doctest::Approx(pooled.pape).epsilon(1e-9));
}

TEST_CASE("metrics: invariants on random data") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(250, 500), noise(-20, 20);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 4, cells = 1 + trial % 13;
    std::vector<float> t(n * cells), p(n * cells);
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = u(rng);
      p[i] = t[i] + noise(rng);
    }
    const auto r = compute_metrics(p, t, n, {1, cells});
    CHECK(r.rmse >= 0);
    CHECK(r.mape >= 0);
    CHECK(r.max_err >= 0);
    CHECK(r.mean_err >= 0);
    CHECK(r.pape >= r.mape);
    CHECK(r.rmse >= r.mean_err - 1e-9);
  }
}

TEST_CASE("metrics: errors") {
  const std::vector<float> a{300, 301, 302, 303}, b{300, 301, 302};
  CHECK(code_of([&] { compute_metrics(a, b, 1, {2, 2}); }) == "ShapeMismatch");
  CHECK(code_of([&] { compute_metrics(a, a, 2, {2, 2}); }) == "ShapeMismatch");
  const std::vector<float> bad{300, 0, 302, 303};
  CHECK(code_of([&] { compute_metrics(a, bad, 1, {2, 2}); }) == "NonPositiveTruth");
  const std::vector<float> neg{300, -4, 302, 303};
  CHECK(code_of([&] { compute_metrics(a, neg, 1, {2, 2}); }) == "NonPositiveTruth");
}

TEST_CASE("metrics: report JSON round trip") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<float> u(300, 400);
  std::vector<float> t(3 * 16), p(3 * 16);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = u(rng);
    p[i] = u(rng);
  }
  auto r = compute_metrics(p, t, 3, {4, 4});
  r.runtime_s = 0.125;
  CHECK(report_from_json(nlohmann::json::parse(report_to_json(r).dump())) == r);
  const auto j = report_to_json(r);
  for (const char* key : {"rmse", "mape", "pape", "max_err", "mean_err", "n_samples", "resolution", "runtime_s"})
    CHECK(j.contains(key));
  CHECK(code_of([] { report_from_json(nlohmann::json{{"rmse", 1}}); }) == "InvalidReport");

  TempDir dir;
  write_report(r, dir.path("r.json"));
  std::ifstream in(dir.path("r.json"));
  CHECK(report_from_json(nlohmann::json::parse(in)) == r);
}

TEST_CASE("heatmap: colormap runs blue to red") {
  CHECK(colormap(0) == std::array<std::uint8_t, 3>{0, 0, 255});
  CHECK(colormap(255) == std::array<std::uint8_t, 3>{255, 0, 0});
  std::set<std::array<std::uint8_t, 3>> distinct;
  for (int i = 0; i < 256; ++i) distinct.insert(colormap(i));
  CHECK(distinct.size() > 128);
}

TEST_CASE("heatmap: uniform field, dimensions, orientation, determinism") {
  TempDir dir;
  SUBCASE("uniform") {
    const std::vector<float> f(6 * 5, 331.5f);
    render_heatmap(f, 6, 5, dir.path("u.ppm"), 3);
    const auto img = read_ppm(dir.path("u.ppm"));
    CHECK(img.width == 15);
    CHECK(img.height == 18);
    for (std::size_t i = 3; i < img.rgb.size(); ++i) CHECK(img.rgb[i] == img.rgb[i % 3]);
  }
  SUBCASE("ramp") {
    std::vector<float> f(4 * 7);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = 300.0f + static_cast<float>(i);
    render_heatmap(f, 4, 7, dir.path("a.ppm"), 2);
    render_heatmap(f, 4, 7, dir.path("b.ppm"), 2);
    CHECK(file_bytes(dir.path("a.ppm")) == file_bytes(dir.path("b.ppm")));
    const auto img = read_ppm(dir.path("a.ppm"));
    CHECK(img.width == 14);
    CHECK(img.height == 8);
    // field row 0, column 0 is the coldest cell and sits bottom-left
    auto px = [&](int x, int y) {
      const auto* p = &img.rgb[(static_cast<std::size_t>(y) * img.width + x) * 3];
      return std::array<std::uint8_t, 3>{p[0], p[1], p[2]};
    };
    CHECK(px(0, img.height - 1) == colormap(0));
    CHECK(px(img.width - 1, 0) == colormap(255));
    std::ifstream side(dir.path("a.ppm.txt"));
    std::string k1, k2;
    double lo = 0, hi = 0;
    side >> k1 >> lo >> k2 >> hi;
    CHECK(k1 == "min");
    CHECK(k2 == "max");
    CHECK(lo == 300.0);
    CHECK(hi == 327.0);
  }
  SUBCASE("errors") {
    const std::vector<float> f(4, 1.0f);
    CHECK(code_of([&] { render_heatmap(f, 2, 2, dir.path("missing/dir/x.ppm")); }) == "UnwritablePath");
    CHECK(code_of([&] { render_heatmap(f, 3, 2, dir.path("x.ppm")); }) == "InvalidResolution");
    CHECK(code_of([&] { render_heatmap(f, 2, 2, dir.path("x.ppm"), 0); }) == "InvalidResolution");
  }
}

TEST_CASE("benchmark: report fields and errors") {
  nn::ModelConfig c;
  c.in_channels = c.out_channels = 2;
  c.width = 4;
  c.modes1 = c.modes2 = 3;
  c.fourier_layers = c.ufourier_layers = 1;
  c.attention_dim = 4;
  c.ladder = {4, 4, 8, 8};
  const train::Model model(c, 0);
  train::NormStats stats;
  stats.in_mean.assign(2, 0.0);
  stats.in_std.assign(2, 1e7);
  stats.out_mean.assign(2, 0.0);
  stats.out_std.assign(2, 1.0);
  const auto stack = thermal::build_stack("chip1", 16);

  CHECK(code_of([&] { benchmark(model, stats, stack, 0); }) == "TooFewSamples");
  CHECK(code_of([&] { benchmark(model, stats, stack, 2); }) == "TooFewSamples");
  const auto chip2 = thermal::build_stack("chip2", 16);
  CHECK(code_of([&] { benchmark(model, stats, chip2, 3); }) == "IncompatibleParameters");

  for (bool model_first : {false, true}) {
    BenchmarkOptions o;
    o.model_first = model_first;
    const auto r = benchmark(model, stats, stack, 3, o);
    CHECK(r.chip_id == "chip1");
    CHECK(r.H == 16);
    CHECK(r.W == 16);
    CHECK(r.n == 3);
    CHECK(r.model_first == model_first);
    CHECK(r.oracle_mean_s > 0);
    CHECK(r.inference_mean_s > 0);
    CHECK(r.latency_mean_s > 0);
    CHECK(r.speedup == r.oracle_mean_s / r.inference_mean_s);
    const auto j = benchmark_to_json(r);
    CHECK(j.at("speedup").get<double>() == r.speedup);
    CHECK(j.at("n_samples").get<int>() == 3);
  }
}

TEST_CASE("cli: usage errors") {
  CHECK(cli({}).code == 2);
  const auto bad = cli({"frobnicate"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("frobnicate") != std::string::npos);
  CHECK(cli({"gen-data", "--n", "3", "--out", "x", "--bogus", "1"}).code == 2);
  CHECK(cli({"gen-data", "--n", "3"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("cli: runtime errors are one parsable line") {
  TempDir dir;
  const auto r = cli({"evaluate", "--ckpt", dir.path("nope.ckpt"), "--data", dir.path("nope.thrm")});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: ", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  std::ofstream(dir.path("bad.json")) << R"({"model": {}, "optimizer": {}})";
  REQUIRE(cli({"gen-data", "--n", "2", "--res", "16", "--out", dir.path("d.thrm")}).code == 0);
  const auto c = cli({"train", "--data", dir.path("d.thrm"), "--config", dir.path("bad.json"), "--out", dir.path("m")});
  CHECK(c.code == 1);
  CHECK(c.err.find("InvalidConfig") != std::string::npos);
  const auto g = cli({"gen-data", "--chip", "chip9", "--n", "2", "--res", "16", "--out", dir.path("d.thrm")});
  CHECK(g.code == 1);
}

TEST_CASE("cli: gen-data is reproducible, evaluate on identical data is zero") {
  TempDir dir;
  const std::vector<std::string> base{"gen-data", "--chip", "chip1", "--n", "5", "--res", "16", "--seed", "7"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", dir.path("a.thrm")});
  b.insert(b.end(), {"--out", dir.path("b.thrm"), "--threads", "3"});
  REQUIRE(cli(a).code == 0);
  REQUIRE(cli(b).code == 0);
  CHECK(file_bytes(dir.path("a.thrm")) == file_bytes(dir.path("b.thrm")));

  const auto ev = cli({"evaluate", "--pred", dir.path("a.thrm"), "--data", dir.path("b.thrm"), "--report",
                       dir.path("r.json")});
  REQUIRE(ev.code == 0);
  std::ifstream in(dir.path("r.json"));
  const auto r = report_from_json(nlohmann::json::parse(in));
  CHECK(r.rmse == 0);
  CHECK(r.mape == 0);
  CHECK(r.pape == 0);
  CHECK(r.max_err == 0);
  CHECK(r.mean_err == 0);
  CHECK(r.n_samples == 5);
}

TEST_CASE("cli: gen -> train -> evaluate -> predict -> finetune pipeline") {
  TempDir dir;
  REQUIRE(cli({"gen-data", "--chip", "chip1", "--n", "20", "--res", "16", "--seed", "3", "--threads", "4", "--out",
               dir.path("d.thrm")})
              .code == 0);
  {
    std::ofstream cfg(dir.path("c.json"));
    cfg << R"({"model": {"width": 4, "modes": [3, 3], "fourier_layers": 1, "ufourier_layers": 1,
                         "attention_dim": 4, "ladder": [4, 4, 8, 8]},
               "train": {"lr": 0.003, "batch_size": 4, "epochs": 5}})";
  }
  const auto tr = cli({"train", "--data", dir.path("d.thrm"), "--config", dir.path("c.json"), "--out",
                       dir.path("m.ckpt"), "--quiet"});
  REQUIRE_MESSAGE(tr.code == 0, tr.err);

  const auto ev =
      cli({"evaluate", "--ckpt", dir.path("m.ckpt"), "--data", dir.path("d.thrm"), "--report", dir.path("r.json")});
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  std::ifstream in(dir.path("r.json"));
  const auto r = report_from_json(nlohmann::json::parse(in));
  CHECK(std::isfinite(r.rmse));
  CHECK(std::isfinite(r.mape));
  CHECK(std::isfinite(r.pape));
  CHECK(std::isfinite(r.max_err));
  CHECK(std::isfinite(r.mean_err));
  CHECK(r.rmse > 0);
  CHECK(r.runtime_s > 0);

  const auto pr = cli({"predict", "--ckpt", dir.path("m.ckpt"), "--power", dir.path("d.thrm"), "--heatmap",
                       dir.path("maps"), "--scale", "2", "--out", dir.path("p.thrm")});
  REQUIRE_MESSAGE(pr.code == 0, pr.err);
  const auto img = read_ppm(dir.path("maps/sample0_layer1.ppm"));
  CHECK(img.width == 32);
  CHECK(img.height == 32);
  const auto ev2 =
      cli({"evaluate", "--pred", dir.path("p.thrm"), "--data", dir.path("d.thrm"), "--report", dir.path("r2.json")});
  REQUIRE(ev2.code == 0);
  std::ifstream in2(dir.path("r2.json"));
  CHECK(report_from_json(nlohmann::json::parse(in2)).rmse == doctest::Approx(r.rmse).epsilon(1e-6));

  REQUIRE(cli({"gen-data", "--chip", "chip1", "--n", "5", "--res", "32", "--seed", "4", "--out", dir.path("h.thrm")})
              .code == 0);
  const auto ft = cli({"finetune", "--ckpt", dir.path("m.ckpt"), "--data", dir.path("h.thrm"), "--epochs", "1",
                       "--out", dir.path("f.ckpt"), "--quiet"});
  CHECK_MESSAGE(ft.code == 0, ft.err);
  const auto missing = cli({"finetune", "--ckpt", dir.path("none.ckpt"), "--data", dir.path("h.thrm"), "--out",
                            dir.path("g.ckpt")});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("CheckpointNotFound") != std::string::npos);
}
