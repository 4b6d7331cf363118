#include "saufno/eval/benchmark.hpp"

#include <chrono>

#include "saufno/error.hpp"
#include "saufno/thermal/dataset.hpp"

namespace saufno::eval {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

thermal::Dataset as_dataset(const thermal::ChipStack& stack, const std::vector<thermal::PowerMap>& maps) {
  thermal::Dataset ds;
  ds.header.chip_id = stack.chip_id;
  ds.header.H = stack.H;
  ds.header.W = stack.W;
  ds.header.device_layers = stack.device_layer_count();
  ds.header.count = static_cast<std::int64_t>(maps.size());
  ds.header.t_a = stack.boundary.t_a;
  ds.header.eta = stack.boundary.eta;
  for (const auto& m : maps) ds.power.insert(ds.power.end(), m.q.begin(), m.q.end());
  ds.temperature.assign(ds.power.size(), 0.0f);
  return ds;
}

}  // namespace

BenchmarkReport benchmark(const train::Model& model, const train::NormStats& stats, const thermal::ChipStack& stack,
                          int n, const BenchmarkOptions& opts) {
  if (n < 3) throw Error("TooFewSamples", "benchmark needs n >= 3, got " + std::to_string(n));
  if (model.config().in_channels != stack.device_layer_count())
    throw Error("IncompatibleParameters", "model expects " + std::to_string(model.config().in_channels) +
                                              " device layers, stack has " +
                                              std::to_string(stack.device_layer_count()));
  const std::pair<double, double> range{thermal::kDefaultPMin, thermal::kDefaultPMax};
  std::vector<thermal::PowerMap> maps;
  for (int i = 0; i <= n; ++i) maps.push_back(thermal::sample_power_map(stack, opts.seed + i, range));
  const thermal::PowerMap warm = maps.back();
  maps.pop_back();
  const thermal::Dataset batch = as_dataset(stack, maps);

  BenchmarkReport r;
  r.chip_id = stack.chip_id;
  r.H = stack.H;
  r.W = stack.W;
  r.n = n;
  r.model_first = opts.model_first;

  auto time_oracle = [&] {
    thermal::solve_steady(stack, warm, opts.solve);
    double total = 0;
    for (const auto& m : maps) {
      const auto t0 = Clock::now();
      thermal::solve_steady(stack, m, opts.solve);
      total += seconds_since(t0);
    }
    r.oracle_mean_s = total / n;
  };
  auto time_model = [&] {
    train::predict(model, stats, as_dataset(stack, {warm}), 1);
    auto t0 = Clock::now();
    train::predict(model, stats, batch, n);
    r.inference_mean_s = seconds_since(t0) / n;
    double total = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      const auto one = batch.slice(i, i + 1);
      t0 = Clock::now();
      train::predict(model, stats, one, 1);
      total += seconds_since(t0);
    }
    r.latency_mean_s = total / n;
  };
  if (opts.model_first) {
    time_model();
    time_oracle();
  } else {
    time_oracle();
    time_model();
  }
  r.speedup = r.oracle_mean_s / r.inference_mean_s;
  return r;
}

nlohmann::json benchmark_to_json(const BenchmarkReport& r) {
  return {{"chip_id", r.chip_id},
          {"resolution", {r.H, r.W}},
          {"n_samples", r.n},
          {"oracle_mean_s", r.oracle_mean_s},
          {"inference_mean_s", r.inference_mean_s},
          {"latency_mean_s", r.latency_mean_s},
          {"speedup", r.speedup},
          {"model_first", r.model_first}};
}

}  // namespace saufno::eval
