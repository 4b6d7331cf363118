#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "saufno/thermal/stack.hpp"
#include "saufno/train/training.hpp"

namespace saufno::eval {

struct BenchmarkReport {
  std::string chip_id;
  int H = 0, W = 0;
  int n = 0;
  double oracle_mean_s = 0;     // one CG solve, assembly included
  double inference_mean_s = 0;  // per sample, one batched forward over all n maps
  double latency_mean_s = 0;    // per sample, batch of one
  double speedup = 0;           // oracle_mean_s / inference_mean_s
  bool model_first = false;
};

struct BenchmarkOptions {
  std::uint64_t seed = 0;
  bool model_first = false;  // time the model before the oracle
  thermal::SolveOptions solve;
};

// Times n oracle solves and the model on the same n sampled power maps,
// after one untimed warm-up of each. Throws TooFewSamples for n < 3.
BenchmarkReport benchmark(const train::Model& model, const train::NormStats& stats, const thermal::ChipStack& stack,
                          int n, const BenchmarkOptions& opts = {});

nlohmann::json benchmark_to_json(const BenchmarkReport& r);

}  // namespace saufno::eval
