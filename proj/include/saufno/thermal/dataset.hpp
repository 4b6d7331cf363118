#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "saufno/thermal/solver.hpp"

namespace saufno::thermal {

struct DatasetHeader {
  std::string chip_id;
  int H = 0, W = 0, device_layers = 0;
  std::int64_t count = 0;
  std::array<int, 2> split_ratio{4, 1};
  std::uint64_t seed = 0;
  double t_a = 298.15;
  double eta = 1e4;
  double p_min = kDefaultPMin, p_max = kDefaultPMax;
};

// In-memory THRM container. `power` holds Q_g (W/m^3) and `temperature`
// absolute kelvin, each count x device_layers x H x W.
struct Dataset {
  DatasetHeader header;
  std::vector<float> power;
  std::vector<float> temperature;

  std::size_t sample_size() const {
    return static_cast<std::size_t>(header.device_layers) * header.H * header.W;
  }
  // Leading records form the training split.
  std::int64_t train_count() const;
  // Copy of records [begin, end).
  Dataset slice(std::int64_t begin, std::int64_t end) const;
};

struct GenerateOptions {
  std::uint64_t seed = 0;
  double p_min = kDefaultPMin, p_max = kDefaultPMax;
  int threads = 1;
  bool skip_failed = false;  // redraw a sample whose solve fails instead of aborting
  SolveOptions solve;
  std::ostream* log = nullptr;
};

// Seed of sample i (and retry `attempt`) derived from the dataset seed.
std::uint64_t sample_seed(std::uint64_t seed, std::int64_t index, int attempt = 0);

Dataset generate_dataset(const ChipStack& stack, std::int64_t n, const GenerateOptions& opts);

void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace saufno::thermal
