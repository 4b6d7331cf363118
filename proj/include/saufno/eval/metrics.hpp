#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace saufno::eval {

struct SampleMetrics {
  double rmse = 0, mape = 0, pape = 0, max_err = 0, mean_err = 0;
  bool operator==(const SampleMetrics&) const = default;
};

// Headline numbers are per-sample metrics averaged over samples. `pooled`
// treats all cells of all samples as one population (its max_err is the
// mean junction error, identical to the headline by construction).
struct MetricsReport {
  double rmse = 0;      // K
  double mape = 0;      // %
  double pape = 0;      // %
  double max_err = 0;   // K, |max(pred) - max(truth)| per sample
  double mean_err = 0;  // K, mean absolute error
  std::int64_t n_samples = 0;
  std::array<int, 2> resolution{0, 0};
  double runtime_s = 0;  // inference time, 0 when not measured
  SampleMetrics pooled;
  bool pooled_diverges = false;  // some pooled metric differs by more than 1%
  std::vector<SampleMetrics> per_sample;

  bool operator==(const MetricsReport&) const = default;
};

// pred and truth: n_samples records of `sample_size` cells each, in kelvin.
MetricsReport compute_metrics(std::span<const float> pred, std::span<const float> truth, std::int64_t n_samples,
                              std::array<int, 2> resolution);

nlohmann::json report_to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);
void write_report(const MetricsReport& r, const std::string& path);

}  // namespace saufno::eval
