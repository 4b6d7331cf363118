#include "saufno/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "saufno/error.hpp"

namespace saufno::eval {

namespace {

struct Accumulator {
  double sq = 0, abs = 0, rel = 0, peak_rel = 0;
  double pmax = -INFINITY, tmax = -INFINITY;
  std::size_t n = 0;

  void add(double p, double t) {
    const double e = std::abs(p - t);
    sq += e * e;
    abs += e;
    rel += e / t;
    peak_rel = std::max(peak_rel, e / t);
    pmax = std::max(pmax, p);
    tmax = std::max(tmax, t);
    ++n;
  }
  SampleMetrics finish() const {
    SampleMetrics m;
    m.rmse = std::sqrt(sq / n);
    m.mape = rel / n * 100.0;
    m.pape = peak_rel * 100.0;
    m.max_err = std::abs(pmax - tmax);
    m.mean_err = abs / n;
    return m;
  }
};

bool differs(double a, double b) { return std::abs(a - b) > 0.01 * std::max(std::abs(a), std::abs(b)); }

nlohmann::json sample_json(const SampleMetrics& m) {
  return {{"rmse", m.rmse}, {"mape", m.mape}, {"pape", m.pape}, {"max_err", m.max_err}, {"mean_err", m.mean_err}};
}

SampleMetrics sample_from_json(const nlohmann::json& j) {
  SampleMetrics m;
  j.at("rmse").get_to(m.rmse);
  j.at("mape").get_to(m.mape);
  j.at("pape").get_to(m.pape);
  j.at("max_err").get_to(m.max_err);
  j.at("mean_err").get_to(m.mean_err);
  return m;
}

}  // namespace

MetricsReport compute_metrics(std::span<const float> pred, std::span<const float> truth, std::int64_t n_samples,
                              std::array<int, 2> resolution) {
  if (pred.size() != truth.size())
    throw Error("ShapeMismatch", "prediction has " + std::to_string(pred.size()) + " values, truth has " +
                                     std::to_string(truth.size()));
  if (n_samples < 1 || truth.empty() || truth.size() % static_cast<std::size_t>(n_samples) != 0)
    throw Error("ShapeMismatch", "value count is not a positive multiple of the sample count");
  const auto plane = static_cast<std::size_t>(resolution[0]) * static_cast<std::size_t>(resolution[1]);
  if (resolution[0] < 1 || resolution[1] < 1 || (truth.size() / n_samples) % plane != 0)
    throw Error("ShapeMismatch", "sample size is not a whole number of " + std::to_string(resolution[0]) + "x" +
                                     std::to_string(resolution[1]) + " planes");
  for (float t : truth)
    if (!(t > 0)) throw Error("NonPositiveTruth", "truth temperatures must be positive kelvin values");

  const std::size_t per = truth.size() / static_cast<std::size_t>(n_samples);
  MetricsReport r;
  r.n_samples = n_samples;
  r.resolution = resolution;
  Accumulator all;
  double junction = 0;
  for (std::int64_t s = 0; s < n_samples; ++s) {
    Accumulator acc;
    for (std::size_t i = s * per; i < (s + 1) * per; ++i) {
      acc.add(pred[i], truth[i]);
      all.add(pred[i], truth[i]);
    }
    const SampleMetrics m = acc.finish();
    r.per_sample.push_back(m);
    r.rmse += m.rmse;
    r.mape += m.mape;
    r.pape += m.pape;
    r.max_err += m.max_err;
    r.mean_err += m.mean_err;
    junction += m.max_err;
  }
  const double n = static_cast<double>(n_samples);
  r.rmse /= n;
  r.mape /= n;
  r.pape /= n;
  r.max_err /= n;
  r.mean_err /= n;
  r.pooled = all.finish();
  r.pooled.max_err = junction / n;
  r.pooled_diverges = differs(r.rmse, r.pooled.rmse) || differs(r.mape, r.pooled.mape) ||
                      differs(r.pape, r.pooled.pape) || differs(r.mean_err, r.pooled.mean_err);
  return r;
}

nlohmann::json report_to_json(const MetricsReport& r) {
  auto per = nlohmann::json::array();
  for (const auto& m : r.per_sample) per.push_back(sample_json(m));
  return {{"rmse", r.rmse},
          {"mape", r.mape},
          {"pape", r.pape},
          {"max_err", r.max_err},
          {"mean_err", r.mean_err},
          {"n_samples", r.n_samples},
          {"resolution", r.resolution},
          {"runtime_s", r.runtime_s},
          {"pooled", sample_json(r.pooled)},
          {"pooled_diverges", r.pooled_diverges},
          {"per_sample", per}};
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    j.at("rmse").get_to(r.rmse);
    j.at("mape").get_to(r.mape);
    j.at("pape").get_to(r.pape);
    j.at("max_err").get_to(r.max_err);
    j.at("mean_err").get_to(r.mean_err);
    j.at("n_samples").get_to(r.n_samples);
    j.at("resolution").get_to(r.resolution);
    j.at("runtime_s").get_to(r.runtime_s);
    r.pooled = sample_from_json(j.at("pooled"));
    j.at("pooled_diverges").get_to(r.pooled_diverges);
    for (const auto& s : j.at("per_sample")) r.per_sample.push_back(sample_from_json(s));
  } catch (const nlohmann::json::exception& e) {
    throw Error("InvalidReport", e.what());
  }
  return r;
}

void write_report(const MetricsReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("UnwritablePath", "cannot write " + path);
  out << report_to_json(r).dump(2) << '\n';
  if (!out.flush()) throw Error("UnwritablePath", "write failed for " + path);
}

}  // namespace saufno::eval
