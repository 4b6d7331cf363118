#include "saufno/thermal/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "saufno/error.hpp"
#include "saufno/io.hpp"

namespace saufno::thermal {

namespace {

constexpr char kMagic[8] = {'T', 'H', 'R', 'M', '0', '0', '0', '1'};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

nlohmann::json header_json(const DatasetHeader& h) {
  return {{"chip_id", h.chip_id},
          {"H", h.H},
          {"W", h.W},
          {"device_layers", h.device_layers},
          {"count", h.count},
          {"dtype", "f32le"},
          {"split_ratio", h.split_ratio},
          {"seed", h.seed},
          {"t_a", h.t_a},
          {"eta", h.eta},
          {"p_range", {h.p_min, h.p_max}}};
}

}  // namespace

std::int64_t Dataset::train_count() const {
  const int total = header.split_ratio[0] + header.split_ratio[1];
  if (total <= 0) return header.count;
  return header.count * header.split_ratio[0] / total;
}

Dataset Dataset::slice(std::int64_t begin, std::int64_t end) const {
  if (begin < 0 || end > header.count || begin > end) throw Error("InvalidSlice", "dataset slice out of range");
  Dataset out;
  out.header = header;
  out.header.count = end - begin;
  const auto s = sample_size();
  out.power.assign(power.begin() + begin * s, power.begin() + end * s);
  out.temperature.assign(temperature.begin() + begin * s, temperature.begin() + end * s);
  return out;
}

std::uint64_t sample_seed(std::uint64_t seed, std::int64_t index, int attempt) {
  return splitmix64(splitmix64(seed) ^ splitmix64(static_cast<std::uint64_t>(index) * 1024 + attempt));
}

Dataset generate_dataset(const ChipStack& stack, std::int64_t n, const GenerateOptions& opts) {
  if (n < 1) throw Error("InvalidCount", "dataset needs at least one sample");
  const auto grid = build_grid(stack);
  Dataset ds;
  auto& h = ds.header;
  h.chip_id = stack.chip_id;
  h.H = stack.H;
  h.W = stack.W;
  h.device_layers = stack.device_layer_count();
  h.count = n;
  h.seed = opts.seed;
  h.t_a = stack.boundary.t_a;
  h.eta = stack.boundary.eta;
  h.p_min = opts.p_min;
  h.p_max = opts.p_max;
  const auto s = ds.sample_size();
  ds.power.assign(n * s, 0.0f);
  ds.temperature.assign(n * s, 0.0f);

  std::vector<std::string> failures(n);
  std::vector<std::string> logs(n);
  auto work = [&](int t, int stride) {
    for (std::int64_t i = t; i < n; i += stride) {
      for (int attempt = 0;; ++attempt) {
        const auto pm = sample_power_map(stack, sample_seed(opts.seed, i, attempt), {opts.p_min, opts.p_max});
        try {
          const auto res = solve_steady(stack, grid, pm, opts.solve);
          for (std::size_t e = 0; e < s; ++e) {
            ds.power[i * s + e] = static_cast<float>(pm.q[e]);
            ds.temperature[i * s + e] = static_cast<float>(res.field.t[e]);
          }
          break;
        } catch (const Error& e) {
          if (!opts.skip_failed || attempt >= 16) {
            failures[i] = e.what();
            break;
          }
          logs[i] += "sample " + std::to_string(i) + " attempt " + std::to_string(attempt) + " skipped: " + e.what() + "\n";
        }
      }
    }
  };
  const int threads = std::max(1, opts.threads);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  for (std::int64_t i = 0; i < n; ++i) {
    if (opts.log && !logs[i].empty()) *opts.log << logs[i];
    if (!failures[i].empty()) throw Error("SolverDiverged", "sample " + std::to_string(i) + ": " + failures[i]);
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& path) {
  const auto expected = static_cast<std::size_t>(ds.header.count) * ds.sample_size();
  if (ds.power.size() != expected || ds.temperature.size() != expected)
    throw Error("InvalidDataset", "record buffers do not match the header");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("UnwritablePath", "cannot write " + path);
  out.write(kMagic, sizeof kMagic);
  io::write_u64_prefixed(out, header_json(ds.header).dump());
  const auto s = ds.sample_size();
  for (std::int64_t i = 0; i < ds.header.count; ++i) {
    io::write_f32le(out, ds.power.data() + i * s, s);
    io::write_f32le(out, ds.temperature.data() + i * s, s);
  }
  if (!out) throw Error("UnwritablePath", "write failed for " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("FileNotFound", "cannot open " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic)) throw Error("TruncatedFile", path + " is too short");
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error("BadMagic", path + " is not a THRM dataset");
  if (std::memcmp(magic, kMagic, 8) != 0) throw Error("VersionMismatch", path + " has an unsupported THRM version");
  Dataset ds;
  try {
    const auto j = nlohmann::json::parse(io::read_u64_prefixed(in, path));
    auto& h = ds.header;
    h.chip_id = j.at("chip_id").get<std::string>();
    h.H = j.at("H").get<int>();
    h.W = j.at("W").get<int>();
    h.device_layers = j.at("device_layers").get<int>();
    h.count = j.at("count").get<std::int64_t>();
    if (j.value("dtype", "f32le") != "f32le") throw Error("InvalidDataset", "unsupported dtype");
    h.split_ratio = j.value("split_ratio", h.split_ratio);
    h.seed = j.value("seed", std::uint64_t{0});
    h.t_a = j.value("t_a", h.t_a);
    h.eta = j.value("eta", h.eta);
    if (j.contains("p_range")) {
      h.p_min = j["p_range"].at(0).get<double>();
      h.p_max = j["p_range"].at(1).get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("InvalidDataset", std::string("bad header: ") + e.what());
  }
  if (ds.header.count < 0 || ds.header.H < 1 || ds.header.W < 1 || ds.header.device_layers < 1)
    throw Error("InvalidDataset", "bad header dimensions");
  const auto s = ds.sample_size();
  ds.power.resize(ds.header.count * s);
  ds.temperature.resize(ds.header.count * s);
  for (std::int64_t i = 0; i < ds.header.count; ++i) {
    io::read_f32le(in, ds.power.data() + i * s, s, path);
    io::read_f32le(in, ds.temperature.data() + i * s, s, path);
  }
  return ds;
}

}  // namespace saufno::thermal
