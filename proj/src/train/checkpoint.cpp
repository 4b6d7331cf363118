#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "saufno/error.hpp"
#include "saufno/io.hpp"
#include "saufno/train/training.hpp"

// SAUF container: 8-byte magic, u64-prefixed JSON manifest, then the raw
// little-endian f32 payload addressed by element offsets from the manifest.
namespace saufno::train {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'U', 'F', '0', '0', '0', '1'};

nlohmann::json losses_to_json(const std::vector<double>& v) {
  auto j = nlohmann::json::array();
  for (double x : v) j.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
  return j;
}

std::vector<double> losses_from_json(const nlohmann::json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>());
  return v;
}

Shape shape_from_json(const nlohmann::json& j) {
  Shape s;
  for (const auto& d : j) s.push_back(d.get<std::int64_t>());
  return s;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json manifest;
  manifest["config"] = nn::config_to_json(ckpt.config);
  const auto& m = ckpt.meta;
  manifest["meta"] = {{"dataset_id", m.dataset_id},    {"stage", m.stage},
                      {"epoch", m.epoch},              {"train_loss", losses_to_json(m.train_loss)},
                      {"test_loss", losses_to_json(m.test_loss)}, {"stats", stats_to_json(m.stats)},
                      {"t_a", m.t_a},                  {"train", train_config_to_json(m.train)}};
  std::uint64_t offset = 0;
  auto tensors = nlohmann::json::array();
  for (const auto& p : ckpt.parameters) {
    tensors.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(p.tensor.numel());
  }
  manifest["tensors"] = tensors;
  auto moments = nlohmann::json::array();
  for (std::size_t i = 0; i < ckpt.optimizer.m.size(); ++i) {
    const auto n = ckpt.optimizer.m[i].size();
    moments.push_back({{"count", n}, {"m_offset", offset}, {"v_offset", offset + n}});
    offset += 2 * n;
  }
  manifest["optimizer"] = {{"step", ckpt.optimizer.step}, {"moments", moments}};
  manifest["payload_f32"] = offset;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("UnwritablePath", "cannot write " + path);
  out.write(kMagic, sizeof kMagic);
  io::write_u64_prefixed(out, manifest.dump());
  for (const auto& p : ckpt.parameters) io::write_f32le(out, p.tensor.ptr(), p.tensor.data().size());
  for (std::size_t i = 0; i < ckpt.optimizer.m.size(); ++i) {
    io::write_f32le(out, ckpt.optimizer.m[i].data(), ckpt.optimizer.m[i].size());
    io::write_f32le(out, ckpt.optimizer.v[i].data(), ckpt.optimizer.v[i].size());
  }
  if (!out.flush()) throw Error("UnwritablePath", "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error("CheckpointNotFound", "no checkpoint at " + path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("CheckpointNotFound", "cannot open " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic)) throw Error("TruncatedFile", path + " is too short");
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error("BadMagic", path + " is not a SAUF checkpoint");
  if (std::memcmp(magic, kMagic, 8) != 0) throw Error("VersionMismatch", path + " has an unsupported SAUF version");
  const std::string text = io::read_u64_prefixed(in, path);

  Checkpoint c;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> moment_layout;
  std::vector<std::uint64_t> tensor_offsets;
  std::uint64_t payload = 0;
  try {
    const auto manifest = nlohmann::json::parse(text);
    c.config = nn::config_from_json(manifest.at("config"));
    const auto& m = manifest.at("meta");
    c.meta.dataset_id = m.at("dataset_id").get<std::string>();
    c.meta.stage = m.at("stage").get<std::string>();
    c.meta.epoch = m.at("epoch").get<int>();
    c.meta.train_loss = losses_from_json(m.at("train_loss"));
    c.meta.test_loss = losses_from_json(m.at("test_loss"));
    c.meta.stats = stats_from_json(m.at("stats"));
    c.meta.t_a = m.at("t_a").get<double>();
    c.meta.train = train_config_from_json(m.at("train"));
    for (const auto& t : manifest.at("tensors")) {
      c.parameters.push_back({t.at("name").get<std::string>(), Tensor::zeros(shape_from_json(t.at("shape")))});
      tensor_offsets.push_back(t.at("offset").get<std::uint64_t>());
    }
    const auto& opt = manifest.at("optimizer");
    c.optimizer.step = opt.at("step").get<std::int64_t>();
    for (const auto& mo : opt.at("moments")) {
      const auto n = mo.at("count").get<std::uint64_t>();
      c.optimizer.m.emplace_back(n);
      c.optimizer.v.emplace_back(n);
      moment_layout.emplace_back(mo.at("m_offset").get<std::uint64_t>(), mo.at("v_offset").get<std::uint64_t>());
    }
    payload = manifest.at("payload_f32").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("InvalidCheckpoint", path + ": malformed manifest: " + e.what());
  }

  // Payload sections are written back to back in manifest order.
  std::uint64_t cursor = 0;
  auto expect = [&](std::uint64_t offset, std::size_t n) {
    if (offset != cursor) throw Error("InvalidCheckpoint", path + ": payload offsets are not contiguous");
    cursor += n;
  };
  for (std::size_t i = 0; i < c.parameters.size(); ++i) {
    auto& t = c.parameters[i].tensor;
    expect(tensor_offsets[i], t.data().size());
    io::read_f32le(in, t.ptr(), t.data().size(), path);
  }
  for (std::size_t i = 0; i < c.optimizer.m.size(); ++i) {
    expect(moment_layout[i].first, c.optimizer.m[i].size());
    io::read_f32le(in, c.optimizer.m[i].data(), c.optimizer.m[i].size(), path);
    expect(moment_layout[i].second, c.optimizer.v[i].size());
    io::read_f32le(in, c.optimizer.v[i].data(), c.optimizer.v[i].size(), path);
  }
  if (cursor != payload) throw Error("InvalidCheckpoint", path + ": payload size disagrees with the manifest");

  // Validates names and shapes against the configured architecture.
  try {
    c.model();
  } catch (const Error& e) {
    throw Error("IncompatibleParameters", path + ": " + e.what());
  }
  return c;
}

}  // namespace saufno::train
