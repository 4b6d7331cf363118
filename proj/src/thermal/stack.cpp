#include "saufno/thermal/stack.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "saufno/error.hpp"

namespace saufno::thermal {

namespace {

constexpr double mm = 1e-3;

const MaterialProps kSilicon{100.0, 1.75e6};
const MaterialProps kTim{4.0, 4.0e6};
const MaterialProps kCopper{400.0, 3.55e6};

constexpr double kTsvDiameter = 0.01 * mm;
constexpr double kTsvPitch = 0.01 * mm;

Block block_mm(std::string name, double x0, double y0, double x1, double y1, bool powered = true) {
  return {std::move(name), x0 * mm, y0 * mm, x1 * mm, y1 * mm, powered};
}

LayerSpec device_layer(std::string name, double w, double h, double t, std::vector<Block> blocks) {
  LayerSpec l;
  l.name = std::move(name);
  l.width = w * mm;
  l.height = h * mm;
  l.thickness = t * mm;
  l.material = kSilicon;
  l.device = true;
  l.tsv_fraction = tsv_area_fraction(kTsvDiameter, kTsvPitch);
  l.cells = 2;
  l.blocks = std::move(blocks);
  return l;
}

LayerSpec passive_layer(std::string name, double w, double h, double t, MaterialProps m, int cells) {
  LayerSpec l;
  l.name = std::move(name);
  l.width = w * mm;
  l.height = h * mm;
  l.thickness = t * mm;
  l.material = m;
  l.cells = cells;
  return l;
}

void add_package(ChipStack& s, double w, double h, double tim_thickness) {
  s.layers.push_back(passive_layer("tim", w, h, tim_thickness, kTim, 1));
  s.layers.push_back(passive_layer("spreader", 30, 30, 1.0, kCopper, 4));
  s.layers.push_back(passive_layer("sink", 60, 60, 6.9, kCopper, 8));
}

// Single core over two layers, loosely after the EV6 floorplan.
ChipStack chip1() {
  ChipStack s;
  s.chip_id = "chip1";
  s.die_width = s.die_height = 16 * mm;
  s.layers.push_back(device_layer("l2_layer", 16, 16, 0.15,
                                  {block_mm("l2_a", 0, 0, 16.0 / 3, 16), block_mm("l2_b", 16.0 / 3, 0, 32.0 / 3, 16),
                                   block_mm("l2_c", 32.0 / 3, 0, 16, 16)}));
  s.layers.push_back(device_layer("core_layer", 16, 16, 0.15,
                                  {block_mm("l2_0", 0, 0, 16, 6),
                                   block_mm("icache", 0, 6, 4, 11),
                                   block_mm("dcache", 12, 6, 16, 11),
                                   block_mm("bpred", 4, 6, 8, 11),
                                   block_mm("tlb", 8, 6, 12, 11),
                                   block_mm("int_queue", 4, 11, 8, 13),
                                   block_mm("ldst_queue", 8, 11, 12, 13),
                                   block_mm("fpu", 0, 11, 4, 16),
                                   block_mm("fp_reg", 4, 13, 8, 16),
                                   block_mm("int_exec", 8, 13, 12, 16),
                                   block_mm("int_reg", 12, 11, 16, 16)}));
  add_package(s, 16, 16, 0.02);
  return s;
}

// Quad core on top, two identical L2 layers below.
ChipStack chip2() {
  ChipStack s;
  s.chip_id = "chip2";
  const double w = 12.4, h = 12.76;
  s.die_width = w * mm;
  s.die_height = h * mm;
  for (int i = 0; i < 2; ++i) {
    const std::string tag = std::to_string(i);
    s.layers.push_back(device_layer("l2_layer_" + tag, w, h, 0.15,
                                    {block_mm("l2_" + tag + "a", 0, 0, w / 2, h),
                                     block_mm("l2_" + tag + "b", w / 2, 0, w, h)}));
  }
  std::vector<Block> cores;
  const double qw = w / 2, qh = h / 2;
  for (int c = 0; c < 4; ++c) {
    const double x0 = (c % 2) * qw, y0 = (c / 2) * qh;
    const std::string tag = "core" + std::to_string(c);
    // L1 strip faces the die centre line
    const bool upper = c / 2 == 1;
    const double l1_lo = upper ? y0 : y0 + 0.6 * qh, l1_hi = upper ? y0 + 0.4 * qh : y0 + qh;
    const double ex_lo = upper ? y0 + 0.4 * qh : y0, ex_hi = upper ? y0 + qh : y0 + 0.6 * qh;
    cores.push_back(block_mm(tag + "_int", x0, ex_lo, x0 + qw / 2, ex_hi));
    cores.push_back(block_mm(tag + "_fp", x0 + qw / 2, ex_lo, x0 + qw, ex_hi));
    cores.push_back(block_mm(tag + "_l1", x0, l1_lo, x0 + qw, l1_hi));
  }
  s.layers.push_back(device_layer("core_layer", w, h, 0.15, std::move(cores)));
  add_package(s, w, h, 0.02);
  return s;
}

// Eight cores with L1 on top, four L2 quadrants below.
ChipStack chip3() {
  ChipStack s;
  s.chip_id = "chip3";
  s.die_width = s.die_height = 10 * mm;
  s.layers.push_back(device_layer("l2_layer", 10, 10, 0.1,
                                  {block_mm("l2_0", 0, 0, 5, 5), block_mm("l2_1", 5, 0, 10, 5),
                                   block_mm("l2_2", 0, 5, 5, 10), block_mm("l2_3", 5, 5, 10, 10)}));
  std::vector<Block> top;
  for (int c = 0; c < 8; ++c) {
    const double x0 = (c % 4) * 2.5;
    const bool upper = c >= 4;
    const std::string tag = "core" + std::to_string(c);
    if (upper) {
      top.push_back(block_mm(tag + "_l1", x0, 5, x0 + 2.5, 6.5));
      top.push_back(block_mm(tag, x0, 6.5, x0 + 2.5, 10));
    } else {
      top.push_back(block_mm(tag, x0, 0, x0 + 2.5, 3.5));
      top.push_back(block_mm(tag + "_l1", x0, 3.5, x0 + 2.5, 5));
    }
  }
  s.layers.push_back(device_layer("core_layer", 10, 10, 0.1, std::move(top)));
  add_package(s, 10, 10, 0.052);
  return s;
}

}  // namespace

double tsv_area_fraction(double diameter, double pitch) {
  return std::min(1.0, std::numbers::pi * diameter * diameter / (4.0 * pitch * pitch));
}

std::vector<int> ChipStack::device_layers() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].device) out.push_back(static_cast<int>(i));
  return out;
}

double ChipStack::k_vertical(const LayerSpec& layer) const {
  if (!layer.device) return layer.material.k;
  return (1.0 - layer.tsv_fraction) * layer.material.k + layer.tsv_fraction * tsv.k;
}

void ChipStack::validate() const {
  if (device_layers().empty()) throw Error("InvalidStack", "stack has no device layer");
  if (H < 8 || W < 8) throw Error("InvalidResolution", "grid must be at least 8x8");
  if (ring_cells < 1) throw Error("InvalidStack", "ring_cells must be >= 1");
  if (!(die_width > 0 && die_height > 0)) throw Error("DegenerateCell", "die extent must be positive");
  if (!(boundary.eta > 0 && boundary.t_a > 0)) throw Error("InvalidStack", "eta and t_a must be positive");
  for (const auto& l : layers) {
    if (!(l.thickness > 0)) throw Error("DegenerateCell", "layer " + l.name + " has nonpositive thickness");
    if (l.cells < 1) throw Error("InvalidStack", "layer " + l.name + " needs >= 1 vertical cell");
    if (!(l.material.k > 0 && l.material.c_vol > 0))
      throw Error("InvalidStack", "layer " + l.name + " has nonpositive material properties");
    if (l.width + 1e-12 < die_width || l.height + 1e-12 < die_height)
      throw Error("InvalidStack", "layer " + l.name + " is smaller than the die");
    if (l.device && (std::abs(l.width - die_width) > 1e-12 || std::abs(l.height - die_height) > 1e-12))
      throw Error("InvalidStack", "device layer " + l.name + " must match the die extent");
    for (const auto& b : l.blocks) {
      const double eps = 1e-12;
      if (b.x0 < -eps || b.y0 < -eps || b.x1 > die_width + eps || b.y1 > die_height + eps || b.x1 <= b.x0 ||
          b.y1 <= b.y0)
        throw Error("InvalidStack", "block " + b.name + " lies outside layer " + l.name);
    }
  }
}

ChipStack build_stack(const std::string& chip_id, int H, int W) {
  ChipStack s;
  if (chip_id == "chip1")
    s = chip1();
  else if (chip_id == "chip2")
    s = chip2();
  else if (chip_id == "chip3")
    s = chip3();
  else
    throw Error("UnknownChip", "unknown chip id '" + chip_id + "'");
  s.H = H;
  s.W = W;
  s.validate();
  return s;
}

ChipStack build_stack(const std::string& chip_id, int resolution) { return build_stack(chip_id, resolution, resolution); }

ChipStack stack_from_json(const nlohmann::json& j) {
  try {
    ChipStack s;
    s.chip_id = j.value("chip_id", "custom");
    s.die_width = j.at("die").at("width_mm").get<double>() * mm;
    s.die_height = j.at("die").at("height_mm").get<double>() * mm;
    if (j.contains("resolution")) {
      s.H = j["resolution"].at(0).get<int>();
      s.W = j["resolution"].at(1).get<int>();
    }
    s.ring_cells = j.value("ring_cells", s.ring_cells);
    double tsv_d = kTsvDiameter, tsv_p = kTsvPitch;
    if (j.contains("tsv")) {
      const auto& t = j["tsv"];
      tsv_d = t.value("diameter_mm", tsv_d / mm) * mm;
      tsv_p = t.value("pitch_mm", tsv_p / mm) * mm;
      s.tsv.k = t.value("k", s.tsv.k);
      s.tsv.c_vol = t.value("c_vol", s.tsv.c_vol);
    }
    if (j.contains("boundary")) {
      const auto& b = j["boundary"];
      s.boundary.t_a = b.value("t_a", s.boundary.t_a);
      s.boundary.eta = b.value("eta", s.boundary.eta);
      const auto sb = b.value("side_bottom", std::string("adiabatic"));
      if (sb == "robin")
        s.boundary.side_bottom = SideCondition::Robin;
      else if (sb != "adiabatic")
        throw Error("InvalidStack", "side_bottom must be 'adiabatic' or 'robin'");
    }
    for (const auto& jl : j.at("layers")) {
      LayerSpec l;
      l.name = jl.at("name").get<std::string>();
      l.thickness = jl.at("thickness_mm").get<double>() * mm;
      l.width = jl.value("width_mm", s.die_width / mm) * mm;
      l.height = jl.value("height_mm", s.die_height / mm) * mm;
      l.material = {jl.at("k").get<double>(), jl.at("c_vol").get<double>()};
      l.device = jl.value("device", false);
      l.cells = jl.value("cells", l.device ? 2 : 1);
      if (l.device) l.tsv_fraction = jl.value("tsv_fraction", tsv_area_fraction(tsv_d, tsv_p));
      for (const auto& jb : jl.value("blocks", nlohmann::json::array())) {
        const double x = jb.at("x_mm").get<double>(), y = jb.at("y_mm").get<double>();
        l.blocks.push_back(block_mm(jb.at("name").get<std::string>(), x, y, x + jb.at("w_mm").get<double>(),
                                    y + jb.at("h_mm").get<double>(), jb.value("powered", true)));
      }
      s.layers.push_back(std::move(l));
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error("InvalidStack", std::string("stack json: ") + e.what());
  }
}

nlohmann::json stack_to_json(const ChipStack& s) {
  nlohmann::json j;
  j["chip_id"] = s.chip_id;
  j["die"] = {{"width_mm", s.die_width / mm}, {"height_mm", s.die_height / mm}};
  j["resolution"] = {s.H, s.W};
  j["ring_cells"] = s.ring_cells;
  j["tsv"] = {{"k", s.tsv.k}, {"c_vol", s.tsv.c_vol}};
  j["boundary"] = {{"t_a", s.boundary.t_a},
                   {"eta", s.boundary.eta},
                   {"side_bottom", s.boundary.side_bottom == SideCondition::Robin ? "robin" : "adiabatic"}};
  auto layers = nlohmann::json::array();
  for (const auto& l : s.layers) {
    nlohmann::json jl = {{"name", l.name},
                         {"thickness_mm", l.thickness / mm},
                         {"width_mm", l.width / mm},
                         {"height_mm", l.height / mm},
                         {"k", l.material.k},
                         {"c_vol", l.material.c_vol},
                         {"device", l.device},
                         {"cells", l.cells}};
    if (l.device) jl["tsv_fraction"] = l.tsv_fraction;
    auto blocks = nlohmann::json::array();
    for (const auto& b : l.blocks)
      blocks.push_back({{"name", b.name},
                        {"x_mm", b.x0 / mm},
                        {"y_mm", b.y0 / mm},
                        {"w_mm", (b.x1 - b.x0) / mm},
                        {"h_mm", (b.y1 - b.y0) / mm},
                        {"powered", b.powered}});
    if (!blocks.empty()) jl["blocks"] = std::move(blocks);
    layers.push_back(std::move(jl));
  }
  j["layers"] = std::move(layers);
  return j;
}

ChipStack load_stack_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("FileNotFound", "cannot open " + path);
  try {
    return stack_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("InvalidStack", std::string("stack json: ") + e.what());
  }
}

}  // namespace saufno::thermal
