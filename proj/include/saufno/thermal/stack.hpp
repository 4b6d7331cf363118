#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace saufno::thermal {

struct MaterialProps {
  double k = 0.0;      // W/(m K)
  double c_vol = 0.0;  // J/(m^3 K); not used by the steady solver
};

// Axis-aligned rectangle in metres, relative to the lower-left die corner.
struct Block {
  std::string name;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool powered = true;
};

struct LayerSpec {
  std::string name;
  double thickness = 0;  // m
  double width = 0;      // lateral extent along x (m), centred on the die
  double height = 0;     // lateral extent along y (m)
  MaterialProps material;
  bool device = false;
  double tsv_fraction = 0;  // areal fraction of TSV fill, device layers only
  int cells = 1;            // vertical cells
  std::vector<Block> blocks;
};

enum class SideCondition { Adiabatic, Robin };

struct BoundarySpec {
  double t_a = 298.15;  // K
  double eta = 1.0e4;   // W/(m^2 K), top surface
  SideCondition side_bottom = SideCondition::Adiabatic;
};

struct ChipStack {
  std::string chip_id;
  double die_width = 0, die_height = 0;  // m
  int H = 16, W = 16;                    // die grid: H rows along y, W columns along x
  int ring_cells = 10;                   // lateral cells per annulus outside the die
  MaterialProps tsv{100.0, 1.75e6};
  BoundarySpec boundary;
  std::vector<LayerSpec> layers;  // bottom to top

  std::vector<int> device_layers() const;
  int device_layer_count() const { return static_cast<int>(device_layers().size()); }
  // Vertical conductivity with TSVs folded in as a parallel path.
  double k_vertical(const LayerSpec& layer) const;
  void validate() const;
};

inline constexpr double kDefaultPMin = 10.0;
inline constexpr double kDefaultPMax = 60.0;

// Preset stacks: "chip1" (single core, 2 device layers), "chip2" (quad core,
// 3 device layers), "chip3" (octa core, 2 device layers).
ChipStack build_stack(const std::string& chip_id, int resolution);
ChipStack build_stack(const std::string& chip_id, int H, int W);

// Areal fraction of a square TSV array.
double tsv_area_fraction(double diameter, double pitch);

// JSON geometry in millimetres; see README for the schema.
ChipStack stack_from_json(const nlohmann::json& j);
nlohmann::json stack_to_json(const ChipStack& stack);
ChipStack load_stack_file(const std::string& path);

}  // namespace saufno::thermal
