#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace saufno::eval {

// Fixed 256-entry blue -> red map (RGB).
std::array<std::uint8_t, 3> colormap(int index);

// Writes an (H*scale) x (W*scale) binary PPM of a row-major H x W field,
// colour-scaled over the field's own [min, max]. Row 0 of the field is the
// bottom of the die, so it lands on the last image row. The range goes to
// `path + ".txt"`.
void render_heatmap(std::span<const float> field, int H, int W, const std::string& path, int scale = 8);

}  // namespace saufno::eval
