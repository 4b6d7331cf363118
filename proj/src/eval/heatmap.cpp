#include "saufno/eval/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <vector>

#include "saufno/error.hpp"

namespace saufno::eval {

std::array<std::uint8_t, 3> colormap(int index) {
  const int i = std::clamp(index, 0, 255);
  // blue (0, 0, 255) -> cyan-ish -> green -> yellow-ish -> red (255, 0, 0)
  const double t = i / 255.0;
  const double r = std::clamp(1.5 - std::abs(4.0 * t - 3.0), 0.0, 1.0);
  const double g = std::clamp(1.5 - std::abs(4.0 * t - 2.0), 0.0, 1.0);
  const double b = std::clamp(1.5 - std::abs(4.0 * t - 1.0), 0.0, 1.0);
  auto byte = [](double v) { return static_cast<std::uint8_t>(std::lround(255.0 * v)); };
  // saturate the ends so the map really starts blue and ends red
  if (i == 0) return {0, 0, 255};
  if (i == 255) return {255, 0, 0};
  return {byte(r), byte(g), byte(b)};
}

void render_heatmap(std::span<const float> field, int H, int W, const std::string& path, int scale) {
  if (H < 1 || W < 1 || field.size() != static_cast<std::size_t>(H) * W)
    throw Error("InvalidResolution", "heatmap field does not match " + std::to_string(H) + "x" + std::to_string(W));
  if (scale < 1) throw Error("InvalidResolution", "heatmap scale must be >= 1");
  const auto [lo_it, hi_it] = std::minmax_element(field.begin(), field.end());
  const double lo = *lo_it, hi = *hi_it;
  const double span = hi - lo;

  const int width = W * scale, height = H * scale;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * height * 3);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const double v = field[static_cast<std::size_t>(r) * W + c];
      const int index = span > 0 ? static_cast<int>(std::floor((v - lo) / span * 255.0 + 0.5)) : 0;
      const auto rgb = colormap(index);
      const int row0 = (H - 1 - r) * scale;
      for (int dy = 0; dy < scale; ++dy)
        for (int dx = 0; dx < scale; ++dx) {
          auto* p = &pixels[(static_cast<std::size_t>(row0 + dy) * width + c * scale + dx) * 3];
          std::copy(rgb.begin(), rgb.end(), p);
        }
    }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("UnwritablePath", "cannot write " + path);
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out.flush()) throw Error("UnwritablePath", "write failed for " + path);

  std::ofstream side(path + ".txt");
  if (!side) throw Error("UnwritablePath", "cannot write " + path + ".txt");
  side << std::setprecision(9) << "min " << lo << "\nmax " << hi << '\n';
}

}  // namespace saufno::eval
