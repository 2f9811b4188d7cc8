#include "scn/dump.hpp"

#include <algorithm>
#include <cmath>

namespace scn {

Image template_grid(const Tensor& maps, std::size_t index) {
  if (maps.rank() != 4) throw DimensionError("template stack must be [m, C, H, W], got " + shape_str(maps.shape()));
  const std::size_t c = maps.dim(1), h = maps.dim(2), w = maps.dim(3);
  const std::size_t cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(c))));
  const std::size_t rows = (c + cols - 1) / cols;
  const double* src = maps.data() + index * c * h * w;
  const auto [lo, hi] = std::minmax_element(src, src + c * h * w);
  const double range = *hi - *lo;
  Image img(rows * (h + 1) - 1, cols * (w + 1) - 1);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const std::size_t oy = (ch / cols) * (h + 1), ox = (ch % cols) * (w + 1);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double v = range > 0.0 ? (src[(ch * h + y) * w + x] - *lo) / range : 0.0;
        img.at(oy + y, ox + x) = static_cast<std::uint8_t>(std::lround(255.0 * v));
      }
  }
  return img;
}

std::size_t dump_template_stack(const std::filesystem::path& dir, std::size_t stage,
                                const Tensor& maps) {
  const auto sdir = dir / ("stage" + std::to_string(stage));
  std::filesystem::create_directories(sdir);
  const std::size_t m = maps.dim(0);
  for (std::size_t k = 0; k < m; ++k)
    write_pgm(sdir / ("t" + std::to_string(k + 1) + ".pgm"), template_grid(maps, k));
  return m;
}

}  // namespace scn
