#pragma once

#include <filesystem>

#include "scn/data.hpp"

namespace scn {

// Tiles the C channels of one [C, H, W] map into a near-square grid with a
// one-pixel gap, min-max scaled to 0..255 over the map. Constant maps
// render black.
Image template_grid(const Tensor& maps, std::size_t index);

// Writes every map of a [m, C, H, W] template stack as
// dir/stage{stage}/t{k}.pgm, k = 1..m. Returns the number of files.
std::size_t dump_template_stack(const std::filesystem::path& dir, std::size_t stage,
                                const Tensor& maps);

}  // namespace scn
