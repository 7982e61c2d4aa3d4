#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "patchpref/tensor.hpp"

namespace patchpref {

/// Binary P5 bytes for an H×W map; each value is clamped to [0,1] and stored as
/// round(255·v).
std::vector<std::uint8_t> encode_pgm(const Tensor& map);
void write_pgm(const Tensor& map, const std::filesystem::path& path);

/// Maps cosine values in [-1,1] to [0,1] for display.
Tensor cosine_to_unit(const Tensor& map);

}  // namespace patchpref
