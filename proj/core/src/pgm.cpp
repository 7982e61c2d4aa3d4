#include "patchpref/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "patchpref/error.hpp"
#include "patchpref/tensor_io.hpp"

namespace patchpref {

std::vector<std::uint8_t> encode_pgm(const Tensor& map) {
  if (map.rank() != 2) throw DimensionError("PGM export needs an H×W map, got " + shape_string(map.shape()));
  const std::string header =
      "P5\n" + std::to_string(map.dim(1)) + " " + std::to_string(map.dim(0)) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : map.values()) {
    out.push_back(static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0))));
  }
  return out;
}

void write_pgm(const Tensor& map, const std::filesystem::path& path) {
  write_file_bytes(path, encode_pgm(map));
}

Tensor cosine_to_unit(const Tensor& map) {
  Tensor out = map;
  for (auto& v : out.values()) v = (v + 1.0) / 2.0;
  return out;
}

}  // namespace patchpref
