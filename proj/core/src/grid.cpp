#include "patchpref/grid.hpp"

#include <cstdio>
#include <sstream>

#include "patchpref/error.hpp"

namespace patchpref {

void GridTransform::forward(std::size_t row, std::size_t col, std::size_t size,
                            std::size_t& out_row, std::size_t& out_col) const {
  std::size_t r = row, c = col;
  switch (rotation) {
    case 0:
      break;
    case 90: {
      const std::size_t nr = c, nc = size - 1 - r;
      r = nr;
      c = nc;
      break;
    }
    case 180:
      r = size - 1 - r;
      c = size - 1 - c;
      break;
    case 270: {
      const std::size_t nr = size - 1 - c, nc = r;
      r = nr;
      c = nc;
      break;
    }
    default:
      throw ConfigError("rotation must be 0, 90, 180 or 270, got " + std::to_string(rotation));
  }
  if (flip_h) c = size - 1 - c;
  if (flip_v) r = size - 1 - r;
  out_row = r;
  out_col = c;
}

std::size_t GridTransform::forward_index(std::size_t index, std::size_t size) const {
  std::size_t r = 0, c = 0;
  forward(index / size, index % size, size, r, c);
  return r * size + c;
}

std::vector<std::size_t> GridTransform::permutation(std::size_t size) const {
  std::vector<std::size_t> perm(size * size);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = forward_index(i, size);
  return perm;
}

GridTransform GridTransform::inverse() const {
  // Search the 16 parameter combinations for the one undoing this transform; a
  // 3x3 probe grid separates all eight dihedral elements.
  const auto target = permutation(3);
  for (int rot : {0, 90, 180, 270}) {
    for (int fh = 0; fh < 2; ++fh) {
      for (int fv = 0; fv < 2; ++fv) {
        GridTransform cand{rot, fh == 1, fv == 1};
        const auto p = cand.permutation(3);
        bool ok = true;
        for (std::size_t i = 0; i < p.size() && ok; ++i) ok = p[target[i]] == i;
        if (ok) return cand;
      }
    }
  }
  throw ContractError("no inverse for " + to_string());
}

Tensor GridTransform::apply(const Tensor& t) const {
  if (t.rank() < 2) throw DimensionError("grid transform needs rank >= 2, got " + shape_string(t.shape()));
  const std::size_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  if (h != w) throw DimensionError("grid transform needs a square grid, got " + shape_string(t.shape()));
  const std::size_t plane = h * w;
  const std::size_t planes = t.size() / plane;
  const auto perm = permutation(h);
  Tensor out(t.shape());
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < plane; ++i) out[p * plane + perm[i]] = t[p * plane + i];
  return out;
}

std::string GridTransform::to_string() const {
  std::ostringstream out;
  out << "rot=" << rotation << " flipH=" << (flip_h ? 1 : 0) << " flipV=" << (flip_v ? 1 : 0);
  return out.str();
}

GridTransform GridTransform::parse(const std::string& line) {
  GridTransform t;
  int fh = -1, fv = -1, rot = -1;
  if (std::sscanf(line.c_str(), "rot=%d flipH=%d flipV=%d", &rot, &fh, &fv) != 3 ||
      (rot != 0 && rot != 90 && rot != 180 && rot != 270) || (fh != 0 && fh != 1) ||
      (fv != 0 && fv != 1)) {
    throw ConfigError("malformed transform line: '" + line + "'");
  }
  t.rotation = rot;
  t.flip_h = fh == 1;
  t.flip_v = fv == 1;
  return t;
}

GridTransform to_transform(Augmentation a) {
  switch (a) {
    case Augmentation::kRot90:
      return {90, false, false};
    case Augmentation::kRot180:
      return {180, false, false};
    case Augmentation::kRot270:
      return {270, false, false};
    case Augmentation::kFlipH:
      return {0, true, false};
    case Augmentation::kFlipV:
      return {0, false, true};
  }
  throw ConfigError("unknown augmentation");
}

Augmentation parse_augmentation(const std::string& name) {
  if (name == "rot90") return Augmentation::kRot90;
  if (name == "rot180") return Augmentation::kRot180;
  if (name == "rot270") return Augmentation::kRot270;
  if (name == "flipH") return Augmentation::kFlipH;
  if (name == "flipV") return Augmentation::kFlipV;
  throw ConfigError("unknown augmentation '" + name + "'");
}

std::string augmentation_name(Augmentation a) {
  switch (a) {
    case Augmentation::kRot90:
      return "rot90";
    case Augmentation::kRot180:
      return "rot180";
    case Augmentation::kRot270:
      return "rot270";
    case Augmentation::kFlipH:
      return "flipH";
    case Augmentation::kFlipV:
      return "flipV";
  }
  return "?";
}

}  // namespace patchpref
