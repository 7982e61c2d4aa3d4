#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "patchpref/tensor.hpp"

namespace patchpref {

/// A dihedral transform of a square grid: clockwise rotation, then an optional
/// left-right mirror (flip_h), then an optional up-down mirror (flip_v).
struct GridTransform {
  int rotation = 0;  // degrees clockwise, one of {0, 90, 180, 270}
  bool flip_h = false;
  bool flip_v = false;

  static GridTransform identity() { return {}; }

  /// Where the cell at (row, col) lands after the transform.
  void forward(std::size_t row, std::size_t col, std::size_t size, std::size_t& out_row,
               std::size_t& out_col) const;
  std::size_t forward_index(std::size_t index, std::size_t size) const;

  /// perm[i] = position of source cell i in the transformed grid.
  std::vector<std::size_t> permutation(std::size_t size) const;

  GridTransform inverse() const;

  /// Applies the transform to the trailing two (square) axes of `t`.
  Tensor apply(const Tensor& t) const;

  std::string to_string() const;
  static GridTransform parse(const std::string& line);

  friend bool operator==(const GridTransform&, const GridTransform&) = default;
};

/// The five augmentations used for equivariance training.
enum class Augmentation { kRot90, kRot180, kRot270, kFlipH, kFlipV };

GridTransform to_transform(Augmentation a);
Augmentation parse_augmentation(const std::string& name);
std::string augmentation_name(Augmentation a);
inline constexpr Augmentation kAllAugmentations[] = {Augmentation::kRot90, Augmentation::kRot180,
                                                     Augmentation::kRot270, Augmentation::kFlipH,
                                                     Augmentation::kFlipV};

}  // namespace patchpref
