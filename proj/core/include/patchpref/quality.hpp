#pragma once

#include <cstddef>
#include <vector>

#include "patchpref/diffusion.hpp"
#include "patchpref/encoder.hpp"
#include "patchpref/patch_match.hpp"
#include "patchpref/synth.hpp"

namespace patchpref {

/// Both matching directions for one pair at one encoder layer.
struct QualityEstimate {
  PatchQualityMap gen;  // p(x_gen): generated patches against the reference
  PatchQualityMap ref;  // p(x_ref): reference patches against the generated image
  Tensor object_cells;  // grid mask of object patches
  Tensor ref_features;  // D×H×W reference features at the layer
  Tensor gen_features;
};

QualityEstimate estimate_quality(const Encoder& encoder, std::size_t layer, const ScenePair& pair);

struct WeightPolicy {
  WeightNorm norm = WeightNorm::kMinMax;
  /// Normalized quality given to background cells before inversion, so the gen
  /// term keeps full weight there and the reference term gets none.
  double background = 1.0;
};

TrainItem make_train_item(const ScenePair& pair, const QualityEstimate& q, const WeightPolicy& policy,
                          std::size_t cond_dim);

struct QualityScores {
  std::vector<double> clean;    // raw quality of untouched object patches
  std::vector<double> corrupt;  // raw quality of corrupted patches
};

/// Splits p(x_gen) over object patches by the ground-truth corruption mask.
void collect_quality_scores(const ScenePair& pair, const QualityEstimate& q, QualityScores& out);

}  // namespace patchpref
