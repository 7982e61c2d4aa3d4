#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "patchpref/synth.hpp"
#include "patchpref/tensor.hpp"

namespace patchpref {

inline constexpr double kNormEps = 1e-12;

/// u·v / (max(‖u‖, εn) · max(‖v‖, εn)).
double cosine(std::span<const double> u, std::span<const double> v);

enum class MatchDirection { kGenToRef, kRefToGen };

struct PatchQualityMap {
  Tensor raw;                       // H×W max cosine per query cell
  std::vector<std::size_t> argmax;  // row-major reference index per query cell
  MatchDirection direction = MatchDirection::kGenToRef;
  int source_layer = -1;
};

/// Feature maps are D×H×W (channel-first). For each query cell, the best cosine
/// over all reference cells; ties go to the smallest reference index.
PatchQualityMap patch_quality(const Tensor& query, const Tensor& reference);
/// Direct double loop over cells calling cosine(); used as a reference implementation.
PatchQualityMap patch_quality_naive(const Tensor& query, const Tensor& reference);

/// z[i,j] = cosine(query[:,h,w], reference[:,i,j]).
Tensor heatmap(const Tensor& query, std::size_t h, std::size_t w, const Tensor& reference);

enum class WeightNorm { kAffine, kMinMax };

WeightNorm parse_weight_norm(const std::string& name);
std::string weight_norm_name(WeightNorm norm);

/// (p+1)/2 clamped to [0,1], optionally inverted, then nearest-upsampled.
Tensor normalize_upsample(const Tensor& raw, std::size_t image_h, std::size_t image_w, bool invert);

/// Grid-level normalization. kMinMax rescales over the cells where `mask` is 1
/// (all cells if `mask` is null); a flat map normalizes to 1.
Tensor normalize_quality(const Tensor& raw, WeightNorm norm, const Tensor* mask = nullptr);

/// Training weight map: normalize, set cells outside `mask` to `outside`, invert
/// if requested, then upsample to image size.
Tensor weight_map(const Tensor& raw, std::size_t image_h, std::size_t image_w, bool invert,
                  WeightNorm norm, const Tensor* mask, double outside);

using FeatureFn = std::function<Tensor(const Tensor& image)>;

/// Fraction of patches, over all ordered image pairs of every group, whose best
/// match equals the ground-truth correspondence.
double s_patch(const CorrespondenceCorpus& corpus, const FeatureFn& features);
/// Same, on precomputed features: features[g][i] for image i of group g.
double s_patch_features(const CorrespondenceCorpus& corpus,
                        const std::vector<std::vector<Tensor>>& features);

/// AUC of scores, positives above negatives, ties counted half (pairwise count).
double pairwise_auc(std::span<const double> positives, std::span<const double> negatives);

}  // namespace patchpref
