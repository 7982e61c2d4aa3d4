#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "patchpref/grid.hpp"
#include "patchpref/rng.hpp"
#include "patchpref/tensor.hpp"

namespace patchpref {

struct SceneGeometry {
  std::size_t image_size = 32;
  std::size_t patch_size = 4;
  std::size_t channels = 3;

  std::size_t grid() const { return image_size / patch_size; }
  void validate() const;
};

enum class ObjectKind { kRect, kEllipse, kTriangle, kDiamond };

std::string object_kind_name(ObjectKind kind);
ObjectKind parse_object_kind(const std::string& name);

struct Placement {
  std::int64_t y0 = 0, x0 = 0, h = 0, w = 0;
  friend bool operator==(const Placement&, const Placement&) = default;
};

/// Structured stand-in for a text prompt: "<kind> in <background>".
struct SceneDescriptor {
  ObjectKind kind = ObjectKind::kRect;
  std::array<double, 3> object_color{};
  std::array<double, 3> background_color{};
  Placement placement;
  std::uint64_t seed = 0;  // drives the object's surface texture

  std::string to_text() const;
  static SceneDescriptor from_text(const std::string& text);
  friend bool operator==(const SceneDescriptor&, const SceneDescriptor&) = default;
};

struct Scene {
  Tensor image;        // C×S×S
  Tensor object_mask;  // S×S in {0,1}
};

struct ScenePair {
  Tensor reference;
  Tensor generated;
  Tensor object_mask;
  Tensor corruption_mask;
  SceneDescriptor descriptor;
};

/// Binary mask of the object silhouette (no texture).
Tensor object_mask(const SceneDescriptor& d, const SceneGeometry& geo);
Scene generate_scene(const SceneDescriptor& d, const SceneGeometry& geo);

/// Samples a descriptor whose object covers 25–60% of the image.
SceneDescriptor random_descriptor(Rng& rng, const SceneGeometry& geo);

/// Patch-grid mask (grid×grid) of patches that are at least half object.
Tensor object_patches(const Tensor& object_mask, const SceneGeometry& geo);
/// Patch-grid mask of patches touched by a pixel mask.
Tensor mask_to_patches(const Tensor& pixel_mask, const SceneGeometry& geo);

enum class Perturber { kColorShift, kTextureSwap, kWarp };

ScenePair corrupt_scene(const Tensor& reference, const Tensor& object_mask, double rate,
                        std::uint64_t seed, const SceneGeometry& geo);

struct PairCorpusConfig {
  SceneGeometry geometry;
  double corruption_rate = 0.4;
};

ScenePair make_pair(std::uint64_t master_seed, std::size_t index, const PairCorpusConfig& cfg);
std::vector<ScenePair> build_pair_corpus(std::size_t n, const PairCorpusConfig& cfg,
                                         std::uint64_t master_seed);

struct CorrespondenceGroup {
  std::vector<Tensor> images;
  std::vector<GridTransform> transforms;  // image i = transforms[i](base)
};

struct CorrespondenceCorpus {
  std::size_t grid = 8;
  std::vector<CorrespondenceGroup> groups;
};

/// gt[p] = patch index in image b that shows the content of patch p in image a.
std::vector<std::size_t> ground_truth_map(const CorrespondenceGroup& group, std::size_t a,
                                          std::size_t b, std::size_t grid);

CorrespondenceGroup make_group(const Tensor& base, const std::vector<GridTransform>& transforms);
CorrespondenceCorpus build_correspondence_corpus(std::size_t groups, std::size_t images_per_group,
                                                 std::uint64_t seed, const SceneGeometry& geo);

}  // namespace patchpref
