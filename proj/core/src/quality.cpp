#include "patchpref/quality.hpp"

#include "patchpref/error.hpp"

namespace patchpref {

namespace {
SceneGeometry geometry_of(const Encoder& e) {
  SceneGeometry g;
  g.image_size = e.config().image_size;
  g.patch_size = e.config().patch_size;
  return g;
}
}  // namespace

QualityEstimate estimate_quality(const Encoder& encoder, std::size_t layer, const ScenePair& pair) {
  if (layer >= encoder.config().layers) {
    throw ContractError("layer " + std::to_string(layer) + " outside encoder depth " +
                        std::to_string(encoder.config().layers));
  }
  QualityEstimate q;
  q.ref_features = encoder.encode(pair.reference)[layer];
  q.gen_features = encoder.encode(pair.generated)[layer];
  q.gen = patch_quality(q.gen_features, q.ref_features);
  q.gen.direction = MatchDirection::kGenToRef;
  q.gen.source_layer = static_cast<int>(layer);
  q.ref = patch_quality(q.ref_features, q.gen_features);
  q.ref.direction = MatchDirection::kRefToGen;
  q.ref.source_layer = static_cast<int>(layer);
  q.object_cells = object_patches(pair.object_mask, geometry_of(encoder));
  return q;
}

TrainItem make_train_item(const ScenePair& pair, const QualityEstimate& q, const WeightPolicy& policy,
                          std::size_t cond_dim) {
  const std::size_t s = pair.reference.dim(1);
  TrainItem it;
  it.reference = pair.reference;
  it.generated = pair.generated;
  it.object_mask = pair.object_mask;
  it.corruption_mask = pair.corruption_mask;
  it.cond.reference = pair.reference;
  it.cond.features = upsample_nearest(q.ref_features, s, s);
  it.cond.embedding = descriptor_embedding(pair.descriptor, cond_dim);
  it.weight_gen = weight_map(q.gen.raw, s, s, false, policy.norm, &q.object_cells, policy.background);
  it.weight_ref = weight_map(q.ref.raw, s, s, true, policy.norm, &q.object_cells, policy.background);
  return it;
}

void collect_quality_scores(const ScenePair& pair, const QualityEstimate& q, QualityScores& out) {
  const std::size_t g = q.gen.raw.dim(0);
  const std::size_t p = pair.reference.dim(1) / g;
  SceneGeometry geo;
  geo.image_size = pair.reference.dim(1);
  geo.patch_size = p;
  const Tensor corrupted = mask_to_patches(pair.corruption_mask, geo);
  for (std::size_t i = 0; i < g * g; ++i) {
    if (q.object_cells[i] <= 0.5) continue;
    (corrupted[i] > 0.5 ? out.corrupt : out.clean).push_back(q.gen.raw[i]);
  }
}

}  // namespace patchpref
