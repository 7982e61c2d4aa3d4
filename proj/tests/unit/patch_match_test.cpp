#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "match_cases.hpp"
#include "patchpref/error.hpp"
#include "patchpref/grid.hpp"
#include "patchpref/patch_match.hpp"
#include "patchpref/rng.hpp"

using namespace patchpref;

namespace {

// Gaussian cells are pairwise distinct with probability one.
Tensor distinct_features(std::size_t d, std::size_t g, Rng& rng) {
  Tensor f = standard_normal(rng, {d, g, g});
  return f;
}

}  // namespace

TEST(Cosine, BasicIdentities) {
  const std::vector<double> v{0.3, -1.2, 2.0};
  const std::vector<double> neg{-0.3, 1.2, -2.0};
  EXPECT_NEAR(cosine(v, v), 1.0, 1e-15);
  EXPECT_NEAR(cosine(v, neg), -1.0, 1e-15);
  EXPECT_EQ(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
  EXPECT_EQ(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 1}), 0.0);
  EXPECT_THROW(cosine(std::vector<double>{1}, std::vector<double>{1, 2}), ContractError);
}

TEST(PatchQuality, SelfMatch) {
  Rng rng(1);
  Tensor f = distinct_features(8, 6, rng);
  auto q = patch_quality(f, f);
  for (std::size_t i = 0; i < 36; ++i) {
    EXPECT_NEAR(q.raw[i], 1.0, 1e-12);
    EXPECT_EQ(q.argmax[i], i);
  }
}

TEST(PatchQuality, RotatedReferenceGivesPermutation) {
  Rng rng(2);
  Tensor f = distinct_features(5, 8, rng);
  GridTransform rot{90, false, false};
  auto q = patch_quality(f, rot.apply(f));
  auto perm = rot.permutation(8);
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_NEAR(q.raw[i], 1.0, 1e-12);
    EXPECT_EQ(q.argmax[i], perm[i]);
  }
}

TEST(PatchQuality, GridPermutationOfReferenceLeavesRawUnchanged) {
  Rng rng(3);
  Tensor a = standard_normal(rng, {6, 8, 8});
  Tensor b = standard_normal(rng, {6, 8, 8});
  auto base = patch_quality(a, b);
  for (auto aug : kAllAugmentations) {
    auto moved = patch_quality(a, to_transform(aug).apply(b));
    EXPECT_LT(max_abs_diff(base.raw, moved.raw), 1e-12);
  }
}

TEST(PatchQuality, PositiveRescalingLeavesRawUnchanged) {
  Rng rng(4);
  Tensor a = standard_normal(rng, {6, 5, 5});
  Tensor b = standard_normal(rng, {6, 5, 5});
  auto base = patch_quality(a, b);
  auto scaled = patch_quality(scale(a, 7.5), scale(b, 0.01));
  EXPECT_LT(max_abs_diff(base.raw, scaled.raw), 1e-9);
  EXPECT_EQ(base.argmax, scaled.argmax);
}

TEST(PatchQuality, TiesGoToSmallestIndex) {
  Tensor r = Tensor::filled({2, 3, 3}, 1.0);
  Tensor q = Tensor::filled({2, 2, 2}, 2.0);
  auto res = patch_quality(q, r);
  for (auto idx : res.argmax) EXPECT_EQ(idx, 0u);
}

TEST(PatchQuality, DimensionMismatchIsContractError) {
  EXPECT_THROW(patch_quality(Tensor({3, 2, 2}), Tensor({4, 2, 2})), ContractError);
}

TEST(PatchQuality, OptimizedMatchesNaive) {
  auto cmp = test_support::compare_matchers(300, 77);
  EXPECT_EQ(cmp.argmax_mismatches, 0u);
  EXPECT_LE(cmp.max_value_diff, 1e-9);
}

TEST(Heatmap, PeakAndOrthogonalBackground) {
  // One-hot features: every cell orthogonal to every other.
  Tensor f({16, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) f[i * 16 + i] = 1.0;
  Tensor z = heatmap(f, 1, 2, f);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(z[i], i == 6 ? 1.0 : 0.0);
  EXPECT_THROW(heatmap(f, 4, 0, f), ContractError);
}

TEST(Heatmap, MaxEqualsPatchQuality) {
  Rng rng(7);
  Tensor a = standard_normal(rng, {12, 6, 6});
  Tensor b = standard_normal(rng, {12, 6, 6});
  auto q = patch_quality(a, b);
  for (std::size_t h = 0; h < 6; ++h)
    for (std::size_t w = 0; w < 6; ++w) {
      Tensor z = heatmap(a, h, w, b);
      EXPECT_NEAR(*std::max_element(z.values().begin(), z.values().end()), q.raw.at(h, w), 1e-12);
    }
}

TEST(Normalize, AffineEndpoints) {
  Tensor raw({1, 3}, {-1.0, 0.0, 1.0});
  Tensor n = normalize_upsample(raw, 1, 3, false);
  EXPECT_EQ(n, Tensor({1, 3}, {0.0, 0.5, 1.0}));
  Tensor inv = normalize_upsample(raw, 1, 3, true);
  EXPECT_EQ(inv[2], 0.0);
}

TEST(Normalize, UpsampleIsBlockConstant) {
  Rng rng(5);
  Tensor raw({8, 8});
  for (double& v : raw.values()) v = uniform(rng, -1, 1);
  Tensor u = normalize_upsample(raw, 32, 32, false);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) EXPECT_EQ(u.at(y, x), u.at((y / 4) * 4, (x / 4) * 4));
  EXPECT_THROW(normalize_upsample(raw, 30, 32, false), ConfigError);
}

TEST(Normalize, MinMaxOverMaskedCells) {
  Tensor raw({2, 2}, {0.2, 0.6, 0.4, -0.9});
  Tensor mask({2, 2}, {1, 1, 1, 0});
  Tensor n = normalize_quality(raw, WeightNorm::kMinMax, &mask);
  EXPECT_NEAR(n[0], 0.0, 1e-15);
  EXPECT_NEAR(n[1], 1.0, 1e-15);
  EXPECT_NEAR(n[2], 0.5, 1e-15);
  EXPECT_EQ(normalize_quality(Tensor::filled({2, 2}, 0.3), WeightNorm::kMinMax), Tensor::filled({2, 2}, 1.0));
}

TEST(Normalize, BackgroundWeights) {
  Tensor raw({2, 2}, {0.2, 0.6, 0.4, -0.9});
  Tensor mask({2, 2}, {1, 1, 1, 0});
  Tensor gen = weight_map(raw, 2, 2, false, WeightNorm::kMinMax, &mask, 1.0);
  Tensor ref = weight_map(raw, 2, 2, true, WeightNorm::kMinMax, &mask, 1.0);
  EXPECT_EQ(gen[3], 1.0);
  EXPECT_EQ(ref[3], 0.0);
  EXPECT_NEAR(ref[0], 1.0, 1e-15);
  EXPECT_EQ(parse_weight_norm("affine"), WeightNorm::kAffine);
  EXPECT_THROW(parse_weight_norm("zscore"), ConfigError);
}

TEST(SPatch, IdentityCorpusScoresOne) {
  Rng rng(6);
  CorrespondenceCorpus corpus;
  corpus.grid = 8;
  std::vector<std::vector<Tensor>> feats;
  for (int g = 0; g < 3; ++g) {
    CorrespondenceGroup group;
    Tensor f = distinct_features(4, 8, rng);
    for (int i = 0; i < 3; ++i) {
      group.images.push_back(Tensor({3, 32, 32}));
      group.transforms.push_back(GridTransform::identity());
    }
    corpus.groups.push_back(group);
    feats.push_back({f, f, f});
  }
  EXPECT_EQ(s_patch_features(corpus, feats), 1.0);
}

TEST(SPatch, ConstantFeaturesCollapseToIndexZero) {
  auto corpus = build_correspondence_corpus(6, 4, 3, SceneGeometry{});
  // Count, over all ordered pairs, the patches whose ground truth is cell 0.
  std::size_t zero = 0, total = 0;
  for (const auto& g : corpus.groups)
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 4; ++b) {
        if (a == b) continue;
        for (auto v : ground_truth_map(g, a, b, 8)) zero += v == 0 ? 1 : 0;
        total += 64;
      }
  const double expect = double(zero) / double(total);
  const double got = s_patch(corpus, [](const Tensor&) { return Tensor::filled({4, 8, 8}, 0.5); });
  EXPECT_EQ(got, expect);
  EXPECT_EQ(got, 1.0 / 64.0);
}

TEST(Auc, BruteForceCounts) {
  const std::vector<double> pos{0.9, 0.8, 0.5};
  const std::vector<double> neg{0.1, 0.5};
  // pairs: (0.9>0.1,0.9>0.5,0.8>0.1,0.8>0.5,0.5>0.1,0.5=0.5) → 5.5/6
  EXPECT_DOUBLE_EQ(pairwise_auc(pos, neg), 5.5 / 6.0);
  EXPECT_THROW(pairwise_auc(pos, {}), ContractError);
}
