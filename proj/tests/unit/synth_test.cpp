#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <set>

#include "patchpref/corpus_io.hpp"
#include "patchpref/error.hpp"
#include "patchpref/synth.hpp"

using namespace patchpref;

namespace {

const SceneGeometry kGeo;

SceneDescriptor rect_descriptor(std::int64_t y0, std::int64_t x0, std::int64_t h, std::int64_t w) {
  SceneDescriptor d;
  d.kind = ObjectKind::kRect;
  d.object_color = {0.8, 0.2, 0.2};
  d.background_color = {0.1, 0.1, 0.5};
  d.placement = {y0, x0, h, w};
  d.seed = 42;
  return d;
}

double patch_max_abs_diff(const Tensor& a, const Tensor& b, std::size_t cell) {
  const std::size_t g = kGeo.grid(), p = kGeo.patch_size;
  const std::size_t y0 = (cell / g) * p, x0 = (cell % g) * p;
  double m = 0.0;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = y0; y < y0 + p; ++y)
      for (std::size_t x = x0; x < x0 + p; ++x) m = std::max(m, std::abs(a.at(c, y, x) - b.at(c, y, x)));
  return m;
}

}  // namespace

TEST(Scene, ZeroAreaObjectIsRejected) {
  EXPECT_THROW(generate_scene(rect_descriptor(4, 4, 0, 10), kGeo), DescriptorError);
}

TEST(Scene, PlacementOutsideImageIsRejected) {
  EXPECT_THROW(generate_scene(rect_descriptor(20, 20, 16, 4), kGeo), DescriptorError);
  EXPECT_THROW(generate_scene(rect_descriptor(-1, 0, 8, 8), kGeo), DescriptorError);
}

TEST(Scene, SameDescriptorSameImage) {
  const auto d = rect_descriptor(4, 6, 16, 20);
  EXPECT_EQ(generate_scene(d, kGeo).image, generate_scene(d, kGeo).image);
}

TEST(Scene, ValuesInUnitRange) {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    Scene s = generate_scene(random_descriptor(rng, kGeo), kGeo);
    for (double v : s.image.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Scene, RandomMasksAreNonEmptyAndInsidePlacement) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const SceneDescriptor d = random_descriptor(rng, kGeo);
    const Scene s = generate_scene(d, kGeo);
    const auto& p = d.placement;
    double area = 0;
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        if (s.object_mask.at(y, x) == 0.0) continue;
        area += 1;
        EXPECT_GE(std::int64_t(y), p.y0);
        EXPECT_LT(std::int64_t(y), p.y0 + p.h);
        EXPECT_GE(std::int64_t(x), p.x0);
        EXPECT_LT(std::int64_t(x), p.x0 + p.w);
      }
    EXPECT_GT(area, 0);
  }
}

TEST(Scene, DescriptorTextRoundTrip) {
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const auto d = random_descriptor(rng, kGeo);
    EXPECT_EQ(SceneDescriptor::from_text(d.to_text()), d);
  }
}

TEST(Corrupt, RateZeroIsIdentity) {
  Scene s = generate_scene(rect_descriptor(4, 4, 20, 20), kGeo);
  ScenePair p = corrupt_scene(s.image, s.object_mask, 0.0, 9, kGeo);
  EXPECT_EQ(p.generated, p.reference);
  EXPECT_EQ(p.corruption_mask, Tensor({32, 32}));
}

TEST(Corrupt, RateOneCorruptsEveryObjectPatch) {
  Scene s = generate_scene(rect_descriptor(4, 4, 20, 20), kGeo);
  ScenePair p = corrupt_scene(s.image, s.object_mask, 1.0, 9, kGeo);
  Tensor obj = object_patches(s.object_mask, kGeo);
  Tensor hit = mask_to_patches(p.corruption_mask, kGeo);
  for (std::size_t i = 0; i < 64; ++i)
    if (obj[i] > 0.5) EXPECT_EQ(hit[i], 1.0) << i;
}

TEST(Corrupt, RateOutsideUnitIntervalIsConfigError) {
  Scene s = generate_scene(rect_descriptor(4, 4, 20, 20), kGeo);
  EXPECT_THROW(corrupt_scene(s.image, s.object_mask, 1.5, 0, kGeo), ConfigError);
  EXPECT_THROW(corrupt_scene(s.image, s.object_mask, -0.1, 0, kGeo), ConfigError);
}

TEST(Corrupt, ThirtyPercentOfFortyPatches) {
  // 20×32 pixel rectangle aligned to the grid: 5×8 = 40 full object patches.
  Scene s = generate_scene(rect_descriptor(4, 0, 20, 32), kGeo);
  Tensor obj = object_patches(s.object_mask, kGeo);
  double n_obj = 0;
  for (double v : obj.values()) n_obj += v;
  ASSERT_EQ(n_obj, 40);
  ScenePair p = corrupt_scene(s.image, s.object_mask, 0.3, 17, kGeo);
  Tensor hit = mask_to_patches(p.corruption_mask, kGeo);
  std::size_t count = 0;
  for (std::size_t i = 0; i < 64; ++i) {
    if (hit[i] == 0.0) continue;
    ++count;
    EXPECT_GT(patch_max_abs_diff(p.generated, p.reference, i), 0.05) << i;
  }
  EXPECT_EQ(count, 12u);
}

TEST(Corrupt, PairInvariantsOverCorpus) {
  PairCorpusConfig cfg;
  auto pairs = build_pair_corpus(60, cfg, 5);
  for (const auto& p : pairs) {
    Tensor hit = mask_to_patches(p.corruption_mask, kGeo);
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        if (p.corruption_mask.at(y, x) > 0) {
          EXPECT_EQ(p.object_mask.at(y, x), 1.0);
        } else {
          for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(p.generated.at(c, y, x), p.reference.at(c, y, x));
        }
      }
    for (std::size_t i = 0; i < 64; ++i)
      if (hit[i] > 0) EXPECT_GT(patch_max_abs_diff(p.generated, p.reference, i), 0.05);
  }
}

TEST(PairCorpus, SingleAndDeterministic) {
  PairCorpusConfig cfg;
  EXPECT_EQ(build_pair_corpus(1, cfg, 3).size(), 1u);
  auto a = build_pair_corpus(5, cfg, 3), b = build_pair_corpus(5, cfg, 3);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(a[i].generated, b[i].generated);
    EXPECT_EQ(a[i].corruption_mask, b[i].corruption_mask);
    EXPECT_EQ(a[i].descriptor, b[i].descriptor);
  }
}

TEST(PairCorpus, FiveHundredPairsUnderAMinute) {
  const auto t0 = std::chrono::steady_clock::now();
  auto pairs = build_pair_corpus(500, PairCorpusConfig{}, 11);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(pairs.size(), 500u);
  EXPECT_LT(secs, 60.0);
}

TEST(PairCorpus, DiskRoundTrip) {
  auto dir = std::filesystem::temp_directory_path() / "patchpref_pairs_test";
  std::filesystem::remove_all(dir);
  auto pairs = build_pair_corpus(3, PairCorpusConfig{}, 1);
  write_pair_corpus(pairs, dir);
  auto back = read_pair_corpus(dir);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].generated, pairs[i].generated);
    EXPECT_EQ(back[i].descriptor, pairs[i].descriptor);
  }
  std::filesystem::remove_all(dir);
}

TEST(Correspondence, IdentityGroupHasIdentityMaps) {
  Scene s = generate_scene(rect_descriptor(4, 4, 20, 20), kGeo);
  auto group = make_group(s.image, {GridTransform::identity(), GridTransform::identity(), GridTransform::identity()});
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) {
      auto gt = ground_truth_map(group, a, b, 8);
      for (std::size_t i = 0; i < gt.size(); ++i) EXPECT_EQ(gt[i], i);
    }
}

TEST(Correspondence, MapsAreBijectionsAndCompose) {
  auto corpus = build_correspondence_corpus(10, 4, 7, kGeo);
  for (const auto& g : corpus.groups)
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 4; ++b) {
        auto ab = ground_truth_map(g, a, b, 8);
        auto ba = ground_truth_map(g, b, a, 8);
        EXPECT_EQ(std::set<std::size_t>(ab.begin(), ab.end()).size(), 64u);
        for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(ba[ab[i]], i);
      }
}

TEST(Correspondence, GroundTruthFollowsPixelContent) {
  // The patch content at gt[p] in image b equals patch p in image a up to the
  // within-patch rotation/flip.
  auto corpus = build_correspondence_corpus(5, 3, 8, kGeo);
  for (const auto& g : corpus.groups) {
    auto gt = ground_truth_map(g, 1, 2, 8);
    for (std::size_t p = 0; p < 64; ++p) {
      double sa = 0, sb = 0;
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 4; ++y)
          for (std::size_t x = 0; x < 4; ++x) {
            sa += g.images[1].at(c, (p / 8) * 4 + y, (p % 8) * 4 + x);
            sb += g.images[2].at(c, (gt[p] / 8) * 4 + y, (gt[p] % 8) * 4 + x);
          }
      EXPECT_NEAR(sa, sb, 1e-12);
    }
  }
}

TEST(Correspondence, TooFewImagesIsConfigError) {
  EXPECT_THROW(build_correspondence_corpus(1, 1, 0, kGeo), ConfigError);
}
