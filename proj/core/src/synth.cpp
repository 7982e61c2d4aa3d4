#include "patchpref/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "patchpref/error.hpp"

namespace patchpref {
namespace {

// Seed stream tags.
constexpr std::uint64_t kPairStream = 1;
constexpr std::uint64_t kCorruptStream = 2;
constexpr std::uint64_t kGroupStream = 3;

constexpr double kMinContrast = 0.2;
constexpr double kShift = 0.3;
constexpr double kMinChange = 0.05;

struct Texture {
  double gy, gx, f1, f2, phase, amp;
};

}  // namespace

void SceneGeometry::validate() const {
  if (patch_size == 0 || image_size == 0 || image_size % patch_size != 0) {
    throw ConfigError("image size " + std::to_string(image_size) +
                      " must be a positive multiple of patch size " + std::to_string(patch_size));
  }
  if (channels != 3) throw ConfigError("scenes are rendered with 3 channels");
}

std::string object_kind_name(ObjectKind kind) {
  switch (kind) {
    case ObjectKind::kRect: return "rect";
    case ObjectKind::kEllipse: return "ellipse";
    case ObjectKind::kTriangle: return "triangle";
    case ObjectKind::kDiamond: return "diamond";
  }
  return "?";
}

ObjectKind parse_object_kind(const std::string& name) {
  for (auto k : {ObjectKind::kRect, ObjectKind::kEllipse, ObjectKind::kTriangle, ObjectKind::kDiamond})
    if (object_kind_name(k) == name) return k;
  throw DescriptorError("unknown object kind '" + name + "'");
}

std::string SceneDescriptor::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "kind=" << object_kind_name(kind) << '\n';
  out << "object_color=" << object_color[0] << ',' << object_color[1] << ',' << object_color[2] << '\n';
  out << "background_color=" << background_color[0] << ',' << background_color[1] << ','
      << background_color[2] << '\n';
  out << "placement=" << placement.y0 << ',' << placement.x0 << ',' << placement.h << ','
      << placement.w << '\n';
  out << "seed=" << seed << '\n';
  return out.str();
}

SceneDescriptor SceneDescriptor::from_text(const std::string& text) {
  SceneDescriptor d;
  std::istringstream in(text);
  std::string line;
  int seen = 0;
  auto triple = [](const std::string& v) {
    std::array<double, 3> out{};
    char c1 = 0, c2 = 0;
    std::istringstream s(v);
    if (!(s >> out[0] >> c1 >> out[1] >> c2 >> out[2])) throw DescriptorError("bad color '" + v + "'");
    return out;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DescriptorError("bad descriptor line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "kind") {
      d.kind = parse_object_kind(value);
    } else if (key == "object_color") {
      d.object_color = triple(value);
    } else if (key == "background_color") {
      d.background_color = triple(value);
    } else if (key == "placement") {
      char c = 0;
      std::istringstream s(value);
      if (!(s >> d.placement.y0 >> c >> d.placement.x0 >> c >> d.placement.h >> c >> d.placement.w))
        throw DescriptorError("bad placement '" + value + "'");
    } else if (key == "seed") {
      d.seed = std::stoull(value);
    } else {
      throw DescriptorError("unknown descriptor key '" + key + "'");
    }
    ++seen;
  }
  if (seen != 5) throw DescriptorError("descriptor needs 5 fields, got " + std::to_string(seen));
  return d;
}

Tensor object_mask(const SceneDescriptor& d, const SceneGeometry& geo) {
  const auto s = static_cast<std::int64_t>(geo.image_size);
  const auto& p = d.placement;
  if (p.h <= 0 || p.w <= 0) throw DescriptorError("object placement has zero area");
  if (p.y0 < 0 || p.x0 < 0 || p.y0 + p.h > s || p.x0 + p.w > s) {
    throw DescriptorError("placement (" + std::to_string(p.y0) + "," + std::to_string(p.x0) + "," +
                          std::to_string(p.h) + "," + std::to_string(p.w) + ") outside " +
                          std::to_string(s) + "x" + std::to_string(s) + " image");
  }
  Tensor m({geo.image_size, geo.image_size});
  bool any = false;
  for (std::int64_t y = p.y0; y < p.y0 + p.h; ++y) {
    for (std::int64_t x = p.x0; x < p.x0 + p.w; ++x) {
      // normalized coordinates of the pixel centre inside the placement box
      const double u = (static_cast<double>(y - p.y0) + 0.5) / static_cast<double>(p.h);
      const double v = (static_cast<double>(x - p.x0) + 0.5) / static_cast<double>(p.w);
      bool in = true;
      switch (d.kind) {
        case ObjectKind::kRect: break;
        case ObjectKind::kEllipse: in = (u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5) <= 0.25; break;
        case ObjectKind::kTriangle: in = v >= 0.5 - u / 2 && v <= 0.5 + u / 2; break;
        case ObjectKind::kDiamond: in = std::abs(u - 0.5) + std::abs(v - 0.5) <= 0.5; break;
      }
      if (in) {
        m.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 1.0;
        any = true;
      }
    }
  }
  if (!any) throw DescriptorError("object covers no pixels");
  return m;
}

Scene generate_scene(const SceneDescriptor& d, const SceneGeometry& geo) {
  geo.validate();
  Tensor mask = object_mask(d, geo);
  const std::size_t s = geo.image_size;
  const auto& p = d.placement;
  Rng rng(d.seed);
  std::array<Texture, 3> tex{};
  for (auto& t : tex) {
    t.gy = uniform(rng, -0.5, 0.5);
    t.gx = uniform(rng, -0.5, 0.5);
    t.f1 = uniform(rng, 0.2, 0.35);
    t.f2 = uniform(rng, 0.2, 0.35);
    t.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    t.amp = uniform(rng, 0.25, 0.4);
  }
  Tensor img({3, s, s});
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      const bool obj = mask.at(y, x) > 0.5;
      const double u = (static_cast<double>(y) - static_cast<double>(p.y0) + 0.5) / static_cast<double>(p.h);
      const double v = (static_cast<double>(x) - static_cast<double>(p.x0) + 0.5) / static_cast<double>(p.w);
      double maxdiff = 0.0;
      std::size_t maxc = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        const auto& t = tex[c];
        double val = d.background_color[c];
        if (obj) {
          val = d.object_color[c] + t.gy * (u - 0.5) + t.gx * (v - 0.5) +
                t.amp * std::sin(std::numbers::pi * (t.f1 * static_cast<double>(y) +
                                                     t.f2 * static_cast<double>(x)) + t.phase);
          val = std::clamp(val, 0.0, 1.0);
          const double diff = std::abs(val - d.background_color[c]);
          if (diff > maxdiff) {
            maxdiff = diff;
            maxc = c;
          }
        }
        img.at(c, y, x) = val;
      }
      if (obj && maxdiff < kMinContrast) {
        const double bg = d.background_color[maxc];
        img.at(maxc, y, x) = bg <= 1.0 - kMinContrast ? bg + kMinContrast : bg - kMinContrast;
      }
    }
  }
  return {std::move(img), std::move(mask)};
}

SceneDescriptor random_descriptor(Rng& rng, const SceneGeometry& geo) {
  geo.validate();
  const double s = static_cast<double>(geo.image_size);
  const double total = s * s;
  while (true) {
    SceneDescriptor d;
    for (auto& c : d.background_color) c = uniform(rng, 0.0, 1.0);
    d.kind = static_cast<ObjectKind>(uniform_int(rng, 0, 3));
    const double area = uniform(rng, 0.25, 0.6) * total;
    const double aspect = uniform(rng, 0.7, 1.4);
    const double fill = d.kind == ObjectKind::kRect      ? 1.0
                        : d.kind == ObjectKind::kEllipse ? std::numbers::pi / 4.0
                                                         : 0.5;
    const double box = area / fill;
    const auto h = static_cast<std::int64_t>(std::lround(std::sqrt(box * aspect)));
    const auto w = static_cast<std::int64_t>(std::lround(box / static_cast<double>(std::max<std::int64_t>(h, 1))));
    const auto si = static_cast<std::int64_t>(geo.image_size);
    if (h < 4 || w < 4 || h > si || w > si) continue;
    d.placement = {uniform_int(rng, 0, si - h), uniform_int(rng, 0, si - w), h, w};
    for (auto& c : d.object_color) c = uniform(rng, 0.0, 1.0);
    d.seed = rng();
    const double count = sum(object_mask(d, geo));
    if (count < 0.25 * total || count > 0.6 * total) continue;
    return d;
  }
}

Tensor object_patches(const Tensor& mask, const SceneGeometry& geo) {
  const std::size_t g = geo.grid(), p = geo.patch_size;
  Tensor out({g, g});
  for (std::size_t gy = 0; gy < g; ++gy) {
    for (std::size_t gx = 0; gx < g; ++gx) {
      double n = 0.0;
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x) n += mask.at(gy * p + y, gx * p + x);
      out.at(gy, gx) = n >= 0.5 * static_cast<double>(p * p) ? 1.0 : 0.0;
    }
  }
  return out;
}

Tensor mask_to_patches(const Tensor& mask, const SceneGeometry& geo) {
  const std::size_t g = geo.grid(), p = geo.patch_size;
  Tensor out({g, g});
  for (std::size_t y = 0; y < geo.image_size; ++y)
    for (std::size_t x = 0; x < geo.image_size; ++x)
      if (mask.at(y, x) > 0.5) out.at(y / p, x / p) = 1.0;
  return out;
}

ScenePair corrupt_scene(const Tensor& reference, const Tensor& mask, double rate,
                        std::uint64_t seed, const SceneGeometry& geo) {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw ConfigError("corruption rate must lie in [0,1], got " + std::to_string(rate));
  }
  geo.validate();
  const std::size_t s = geo.image_size, p = geo.patch_size, g = geo.grid();
  if (reference.shape() != Shape{3, s, s} || mask.shape() != Shape{s, s}) {
    throw DimensionError("corrupt_scene expects 3x" + std::to_string(s) + "x" + std::to_string(s) +
                         " image, got " + shape_string(reference.shape()) + " and mask " +
                         shape_string(mask.shape()));
  }
  Rng rng(seed);
  ScenePair pair{reference, reference, mask, Tensor({s, s}), {}};
  const Tensor patches = object_patches(mask, geo);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < g * g; ++i)
    if (patches[i] > 0.5) candidates.push_back(i);
  const auto k = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(candidates.size()) - 1e-9));
  // partial Fisher–Yates: the first k entries are a uniform sample
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(i),
                                                        static_cast<std::int64_t>(candidates.size() - 1)));
    std::swap(candidates[i], candidates[j]);
  }
  std::vector<std::size_t> selected(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(selected.begin(), selected.end());

  Tensor& gen = pair.generated;
  for (std::size_t cell : selected) {
    const std::size_t y0 = (cell / g) * p, x0 = (cell % g) * p;
    const auto kind = static_cast<Perturber>(uniform_int(rng, 0, 2));
    Tensor block({3, p, p});
    switch (kind) {
      case Perturber::kColorShift:
        for (std::size_t c = 0; c < 3; ++c) {
          double m = 0.0;
          for (std::size_t y = 0; y < p; ++y)
            for (std::size_t x = 0; x < p; ++x) m += reference.at(c, y0 + y, x0 + x);
          const double shift = m / static_cast<double>(p * p) < 0.5 ? kShift : -kShift;
          for (std::size_t y = 0; y < p; ++y)
            for (std::size_t x = 0; x < p; ++x)
              block.at(c, y, x) = std::clamp(reference.at(c, y0 + y, x0 + x) + shift, 0.0, 1.0);
        }
        break;
      case Perturber::kTextureSwap: {
        // borrow an object patch from a freshly rendered, unrelated scene
        const SceneDescriptor other = random_descriptor(rng, geo);
        const Scene donor = generate_scene(other, geo);
        const Tensor donor_patches = object_patches(donor.object_mask, geo);
        std::vector<std::size_t> cells;
        for (std::size_t i = 0; i < g * g; ++i)
          if (donor_patches[i] > 0.5) cells.push_back(i);
        const std::size_t q = cells[static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<std::int64_t>(cells.size()) - 1))];
        const std::size_t qy = (q / g) * p, qx = (q % g) * p;
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t y = 0; y < p; ++y)
            for (std::size_t x = 0; x < p; ++x) block.at(c, y, x) = donor.image.at(c, qy + y, qx + x);
        break;
      }
      case Perturber::kWarp: {
        static constexpr int kDirs[4][2] = {{0, 1}, {1, 0}, {0, -1}, {-1, 0}};
        const auto dir = kDirs[uniform_int(rng, 0, 3)];
        const auto clampi = [s](std::int64_t v) {
          return static_cast<std::size_t>(std::clamp<std::int64_t>(v, 0, static_cast<std::int64_t>(s) - 1));
        };
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t y = 0; y < p; ++y)
            for (std::size_t x = 0; x < p; ++x)
              block.at(c, y, x) = reference.at(c, clampi(static_cast<std::int64_t>(y0 + y) + dir[0]),
                                               clampi(static_cast<std::int64_t>(x0 + x) + dir[1]));
        break;
      }
    }
    double change = 0.0;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < p; ++y)
        for (std::size_t x = 0; x < p; ++x)
          if (mask.at(y0 + y, x0 + x) > 0.5)
            change = std::max(change, std::abs(block.at(c, y, x) - reference.at(c, y0 + y, x0 + x)));
    if (change <= kMinChange) {
      // the perturbation was invisible; fall back to a far-side color shift
      for (std::size_t c = 0; c < 3; ++c) {
        double m = 0.0;
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x) m += reference.at(c, y0 + y, x0 + x);
        const double shift = m / static_cast<double>(p * p) < 0.5 ? kShift : -kShift;
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x)
            block.at(c, y, x) = std::clamp(reference.at(c, y0 + y, x0 + x) + shift, 0.0, 1.0);
      }
    }
    for (std::size_t y = 0; y < p; ++y) {
      for (std::size_t x = 0; x < p; ++x) {
        if (mask.at(y0 + y, x0 + x) <= 0.5) continue;
        for (std::size_t c = 0; c < 3; ++c) gen.at(c, y0 + y, x0 + x) = block.at(c, y, x);
        pair.corruption_mask.at(y0 + y, x0 + x) = 1.0;
      }
    }
  }
  return pair;
}

ScenePair make_pair(std::uint64_t master_seed, std::size_t index, const PairCorpusConfig& cfg) {
  Rng rng(derive_seed(master_seed, kPairStream, index));
  const SceneDescriptor d = random_descriptor(rng, cfg.geometry);
  const Scene scene = generate_scene(d, cfg.geometry);
  ScenePair pair = corrupt_scene(scene.image, scene.object_mask, cfg.corruption_rate,
                                 derive_seed(master_seed, kCorruptStream, index), cfg.geometry);
  pair.descriptor = d;
  return pair;
}

std::vector<ScenePair> build_pair_corpus(std::size_t n, const PairCorpusConfig& cfg,
                                         std::uint64_t master_seed) {
  if (n == 0) throw ConfigError("pair corpus size must be at least 1");
  std::vector<ScenePair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_pair(master_seed, i, cfg));
  return out;
}

std::vector<std::size_t> ground_truth_map(const CorrespondenceGroup& group, std::size_t a,
                                          std::size_t b, std::size_t grid) {
  const GridTransform inv_a = group.transforms.at(a).inverse();
  const GridTransform& tb = group.transforms.at(b);
  std::vector<std::size_t> gt(grid * grid);
  for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = tb.forward_index(inv_a.forward_index(i, grid), grid);
  return gt;
}

CorrespondenceGroup make_group(const Tensor& base, const std::vector<GridTransform>& transforms) {
  CorrespondenceGroup group;
  for (const auto& t : transforms) {
    group.images.push_back(t.apply(base));
    group.transforms.push_back(t);
  }
  return group;
}

CorrespondenceCorpus build_correspondence_corpus(std::size_t groups, std::size_t images_per_group,
                                                 std::uint64_t seed, const SceneGeometry& geo) {
  if (images_per_group < 2) throw ConfigError("a correspondence group needs at least 2 images");
  CorrespondenceCorpus corpus;
  corpus.grid = geo.grid();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    Rng rng(derive_seed(seed, kGroupStream, gi));
    const Scene base = generate_scene(random_descriptor(rng, geo), geo);
    std::vector<GridTransform> transforms{GridTransform::identity()};
    for (std::size_t i = 1; i < images_per_group; ++i) {
      transforms.push_back(to_transform(kAllAugmentations[uniform_int(rng, 0, 4)]));
    }
    corpus.groups.push_back(make_group(base.image, transforms));
  }
  return corpus;
}

}  // namespace patchpref
