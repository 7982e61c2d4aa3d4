#include "patchpref/patch_match.hpp"

#include <algorithm>
#include <cmath>

#include "patchpref/error.hpp"

namespace patchpref {
namespace {

constexpr std::size_t kQueryBlock = 32;
constexpr double kTieSlack = 1e-10;

void check_maps(const Tensor& query, const Tensor& reference) {
  if (query.rank() != 3 || reference.rank() != 3) {
    throw ContractError("feature maps must be D×H×W, got " + shape_string(query.shape()) + " and " +
                        shape_string(reference.shape()));
  }
  if (query.dim(0) != reference.dim(0)) {
    throw ContractError("feature dimension mismatch: " + std::to_string(query.dim(0)) + " vs " +
                        std::to_string(reference.dim(0)));
  }
}

// D×H×W → (H·W)×D with each row scaled to unit norm (guarded by εn).
std::vector<double> unit_rows(const Tensor& map) {
  const std::size_t d = map.dim(0), n = map.dim(1) * map.dim(2);
  std::vector<double> rows(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t k = 0; k < d; ++k) ss += map[k * n + i] * map[k * n + i];
    const double inv = 1.0 / std::max(std::sqrt(ss), kNormEps);
    for (std::size_t k = 0; k < d; ++k) rows[i * d + k] = map[k * n + i] * inv;
  }
  return rows;
}

std::vector<double> cell(const Tensor& map, std::size_t i) {
  const std::size_t d = map.dim(0), n = map.dim(1) * map.dim(2);
  std::vector<double> v(d);
  for (std::size_t k = 0; k < d; ++k) v[k] = map[k * n + i];
  return v;
}

}  // namespace

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ContractError("cosine length mismatch: " + std::to_string(u.size()) + " vs " +
                        std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  return dot / (std::max(std::sqrt(uu), kNormEps) * std::max(std::sqrt(vv), kNormEps));
}

PatchQualityMap patch_quality(const Tensor& query, const Tensor& reference) {
  check_maps(query, reference);
  const std::size_t d = query.dim(0);
  const std::size_t nq = query.dim(1) * query.dim(2);
  const std::size_t nr = reference.dim(1) * reference.dim(2);
  const auto q = unit_rows(query);
  const auto r = unit_rows(reference);
  PatchQualityMap out{Tensor({query.dim(1), query.dim(2)}), std::vector<std::size_t>(nq), {}, -1};
  std::vector<double> sim(kQueryBlock * nr);
  for (std::size_t i0 = 0; i0 < nq; i0 += kQueryBlock) {
    const std::size_t rows = std::min(kQueryBlock, nq - i0);
    kernels::gemm_nt(rows, nr, d, q.data() + i0 * d, r.data(), sim.data(), false);
    for (std::size_t i = 0; i < rows; ++i) {
      const double* row = sim.data() + i * nr;
      const double top = *std::max_element(row, row + nr);
      // The GEMM's summation order differs between tiles, so near-equal scores are
      // rescored with cosine() to make ties resolve exactly as in the naive loop.
      const auto u = cell(query, i0 + i);
      double best = -2.0;
      for (std::size_t j = 0; j < nr; ++j) {
        if (row[j] < top - kTieSlack) continue;
        const double c = cosine(u, cell(reference, j));
        if (c > best) {
          best = c;
          out.argmax[i0 + i] = j;
        }
      }
      out.raw[i0 + i] = best;
    }
  }
  return out;
}

PatchQualityMap patch_quality_naive(const Tensor& query, const Tensor& reference) {
  check_maps(query, reference);
  const std::size_t nq = query.dim(1) * query.dim(2);
  const std::size_t nr = reference.dim(1) * reference.dim(2);
  PatchQualityMap out{Tensor({query.dim(1), query.dim(2)}), std::vector<std::size_t>(nq), {}, -1};
  for (std::size_t i = 0; i < nq; ++i) {
    const auto u = cell(query, i);
    double best = -2.0;
    for (std::size_t j = 0; j < nr; ++j) {
      const double c = cosine(u, cell(reference, j));
      if (c > best) {
        best = c;
        out.argmax[i] = j;
      }
    }
    out.raw[i] = best;
  }
  return out;
}

Tensor heatmap(const Tensor& query, std::size_t h, std::size_t w, const Tensor& reference) {
  check_maps(query, reference);
  if (h >= query.dim(1) || w >= query.dim(2)) {
    throw ContractError("patch (" + std::to_string(h) + "," + std::to_string(w) + ") outside " +
                        std::to_string(query.dim(1)) + "x" + std::to_string(query.dim(2)) + " grid");
  }
  const auto u = cell(query, h * query.dim(2) + w);
  Tensor z({reference.dim(1), reference.dim(2)});
  for (std::size_t j = 0; j < z.size(); ++j) z[j] = cosine(u, cell(reference, j));
  return z;
}

WeightNorm parse_weight_norm(const std::string& name) {
  if (name == "affine") return WeightNorm::kAffine;
  if (name == "minmax") return WeightNorm::kMinMax;
  throw ConfigError("unknown weight normalization '" + name + "' (expected affine or minmax)");
}

std::string weight_norm_name(WeightNorm norm) {
  return norm == WeightNorm::kAffine ? "affine" : "minmax";
}

Tensor normalize_quality(const Tensor& raw, WeightNorm norm, const Tensor* mask) {
  Tensor out = raw;
  if (norm == WeightNorm::kAffine) {
    for (auto& v : out.values()) v = std::clamp((v + 1.0) / 2.0, 0.0, 1.0);
    return out;
  }
  if (mask && mask->shape() != raw.shape()) {
    throw ContractError("mask shape " + shape_string(mask->shape()) + " vs quality map " +
                        shape_string(raw.shape()));
  }
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (mask && (*mask)[i] <= 0.5) continue;
    lo = any ? std::min(lo, raw[i]) : raw[i];
    hi = any ? std::max(hi, raw[i]) : raw[i];
    any = true;
  }
  for (auto& v : out.values()) {
    v = (!any || hi - lo <= kNormEps) ? 1.0 : std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  }
  return out;
}

Tensor normalize_upsample(const Tensor& raw, std::size_t image_h, std::size_t image_w, bool invert) {
  Tensor n = normalize_quality(raw, WeightNorm::kAffine);
  if (invert)
    for (auto& v : n.values()) v = 1.0 - v;
  return upsample_nearest(n, image_h, image_w);
}

Tensor weight_map(const Tensor& raw, std::size_t image_h, std::size_t image_w, bool invert,
                  WeightNorm norm, const Tensor* mask, double outside) {
  Tensor n = normalize_quality(raw, norm, mask);
  if (mask) {
    for (std::size_t i = 0; i < n.size(); ++i)
      if ((*mask)[i] <= 0.5) n[i] = outside;
  }
  if (invert)
    for (auto& v : n.values()) v = 1.0 - v;
  return upsample_nearest(n, image_h, image_w);
}

double s_patch_features(const CorrespondenceCorpus& corpus,
                        const std::vector<std::vector<Tensor>>& features) {
  if (corpus.groups.empty()) throw ContractError("s_patch needs a nonempty corpus");
  std::size_t hits = 0, total = 0;
  for (std::size_t g = 0; g < corpus.groups.size(); ++g) {
    const auto& group = corpus.groups[g];
    for (std::size_t a = 0; a < group.images.size(); ++a) {
      for (std::size_t b = 0; b < group.images.size(); ++b) {
        if (a == b) continue;
        const auto gt = ground_truth_map(group, a, b, corpus.grid);
        const auto match = patch_quality(features[g][a], features[g][b]);
        for (std::size_t p = 0; p < gt.size(); ++p) hits += match.argmax[p] == gt[p] ? 1 : 0;
        total += gt.size();
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

double s_patch(const CorrespondenceCorpus& corpus, const FeatureFn& features) {
  std::vector<std::vector<Tensor>> feats;
  for (const auto& group : corpus.groups) {
    feats.emplace_back();
    for (const auto& img : group.images) feats.back().push_back(features(img));
  }
  return s_patch_features(corpus, feats);
}

double pairwise_auc(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) throw ContractError("AUC needs both classes");
  double wins = 0.0;
  for (double p : positives)
    for (double n : negatives) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / (static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

}  // namespace patchpref
