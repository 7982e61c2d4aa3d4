#pragma once

#include <cstdint>
#include <random>

#include "patchpref/tensor.hpp"

namespace patchpref {

using Rng = std::mt19937_64;

/// Mixes a master seed with stream/index tags into an independent seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index = 0);

double uniform(Rng& rng, double lo, double hi);
/// Uniform integer in [lo, hi].
std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi);
Tensor standard_normal(Rng& rng, Shape shape);

}  // namespace patchpref
