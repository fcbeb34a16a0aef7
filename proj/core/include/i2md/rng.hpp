#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace i2md {

using Rng = std::mt19937_64;

/// SplitMix64-style mixing of (seed, stream, index) into an independent seed,
/// so per-sequence and per-modality generators do not depend on draw order.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

std::string save_rng_state(const Rng& rng);
void restore_rng_state(Rng& rng, const std::string& state);

double uniform(Rng& rng, double lo, double hi);
double normal(Rng& rng, double mean, double stddev);

}  // namespace i2md
