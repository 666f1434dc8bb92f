// Sampling mathematics: the false-positive bound for availability sampling,
// sample-count selection, adversarial withholding patterns, and per-node
// random sample sets.

#pragma once

#include <cstdint>
#include <vector>

#include "das/bytes.hpp"
#include "das/grid.hpp"

namespace das {

struct SamplingParams {
    std::uint32_t samples = 73;  // s
    GridParams grid;
};

struct WithholdingPattern {
    std::vector<CellIndex> withheld;  // sorted by ordinal
};

// Upper bound on the probability that s samples all miss the maximal
// withholding pattern: prod_{i=0}^{s-1} (1 - (k+1)^2 / (n^2 - i)).
// Accumulated in log space so deep parameter sweeps stay accurate.
double false_positive_bound(const SamplingParams& p);

// Smallest s with false_positive_bound(s) <= target.
std::uint32_t min_samples_for(double target, const GridParams& grid);

// The (k+1) x (k+1) cross product of the anchor rows and columns: the
// largest cell set whose absence defeats reconstruction.
WithholdingPattern max_withholding_pattern(const std::vector<std::uint32_t>& anchor_rows,
                                           const std::vector<std::uint32_t>& anchor_cols,
                                           const GridParams& grid);

// s distinct uniformly random cells. Deterministic under a fixed seed;
// callers give each node a fresh seed per slot.
std::vector<CellIndex> random_sample_set(const Hash32& rng_seed, const SamplingParams& p);

}  // namespace das
