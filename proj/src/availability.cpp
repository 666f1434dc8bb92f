#include "das/availability.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "das/rng.hpp"

namespace das {

double false_positive_bound(const SamplingParams& p) {
    p.grid.validate();
    const double n2 = static_cast<double>(p.grid.n()) * p.grid.n();
    const double withheld = static_cast<double>(p.grid.k + 1) * (p.grid.k + 1);
    const std::uint64_t max_s =
        p.grid.cell_count() - static_cast<std::uint64_t>(p.grid.k + 1) * (p.grid.k + 1);
    if (p.samples > max_s) {
        throw std::invalid_argument("false_positive_bound: s exceeds available cell count");
    }
    double log_sum = 0.0;
    for (std::uint32_t i = 0; i < p.samples; ++i) {
        double factor = 1.0 - withheld / (n2 - static_cast<double>(i));
        if (factor <= 0.0) return 0.0;  // last draws can only hit withheld cells
        log_sum += std::log(factor);
    }
    return std::exp(log_sum);
}

std::uint32_t min_samples_for(double target, const GridParams& grid) {
    grid.validate();
    if (target <= 0.0) throw std::invalid_argument("min_samples_for: unreachable target");
    if (target >= 1.0) return 0;
    const double n2 = static_cast<double>(grid.n()) * grid.n();
    const double withheld = static_cast<double>(grid.k + 1) * (grid.k + 1);
    const std::uint64_t max_s =
        grid.cell_count() - static_cast<std::uint64_t>(grid.k + 1) * (grid.k + 1);
    const double log_target = std::log(target);
    double log_sum = 0.0;
    for (std::uint32_t s = 1; s <= max_s; ++s) {
        double factor = 1.0 - withheld / (n2 - static_cast<double>(s - 1));
        log_sum += std::log(factor);
        if (log_sum <= log_target) return s;
    }
    // Sampling every obtainable cell leaves zero false-positive mass.
    return static_cast<std::uint32_t>(max_s + 1);
}

WithholdingPattern max_withholding_pattern(const std::vector<std::uint32_t>& anchor_rows,
                                           const std::vector<std::uint32_t>& anchor_cols,
                                           const GridParams& grid) {
    grid.validate();
    const std::uint32_t want = grid.k + 1;
    auto check_anchors = [&](const std::vector<std::uint32_t>& v, const char* what) {
        if (v.size() != want) {
            throw std::invalid_argument(std::string("max_withholding_pattern: need k+1 ") + what);
        }
        std::vector<std::uint32_t> sorted = v;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw std::invalid_argument(std::string("max_withholding_pattern: duplicate ") + what);
        }
        if (sorted.back() >= grid.n()) {
            throw std::out_of_range(std::string("max_withholding_pattern: ") + what +
                                    " out of range");
        }
        return sorted;
    };
    std::vector<std::uint32_t> rows = check_anchors(anchor_rows, "anchor rows");
    std::vector<std::uint32_t> cols = check_anchors(anchor_cols, "anchor cols");

    WithholdingPattern pattern;
    pattern.withheld.reserve(static_cast<std::size_t>(want) * want);
    for (std::uint32_t r : rows) {
        for (std::uint32_t c : cols) pattern.withheld.push_back(CellIndex{r, c});
    }
    return pattern;
}

std::vector<CellIndex> random_sample_set(const Hash32& rng_seed, const SamplingParams& p) {
    p.grid.validate();
    const std::uint64_t total = p.grid.cell_count();
    if (p.samples > total) {
        throw std::invalid_argument("random_sample_set: more samples than cells");
    }
    DetRng rng(rng_seed);
    std::vector<std::uint32_t> ordinals;
    if (static_cast<std::uint64_t>(p.samples) * 3 >= total) {
        // Dense request: partial Fisher-Yates beats rejection.
        std::vector<std::uint32_t> all(total);
        for (std::uint64_t i = 0; i < total; ++i) all[i] = static_cast<std::uint32_t>(i);
        for (std::uint32_t i = 0; i < p.samples; ++i) {
            std::uint64_t j = i + rng.uniform_below(total - i);
            std::swap(all[i], all[j]);
        }
        ordinals.assign(all.begin(), all.begin() + p.samples);
    } else {
        std::unordered_set<std::uint32_t> seen;
        while (ordinals.size() < p.samples) {
            auto v = static_cast<std::uint32_t>(rng.uniform_below(total));
            if (seen.insert(v).second) ordinals.push_back(v);
        }
    }
    std::sort(ordinals.begin(), ordinals.end());
    std::vector<CellIndex> out;
    out.reserve(ordinals.size());
    for (std::uint32_t ord : ordinals) out.push_back(cell_from_ordinal(ord, p.grid));
    return out;
}

}  // namespace das
