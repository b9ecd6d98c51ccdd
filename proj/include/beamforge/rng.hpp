#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "beamforge/common.hpp"

namespace beamforge {

// Independent generator for sample `index` of a run seeded with `seed`, so that
// batches can be produced in any order with identical results.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index, std::uint32_t domain = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      0x5ce7a210u ^ domain};
    return std::mt19937_64(seq);
}

// Matrix with i.i.d. CN(0, variance) entries.
template <typename Rng>
cmat complex_gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double variance = 1.0)
{
    std::normal_distribution<double> normal(0.0, std::sqrt(variance / 2.0));
    cmat h(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            const double re = normal(rng);
            const double im = normal(rng);
            h(r, c) = cplx(re, im);
        }
    }
    return h;
}

} // namespace beamforge
