#include <algorithm>
#include <limits>

#include "coalesce/kernels.hpp"
#include "coalesce/rng.hpp"
#include "kernel_impl.hpp"

namespace coalesce::kernels::detail {

void philox_blocks_scalar(const std::uint32_t* key_lo, const std::uint32_t* key_hi, std::uint64_t block,
                          std::uint32_t domain, std::size_t n, std::uint32_t* out) {
    const PhiloxBlock counter = {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32), domain, 0u};
    for (std::size_t i = 0; i < n; ++i) {
        const PhiloxBlock r = philox4x32_10(counter, {key_lo[i], key_hi[i]});
        for (std::size_t w = 0; w < 4; ++w) out[w * n + i] = r[w];
    }
}

void gasket_step_scalar(const std::uint32_t* slots, const std::uint32_t* words, unsigned shift, std::size_t n,
                        std::uint32_t* pos) {
    for (std::size_t i = 0; i < n; ++i) pos[i] = slots[4 * std::size_t{pos[i]} + ((words[i] >> shift) & 3u)];
}

void alias_step_scalar(const std::uint32_t* threshold, const std::uint32_t* alias, std::uint32_t size,
                       std::int32_t offset, const std::uint32_t* hi, const std::uint32_t* lo, std::size_t n,
                       std::int64_t modulus, std::int64_t* pos) {
    for (std::size_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::uint32_t>((std::uint64_t{hi[i]} * size) >> 32);
        const std::uint32_t pick = lo[i] < threshold[idx] ? idx : alias[idx];
        std::int64_t p = pos[i] + static_cast<std::int64_t>(pick) - offset;
        if (modulus > 0) {
            if (p < 0) p += modulus;
            if (p >= modulus) p -= modulus;
        }
        pos[i] = p;
    }
}

double directed_hausdorff_sq_scalar(const double* ax, const double* ay, std::size_t na, const double* bx,
                                    const double* by, std::size_t nb, double wy) {
    double worst = 0.0;
    for (std::size_t i = 0; i < na; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < nb; ++j) {
            const double dx = ax[i] - bx[j];
            const double dy = ay[i] - by[j];
            const double d = dx * dx + wy * (dy * dy);
            best = std::min(best, d);
        }
        worst = std::max(worst, best);
    }
    return worst;
}

} // namespace coalesce::kernels::detail
