#include <immintrin.h>

#include <algorithm>
#include <limits>

#include "kernel_impl.hpp"

namespace coalesce::kernels::detail {

namespace {

// 32x32 -> 64 multiply of every 32-bit lane by a broadcast constant.
inline __m256i mulhilo8(__m256i a, __m256i m, __m256i& hi) {
    const __m256i even = _mm256_mul_epu32(a, m);
    const __m256i odd = _mm256_mul_epu32(_mm256_srli_epi64(a, 32), m);
    hi = _mm256_blend_epi32(_mm256_srli_epi64(even, 32), odd, 0xAA);
    return _mm256_blend_epi32(even, _mm256_slli_epi64(odd, 32), 0xAA);
}

} // namespace

void philox_blocks_avx2(const std::uint32_t* key_lo, const std::uint32_t* key_hi, std::uint64_t block,
                        std::uint32_t domain, std::size_t n, std::uint32_t* out) {
    const __m256i m0 = _mm256_set1_epi32(static_cast<int>(0xD2511F53u));
    const __m256i m1 = _mm256_set1_epi32(static_cast<int>(0xCD9E8D57u));
    const __m256i w0 = _mm256_set1_epi32(static_cast<int>(0x9E3779B9u));
    const __m256i w1 = _mm256_set1_epi32(static_cast<int>(0xBB67AE85u));
    const __m256i c0 = _mm256_set1_epi32(static_cast<int>(static_cast<std::uint32_t>(block)));
    const __m256i c1 = _mm256_set1_epi32(static_cast<int>(static_cast<std::uint32_t>(block >> 32)));
    const __m256i c2 = _mm256_set1_epi32(static_cast<int>(domain));
    const __m256i c3 = _mm256_setzero_si256();

    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256i k0 = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(key_lo + i));
        __m256i k1 = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(key_hi + i));
        __m256i x0 = c0, x1 = c1, x2 = c2, x3 = c3;
        for (int round = 0; round < 10; ++round) {
            __m256i hi0, hi1;
            const __m256i lo0 = mulhilo8(x0, m0, hi0);
            const __m256i lo1 = mulhilo8(x2, m1, hi1);
            x0 = _mm256_xor_si256(_mm256_xor_si256(hi1, x1), k0);
            x1 = lo1;
            x2 = _mm256_xor_si256(_mm256_xor_si256(hi0, x3), k1);
            x3 = lo0;
            k0 = _mm256_add_epi32(k0, w0);
            k1 = _mm256_add_epi32(k1, w1);
        }
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + i), x0);
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + n + i), x1);
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + 2 * n + i), x2);
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(out + 3 * n + i), x3);
    }
    if (i < n) {
        // Remainder lanes write through a compact temporary laid out for n - i streams.
        const std::size_t rest = n - i;
        std::uint32_t tmp[4 * 8];
        philox_blocks_scalar(key_lo + i, key_hi + i, block, domain, rest, tmp);
        for (std::size_t w = 0; w < 4; ++w) std::copy_n(tmp + w * rest, rest, out + w * n + i);
    }
}

void gasket_step_avx2(const std::uint32_t* slots, const std::uint32_t* words, unsigned shift, std::size_t n,
                      std::uint32_t* pos) {
    const __m256i three = _mm256_set1_epi32(3);
    const __m128i sh = _mm_cvtsi32_si128(static_cast<int>(shift));
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256i p = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(pos + i));
        const __m256i w = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(words + i));
        const __m256i choice = _mm256_and_si256(_mm256_srl_epi32(w, sh), three);
        const __m256i idx = _mm256_add_epi32(_mm256_slli_epi32(p, 2), choice);
        const __m256i next = _mm256_i32gather_epi32(reinterpret_cast<const int*>(slots), idx, 4);
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(pos + i), next);
    }
    gasket_step_scalar(slots, words + i, shift, n - i, pos + i);
}

void alias_step_avx2(const std::uint32_t* threshold, const std::uint32_t* alias, std::uint32_t size,
                     std::int32_t offset, const std::uint32_t* hi, const std::uint32_t* lo, std::size_t n,
                     std::int64_t modulus, std::int64_t* pos) {
    const __m256i vsize = _mm256_set1_epi64x(size);
    const __m128i sign = _mm_set1_epi32(static_cast<int>(0x80000000u));
    const __m256i voff = _mm256_set1_epi64x(offset);
    const __m256i vmod = _mm256_set1_epi64x(modulus);
    const __m256i vmod_m1 = _mm256_set1_epi64x(modulus - 1);
    const __m256i zero = _mm256_setzero_si256();
    const __m256i pack_even = _mm256_setr_epi32(0, 2, 4, 6, 0, 0, 0, 0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256i h = _mm256_cvtepu32_epi64(_mm_loadu_si128(reinterpret_cast<const __m128i*>(hi + i)));
        const __m256i idx64 = _mm256_srli_epi64(_mm256_mul_epu32(h, vsize), 32);
        const __m128i thr = _mm256_i64gather_epi32(reinterpret_cast<const int*>(threshold), idx64, 4);
        const __m128i ali = _mm256_i64gather_epi32(reinterpret_cast<const int*>(alias), idx64, 4);
        const __m128i coin = _mm_loadu_si128(reinterpret_cast<const __m128i*>(lo + i));
        const __m128i keep = _mm_cmpgt_epi32(_mm_xor_si128(thr, sign), _mm_xor_si128(coin, sign));
        const __m128i idx32 = _mm256_castsi256_si128(_mm256_permutevar8x32_epi32(idx64, pack_even));
        const __m128i pick = _mm_blendv_epi8(ali, idx32, keep);
        const __m256i step = _mm256_sub_epi64(_mm256_cvtepu32_epi64(pick), voff);
        __m256i p = _mm256_add_epi64(_mm256_loadu_si256(reinterpret_cast<const __m256i*>(pos + i)), step);
        if (modulus > 0) {
            p = _mm256_add_epi64(p, _mm256_and_si256(_mm256_cmpgt_epi64(zero, p), vmod));
            p = _mm256_sub_epi64(p, _mm256_and_si256(_mm256_cmpgt_epi64(p, vmod_m1), vmod));
        }
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(pos + i), p);
    }
    alias_step_scalar(threshold, alias, size, offset, hi + i, lo + i, n - i, modulus, pos + i);
}

double directed_hausdorff_sq_avx2(const double* ax, const double* ay, std::size_t na, const double* bx,
                                  const double* by, std::size_t nb, double wy) {
    const __m256d vw = _mm256_set1_pd(wy);
    double worst = 0.0;
    for (std::size_t i = 0; i < na; ++i) {
        const __m256d px = _mm256_set1_pd(ax[i]);
        const __m256d py = _mm256_set1_pd(ay[i]);
        __m256d vbest = _mm256_set1_pd(std::numeric_limits<double>::infinity());
        std::size_t j = 0;
        for (; j + 4 <= nb; j += 4) {
            const __m256d dx = _mm256_sub_pd(px, _mm256_loadu_pd(bx + j));
            const __m256d dy = _mm256_sub_pd(py, _mm256_loadu_pd(by + j));
            const __m256d d = _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(vw, _mm256_mul_pd(dy, dy)));
            vbest = _mm256_min_pd(vbest, d);
        }
        alignas(32) double lanes[4];
        _mm256_store_pd(lanes, vbest);
        double best = std::min(std::min(lanes[0], lanes[1]), std::min(lanes[2], lanes[3]));
        for (; j < nb; ++j) {
            const double dx = ax[i] - bx[j];
            const double dy = ay[i] - by[j];
            best = std::min(best, dx * dx + wy * (dy * dy));
        }
        worst = std::max(worst, best);
    }
    return worst;
}

} // namespace coalesce::kernels::detail
