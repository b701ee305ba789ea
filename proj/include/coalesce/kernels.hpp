#pragma once

// Data-parallel inner loops of the particle engine.
//
// Each kernel has a portable scalar reference and, where the build and the
// CPU allow it, an AVX2 variant. Variants are selected once at runtime and
// must produce bit-identical results; tests/unit/test_kernels.cpp checks this.

#include <cstddef>
#include <cstdint>
#include <optional>

namespace coalesce::kernels {

enum class Isa { Scalar, Avx2 };

const char* isa_name(Isa isa) noexcept;

struct KernelTable {
    Isa isa;

    // Philox4x32-10 blocks for n streams at one shared block index. Word w of
    // lane i is written to out[w * n + i].
    void (*philox_blocks)(const std::uint32_t* key_lo, const std::uint32_t* key_hi, std::uint64_t block,
                          std::uint32_t domain, std::size_t n, std::uint32_t* out);

    // pos[i] = slots[4 * pos[i] + ((words[i] >> shift) & 3)].
    void (*gasket_step)(const std::uint32_t* slots, const std::uint32_t* words, unsigned shift, std::size_t n,
                        std::uint32_t* pos);

    // Alias-table lattice step: index = (hi * size) >> 32, kept iff lo < threshold[index],
    // otherwise alias[index]; pos += index - offset, then reduced into [0, modulus)
    // when modulus > 0. Requires offset <= modulus for the reduction.
    void (*alias_step)(const std::uint32_t* threshold, const std::uint32_t* alias, std::uint32_t size,
                       std::int32_t offset, const std::uint32_t* hi, const std::uint32_t* lo, std::size_t n,
                       std::int64_t modulus, std::int64_t* pos);

    // max over a of min over b of (ax - bx)^2 + wy (ay - by)^2.
    double (*directed_hausdorff_sq)(const double* ax, const double* ay, std::size_t na, const double* bx,
                                    const double* by, std::size_t nb, double wy);
};

const KernelTable& scalar_table() noexcept;
std::optional<KernelTable> avx2_table() noexcept; // empty when not built or not supported by the CPU

// Table used by the simulator. Defaults to the widest supported ISA.
const KernelTable& active() noexcept;
// Force an ISA (tests and benchmarking); returns false if unavailable.
bool select(Isa isa) noexcept;

} // namespace coalesce::kernels
