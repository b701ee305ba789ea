#include <atomic>
#include <cstdlib>
#include <cstring>

#include "coalesce/kernels.hpp"
#include "kernel_impl.hpp"

namespace coalesce::kernels {

namespace {

constexpr KernelTable kScalar{Isa::Scalar, detail::philox_blocks_scalar, detail::gasket_step_scalar,
                              detail::alias_step_scalar, detail::directed_hausdorff_sq_scalar};

#if defined(COALESCE_BUILD_AVX2)
constexpr KernelTable kAvx2{Isa::Avx2, detail::philox_blocks_avx2, detail::gasket_step_avx2, detail::alias_step_avx2,
                            detail::directed_hausdorff_sq_avx2};
#endif

bool cpu_has_avx2() noexcept {
#if defined(COALESCE_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

const KernelTable* best() noexcept {
    // COALESCE_ISA=scalar forces the reference kernels.
    if (const char* env = std::getenv("COALESCE_ISA"); env != nullptr && std::strcmp(env, "scalar") == 0) return &kScalar;
#if defined(COALESCE_BUILD_AVX2)
    if (cpu_has_avx2()) return &kAvx2;
#endif
    return &kScalar;
}

std::atomic<const KernelTable*> g_active{nullptr};

} // namespace

const char* isa_name(Isa isa) noexcept {
    switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    }
    return "unknown";
}

const KernelTable& scalar_table() noexcept { return kScalar; }

std::optional<KernelTable> avx2_table() noexcept {
#if defined(COALESCE_BUILD_AVX2)
    if (cpu_has_avx2()) return kAvx2;
#endif
    return std::nullopt;
}

const KernelTable& active() noexcept {
    const KernelTable* t = g_active.load(std::memory_order_acquire);
    if (t == nullptr) {
        t = best();
        g_active.store(t, std::memory_order_release);
    }
    return *t;
}

bool select(Isa isa) noexcept {
    if (isa == Isa::Scalar) {
        g_active.store(&kScalar, std::memory_order_release);
        return true;
    }
#if defined(COALESCE_BUILD_AVX2)
    if (cpu_has_avx2()) {
        g_active.store(&kAvx2, std::memory_order_release);
        return true;
    }
#endif
    return false;
}

} // namespace coalesce::kernels
