#pragma once

#include <cstddef>
#include <cstdint>

namespace coalesce::kernels::detail {

void philox_blocks_scalar(const std::uint32_t* key_lo, const std::uint32_t* key_hi, std::uint64_t block,
                          std::uint32_t domain, std::size_t n, std::uint32_t* out);
void gasket_step_scalar(const std::uint32_t* slots, const std::uint32_t* words, unsigned shift, std::size_t n,
                        std::uint32_t* pos);
void alias_step_scalar(const std::uint32_t* threshold, const std::uint32_t* alias, std::uint32_t size,
                       std::int32_t offset, const std::uint32_t* hi, const std::uint32_t* lo, std::size_t n,
                       std::int64_t modulus, std::int64_t* pos);
double directed_hausdorff_sq_scalar(const double* ax, const double* ay, std::size_t na, const double* bx,
                                    const double* by, std::size_t nb, double wy);

#if defined(COALESCE_BUILD_AVX2)
void philox_blocks_avx2(const std::uint32_t* key_lo, const std::uint32_t* key_hi, std::uint64_t block,
                        std::uint32_t domain, std::size_t n, std::uint32_t* out);
void gasket_step_avx2(const std::uint32_t* slots, const std::uint32_t* words, unsigned shift, std::size_t n,
                      std::uint32_t* pos);
void alias_step_avx2(const std::uint32_t* threshold, const std::uint32_t* alias, std::uint32_t size,
                     std::int32_t offset, const std::uint32_t* hi, const std::uint32_t* lo, std::size_t n,
                     std::int64_t modulus, std::int64_t* pos);
double directed_hausdorff_sq_avx2(const double* ax, const double* ay, std::size_t na, const double* bx,
                                  const double* by, std::size_t nb, double wy);
#endif

} // namespace coalesce::kernels::detail
