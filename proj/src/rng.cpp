#include "coalesce/rng.hpp"

#include <cmath>

namespace coalesce {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline std::uint32_t mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi) noexcept {
    const std::uint64_t p = std::uint64_t{a} * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    return static_cast<std::uint32_t>(p);
}

} // namespace

PhiloxBlock philox4x32_10(const PhiloxBlock& counter, PhiloxKey key) noexcept {
    PhiloxBlock x = counter;
    std::uint32_t k0 = key.lo;
    std::uint32_t k1 = key.hi;
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, hi1;
        const std::uint32_t lo0 = mulhilo(kPhiloxM0, x[0], hi0);
        const std::uint32_t lo1 = mulhilo(kPhiloxM1, x[2], hi1);
        x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
        k0 += kPhiloxW0;
        k1 += kPhiloxW1;
    }
    return x;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

PhiloxKey StreamId::key() const noexcept {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ replicate);
    h = splitmix64(h ^ stream);
    return {static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
}

std::uint32_t RngStream::next_u32() {
    if (used_ == 4) {
        buffer_ = stream_block(key_, domain_, block_++);
        used_ = 0;
    }
    return buffer_[used_++];
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return lo | (hi << 32);
}

double RngStream::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform_open01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_below(std::uint64_t n) {
    // Lemire's multiply-shift with rejection of the biased low region.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (low < threshold) {
            x = next_u64();
            m = static_cast<__uint128_t>(x) * n;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double RngStream::exponential() { return -std::log(uniform_open01()); }

} // namespace coalesce
