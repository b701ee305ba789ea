#pragma once

// Counter-based random streams.
//
// Every random quantity in the simulator is a pure function of
// (master seed, replicate, stream id, domain, block index) through the
// Philox4x32-10 bijection, so paths can be regenerated in any order and
// particles keyed by their starting location share randomness across
// coupled systems.

#include <array>
#include <cstdint>

namespace coalesce {

using PhiloxBlock = std::array<std::uint32_t, 4>;

struct PhiloxKey {
    std::uint32_t lo = 0;
    std::uint32_t hi = 0;
    auto operator<=>(const PhiloxKey&) const = default;
};

PhiloxBlock philox4x32_10(const PhiloxBlock& counter, PhiloxKey key) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Domain tags occupy the third counter word so that different uses of one
// stream never overlap.
enum class RngDomain : std::uint32_t {
    GasketWalk = 1,
    LatticeWalk = 2,
    Continuum = 3,
    InitialSet = 4,
    General = 5,
};

struct StreamId {
    std::uint64_t seed = 0;
    std::uint64_t replicate = 0;
    std::uint64_t stream = 0;

    PhiloxKey key() const noexcept;
};

inline PhiloxBlock stream_block(PhiloxKey key, RngDomain domain, std::uint64_t block) noexcept {
    return philox4x32_10({static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                          static_cast<std::uint32_t>(domain), 0u},
                         key);
}

// Sequential view over one (key, domain) stream.
class RngStream {
public:
    RngStream() = default;
    RngStream(StreamId id, RngDomain domain) : key_(id.key()), domain_(domain) {}
    RngStream(PhiloxKey key, RngDomain domain) : key_(key), domain_(domain) {}

    std::uint32_t next_u32();
    std::uint64_t next_u64();
    // Uniform on [0, 1) with 53 random bits.
    double uniform01();
    // Uniform on (0, 1).
    double uniform_open01();
    // Uniform integer in [0, n) by rejection; n > 0.
    std::uint64_t uniform_below(std::uint64_t n);
    double exponential();

    PhiloxKey key() const noexcept { return key_; }

private:
    PhiloxKey key_{};
    RngDomain domain_ = RngDomain::General;
    std::uint64_t block_ = 0;
    PhiloxBlock buffer_{};
    int used_ = 4;
};

} // namespace coalesce
