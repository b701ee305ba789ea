#include <set>

#include "coalesce/rng.hpp"
#include "doctest.h"

using namespace coalesce;

// Known-answer vectors from the Random123 distribution (kat_vectors, philox4x32_10).
TEST_CASE("philox4x32-10 known answers") {
    CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == PhiloxBlock{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          PhiloxBlock{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          PhiloxBlock{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("stream keys separate seeds, replicates and streams") {
    std::set<PhiloxKey> keys;
    for (std::uint64_t s = 0; s < 4; ++s)
        for (std::uint64_t r = 0; r < 4; ++r)
            for (std::uint64_t i = 0; i < 4; ++i) keys.insert(StreamId{s, r, i}.key());
    CHECK(keys.size() == 64);
    CHECK(StreamId{1, 2, 3}.key() == StreamId{1, 2, 3}.key());
}

TEST_CASE("domains give different blocks for one key") {
    const PhiloxKey k = StreamId{7, 0, 0}.key();
    CHECK(stream_block(k, RngDomain::GasketWalk, 0) != stream_block(k, RngDomain::LatticeWalk, 0));
    CHECK(stream_block(k, RngDomain::GasketWalk, 0) != stream_block(k, RngDomain::GasketWalk, 1));
}

TEST_CASE("sequential stream is reproducible and in range") {
    RngStream a(StreamId{11, 0, 0}, RngDomain::General), b(StreamId{11, 0, 0}, RngDomain::General);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = a.uniform01();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        CHECK(u == b.uniform01());
        sum += u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
    std::uint64_t counts[7] = {};
    for (int i = 0; i < 70000; ++i) ++counts[a.uniform_below(7)];
    for (auto c : counts) CHECK(c == doctest::Approx(10000).epsilon(0.05));
    for (int i = 0; i < 1000; ++i) {
        const double u = a.uniform_open01();
        CHECK(u > 0.0);
        CHECK(u < 1.0);
        CHECK(a.exponential() >= 0.0);
    }
}

TEST_CASE("splitmix64 is a fixed function") {
    CHECK(splitmix64(0) == splitmix64(0));
    CHECK(splitmix64(0) != splitmix64(1));
}
