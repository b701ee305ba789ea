#include <cstring>
#include <vector>

#include "coalesce/gasket.hpp"
#include "coalesce/kernels.hpp"
#include "coalesce/rng.hpp"
#include "coalesce/samplers.hpp"
#include "doctest.h"

using namespace coalesce;
using namespace coalesce::kernels;

namespace {

std::vector<std::uint32_t> random_words(std::size_t n, std::uint64_t seed) {
    RngStream rng(StreamId{seed, 0, 0}, RngDomain::General);
    std::vector<std::uint32_t> w(n);
    for (auto& x : w) x = rng.next_u32();
    return w;
}

} // namespace

TEST_CASE("scalar philox kernel agrees with the reference function") {
    const auto lo = random_words(37, 1), hi = random_words(37, 2);
    std::vector<std::uint32_t> out(4 * 37);
    scalar_table().philox_blocks(lo.data(), hi.data(), 123456789012ULL, 3, 37, out.data());
    for (std::size_t i = 0; i < 37; ++i) {
        const auto ref = stream_block({lo[i], hi[i]}, RngDomain::Continuum, 123456789012ULL);
        for (int w = 0; w < 4; ++w) CHECK(out[w * 37 + i] == ref[w]);
    }
}

TEST_CASE("AVX2 kernels are bit-identical to the scalar reference") {
    const auto avx = avx2_table();
    if (!avx) {
        MESSAGE("AVX2 variant unavailable on this build or CPU; equivalence not exercised");
        return;
    }
    const auto& sc = scalar_table();
    // Sizes straddle the 8-lane width to cover the scalar tails.
    for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 31u, 64u, 1001u}) {
        CAPTURE(n);
        const auto lo = random_words(n, 10 + n), hi = random_words(n, 20 + n);
        for (std::uint64_t block : {0ULL, 1ULL, 0xffffffffULL, 0x123456789abcULL}) {
            std::vector<std::uint32_t> a(4 * n), b(4 * n);
            sc.philox_blocks(lo.data(), hi.data(), block, 1, n, a.data());
            avx->philox_blocks(lo.data(), hi.data(), block, 1, n, b.data());
            CHECK(a == b);
        }

        const auto g = build_gasket_graph(4, 1);
        const auto slots = g.neighbor_slots();
        auto pos_a = random_words(n, 30 + n);
        for (auto& p : pos_a) p %= static_cast<std::uint32_t>(g.vertex_count());
        auto pos_b = pos_a;
        const auto words = random_words(n, 40 + n);
        for (unsigned shift = 0; shift < 32; shift += 2) {
            sc.gasket_step(slots.data(), words.data(), shift, n, pos_a.data());
            avx->gasket_step(slots.data(), words.data(), shift, n, pos_b.data());
        }
        CHECK(pos_a == pos_b);

        const auto law = LatticeStepLaw::make(1.5, 0.5, 40);
        for (std::int64_t modulus : {0LL, 64LL, 65536LL}) {
            std::vector<std::int64_t> xa(n), xb;
            for (std::size_t i = 0; i < n; ++i) xa[i] = modulus ? static_cast<std::int64_t>(i) % modulus : -5 + std::int64_t(i);
            xb = xa;
            for (int rep = 0; rep < 5; ++rep) {
                const auto h = random_words(n, 50 + rep), l = random_words(n, 60 + rep);
                sc.alias_step(law.alias_threshold().data(), law.alias_index().data(), law.size(), law.max_jump(), h.data(),
                              l.data(), n, modulus, xa.data());
                avx->alias_step(law.alias_threshold().data(), law.alias_index().data(), law.size(), law.max_jump(), h.data(),
                                l.data(), n, modulus, xb.data());
            }
            CHECK(xa == xb);
        }

        RngStream rng(StreamId{70, n, 0}, RngDomain::General);
        std::vector<double> ax(n), ay(n), bx(n + 3), by(n + 3);
        for (auto* v : {&ax, &ay, &bx, &by})
            for (auto& x : *v) x = rng.uniform01() * 4.0 - 2.0;
        if (n > 0) {
            for (double wy : {1.0, 3.0}) {
                const double s = sc.directed_hausdorff_sq(ax.data(), ay.data(), n, bx.data(), by.data(), n + 3, wy);
                const double v = avx->directed_hausdorff_sq(ax.data(), ay.data(), n, bx.data(), by.data(), n + 3, wy);
                CHECK(std::memcmp(&s, &v, sizeof s) == 0);
            }
        }
    }
}

TEST_CASE("kernel selection") {
    CHECK(select(Isa::Scalar));
    CHECK(active().isa == Isa::Scalar);
    if (avx2_table()) {
        CHECK(select(Isa::Avx2));
        CHECK(active().isa == Isa::Avx2);
    }
    CHECK(std::string(isa_name(Isa::Scalar)) == "scalar");
}

TEST_CASE("walker batches agree across kernels") {
    if (!avx2_table()) return;
    const WalkModel model = LatticeWalkModel::circle(std::make_shared<const LatticeStepLaw>(LatticeStepLaw::make(1.5, 0.5, 100)), 1000);
    std::vector<std::int64_t> end[2];
    for (int pass = 0; pass < 2; ++pass) {
        select(pass == 0 ? Isa::Scalar : Isa::Avx2);
        WalkerBatch batch(model);
        for (std::uint64_t i = 0; i < 45; ++i) batch.add(StreamId{5, i, 0}.key(), static_cast<std::int64_t>(i * 7));
        for (std::uint64_t t = 0; t < 300; ++t) batch.step(t);
        for (std::size_t i = 0; i < batch.size(); ++i) end[pass].push_back(batch.state(i));
    }
    select(Isa::Avx2);
    CHECK(end[0] == end[1]);
}
