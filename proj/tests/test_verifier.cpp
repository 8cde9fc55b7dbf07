#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "reachcas/rng.hpp"
#include "reachcas/verifier.hpp"
#include "sha256.hpp"
#include "test_util.hpp"

using namespace rcas;
using rcas_test::random_network;

namespace {

InputBox random_box(Rng& rng, std::size_t dims, double lo = -5, double hi = 5, double max_w = 2.0) {
    InputBox b;
    for (std::size_t i = 0; i < dims; ++i) {
        const double a = rng.uniform(lo, hi - max_w);
        b.lo.push_back(a);
        b.hi.push_back(a + rng.uniform(0.0, max_w));
    }
    return b;
}

std::size_t argmax(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace

TEST_CASE("bounds are exact for a purely affine network") {
    Rng rng(1);
    Network n = random_network(rng, {3, 4});  // single affine layer, no relu
    for (int trial = 0; trial < 20; ++trial) {
        const InputBox box = random_box(rng, 3);
        const auto bounds = propagate(n, box);
        for (int i = 0; i < 50; ++i) {
            std::vector<double> x(3);
            for (std::size_t d = 0; d < 3; ++d) x[d] = rng.uniform(box.lo[d], box.hi[d]);
            const auto y = evaluate(n, x);
            for (std::size_t k = 0; k < y.size(); ++k) {
                CHECK(y[k] >= bounds[k].concrete_lo - 1e-9);
                CHECK(y[k] <= bounds[k].concrete_up + 1e-9);
            }
        }
        // exactness: lower and upper forms agree
        for (const auto& b : bounds) {
            for (std::size_t k = 0; k < b.lo_form.coef.size(); ++k)
                CHECK(b.lo_form.coef[k] == Catch::Approx(b.up_form.coef[k]).margin(1e-12));
            CHECK(b.lo_form.cst == Catch::Approx(b.up_form.cst).margin(1e-12));
        }
    }
}

TEST_CASE("single unstable neuron gets the chord relaxation") {
    Network n;
    n.layers.push_back(Layer{1, 1, {1.0}, {-0.5}});
    n.layers.push_back(Layer{1, 1, {1.0}, {0.0}});
    n.in_min = {-100};
    n.in_max = {100};
    n.in_mean = {0.0};
    n.in_range = {1.0};

    InputBox box;
    box.lo = {0.0};
    box.hi = {1.0};
    const auto bounds = propagate(n, box);
    REQUIRE(bounds.size() == 1);
    CHECK(bounds[0].concrete_lo == Catch::Approx(0.0).margin(1e-12));
    CHECK(bounds[0].concrete_up == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("sampled outputs stay inside the propagated intervals") {
    Rng rng(99);
    for (int trial = 0; trial < 3; ++trial) {
        const Network n = random_network(rng, {3, 25, 25, 25, 25, 25, 9}, 0.5);
        const InputBox box = random_box(rng, 3);
        const auto bounds = propagate(n, box);
        for (int i = 0; i < 10000; ++i) {
            std::vector<double> x(3);
            for (std::size_t d = 0; d < 3; ++d) x[d] = rng.uniform(box.lo[d], box.hi[d]);
            const auto y = evaluate(n, x);
            for (std::size_t k = 0; k < y.size(); ++k) {
                CHECK(y[k] >= bounds[k].concrete_lo - 1e-9);
                CHECK(y[k] <= bounds[k].concrete_up + 1e-9);
            }
        }
    }
}

TEST_CASE("propagate rejects non-finite weights") {
    Rng rng(2);
    Network n = random_network(rng, {2, 3, 2});
    n.layers[0].w[0] = std::numeric_limits<double>::quiet_NaN();
    InputBox box;
    box.lo = {0, 0};
    box.hi = {1, 1};
    CHECK_THROWS_AS(propagate(n, box), ContractError);
}

TEST_CASE("constant dominance resolves to the single best action") {
    Network n;
    n.layers.push_back(Layer{4, 2, std::vector<double>(8, 0.0), {0, 0, 0, 0}});
    n.layers.push_back(Layer{3, 4, std::vector<double>(12, 0.0), {3.0, 1.0, 1.0}});
    n.in_min = {-10, -10};
    n.in_max = {10, 10};
    n.in_mean = {0, 0};
    n.in_range = {1, 1};
    InputBox box;
    box.lo = {-5, -5};
    box.hi = {5, 5};
    for (std::size_t budget : {0u, 3u, 6u}) {
        const AdvisorySet s = possible_advisories(n, box, budget);
        CHECK(s.count() == 1);
        CHECK(s.contains(0));
    }
}

TEST_CASE("degenerate box yields exactly the pointwise argmax set") {
    Rng rng(7);
    const Network n = random_network(rng, {2, 8, 5});
    for (int i = 0; i < 50; ++i) {
        std::vector<double> x = {rng.uniform(-3, 3), rng.uniform(-3, 3)};
        InputBox box;
        box.lo = x;
        box.hi = x;
        const AdvisorySet s = possible_advisories(n, box, 0);
        const auto y = evaluate(n, x);
        CHECK(s.count() == 1);
        CHECK(s.contains(argmax(y)));
    }
}

TEST_CASE("sampled argmax is always contained in the advisory set") {
    Rng rng(31337);
    for (int trial = 0; trial < 4; ++trial) {
        const Network n = random_network(rng, {3, 10, 10, 6}, 0.8);
        for (int cell = 0; cell < 50; ++cell) {
            const InputBox box = random_box(rng, 3, -4, 4, 1.0);
            const AdvisorySet s = possible_advisories(n, box, 4);
            CHECK(s.count() >= 1);
            for (int i = 0; i < 200; ++i) {
                std::vector<double> x(3);
                for (std::size_t d = 0; d < 3; ++d) x[d] = rng.uniform(box.lo[d], box.hi[d]);
                CHECK(s.contains(argmax(evaluate(n, x))));
            }
        }
    }
}

TEST_CASE("splitting monotonically refines the advisory set") {
    Rng rng(55);
    const Network n = random_network(rng, {2, 12, 12, 5}, 0.8);
    for (int cell = 0; cell < 40; ++cell) {
        const InputBox box = random_box(rng, 2, -4, 4, 2.0);
        AdvisorySet prev = possible_advisories(n, box, 0);
        for (std::size_t budget = 1; budget <= 5; ++budget) {
            const AdvisorySet cur = possible_advisories(n, box, budget);
            CHECK(cur.subset_of(prev));
            prev = cur;
        }
    }
}

TEST_CASE("shrinking the box shrinks the advisory set at budget zero") {
    Rng rng(77);
    const Network n = random_network(rng, {2, 10, 10, 4}, 0.8);
    for (int cell = 0; cell < 60; ++cell) {
        InputBox outer = random_box(rng, 2, -4, 4, 2.0);
        InputBox inner = outer;
        for (std::size_t d = 0; d < 2; ++d) {
            const double w = outer.hi[d] - outer.lo[d];
            inner.lo[d] = outer.lo[d] + 0.25 * w;
            inner.hi[d] = outer.hi[d] - 0.25 * w;
        }
        const AdvisorySet so = possible_advisories(n, outer, 0);
        const AdvisorySet si = possible_advisories(n, inner, 0);
        CHECK(si.subset_of(so));
    }
}

TEST_CASE("budget-zero dominance is exact on affine networks") {
    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        const Network n = random_network(rng, {3, 5});  // affine only
        const InputBox box = random_box(rng, 3);
        const AdvisorySet s = possible_advisories(n, box, 0);

        // corner-enumeration oracle: on an affine map the argmax set over
        // the box is realized at corners
        AdvisorySet corner_best{0};
        for (int mask = 0; mask < 8; ++mask) {
            std::vector<double> x(3);
            for (std::size_t d = 0; d < 3; ++d) x[d] = (mask >> d) & 1 ? box.hi[d] : box.lo[d];
            corner_best.add(argmax(evaluate(n, x)));
        }
        CHECK(corner_best.subset_of(s));

        // pairwise dominance on an affine map is exact: action a is pruned
        // iff some b beats it at every corner (the min of an affine
        // difference over a box sits at a corner)
        AdvisorySet vertex_pruned = AdvisorySet::all(5);
        for (std::size_t a = 0; a < 5; ++a) {
            for (std::size_t b = 0; b < 5; ++b) {
                if (b == a) continue;
                double min_gap = 1e300;
                for (int mask = 0; mask < 8; ++mask) {
                    std::vector<double> x(3);
                    for (std::size_t d = 0; d < 3; ++d)
                        x[d] = (mask >> d) & 1 ? box.hi[d] : box.lo[d];
                    const auto y = evaluate(n, x);
                    min_gap = std::min(min_gap, y[b] - y[a]);
                }
                if (min_gap > 1e-9) {
                    vertex_pruned.remove(a);
                    break;
                }
            }
        }
        CHECK(s.bits == vertex_pruned.bits);
    }
}

TEST_CASE("advisory cache round-trips") {
    Rng rng(3);
    AdvisoryCacheHeader hdr;
    hdr.config_hash = 0xabc;
    hdr.seed = 5;
    hdr.num_networks = 2;
    hdr.num_actions = 9;
    hdr.cells_per_network = 100;
    std::vector<AdvisorySet> entries(200);
    for (auto& e : entries) e.bits = std::uint32_t(rng.below(512));
    const AdvisoryCache cache(hdr, entries);
    save_advisory_cache(cache, "cache_roundtrip.acst");
    const AdvisoryCache back = load_advisory_cache("cache_roundtrip.acst");
    CHECK(back.header().config_hash == hdr.config_hash);
    CHECK(back.header().num_networks == 2);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t c = 0; c < 100; ++c)
            CHECK(back.at(n, c).bits == entries[n * 100 + c].bits);

    // 9 actions need two bytes per entry
    CHECK(std::filesystem::file_size("cache_roundtrip.acst") ==
          AdvisoryCacheHeader::kHeaderBytes + 200 * 2);
}

TEST_CASE("batch verification is deterministic across thread counts") {
    Rng rng(8);
    const Network n = random_network(rng, {3, 10, 10, 5}, 0.8);
    std::vector<InputBox> cells;
    for (int i = 0; i < 200; ++i) cells.push_back(random_box(rng, 3, -4, 4, 1.5));

    AdvisoryCacheHeader hdr;
    hdr.config_hash = 42;
    const auto r1 = batch_verify(n, cells, 3, 1, "batch_t1.acst", hdr);
    const auto r8 = batch_verify(n, cells, 3, 8, "batch_t8.acst", hdr);
    REQUIRE(r1.size() == r8.size());
    for (std::size_t i = 0; i < r1.size(); ++i) CHECK(r1[i].bits == r8[i].bits);
    CHECK(rcas_test::sha256_file("batch_t1.acst") == rcas_test::sha256_file("batch_t8.acst"));

    // element-wise equality with single calls
    for (std::size_t i = 0; i < 20; ++i)
        CHECK(r1[i].bits == possible_advisories(n, cells[i], 3).bits);
}

TEST_CASE("interrupted batch runs resume to identical bytes") {
    Rng rng(9);
    const Network n = random_network(rng, {2, 8, 4}, 0.8);
    std::vector<InputBox> cells;
    for (int i = 0; i < 150; ++i) cells.push_back(random_box(rng, 2, -4, 4, 1.5));

    AdvisoryCacheHeader hdr;
    hdr.config_hash = 77;
    batch_verify(n, cells, 2, 2, "batch_full.acst", hdr);
    const std::string want = rcas_test::sha256_file("batch_full.acst");

    // simulate a kill by truncating the finished file mid-way
    std::ifstream in("batch_full.acst", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    {
        std::ofstream out("batch_resume.acst", std::ios::binary);
        out.write(bytes.data(), std::streamoff(AdvisoryCacheHeader::kHeaderBytes + 37 * 1));
    }
    batch_verify(n, cells, 2, 2, "batch_resume.acst", hdr);
    CHECK(rcas_test::sha256_file("batch_resume.acst") == want);

    // a checkpoint from a different run is discarded, not resumed
    {
        std::ofstream out("batch_stale.acst", std::ios::binary);
        AdvisoryCacheHeader other = hdr;
        other.config_hash = 123;
        rcas::detail::write_cache_header(out, other);
        out.put(char(3));
    }
    batch_verify(n, cells, 2, 2, "batch_stale.acst", hdr);
    CHECK(rcas_test::sha256_file("batch_stale.acst") == want);
}
