#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "reachcas/nnet.hpp"
#include "reachcas/rng.hpp"
#include "sha256.hpp"

using namespace rcas;

namespace {

Network identity_norm_net(std::vector<Layer> layers) {
    Network n;
    n.layers = std::move(layers);
    const std::size_t in = n.input_dim();
    n.in_min.assign(in, -1e9);
    n.in_max.assign(in, 1e9);
    n.in_mean.assign(in, 0.0);
    n.in_range.assign(in, 1.0);
    n.out_mean = 0.0;
    n.out_range = 1.0;
    return n;
}

Network random_net(Rng& rng, std::vector<std::size_t> sizes) {
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        Layer l;
        l.cols = sizes[i];
        l.rows = sizes[i + 1];
        l.w.resize(l.rows * l.cols);
        l.b.resize(l.rows);
        for (auto& v : l.w) v = rng.uniform(-1, 1);
        for (auto& v : l.b) v = rng.uniform(-1, 1);
        layers.push_back(std::move(l));
    }
    Network n = identity_norm_net(std::move(layers));
    for (std::size_t i = 0; i < n.input_dim(); ++i) {
        n.in_mean[i] = rng.uniform(-2, 2);
        n.in_range[i] = rng.uniform(0.5, 3.0);
        n.in_min[i] = -10;
        n.in_max[i] = 10;
    }
    n.out_mean = rng.uniform(-2, 2);
    n.out_range = rng.uniform(0.5, 3.0);
    return n;
}

// Straightforward re-implementation used as a duplicate oracle; kept
// deliberately naive and separate from evaluate().
std::vector<double> oracle_eval(const Network& net, const std::vector<double>& x) {
    std::vector<double> v;
    for (std::size_t i = 0; i < x.size(); ++i) v.push_back((x[i] - net.in_mean[i]) / net.in_range[i]);
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const auto& l = net.layers[li];
        std::vector<double> nv(l.rows, 0.0);
        for (std::size_t r = 0; r < l.rows; ++r) {
            double s = 0;
            for (std::size_t c = 0; c < l.cols; ++c) s += l.w[r * l.cols + c] * v[c];
            s += l.b[r];
            if (li + 1 < net.layers.size() && s < 0) s = 0;
            nv[r] = s;
        }
        v = nv;
    }
    for (auto& y : v) y = y * net.out_range + net.out_mean;
    return v;
}

}  // namespace

TEST_CASE("relu then identity output layer") {
    Layer hidden{2, 2, {1, 0, 0, 1}, {0, 0}};
    Layer out{2, 2, {1, 0, 0, 1}, {0, 0}};
    const Network n = identity_norm_net({hidden, out});
    const std::vector<double> x = {1.0, -1.0};
    const auto y = evaluate(n, x);
    CHECK(y[0] == Catch::Approx(1.0));
    CHECK(y[1] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("all-zero weights give the denormalized output bias") {
    Layer hidden{3, 2, std::vector<double>(6, 0.0), {0, 0, 0}};
    Layer out{2, 3, std::vector<double>(6, 0.0), {0.5, -0.25}};
    Network n = identity_norm_net({hidden, out});
    n.out_mean = 10.0;
    n.out_range = 4.0;
    const std::vector<double> x = {3.0, -7.0};
    const auto y = evaluate(n, x);
    CHECK(y[0] == Catch::Approx(0.5 * 4.0 + 10.0));
    CHECK(y[1] == Catch::Approx(-0.25 * 4.0 + 10.0));
}

TEST_CASE("evaluate matches a duplicate implementation on random nets") {
    Rng rng(2024);
    for (int trial = 0; trial < 5; ++trial) {
        const Network n = random_net(rng, {3, 8, 8, 5});
        for (int i = 0; i < 100; ++i) {
            std::vector<double> x = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
            const auto got = evaluate(n, x);
            const auto want = oracle_eval(n, x);
            for (std::size_t k = 0; k < got.size(); ++k)
                CHECK(got[k] == Catch::Approx(want[k]).epsilon(1e-6).margin(1e-9));
        }
    }
}

TEST_CASE("evaluate rejects dimension mismatch") {
    Rng rng(1);
    const Network n = random_net(rng, {3, 4, 2});
    const std::vector<double> x = {1.0, 2.0};
    CHECK_THROWS_AS(evaluate(n, x), ContractError);
}

TEST_CASE("evaluate is piecewise linear away from activation boundaries") {
    Rng rng(77);
    const Network n = random_net(rng, {2, 6, 6, 3});
    int linear_count = 0;
    const int trials = 50;
    for (int trial = 0; trial < trials; ++trial) {
        std::vector<double> x = {rng.uniform(-3, 3), rng.uniform(-3, 3)};
        std::vector<double> d = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const double t = 1e-6;
        auto at = [&](double s) {
            std::vector<double> p = {x[0] + s * d[0], x[1] + s * d[1]};
            return evaluate(n, p);
        };
        // equal secant slopes on both sides means locally affine
        const auto y0 = at(-t), y1 = at(0), y2 = at(t);
        bool all_linear = true;
        for (std::size_t k = 0; k < y0.size(); ++k) {
            const double lhs = (y1[k] - y0[k]) / t;
            const double rhs = (y2[k] - y1[k]) / t;
            if (std::abs(lhs - rhs) > 1e-3 * (1.0 + std::abs(lhs))) all_linear = false;
        }
        linear_count += all_linear;
    }
    // activation kinks within 1e-6 of a sample point are rare
    CHECK(linear_count >= trials - 2);
}

TEST_CASE("scaling the output layer scales deviations from the output mean") {
    Rng rng(31);
    Network n = random_net(rng, {2, 5, 3});
    Network scaled = n;
    const double k = 3.5;
    for (auto& v : scaled.layers.back().w) v *= k;
    for (auto& v : scaled.layers.back().b) v *= k;
    for (int i = 0; i < 20; ++i) {
        std::vector<double> x = {rng.uniform(-3, 3), rng.uniform(-3, 3)};
        const auto y = evaluate(n, x);
        const auto ys = evaluate(scaled, x);
        for (std::size_t j = 0; j < y.size(); ++j)
            CHECK(ys[j] - n.out_mean == Catch::Approx(k * (y[j] - n.out_mean)).margin(1e-9));
    }
}

TEST_CASE("network file round-trips exactly") {
    Rng rng(123);
    Network n = random_net(rng, {3, 25, 25, 9});
    n.comment = "round trip fixture";
    n.input_names = {"h", "hdot_own", "tau"};
    n.output_names = {"COC", "DNC", "DND", "DES1500", "CL1500",
                      "SDES1500", "SCL1500", "SDES2500", "SCL2500"};
    save_network(n, "nnet_roundtrip.nnet");
    const Network back = load_network("nnet_roundtrip.nnet");
    REQUIRE(back.layers.size() == n.layers.size());
    for (std::size_t li = 0; li < n.layers.size(); ++li) {
        CHECK(back.layers[li].w == n.layers[li].w);
        CHECK(back.layers[li].b == n.layers[li].b);
    }
    CHECK(back.in_mean == n.in_mean);
    CHECK(back.in_range == n.in_range);
    CHECK(back.out_mean == n.out_mean);
    CHECK(back.out_range == n.out_range);
    CHECK(back.input_names == n.input_names);
    CHECK(back.output_names == n.output_names);

    save_network(back, "nnet_roundtrip2.nnet");
    CHECK(rcas_test::sha256_file("nnet_roundtrip.nnet") ==
          rcas_test::sha256_file("nnet_roundtrip2.nnet"));
}

TEST_CASE("malformed network files fail with line numbers") {
    Rng rng(9);
    Network n = random_net(rng, {2, 4, 3});
    save_network(n, "nnet_bad.nnet");

    std::ifstream in("nnet_bad.nnet");
    std::vector<std::string> lines;
    std::string l;
    while (std::getline(in, l)) lines.push_back(l);
    in.close();

    {  // truncated file
        std::ofstream out("nnet_bad.nnet");
        for (std::size_t i = 0; i + 3 < lines.size(); ++i) out << lines[i] << "\n";
    }
    CHECK_THROWS_AS(load_network("nnet_bad.nnet"), ParseError);

    {  // garbage number
        std::ofstream out("nnet_bad.nnet");
        for (std::size_t i = 0; i < lines.size(); ++i)
            out << (i == 4 ? "1.0,zzz" : lines[i]) << "\n";
    }
    CHECK_THROWS_WITH(load_network("nnet_bad.nnet"), Catch::Matchers::ContainsSubstring(":5:"));

    {  // dimension inconsistency
        std::ofstream out("nnet_bad.nnet");
        for (std::size_t i = 0; i < lines.size(); ++i) out << (i == 2 ? "2,4,4" : lines[i]) << "\n";
    }
    CHECK_THROWS_AS(load_network("nnet_bad.nnet"), ParseError);

    {  // non-finite value
        std::ofstream out("nnet_bad.nnet");
        for (std::size_t i = 0; i < lines.size(); ++i) out << (i == 5 ? "inf,0" : lines[i]) << "\n";
    }
    CHECK_THROWS_AS(load_network("nnet_bad.nnet"), ParseError);
}

TEST_CASE("reference fixture hash and shape") {
    // deterministic fixture written by save_network; the frozen digest pins
    // the on-disk format
    Rng rng(20240817);
    Network n = random_net(rng, {3, 5, 4, 9});
    n.comment = "reference fixture v1";
    save_network(n, "nnet_fixture.nnet");
    const std::string digest = rcas_test::sha256_file("nnet_fixture.nnet");
    CHECK(digest == "d16c78956d2475ac6429080e10ec918b7ada27aab7480c15d3770721f59a723a");
    const Network back = load_network("nnet_fixture.nnet");
    CHECK(back.layers.size() == 3);
    CHECK(back.input_dim() == 3);
    CHECK(back.layers[0].rows == 5);
    CHECK(back.layers[1].rows == 4);
    CHECK(back.output_dim() == 9);
}
