#include <catch2/catch_amalgamated.hpp>

#include <numbers>

#include "reachcas/hcas.hpp"
#include "reachcas/rng.hpp"

using namespace rcas;
using namespace rcas::hcas;

namespace {

constexpr double kPi = std::numbers::pi;

// World-frame simulation of both aircraft with the ownship starting at the
// origin heading `beta`; returns the relative polar state after one second.
// Independent of hor_step; used as a geometry oracle.
HState world_oracle(const HState& s, double u_own, double u_int, double beta) {
    auto arc = [](double v, double heading, double u) {
        // exact displacement of a constant-turn arc over one second
        if (std::abs(u) < 1e-9)
            return std::pair{v * std::cos(heading), v * std::sin(heading)};
        const double dx = v / u * (std::sin(heading + u) - std::sin(heading));
        const double dy = v / u * (std::cos(heading) - std::cos(heading + u));
        return std::pair{dx, dy};
    };
    const double own_h = beta;
    const double int_h = beta + s.psi;
    const double ix = s.rho * std::cos(beta + s.theta);
    const double iy = s.rho * std::sin(beta + s.theta);
    const auto [odx, ody] = arc(s.v_own, own_h, u_own);
    const auto [idx_, idy] = arc(s.v_int, int_h, u_int);
    const double own_x = odx, own_y = ody;
    const double int_x = ix + idx_, int_y = iy + idy;
    const double own_h2 = own_h + u_own;
    const double rx = int_x - own_x, ry = int_y - own_y;
    HState n = s;
    n.rho = std::hypot(rx, ry);
    n.theta = wrap_angle(std::atan2(ry, rx) - own_h2);
    n.psi = wrap_angle((int_h + u_int) - own_h2);
    n.tau = std::max(0, s.tau - 1);
    return n;
}

}  // namespace

TEST_CASE("positions in straight flight") {
    HState s;
    s.rho = 10000;
    s.theta = 0;
    s.psi = kPi;
    const Positions p = hor_positions(s, 0.0, 0.0);
    CHECK(p.own_x == Catch::Approx(200.0));
    CHECK(p.own_y == Catch::Approx(0.0).margin(1e-12));
    CHECK(p.int_x == Catch::Approx(10000.0 - 185.0));
    CHECK(p.int_y == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("positions under a quarter-turn-per-second rate") {
    HState s;
    const Positions p = hor_positions(s, kPi / 2.0, 0.0);
    CHECK(p.own_x == Catch::Approx(200.0 / (kPi / 2.0)));
    CHECK(p.own_y == Catch::Approx(200.0 / (kPi / 2.0)));
}

TEST_CASE("displacement never exceeds the straight-line distance") {
    Rng rng(6);
    for (int i = 0; i < 500; ++i) {
        HState s;
        s.rho = rng.uniform(0, 40000);
        s.theta = rng.uniform(-kPi, kPi);
        s.psi = rng.uniform(-kPi, kPi);
        const double u_own = rng.uniform(-3, 3);
        const double u_int = rng.uniform(-3, 3);
        const Positions p = hor_positions(s, u_own, u_int);
        CHECK(std::hypot(p.own_x, p.own_y) <= s.v_own + 1e-9);
        const double ix0 = s.rho * std::cos(s.theta);
        const double iy0 = s.rho * std::sin(s.theta);
        CHECK(std::hypot(p.int_x - ix0, p.int_y - iy0) <= s.v_int + 1e-9);
    }
}

TEST_CASE("head-on straight flight closes at 385 ft/s") {
    HState s;
    s.rho = 10000;
    s.theta = 0;
    s.psi = kPi;
    s.tau = 10;
    const HState n = hor_step(s, 0, 0, COC);
    CHECK(n.rho == Catch::Approx(9615.0));
    CHECK(n.theta == Catch::Approx(0.0).margin(1e-9));
    CHECK(std::abs(n.psi) == Catch::Approx(kPi));
    CHECK(n.tau == 9);
}

TEST_CASE("matched turn rates preserve relative heading") {
    Rng rng(8);
    for (int i = 0; i < 100; ++i) {
        HState s;
        s.rho = rng.uniform(1000, 30000);
        s.theta = rng.uniform(-kPi, kPi);
        s.psi = rng.uniform(-kPi, kPi);
        s.tau = 5;
        const double u = rng.uniform(-2, 2);
        const HState n = hor_step(s, u, u, COC);
        CHECK(wrap_angle(n.psi - s.psi) == Catch::Approx(0.0).margin(1e-9));
    }
}

TEST_CASE("tau stops at zero") {
    HState s;
    s.rho = 5000;
    s.tau = 0;
    CHECK(hor_step(s, 0, 0, COC).tau == 0);
}

TEST_CASE("relative update matches a world-frame oracle for any base heading") {
    Rng rng(12);
    for (int i = 0; i < 300; ++i) {
        HState s;
        s.rho = rng.uniform(100, 40000);
        s.theta = rng.uniform(-kPi, kPi);
        s.psi = rng.uniform(-kPi, kPi);
        s.tau = 7;
        const double u_own = rng.uniform(-0.07, 0.07);
        const double u_int = rng.uniform(-0.02, 0.02);
        const HState got = hor_step(s, u_own, u_int, COC);
        const double beta = rng.uniform(-kPi, kPi);
        const HState want = world_oracle(s, u_own, u_int, beta);
        CHECK(got.rho == Catch::Approx(want.rho).margin(1e-6));
        CHECK(wrap_angle(got.theta - want.theta) == Catch::Approx(0.0).margin(1e-9));
        CHECK(wrap_angle(got.psi - want.psi) == Catch::Approx(0.0).margin(1e-9));
        CHECK(got.theta > -kPi);
        CHECK(got.theta <= kPi);
        CHECK(got.psi > -kPi);
        CHECK(got.psi <= kPi);
    }
}

TEST_CASE("straight-flight range matches the law of cosines") {
    Rng rng(14);
    for (int i = 0; i < 200; ++i) {
        HState s;
        s.rho = rng.uniform(500, 30000);
        s.theta = rng.uniform(-kPi, kPi);
        s.psi = rng.uniform(-kPi, kPi);
        s.tau = 3;
        const HState n = hor_step(s, 0, 0, COC);
        const double wx = s.v_int * std::cos(s.psi) - s.v_own;
        const double wy = s.v_int * std::sin(s.psi);
        const double px = s.rho * std::cos(s.theta);
        const double py = s.rho * std::sin(s.theta);
        const double expect = std::sqrt((px + wx) * (px + wx) + (py + wy) * (py + wy));
        CHECK(n.rho == Catch::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("advisory turn intervals match the advisory table") {
    CHECK(advisory_traits(COC).turn_lo == Catch::Approx(-1.5 * kDeg));
    CHECK(advisory_traits(COC).turn_hi == Catch::Approx(1.5 * kDeg));
    CHECK(advisory_traits(WL).turn_lo == Catch::Approx(1.0 * kDeg));
    CHECK(advisory_traits(WL).turn_hi == Catch::Approx(2.0 * kDeg));
    CHECK(advisory_traits(WR).turn_lo == Catch::Approx(-2.0 * kDeg));
    CHECK(advisory_traits(SL).turn_hi == Catch::Approx(4.0 * kDeg));
    CHECK(advisory_traits(SR).turn_lo == Catch::Approx(-4.0 * kDeg));
}

TEST_CASE("transition mass is conserved") {
    const HGrid g = HGrid::desk_default();
    HcasMdp model(g, RewardCosts{});
    Rng rng(19);
    std::vector<Successor> out;
    for (int i = 0; i < 500; ++i) {
        const std::size_t s = rng.below(model.grid().size());
        const std::size_t a = rng.below(kNumAdvisories);
        model.transitions(s, a, out);
        double total = 0;
        for (const auto& t : out) total += t.prob;
        CHECK(total == Catch::Approx(1.0).margin(1e-9));
        const HState st = model.decode(s);
        for (const auto& t : out) {
            const HState nx = model.decode(t.state);
            CHECK(nx.tau == std::max(0, st.tau - 1));
            CHECK(nx.s_adv == a);
        }
    }
}

TEST_CASE("reward terms") {
    const RewardCosts costs{};
    HState s;
    s.rho = 30000;
    s.theta = 0.3;
    s.psi = 1.0;
    s.tau = 40;
    CHECK(hor_reward(s, COC, costs) == 0.0);

    s.rho = 0;
    s.tau = 0;
    CHECK(hor_reward(s, COC, costs) == Catch::Approx(costs.nmac));

    s = HState{};
    s.rho = 8000;
    s.tau = 20;
    s.s_adv = SR;
    CHECK(hor_reward(s, SL, costs) == Catch::Approx(costs.alert + costs.reversal));

    // head-on at close range: clearing the alert is penalized
    s = HState{};
    s.rho = 3000;
    s.theta = 0;
    s.psi = kPi;
    s.tau = 20;
    s.s_adv = SL;
    CHECK(on_collision_course(s));
    CHECK(hor_reward(s, COC, costs) == Catch::Approx(costs.weaken + costs.coc_conflict));

    // slow tail chase from far away never closes within tau
    s.theta = 0;
    s.psi = 0;
    s.rho = 30000;
    s.tau = 20;
    CHECK_FALSE(on_collision_course(s));
}

TEST_CASE("state counts for paper and desk grids") {
    const HGrid paper = HGrid::paper_default();
    CHECK(paper.num_states() == std::uint64_t(32) * 41 * 41 * 81 * 5);
    CHECK(paper.num_states() == 21785760ull);
    CHECK_THROWS_AS(build_hcas_mdp(paper, RewardCosts{}, 512), CapacityError);

    const HGrid desk = HGrid::desk_default();
    CHECK(desk.num_states() == std::uint64_t(desk.tau_max + 1) * 16 * 13 * 13 * 5);
}

TEST_CASE("cartesian training records") {
    HGrid g;
    g.rho_cuts = {0, 1000, 5000};
    g.theta_cuts = {-kPi, 0.0, kPi};
    g.psi_cuts = {-kPi, 0.0, kPi};
    g.tau_max = 2;
    HcasMdp model(g, RewardCosts{});
    QTable q(model.grid(), kNumAdvisories);
    Rng rng(2);
    for (auto& v : q.values) v = rng.uniform(-1, 0);

    const auto recs = training_records(q, g, 1, WL);
    CHECK(recs.size() == 3 * 3 * 3);
    for (const auto& rec : recs) {
        const double rho = std::hypot(rec.input[0], rec.input[1]);
        bool found = false;  // recovered range is one of the grid's cuts
        for (double r : g.rho_cuts)
            if (std::abs(rho - r) < 1e-6) found = true;
        CHECK(found);
    }
    // theta = 0 gives y = 0
    const auto& mid = recs[1 * 9 + 1 * 3 + 0];  // rho=1000, theta=0, psi=-pi
    CHECK(mid.input[0] == Catch::Approx(1000.0));
    CHECK(mid.input[1] == Catch::Approx(0.0).margin(1e-9));
}
