#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "reachcas/common.hpp"
#include "reachcas/grid.hpp"
#include "reachcas/interval.hpp"
#include "reachcas/mdp.hpp"
#include "reachcas/trainer.hpp"

namespace rcas::hcas {

inline constexpr double kDeg = std::numbers::pi / 180.0;  // deg -> rad
inline constexpr double kNmacRange = 500.0;               // ft

enum Advisory : std::size_t { COC = 0, WL, WR, SL, SR, kNumAdvisories };

inline const std::array<std::string, kNumAdvisories>& advisory_names() {
    static const std::array<std::string, kNumAdvisories> names = {"COC", "WL", "WR", "SL", "SR"};
    return names;
}

/// Turn-rate interval (rad/s, left positive), direction and strength tier.
struct AdvisoryTraits {
    double turn_lo;
    double turn_hi;
    int dir;
    int strength;
};

inline const AdvisoryTraits& advisory_traits(std::size_t a) {
    static const std::array<AdvisoryTraits, kNumAdvisories> table = {{
        {-1.5 * kDeg, 1.5 * kDeg, 0, 0},   // COC
        {1.0 * kDeg, 2.0 * kDeg, +1, 1},   // WL
        {-2.0 * kDeg, -1.0 * kDeg, -1, 1}, // WR
        {2.0 * kDeg, 4.0 * kDeg, +1, 2},   // SL
        {-4.0 * kDeg, -2.0 * kDeg, -1, 2}, // SR
    }};
    require(a < kNumAdvisories, "advisory index out of range");
    return table[a];
}

inline int advisory_dir(std::size_t a) { return advisory_traits(a).dir; }

inline bool is_reversal(std::size_t prev, std::size_t next) {
    return advisory_dir(prev) * advisory_dir(next) == -1;
}

struct HState {
    double rho = 0.0;    // ft
    double theta = 0.0;  // rad, bearing to intruder
    double psi = 0.0;    // rad, relative intruder heading
    double v_own = 200.0;
    double v_int = 185.0;
    int tau = 0;
    std::size_t s_adv = COC;
};

struct Positions {
    double own_x, own_y;
    double int_x, int_y;
};

/// Aircraft positions after one second of constant turn rates, in the
/// frame where the ownship starts at the origin heading +x.
inline Positions hor_positions(const HState& s, double u_own, double u_int) {
    Positions p{};
    if (std::abs(u_own) < 1e-6) {
        p.own_x = s.v_own;
        p.own_y = 0.0;
    } else {
        p.own_x = s.v_own * std::sin(u_own) / u_own;
        p.own_y = s.v_own * (1.0 - std::cos(u_own)) / u_own;
    }
    const double x0 = s.rho * std::cos(s.theta);
    const double y0 = s.rho * std::sin(s.theta);
    if (std::abs(u_int) < 1e-6) {
        p.int_x = x0 + s.v_int * std::cos(s.psi);
        p.int_y = y0 + s.v_int * std::sin(s.psi);
    } else {
        p.int_x = x0 + s.v_int * (std::sin(s.psi + u_int) - std::sin(s.psi)) / u_int;
        p.int_y = y0 + s.v_int * (std::cos(s.psi) - std::cos(s.psi + u_int)) / u_int;
    }
    return p;
}

/// One-second update of the relative polar state.
inline HState hor_step(const HState& s, double u_own, double u_int, std::size_t next_adv) {
    const Positions p = hor_positions(s, u_own, u_int);
    const double dx = p.int_x - p.own_x;
    const double dy = p.int_y - p.own_y;
    HState n = s;
    n.rho = std::hypot(dx, dy);
    n.theta = wrap_angle(std::atan2(dy, dx) - u_own);
    n.psi = wrap_angle(s.psi + u_int - u_own);
    n.tau = std::max(0, s.tau - 1);
    n.s_adv = next_adv;
    return n;
}

struct HGrid {
    std::vector<double> rho_cuts;    // ft
    std::vector<double> theta_cuts;  // rad
    std::vector<double> psi_cuts;    // rad
    int tau_max = 80;
    double v_own = 200.0;
    double v_int = 185.0;

    void check_valid() const {
        require(!rho_cuts.empty() && !theta_cuts.empty() && !psi_cuts.empty(), "empty grid dim");
        require(rho_cuts.front() >= 0.0 && rho_cuts.back() <= 50000.0, "rho outside [0, 50000]");
        require(tau_max >= 0, "tau_max must be nonnegative");
    }

    Grid state_grid() const {
        check_valid();
        std::vector<double> taus, advs;
        for (int t = 0; t <= tau_max; ++t) taus.push_back(t);
        for (std::size_t a = 0; a < kNumAdvisories; ++a) advs.push_back(double(a));
        return Grid({taus, rho_cuts, theta_cuts, psi_cuts, advs});
    }

    std::uint64_t num_states() const {
        return std::uint64_t(tau_max + 1) * rho_cuts.size() * theta_cuts.size() * psi_cuts.size() *
               kNumAdvisories;
    }

    static HGrid paper_default() {
        HGrid g;
        g.rho_cuts = linspace(0.0, 50000.0, 32);
        g.theta_cuts = linspace(-std::numbers::pi, std::numbers::pi, 41);
        g.psi_cuts = linspace(-std::numbers::pi, std::numbers::pi, 41);
        g.tau_max = 80;
        return g;
    }

    static HGrid desk_default() {
        HGrid g;
        g.rho_cuts = {0,     500,   1000,  1500,  2200,  3000,  4000,  5500,
                      7500,  10000, 13000, 17000, 22000, 28000, 36000, 48000};
        g.theta_cuts = linspace(-std::numbers::pi, std::numbers::pi, 13);
        g.psi_cuts = linspace(-std::numbers::pi, std::numbers::pi, 13);
        g.tau_max = 60;
        return g;
    }
};

struct RewardCosts {
    double nmac = -1.0;
    double alert = -5e-3;
    double reversal = -8e-3;
    double strengthen = -5e-4;
    double weaken = -3e-4;
    double coc_conflict = -1e-2;  // clearing the alert while still converging
};

/// Straight-line closest-approach test used for the clear-of-conflict
/// penalty: still converging if the approach happens within the remaining
/// tau and would pass closer than 4000 ft.
inline bool on_collision_course(const HState& s) {
    const double px = s.rho * std::cos(s.theta);
    const double py = s.rho * std::sin(s.theta);
    const double wx = s.v_int * std::cos(s.psi) - s.v_own;
    const double wy = s.v_int * std::sin(s.psi);
    const double w2 = wx * wx + wy * wy;
    if (w2 < 1e-12) return s.rho < 4000.0;
    const double t_cpa = std::max(0.0, -(px * wx + py * wy) / w2);
    if (t_cpa >= double(s.tau)) return false;
    const double mx = px + t_cpa * wx;
    const double my = py + t_cpa * wy;
    return std::hypot(mx, my) < 4000.0;
}

inline double hor_reward(const HState& s, std::size_t a, const RewardCosts& costs) {
    double r = 0.0;
    if (s.tau == 0 && s.rho < kNmacRange) r += costs.nmac;
    if (a != COC) r += costs.alert;
    if (is_reversal(s.s_adv, a)) r += costs.reversal;
    const int prev_strength = advisory_traits(s.s_adv).strength;
    const int next_strength = advisory_traits(a).strength;
    if (s.s_adv != COC) {
        if (a != COC && next_strength > prev_strength) r += costs.strengthen;
        if (next_strength < prev_strength) r += costs.weaken;
        if (a == COC && on_collision_course(s)) r += costs.coc_conflict;
    }
    return r;
}

/// HorizontalCAS MDP: 3x3 turn-rate distribution (ownship advisory interval
/// x intruder [-1, 1] deg/s), successors snapped onto the polar grid.
class HcasMdp {
public:
    HcasMdp(HGrid grid, RewardCosts costs) : hgrid_(std::move(grid)), costs_(costs) {
        grid_ = hgrid_.state_grid();
    }

    const Grid& grid() const { return grid_; }
    const HGrid& hgrid() const { return hgrid_; }
    const RewardCosts& costs() const { return costs_; }

    HState decode(std::size_t flat) const {
        std::size_t idx[5];
        grid_.unflat(flat, idx);
        HState s;
        s.tau = int(idx[0]);
        s.rho = grid_.coord(1, idx[1]);
        s.theta = grid_.coord(2, idx[2]);
        s.psi = grid_.coord(3, idx[3]);
        s.v_own = hgrid_.v_own;
        s.v_int = hgrid_.v_int;
        s.s_adv = idx[4];
        return s;
    }

    double reward(std::size_t flat, std::size_t a) const { return hor_reward(decode(flat), a, costs_); }

    void transitions(std::size_t flat, std::size_t a, std::vector<Successor>& out) const {
        std::size_t idx[5];
        grid_.unflat(flat, idx);
        const HState s = decode(flat);
        out.clear();

        const auto& t = advisory_traits(a);
        const std::array<double, 3> own_turns = {t.turn_lo, 0.5 * (t.turn_lo + t.turn_hi), t.turn_hi};
        static const std::array<double, 3> int_turns = {-1.0 * kDeg, 0.0, 1.0 * kDeg};
        static constexpr std::array<double, 3> weights = {0.25, 0.5, 0.25};

        std::size_t base_idx[5] = {std::size_t(std::max(0, s.tau - 1)), 0, 0, 0, a};
        static const std::size_t snap_dims[3] = {1, 2, 3};
        std::vector<Grid::PointWeight> pts;
        for (std::size_t oi = 0; oi < 3; ++oi)
            for (std::size_t ii = 0; ii < 3; ++ii) {
                const HState nx = hor_step(s, own_turns[oi], int_turns[ii], a);
                const double next[3] = {nx.rho, nx.theta, nx.psi};
                grid_.snap(next, snap_dims, base_idx, pts);
                const double w = weights[oi] * weights[ii];
                for (const auto& [f, pw] : pts) out.push_back({f, w * pw});
            }
    }

    Mdp as_mdp() const {
        Mdp m;
        m.num_states = grid_.size();
        m.num_actions = kNumAdvisories;
        m.discount = 1.0;
        m.reward = [this](std::size_t s, std::size_t a) { return reward(s, a); };
        m.transitions = [this](std::size_t s, std::size_t a, std::vector<Successor>& out) {
            transitions(s, a, out);
        };
        return m;
    }

private:
    HGrid hgrid_;
    RewardCosts costs_;
    Grid grid_;
};

inline HcasMdp build_hcas_mdp(const HGrid& grid, const RewardCosts& costs,
                              std::size_t memory_budget_mb = 2048) {
    grid.check_valid();
    const std::uint64_t q_bytes = grid.num_states() * kNumAdvisories * sizeof(double);
    if (q_bytes > std::uint64_t(memory_budget_mb) * 1024 * 1024)
        throw CapacityError("hcas grid needs " + std::to_string(q_bytes / (1024 * 1024)) +
                            " MiB for the score table, budget is " +
                            std::to_string(memory_budget_mb) + " MiB");
    return HcasMdp(grid, costs);
}

inline SolveResult solve_table(const HcasMdp& model, double tol = 1e-3, std::size_t max_sweeps = 400,
                               double tau0_discount = 0.95) {
    return solve_tau_staged(model.as_mdp(), model.grid(), tol, max_sweeps, tau0_discount);
}

/// Cartesian-input training records for one (s_adv, tau) network:
/// x = rho cos(theta), y = rho sin(theta), psi, one record per grid point.
inline std::vector<TrainRecord> training_records(const QTable& q, const HGrid& hgrid, int tau,
                                                 std::size_t s_adv) {
    require(s_adv < kNumAdvisories, "bad s_adv");
    require(tau >= 0 && tau <= hgrid.tau_max, "tau outside the grid");
    const Grid& g = q.grid;
    std::vector<TrainRecord> out;
    out.reserve(hgrid.rho_cuts.size() * hgrid.theta_cuts.size() * hgrid.psi_cuts.size());
    for (std::size_t ir = 0; ir < hgrid.rho_cuts.size(); ++ir)
        for (std::size_t it = 0; it < hgrid.theta_cuts.size(); ++it)
            for (std::size_t ip = 0; ip < hgrid.psi_cuts.size(); ++ip) {
                const std::size_t idx[5] = {std::size_t(tau), ir, it, ip, s_adv};
                const std::size_t flat = g.flat(idx);
                TrainRecord rec;
                const double rho = hgrid.rho_cuts[ir];
                const double theta = hgrid.theta_cuts[it];
                rec.input = {rho * std::cos(theta), rho * std::sin(theta), hgrid.psi_cuts[ip]};
                rec.targets.resize(kNumAdvisories);
                for (std::size_t a = 0; a < kNumAdvisories; ++a) rec.targets[a] = q.at(flat, a);
                rec.best = 0;
                for (std::size_t a = 1; a < kNumAdvisories; ++a)
                    if (rec.targets[a] > rec.targets[rec.best]) rec.best = a;
                out.push_back(std::move(rec));
            }
    return out;
}

}  // namespace rcas::hcas
