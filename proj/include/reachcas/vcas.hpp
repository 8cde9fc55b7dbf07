#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "reachcas/common.hpp"
#include "reachcas/grid.hpp"
#include "reachcas/mdp.hpp"
#include "reachcas/trainer.hpp"

namespace rcas::vcas {

inline constexpr double kFtPerMin = 1.0 / 60.0;  // ft/min -> ft/s
inline constexpr double kG = 32.2;               // ft/s^2
inline constexpr double kNmacAltitude = 100.0;   // ft

enum Advisory : std::size_t {
    COC = 0,
    DNC,
    DND,
    DES1500,
    CL1500,
    SDES1500,
    SCL1500,
    SDES2500,
    SCL2500,
    kNumAdvisories
};

inline const std::array<std::string, kNumAdvisories>& advisory_names() {
    static const std::array<std::string, kNumAdvisories> names = {
        "COC", "DNC", "DND", "DES1500", "CL1500", "SDES1500", "SCL1500", "SDES2500", "SCL2500"};
    return names;
}

/// Pilot-response model per advisory: allowed acceleration interval, the
/// vertical rate that counts as compliant, and the commanded direction
/// (+1 climb, -1 descend, 0 none).
struct AdvisoryTraits {
    double accel_lo;      // ft/s^2
    double accel_hi;      // ft/s^2
    double target_rate;   // ft/s; compliance threshold in `dir` direction
    int dir;              // commanded vertical direction
    int strength;         // alert strength tier, COC = 0
};

inline const AdvisoryTraits& advisory_traits(std::size_t a) {
    static const std::array<AdvisoryTraits, kNumAdvisories> table = {{
        {-10.7, 10.7, 0.0, 0, 0},                       // COC
        {-16.1, -8.33, 0.0, -1, 1},                     // DNC
        {8.33, 16.1, 0.0, +1, 1},                       // DND
        {-16.2, -8.33, -1500.0 * kFtPerMin, -1, 2},     // DES1500
        {8.33, 16.2, 1500.0 * kFtPerMin, +1, 2},        // CL1500
        {-16.2, -10.7, -1500.0 * kFtPerMin, -1, 3},     // SDES1500
        {10.7, 16.2, 1500.0 * kFtPerMin, +1, 3},        // SCL1500
        {-16.2, -10.7, -2500.0 * kFtPerMin, -1, 4},     // SDES2500
        {10.7, 16.2, 2500.0 * kFtPerMin, +1, 4},        // SCL2500
    }};
    require(a < kNumAdvisories, "advisory index out of range");
    return table[a];
}

inline int advisory_dir(std::size_t a) { return advisory_traits(a).dir; }

inline bool is_reversal(std::size_t prev, std::size_t next) {
    return advisory_dir(prev) * advisory_dir(next) == -1;
}

/// True when the current vertical rate already satisfies the advisory.
inline bool complies(std::size_t a, double hdot_own) {
    const auto& t = advisory_traits(a);
    if (t.dir == 0) return false;  // COC constrains nothing
    return t.dir > 0 ? hdot_own >= t.target_rate : hdot_own <= t.target_rate;
}

struct VState {
    double h = 0.0;         // ft, intruder altitude relative to ownship
    double hdot_own = 0.0;  // ft/s
    double hdot_int = 0.0;  // ft/s
    int tau = 0;            // s
    std::size_t s_adv = COC;
};

/// One-second update of the relative geometry under constant accelerations.
inline VState vert_step(const VState& s, double accel_own, double accel_int, std::size_t next_adv) {
    VState n;
    n.h = s.h + s.hdot_int + 0.5 * accel_int - s.hdot_own - 0.5 * accel_own;
    n.hdot_own = s.hdot_own + accel_own;
    n.hdot_int = s.hdot_int + accel_int;
    n.tau = std::max(0, s.tau - 1);
    n.s_adv = next_adv;
    return n;
}

/// Accelerations the pilot may fly under an advisory: {0} when already
/// compliant, otherwise the {min, mid, max} of the allowed interval.
inline std::vector<double> advisory_accel_set(std::size_t a, double hdot_own) {
    if (a != COC && complies(a, hdot_own)) return {0.0};
    const auto& t = advisory_traits(a);
    return {t.accel_lo, 0.5 * (t.accel_lo + t.accel_hi), t.accel_hi};
}

/// Ownship displacement and final rate over one second when accelerating
/// at `accel` and holding once the advisory's target rate is reached.
inline std::pair<double, double> own_response(std::size_t a, double hdot_own, double accel) {
    const auto& t = advisory_traits(a);
    if (a != COC && complies(a, hdot_own))
        return {hdot_own, hdot_own};  // maintain current rate
    if (a == COC || accel == 0.0)
        return {hdot_own + 0.5 * accel, hdot_own + accel};
    const double to_target = t.target_rate - hdot_own;
    const double t_hit = to_target / accel;
    if (t_hit <= 0.0 || t_hit >= 1.0)
        return {hdot_own + 0.5 * accel, hdot_own + accel};
    const double displacement =
        hdot_own * t_hit + 0.5 * accel * t_hit * t_hit + t.target_rate * (1.0 - t_hit);
    return {displacement, t.target_rate};
}

struct VGrid {
    std::vector<double> h_cuts;         // ft
    std::vector<double> hdot_own_cuts;  // ft/s
    std::vector<double> hdot_int_cuts;  // ft/s
    int tau_max = 40;

    void check_valid() const {
        require(!h_cuts.empty() && !hdot_own_cuts.empty() && !hdot_int_cuts.empty(), "empty grid dim");
        require(h_cuts.front() >= -8000.0 && h_cuts.back() <= 8000.0, "h range outside [-8000, 8000]");
        require(hdot_own_cuts.front() >= -100.0 && hdot_own_cuts.back() <= 100.0,
                "own rate outside +-6000 ft/min");
        require(hdot_int_cuts.front() >= -100.0 && hdot_int_cuts.back() <= 100.0,
                "intruder rate outside +-6000 ft/min");
        require(tau_max >= 0 && tau_max <= 40, "tau range outside [0, 40]");
    }

    /// Full state grid; tau varies slowest so tau slices are contiguous,
    /// then h, own rate, intruder rate, with the previous advisory last.
    Grid state_grid() const {
        check_valid();
        std::vector<double> taus, advs;
        for (int t = 0; t <= tau_max; ++t) taus.push_back(t);
        for (std::size_t a = 0; a < kNumAdvisories; ++a) advs.push_back(double(a));
        return Grid({taus, h_cuts, hdot_own_cuts, hdot_int_cuts, advs});
    }

    std::uint64_t num_states() const {
        return std::uint64_t(tau_max + 1) * h_cuts.size() * hdot_own_cuts.size() *
               hdot_int_cuts.size() * kNumAdvisories;
    }

    static VGrid paper_default() {
        VGrid g;
        g.h_cuts = linspace(-8000.0, 8000.0, 65);
        g.hdot_own_cuts = linspace(-100.0, 100.0, 39);
        g.hdot_int_cuts = linspace(-100.0, 100.0, 39);
        g.tau_max = 40;
        return g;
    }

    static VGrid desk_default() {
        VGrid g;
        const std::vector<double> h_half = {50, 100, 200, 400, 700, 1200, 3000, 8000};
        g.h_cuts.push_back(0.0);
        for (double v : h_half) {
            g.h_cuts.push_back(v);
            g.h_cuts.insert(g.h_cuts.begin(), -v);
        }
        const std::vector<double> r_half_fpm = {500, 1000, 1500, 2500, 6000};
        g.hdot_own_cuts.push_back(0.0);
        for (double v : r_half_fpm) {
            g.hdot_own_cuts.push_back(v * kFtPerMin);
            g.hdot_own_cuts.insert(g.hdot_own_cuts.begin(), -v * kFtPerMin);
        }
        g.hdot_int_cuts = g.hdot_own_cuts;
        g.tau_max = 20;
        return g;
    }
};

struct RewardCosts {
    double nmac = -1.0;
    double alert = -5e-3;
    double reversal = -8e-3;
    double strengthen = -5e-4;
    double weaken = -3e-4;
    double crossing = -1e-2;
};

/// Sum of the penalty terms for issuing advisory a in state s. Always <= 0.
inline double vert_reward(const VState& s, std::size_t a, const RewardCosts& costs) {
    double r = 0.0;
    if (s.tau == 0 && std::abs(s.h) < kNmacAltitude) r += costs.nmac;
    if (a != COC) r += costs.alert;
    if (is_reversal(s.s_adv, a)) r += costs.reversal;
    const int prev_strength = advisory_traits(s.s_adv).strength;
    const int next_strength = advisory_traits(a).strength;
    if (s.s_adv != COC) {
        if (a != COC && next_strength > prev_strength) r += costs.strengthen;
        if (next_strength < prev_strength) r += costs.weaken;
    }
    const int dir = advisory_dir(a);
    if ((dir > 0 && s.h > 0) || (dir < 0 && s.h < 0)) r += costs.crossing;
    return r;
}

/// VerticalCAS MDP over a state grid: models the pilot acceleration
/// distribution and intruder accelerations in [-g/8, g/8], snapping
/// successors onto the grid multilinearly. At tau = 0 the slice maps to
/// itself, so its values are the infinite-horizon total cost.
class VcasMdp {
public:
    VcasMdp(VGrid grid, RewardCosts costs) : vgrid_(std::move(grid)), costs_(costs) {
        grid_ = vgrid_.state_grid();
    }

    const Grid& grid() const { return grid_; }
    const VGrid& vgrid() const { return vgrid_; }
    const RewardCosts& costs() const { return costs_; }

    VState decode(std::size_t flat) const {
        std::size_t idx[5];
        grid_.unflat(flat, idx);
        VState s;
        s.tau = int(idx[0]);
        s.h = grid_.coord(1, idx[1]);
        s.hdot_own = grid_.coord(2, idx[2]);
        s.hdot_int = grid_.coord(3, idx[3]);
        s.s_adv = idx[4];
        return s;
    }

    double reward(std::size_t flat, std::size_t a) const { return vert_reward(decode(flat), a, costs_); }

    void transitions(std::size_t flat, std::size_t a, std::vector<Successor>& out) const {
        std::size_t idx[5];
        grid_.unflat(flat, idx);
        const VState s = decode(flat);
        out.clear();

        const auto own_accels = advisory_accel_set(a, s.hdot_own);
        const double own_w = own_accels.size() == 1 ? 1.0 : 0.25;
        static constexpr std::array<double, 3> int_accels = {-kG / 8.0, 0.0, kG / 8.0};
        static constexpr std::array<double, 3> int_weights = {0.25, 0.5, 0.25};

        std::size_t base_idx[5] = {std::size_t(std::max(0, s.tau - 1)), 0, 0, 0, a};
        static const std::size_t snap_dims[3] = {1, 2, 3};
        std::vector<Grid::PointWeight> pts;
        for (std::size_t oi = 0; oi < own_accels.size(); ++oi) {
            const double w_own = own_accels.size() == 1 ? 1.0 : (oi == 1 ? 0.5 : own_w);
            const auto [own_disp, own_rate] = own_response(a, s.hdot_own, own_accels[oi]);
            for (std::size_t ii = 0; ii < 3; ++ii) {
                const double w = w_own * int_weights[ii];
                const double next[3] = {
                    s.h + s.hdot_int + 0.5 * int_accels[ii] - own_disp,
                    own_rate,
                    s.hdot_int + int_accels[ii],
                };
                grid_.snap(next, snap_dims, base_idx, pts);
                for (const auto& [f, pw] : pts) out.push_back({f, w * pw});
            }
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
    VGrid vgrid_;
    RewardCosts costs_;
    Grid grid_;
};

/// Builds the VerticalCAS MDP, refusing grids whose Q table would not fit
/// the memory budget.
inline VcasMdp build_vcas_mdp(const VGrid& grid, const RewardCosts& costs,
                              std::size_t memory_budget_mb = 2048) {
    grid.check_valid();
    const std::uint64_t q_bytes = grid.num_states() * kNumAdvisories * sizeof(double);
    if (q_bytes > std::uint64_t(memory_budget_mb) * 1024 * 1024)
        throw CapacityError("vcas grid needs " + std::to_string(q_bytes / (1024 * 1024)) +
                            " MiB for the score table, budget is " +
                            std::to_string(memory_budget_mb) + " MiB");
    return VcasMdp(grid, costs);
}

/// Solves the table by backward induction over tau. The tau = 0 slice maps
/// onto itself and its undiscounted total cost is unbounded (the intruder
/// can chase indefinitely), so that slice is solved as a discounted
/// infinite-horizon problem: tau0_discount is the per-second probability
/// that the co-altitude encounter persists.
inline SolveResult solve_table(const VcasMdp& model, double tol = 1e-3, std::size_t max_sweeps = 400,
                               double tau0_discount = 0.95) {
    return solve_tau_staged(model.as_mdp(), model.grid(), tol, max_sweeps, tau0_discount);
}

/// Training records for one previous-advisory network: the level-intruder
/// slice of the table, inputs (h, hdot_own, tau).
inline std::vector<TrainRecord> training_records(const QTable& q, const VGrid& vgrid,
                                                 std::size_t s_adv) {
    require(s_adv < kNumAdvisories, "bad s_adv");
    const Grid& g = q.grid;
    const auto& int_cuts = vgrid.hdot_int_cuts;
    std::size_t zero_idx = 0;
    double best_abs = std::abs(int_cuts[0]);
    for (std::size_t i = 1; i < int_cuts.size(); ++i)
        if (std::abs(int_cuts[i]) < best_abs) {
            best_abs = std::abs(int_cuts[i]);
            zero_idx = i;
        }

    std::vector<TrainRecord> out;
    out.reserve((vgrid.tau_max + 1) * vgrid.h_cuts.size() * vgrid.hdot_own_cuts.size());
    for (int tau = 0; tau <= vgrid.tau_max; ++tau)
        for (std::size_t ih = 0; ih < vgrid.h_cuts.size(); ++ih)
            for (std::size_t io = 0; io < vgrid.hdot_own_cuts.size(); ++io) {
                const std::size_t idx[5] = {std::size_t(tau), ih, io, zero_idx, s_adv};
                const std::size_t flat = g.flat(idx);
                TrainRecord rec;
                rec.input = {vgrid.h_cuts[ih], vgrid.hdot_own_cuts[io], double(tau)};
                rec.targets.resize(kNumAdvisories);
                for (std::size_t a = 0; a < kNumAdvisories; ++a) rec.targets[a] = q.at(flat, a);
                rec.best = 0;
                for (std::size_t a = 1; a < kNumAdvisories; ++a)
                    if (rec.targets[a] > rec.targets[rec.best]) rec.best = a;
                out.push_back(std::move(rec));
            }
    return out;
}

}  // namespace rcas::vcas
