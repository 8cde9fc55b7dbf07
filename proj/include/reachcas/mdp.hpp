#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "reachcas/common.hpp"
#include "reachcas/grid.hpp"

namespace rcas {

struct Successor {
    std::size_t state;
    double prob;
};

/// Finite MDP with sparse transitions produced on demand. `transitions`
/// fills `out` with (next state, probability) pairs summing to 1.
struct Mdp {
    std::size_t num_states = 0;
    std::size_t num_actions = 0;
    double discount = 1.0;
    std::function<double(std::size_t s, std::size_t a)> reward;
    std::function<void(std::size_t s, std::size_t a, std::vector<Successor>&)> transitions;

    void check_valid() const {
        require(num_states > 0 && num_actions > 0, "mdp must have states and actions");
        require(discount >= 0.0 && discount <= 1.0, "discount must be in [0, 1]");
        require(static_cast<bool>(reward) && static_cast<bool>(transitions),
                "mdp reward/transitions not set");
    }

    /// Spot-checks the transition distribution invariants for one (s, a).
    void check_distribution(std::size_t s, std::size_t a, std::vector<Successor>& scratch) const {
        transitions(s, a, scratch);
        double total = 0.0;
        for (const auto& t : scratch) {
            require(t.state < num_states, "transition target out of range");
            require(t.prob >= 0.0, "negative transition probability");
            total += t.prob;
        }
        require(std::abs(total - 1.0) <= 1e-9, "transition probabilities must sum to 1");
    }
};

/// Dense state-action score table over a discretized state space.
struct QTable {
    Grid grid;
    std::size_t num_actions = 0;
    std::vector<double> values;  // state-major, action-minor

    QTable() = default;
    QTable(Grid g, std::size_t actions)
        : grid(std::move(g)), num_actions(actions), values(grid.size() * actions, 0.0) {}

    std::size_t num_states() const { return grid.size(); }
    double at(std::size_t s, std::size_t a) const { return values[s * num_actions + a]; }
    double& at(std::size_t s, std::size_t a) { return values[s * num_actions + a]; }

    double state_max(std::size_t s) const {
        const double* row = values.data() + s * num_actions;
        double m = row[0];
        for (std::size_t a = 1; a < num_actions; ++a) m = std::max(m, row[a]);
        return m;
    }
};

/// One Bellman backup of (s, a) against the current contents of q. Reads
/// are live, so in-place sweeps see already-updated entries (Gauss-Seidel).
inline double bellman_backup(const QTable& q, const Mdp& mdp, std::size_t s, std::size_t a,
                             std::vector<Successor>& scratch) {
    require(s < mdp.num_states && a < mdp.num_actions, "bellman_backup: index out of range");
    require(q.values.size() == mdp.num_states * mdp.num_actions, "bellman_backup: table size mismatch");
    scratch.clear();
    mdp.transitions(s, a, scratch);
    double expectation = 0.0;
    for (const auto& t : scratch) {
        require(t.state < mdp.num_states, "bellman_backup: transition target out of range");
        expectation += t.prob * q.state_max(t.state);
    }
    return mdp.reward(s, a) + mdp.discount * expectation;
}

inline double bellman_backup(const QTable& q, const Mdp& mdp, std::size_t s, std::size_t a) {
    std::vector<Successor> scratch;
    return bellman_backup(q, mdp, s, a, scratch);
}

/// In-place Gauss-Seidel pass over states [first, last) in ascending flat
/// order, all actions per state. Returns the largest absolute update.
inline double sweep_range(QTable& q, const Mdp& mdp, std::size_t first, std::size_t last,
                          std::vector<Successor>& scratch) {
    double residual = 0.0;
    for (std::size_t s = first; s < last; ++s) {
        for (std::size_t a = 0; a < mdp.num_actions; ++a) {
            const double updated = bellman_backup(q, mdp, s, a, scratch);
            residual = std::max(residual, std::abs(updated - q.at(s, a)));
            q.at(s, a) = updated;
        }
    }
    return residual;
}

struct SolveResult {
    QTable table;
    double residual = 0.0;
    std::size_t sweeps = 0;
    bool converged = false;
    std::vector<double> residual_trace;
};

/// Gauss-Seidel value iteration: repeated in-place sweeps over all (s, a)
/// in ascending flat state order until the largest update falls below tol.
/// Non-convergence within max_sweeps is reported, not thrown.
inline SolveResult solve(const Mdp& mdp, const Grid& grid, double tol, std::size_t max_sweeps) {
    mdp.check_valid();
    require(tol > 0.0, "solve: tol must be positive");
    require(grid.size() == mdp.num_states, "solve: grid size does not match state count");

    SolveResult r;
    r.table = QTable(grid, mdp.num_actions);
    std::vector<Successor> scratch;
    while (r.sweeps < max_sweeps) {
        const double res = sweep_range(r.table, mdp, 0, mdp.num_states, scratch);
        ++r.sweeps;
        r.residual = res;
        r.residual_trace.push_back(res);
        if (res < tol) {
            r.converged = true;
            break;
        }
    }
    return r;
}

/// Backward-induction solve for MDPs whose slowest grid dimension is a
/// countdown (tau): slice 0 maps onto itself and is solved to convergence
/// at `tau0_discount`; every higher slice reads only the slice below it, so
/// one ascending Gauss-Seidel pass at discount 1 is exact (plus one pass to
/// verify).
inline SolveResult solve_tau_staged(Mdp mdp, const Grid& grid, double tol, std::size_t max_sweeps,
                                    double tau0_discount) {
    mdp.check_valid();
    require(tol > 0.0, "solve: tol must be positive");
    require(grid.size() == mdp.num_states, "solve: grid size does not match state count");
    const std::size_t slice = grid.stride(0);

    SolveResult r;
    r.table = QTable(grid, mdp.num_actions);
    std::vector<Successor> scratch;

    mdp.discount = tau0_discount;
    while (r.sweeps < max_sweeps) {
        const double res = sweep_range(r.table, mdp, 0, slice, scratch);
        ++r.sweeps;
        r.residual = res;
        r.residual_trace.push_back(res);
        if (res < tol) {
            r.converged = true;
            break;
        }
    }
    mdp.discount = 1.0;
    if (grid.size() > slice) {
        sweep_range(r.table, mdp, slice, grid.size(), scratch);
        ++r.sweeps;
        const double res = sweep_range(r.table, mdp, slice, grid.size(), scratch);
        ++r.sweeps;
        r.residual_trace.push_back(res);
        r.residual = std::max(res, r.residual);
        r.converged = r.converged && res < 10 * tol;
    }
    return r;
}

/// Greedy action; ties broken toward the lowest action index.
inline std::size_t policy(const QTable& q, std::size_t s) {
    require(s < q.num_states(), "policy: state out of range");
    std::size_t best = 0;
    double best_v = q.at(s, 0);
    for (std::size_t a = 1; a < q.num_actions; ++a) {
        if (q.at(s, a) > best_v) {
            best_v = q.at(s, a);
            best = a;
        }
    }
    return best;
}

enum class LookupMode { NearestNeighbor, Multilinear };

/// Per-action scores at a continuous state; values outside the grid clamp
/// to the boundary.
inline std::vector<double> lookup(const QTable& q, std::span<const double> x,
                                  LookupMode mode = LookupMode::NearestNeighbor) {
    require(x.size() == q.grid.ndims(), "lookup: dimension mismatch");
    std::vector<double> scores(q.num_actions, 0.0);
    if (mode == LookupMode::NearestNeighbor) {
        const std::size_t s = q.grid.nearest(x);
        for (std::size_t a = 0; a < q.num_actions; ++a) scores[a] = q.at(s, a);
        return scores;
    }
    std::vector<Grid::PointWeight> pts;
    q.grid.snap_all(x, pts);
    for (const auto& [f, w] : pts)
        for (std::size_t a = 0; a < q.num_actions; ++a) scores[a] += w * q.at(f, a);
    return scores;
}

// --- QTable binary format -------------------------------------------------
//
//   magic "QTBL" | u32 version | u64 config_hash | u64 seed
//   u32 ndims | u32 num_actions | u32 cut_count per dim
//   f32 cut points per dim (little endian) | f64 scores, state-major

struct QTableHeader {
    std::uint32_t version = 1;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
};

inline void save_qtable(const QTable& q, const std::string& path, const QTableHeader& hdr = {}) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write("QTBL", 4);
    detail::write_raw(os, hdr.version);
    detail::write_raw(os, hdr.config_hash);
    detail::write_raw(os, hdr.seed);
    detail::write_raw(os, static_cast<std::uint32_t>(q.grid.ndims()));
    detail::write_raw(os, static_cast<std::uint32_t>(q.num_actions));
    for (std::size_t d = 0; d < q.grid.ndims(); ++d)
        detail::write_raw(os, static_cast<std::uint32_t>(q.grid.dim_size(d)));
    for (std::size_t d = 0; d < q.grid.ndims(); ++d)
        for (double c : q.grid.cuts(d)) detail::write_raw(os, static_cast<float>(c));
    os.write(reinterpret_cast<const char*>(q.values.data()),
             static_cast<std::streamsize>(q.values.size() * sizeof(double)));
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline QTable load_qtable(const std::string& path, QTableHeader* hdr_out = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "QTBL", 4) != 0) throw ParseError(path + ": not a QTBL file");
    QTableHeader hdr;
    hdr.version = detail::read_raw<std::uint32_t>(is, "version");
    if (hdr.version != 1) throw ParseError(path + ": unsupported QTBL version");
    hdr.config_hash = detail::read_raw<std::uint64_t>(is, "config hash");
    hdr.seed = detail::read_raw<std::uint64_t>(is, "seed");
    const auto ndims = detail::read_raw<std::uint32_t>(is, "ndims");
    const auto num_actions = detail::read_raw<std::uint32_t>(is, "num actions");
    if (ndims == 0 || ndims > 16) throw ParseError(path + ": implausible dimension count");
    if (num_actions == 0) throw ParseError(path + ": zero actions");
    std::vector<std::uint32_t> counts(ndims);
    for (auto& c : counts) c = detail::read_raw<std::uint32_t>(is, "cut count");
    std::vector<std::vector<double>> cuts(ndims);
    for (std::size_t d = 0; d < ndims; ++d) {
        cuts[d].resize(counts[d]);
        for (auto& c : cuts[d]) c = detail::read_raw<float>(is, "cut point");
    }
    QTable q(Grid(std::move(cuts)), num_actions);
    is.read(reinterpret_cast<char*>(q.values.data()),
            static_cast<std::streamsize>(q.values.size() * sizeof(double)));
    if (!is) throw ParseError(path + ": truncated score block");
    for (double v : q.values)
        if (!std::isfinite(v)) throw ParseError(path + ": non-finite score value");
    if (hdr_out) *hdr_out = hdr;
    return q;
}

}  // namespace rcas
