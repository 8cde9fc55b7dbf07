#pragma once

// Shared test helpers: random MDP construction and independent oracles.
// Oracles here must stay independent of the implementation paths they check.

#include <algorithm>
#include <cmath>
#include <vector>

#include "reachcas/mdp.hpp"
#include "reachcas/nnet.hpp"
#include "reachcas/rng.hpp"

namespace rcas_test {

inline rcas::Network random_network(rcas::Rng& rng, const std::vector<std::size_t>& sizes,
                                    double weight_scale = 1.0) {
    rcas::Network n;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        rcas::Layer l;
        l.cols = sizes[i];
        l.rows = sizes[i + 1];
        l.w.resize(l.rows * l.cols);
        l.b.resize(l.rows);
        for (auto& v : l.w) v = rng.uniform(-weight_scale, weight_scale);
        for (auto& v : l.b) v = rng.uniform(-weight_scale, weight_scale);
        n.layers.push_back(std::move(l));
    }
    const std::size_t in = sizes.front();
    n.in_min.assign(in, -10.0);
    n.in_max.assign(in, 10.0);
    n.in_mean.assign(in, 0.0);
    n.in_range.assign(in, 1.0);
    for (std::size_t i = 0; i < in; ++i) {
        n.in_mean[i] = rng.uniform(-1, 1);
        n.in_range[i] = rng.uniform(0.5, 2.0);
    }
    n.out_mean = rng.uniform(-1, 1);
    n.out_range = rng.uniform(0.5, 2.0);
    return n;
}

struct TabularMdp {
    std::size_t num_states;
    std::size_t num_actions;
    double discount;
    std::vector<double> rewards;                                    // [s * A + a]
    std::vector<std::vector<std::vector<rcas::Successor>>> trans;   // [s][a]

    rcas::Mdp as_mdp() const {
        rcas::Mdp m;
        m.num_states = num_states;
        m.num_actions = num_actions;
        m.discount = discount;
        m.reward = [this](std::size_t s, std::size_t a) { return rewards[s * num_actions + a]; };
        m.transitions = [this](std::size_t s, std::size_t a, std::vector<rcas::Successor>& out) {
            out = trans[s][a];
        };
        return m;
    }
};

inline TabularMdp random_mdp(rcas::Rng& rng, std::size_t max_states = 100) {
    TabularMdp m;
    m.num_states = 2 + rng.below(max_states - 1);
    m.num_actions = 1 + rng.below(4);
    m.discount = 0.5 + 0.45 * rng.uniform();
    m.rewards.resize(m.num_states * m.num_actions);
    for (auto& r : m.rewards) r = rng.uniform(-1.0, 1.0);
    m.trans.resize(m.num_states);
    for (auto& per_state : m.trans) {
        per_state.resize(m.num_actions);
        for (auto& list : per_state) {
            const std::size_t n = 1 + rng.below(3);
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double w = 0.05 + rng.uniform();
                list.push_back({rng.below(m.num_states), w});
                total += w;
            }
            for (auto& t : list) t.prob /= total;
        }
    }
    return m;
}

// Textbook synchronous value iteration: V_{k+1}(s) = max_a [R + g * sum T V_k],
// written straight from the definition (no shared code with the library).
struct SyncViResult {
    std::vector<double> q;  // [s * A + a]
    std::vector<double> residuals;
};

inline SyncViResult synchronous_value_iteration(const TabularMdp& m, double tol,
                                                std::size_t max_iters) {
    std::vector<double> v(m.num_states, 0.0);
    SyncViResult out;
    out.q.assign(m.num_states * m.num_actions, 0.0);
    for (std::size_t it = 0; it < max_iters; ++it) {
        std::vector<double> v_next(m.num_states);
        for (std::size_t s = 0; s < m.num_states; ++s) {
            double best = -1e300;
            for (std::size_t a = 0; a < m.num_actions; ++a) {
                double exp_v = 0.0;
                for (const auto& t : m.trans[s][a]) exp_v += t.prob * v[t.state];
                const double q = m.rewards[s * m.num_actions + a] + m.discount * exp_v;
                out.q[s * m.num_actions + a] = q;
                best = std::max(best, q);
            }
            v_next[s] = best;
        }
        double res = 0.0;
        for (std::size_t s = 0; s < m.num_states; ++s) res = std::max(res, std::abs(v_next[s] - v[s]));
        out.residuals.push_back(res);
        v = v_next;
        if (res < tol) break;
    }
    // one final synchronous Q evaluation against the converged V
    for (std::size_t s = 0; s < m.num_states; ++s)
        for (std::size_t a = 0; a < m.num_actions; ++a) {
            double exp_v = 0.0;
            for (const auto& t : m.trans[s][a]) exp_v += t.prob * v[t.state];
            out.q[s * m.num_actions + a] = m.rewards[s * m.num_actions + a] + m.discount * exp_v;
        }
    return out;
}

}  // namespace rcas_test
