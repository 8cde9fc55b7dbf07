#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "reachcas/common.hpp"
#include "reachcas/nnet.hpp"
#include "reachcas/rng.hpp"

namespace rcas {

struct TrainConfig {
    std::vector<std::size_t> hidden = {25, 25, 25, 25, 25};
    std::size_t epochs = 3000;
    std::size_t batch_size = 512;
    double c = 40.0;                 // asymmetric loss scaling
    double step_size = 1e-3;         // Adam defaults
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;

    void check_valid() const {
        require(c > 0.0, "train: c must be positive");
        require(batch_size >= 1, "train: batch_size must be >= 1");
        require(!hidden.empty(), "train: need at least one hidden layer");
    }
};

/// Asymmetric squared error of one state's per-action errors e = pred - target.
/// Under-valuing the best action and over-valuing the others carry the extra
/// c-scaled square-plus-linear penalty; the result is the mean over actions.
inline double asymmetric_loss(std::span<const double> e, std::size_t best, double c, std::size_t n) {
    require(e.size() == n && best < n, "asymmetric_loss: bad arguments");
    double total = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        const double err = e[a];
        if (a != best) {
            total += err < 0 ? err * err : c * (err * err + err);
        } else {
            total += err >= 0 ? err * err : c * double(n - 1) * (err * err - err);
        }
    }
    return total / double(n);
}

/// Derivative of the per-action loss term w.r.t. the prediction, already
/// divided by n (matching the mean in asymmetric_loss). At the e = 0 kink
/// the chosen subgradient is 0.
inline double loss_gradient_term(double e, bool is_best, double c, std::size_t n) {
    if (e == 0.0) return 0.0;
    double g;
    if (!is_best) {
        g = e < 0 ? 2.0 * e : c * (2.0 * e + 1.0);
    } else {
        g = e >= 0 ? 2.0 * e : c * double(n - 1) * (2.0 * e - 1.0);
    }
    return g / double(n);
}

/// Gradient of asymmetric_loss w.r.t. the prediction vector.
inline std::vector<double> loss_gradient(std::span<const double> pred, std::span<const double> target,
                                         std::size_t best, double c) {
    require(pred.size() == target.size() && best < pred.size(), "loss_gradient: bad arguments");
    const std::size_t n = pred.size();
    std::vector<double> g(n);
    for (std::size_t a = 0; a < n; ++a)
        g[a] = loss_gradient_term(pred[a] - target[a], a == best, c, n);
    return g;
}

struct TrainRecord {
    std::vector<double> input;    // raw units
    std::vector<double> targets;  // raw score units
    std::size_t best = 0;         // argmax of targets, lowest index on ties
};

struct TrainResult {
    Network net;
    std::vector<double> epoch_loss;  // mean asymmetric loss per epoch (normalized units)
};

namespace detail {

struct TrainWorkspace {
    // activations per layer (post-relu), plus pre-activation masks
    std::vector<std::vector<double>> act;
    std::vector<std::vector<double>> delta;
};

}  // namespace detail

/// Mini-batch Adam on the asymmetric loss. Normalization constants come
/// from dataset statistics; training runs in normalized units. Fully
/// deterministic for a fixed config and dataset.
inline TrainResult train(std::span<const TrainRecord> data, const TrainConfig& cfg) {
    cfg.check_valid();
    require(!data.empty(), "train: dataset is empty");
    const std::size_t n_in = data.front().input.size();
    const std::size_t n_out = data.front().targets.size();
    for (const auto& r : data) {
        require(r.input.size() == n_in && r.targets.size() == n_out && r.best < n_out,
                "train: inconsistent record");
        for (double t : r.targets) require(std::isfinite(t), "train: non-finite target");
    }

    Network net;
    net.in_mean.assign(n_in, 0.0);
    net.in_range.assign(n_in, 1.0);
    net.in_min.assign(n_in, std::numeric_limits<double>::infinity());
    net.in_max.assign(n_in, -std::numeric_limits<double>::infinity());
    for (const auto& r : data)
        for (std::size_t i = 0; i < n_in; ++i) {
            net.in_min[i] = std::min(net.in_min[i], r.input[i]);
            net.in_max[i] = std::max(net.in_max[i], r.input[i]);
        }
    for (std::size_t i = 0; i < n_in; ++i) {
        net.in_mean[i] = 0.5 * (net.in_min[i] + net.in_max[i]);
        const double range = net.in_max[i] - net.in_min[i];
        net.in_range[i] = range > 0 ? range : 1.0;
    }
    double t_min = std::numeric_limits<double>::infinity();
    double t_max = -std::numeric_limits<double>::infinity();
    double t_sum = 0.0;
    for (const auto& r : data)
        for (double t : r.targets) {
            t_min = std::min(t_min, t);
            t_max = std::max(t_max, t);
            t_sum += t;
        }
    net.out_mean = t_sum / double(data.size() * n_out);
    net.out_range = (t_max - t_min) > 0 ? (t_max - t_min) : 1.0;

    // layer shapes: n_in -> hidden... -> n_out
    std::vector<std::size_t> sizes = {n_in};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(n_out);
    Rng rng(cfg.seed);
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        Layer l;
        l.cols = sizes[i];
        l.rows = sizes[i + 1];
        const double scale = 1.0 / std::sqrt(double(l.cols));
        l.w.resize(l.rows * l.cols);
        l.b.assign(l.rows, 0.0);
        for (auto& v : l.w) v = rng.uniform(-scale, scale);
        net.layers.push_back(std::move(l));
    }

    const std::size_t n_layers = net.layers.size();
    std::vector<std::vector<double>> grad_w(n_layers), grad_b(n_layers);
    std::vector<std::vector<double>> m_w(n_layers), v_w(n_layers), m_b(n_layers), v_b(n_layers);
    for (std::size_t li = 0; li < n_layers; ++li) {
        grad_w[li].assign(net.layers[li].w.size(), 0.0);
        grad_b[li].assign(net.layers[li].b.size(), 0.0);
        m_w[li] = grad_w[li];
        v_w[li] = grad_w[li];
        m_b[li] = grad_b[li];
        v_b[li] = grad_b[li];
    }

    // pre-normalized copies of the dataset
    std::vector<std::vector<double>> xs(data.size()), ts(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        xs[i].resize(n_in);
        for (std::size_t k = 0; k < n_in; ++k)
            xs[i][k] = (data[i].input[k] - net.in_mean[k]) / net.in_range[k];
        ts[i].resize(n_out);
        for (std::size_t k = 0; k < n_out; ++k)
            ts[i][k] = (data[i].targets[k] - net.out_mean) / net.out_range;
    }

    detail::TrainWorkspace ws;
    ws.act.resize(n_layers + 1);
    ws.delta.resize(n_layers);

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult out;
    std::size_t adam_t = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t batch_start = 0; batch_start < order.size(); batch_start += cfg.batch_size) {
            const std::size_t batch_end = std::min(order.size(), batch_start + cfg.batch_size);
            const double inv_batch = 1.0 / double(batch_end - batch_start);
            for (std::size_t li = 0; li < n_layers; ++li) {
                std::fill(grad_w[li].begin(), grad_w[li].end(), 0.0);
                std::fill(grad_b[li].begin(), grad_b[li].end(), 0.0);
            }
            for (std::size_t bi = batch_start; bi < batch_end; ++bi) {
                const std::size_t ri = order[bi];
                // forward
                ws.act[0] = xs[ri];
                for (std::size_t li = 0; li < n_layers; ++li) {
                    const Layer& l = net.layers[li];
                    const bool last = li + 1 == n_layers;
                    auto& y = ws.act[li + 1];
                    y.assign(l.rows, 0.0);
                    const auto& x = ws.act[li];
                    for (std::size_t r = 0; r < l.rows; ++r) {
                        double acc = l.b[r];
                        const double* row = l.w.data() + r * l.cols;
                        for (std::size_t c2 = 0; c2 < l.cols; ++c2) acc += row[c2] * x[c2];
                        y[r] = last ? acc : std::max(0.0, acc);
                    }
                }
                // loss and output delta
                const auto& pred = ws.act[n_layers];
                const auto& target = ts[ri];
                double rec_loss = 0.0;
                auto& dout = ws.delta[n_layers - 1];
                dout.assign(n_out, 0.0);
                for (std::size_t a = 0; a < n_out; ++a) {
                    const double e = pred[a] - target[a];
                    const bool is_best = a == data[ri].best;
                    if (!is_best) {
                        rec_loss += e < 0 ? e * e : cfg.c * (e * e + e);
                    } else {
                        rec_loss += e >= 0 ? e * e : cfg.c * double(n_out - 1) * (e * e - e);
                    }
                    dout[a] = loss_gradient_term(e, is_best, cfg.c, n_out);
                }
                epoch_loss += rec_loss / double(n_out);
                // backward
                for (std::size_t li = n_layers; li-- > 0;) {
                    const Layer& l = net.layers[li];
                    const auto& x = ws.act[li];
                    const auto& d = ws.delta[li];
                    for (std::size_t r = 0; r < l.rows; ++r) {
                        const double dr = d[r];
                        if (dr == 0.0) continue;
                        grad_b[li][r] += dr;
                        double* gw = grad_w[li].data() + r * l.cols;
                        for (std::size_t c2 = 0; c2 < l.cols; ++c2) gw[c2] += dr * x[c2];
                    }
                    if (li == 0) break;
                    auto& dprev = ws.delta[li - 1];
                    dprev.assign(l.cols, 0.0);
                    for (std::size_t r = 0; r < l.rows; ++r) {
                        const double dr = d[r];
                        if (dr == 0.0) continue;
                        const double* row = l.w.data() + r * l.cols;
                        for (std::size_t c2 = 0; c2 < l.cols; ++c2) dprev[c2] += dr * row[c2];
                    }
                    // relu mask of the producing layer
                    const auto& act_prev = ws.act[li];
                    for (std::size_t c2 = 0; c2 < l.cols; ++c2)
                        if (act_prev[c2] <= 0.0) dprev[c2] = 0.0;
                }
            }
            // Adam step on the batch mean gradient
            ++adam_t;
            const double corr1 = 1.0 - std::pow(cfg.beta1, double(adam_t));
            const double corr2 = 1.0 - std::pow(cfg.beta2, double(adam_t));
            for (std::size_t li = 0; li < n_layers; ++li) {
                auto step = [&](std::vector<double>& p, std::vector<double>& g, std::vector<double>& m,
                                std::vector<double>& v) {
                    for (std::size_t i = 0; i < p.size(); ++i) {
                        const double gi = g[i] * inv_batch;
                        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                        p[i] -= cfg.step_size * (m[i] / corr1) / (std::sqrt(v[i] / corr2) + cfg.eps);
                    }
                };
                step(net.layers[li].w, grad_w[li], m_w[li], v_w[li]);
                step(net.layers[li].b, grad_b[li], m_b[li], v_b[li]);
            }
        }
        epoch_loss /= double(data.size());
        if (!std::isfinite(epoch_loss))
            throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch));
        out.epoch_loss.push_back(epoch_loss);
    }
    out.net = std::move(net);
    return out;
}

}  // namespace rcas
