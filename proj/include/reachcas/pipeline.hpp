#pragma once

// Config-driven drivers shared by the command-line tool and the
// integration tests: table generation, network training, cell
// verification, and the reachability runs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "reachcas/config.hpp"
#include "reachcas/hcas.hpp"
#include "reachcas/mdp.hpp"
#include "reachcas/nnet.hpp"
#include "reachcas/reach.hpp"
#include "reachcas/trainer.hpp"
#include "reachcas/vcas.hpp"
#include "reachcas/verifier.hpp"

namespace rcas::pipeline {

inline constexpr double kFpm = 1.0 / 60.0;  // ft/min -> ft/s
inline constexpr double kDeg = std::numbers::pi / 180.0;

// --- defaults -------------------------------------------------------------------

/// Vertical reachability h cuts: 64 fine cells within +-500 ft of the
/// intruder, 16 coarse cells per side out to +-3000 ft (96 cells, 97 cuts).
inline std::vector<double> default_vert_reach_h_cuts() {
    std::vector<double> cuts;
    for (int i = 0; i <= 16; ++i) cuts.push_back(-3000.0 + 156.25 * i);
    for (int j = 1; j <= 63; ++j) cuts.push_back(-500.0 + 15.625 * j);
    for (int i = 0; i <= 16; ++i) cuts.push_back(500.0 + 156.25 * i);
    return cuts;
}

inline Config default_config(const std::string& model) {
    require(model == "vcas" || model == "hcas", "model must be vcas or hcas");
    Config c;
    c.set("model", model);
    c.set("seed", 1.0);
    c.set("threads", 1.0);
    c.set("memory_budget_mb", 4096.0);

    c.set("cost.nmac", -1.0);
    c.set("cost.alert", -5e-3);
    c.set("cost.reversal", -8e-3);
    c.set("cost.strengthen", -5e-4);
    c.set("cost.weaken", -3e-4);
    c.set("cost.crossing", -1e-2);
    c.set("cost.coc_conflict", -1e-2);

    c.set("solve.tol", 1e-3);
    c.set("solve.max_sweeps", 400.0);
    c.set("solve.tau0_discount", 0.95);

    c.set("train.hidden", std::vector<double>{25, 25, 25, 25, 25});
    c.set("train.epochs", 500.0);
    c.set("train.batch_size", 512.0);
    c.set("train.c", 40.0);
    c.set("train.step_size", 1e-3);
    c.set("train.beta1", 0.9);
    c.set("train.beta2", 0.999);
    c.set("train.eps", 1e-8);

    if (model == "vcas") {
        // denser than VGrid::desk_default near the protected band: the
        // networks must resolve the policy cleanly where cells are 15 ft
        // tall, or the verified advisory sets go ambiguous exactly where
        // it matters
        std::vector<double> h_cuts = {0};
        for (double v : {25,  50,  75,  100, 150, 200,  300,  400,
                         550, 700, 950, 1200, 2000, 3000, 5000, 8000}) {
            h_cuts.push_back(v);
            h_cuts.insert(h_cuts.begin(), -v);
        }
        c.set("vcas.h_cuts", h_cuts);
        std::vector<double> fpm = {0};
        for (double v : {250, 500, 1000, 1500, 2000, 2500}) {
            fpm.push_back(v);
            fpm.insert(fpm.begin(), -v);
        }
        c.set("vcas.hdot_own_cuts_fpm", fpm);
        c.set("vcas.hdot_int_cuts_fpm", fpm);
        c.set("vcas.tau_max", 20.0);

        c.set("reach.h_cuts", default_vert_reach_h_cuts());
        c.set("reach.hdot_cuts_fpm", linspace(-2500.0, 2500.0, 21));
        c.set("reach.tau_segments", 20.0);
        c.set("reach.delta", 0.0);
        c.set("reach.split_budget", 6.0);
        c.set("reach.step_cap", 500.0);
        c.set("reach.boundary_injection", "true");
    } else {
        const hcas::HGrid g = hcas::HGrid::desk_default();
        c.set("hcas.rho_cuts", g.rho_cuts);
        std::vector<double> deg;
        for (double v : g.theta_cuts) deg.push_back(v / kDeg);
        c.set("hcas.theta_cuts_deg", deg);
        c.set("hcas.psi_cuts_deg", deg);
        c.set("hcas.tau_max", double(g.tau_max));
        c.set("hcas.v_own", g.v_own);
        c.set("hcas.v_int", g.v_int);
        c.set("hcas.tau_breaks", std::vector<double>{0, 5, 10, 15, 20, 30, 40, 60});

        c.set("reach.x_cuts", linspace(-50000.0, 50000.0, 26));
        c.set("reach.y_cuts", linspace(-50000.0, 50000.0, 26));
        c.set("reach.psi_segments", 24.0);
        c.set("reach.sensing_range", 48000.0);
        c.set("reach.delta", 0.0);
        c.set("reach.split_budget", 6.0);
        c.set("reach.step_cap", 500.0);
        c.set("reach.boundary_injection", "true");
    }
    return c;
}

// --- model builders ----------------------------------------------------------------

inline vcas::VGrid vgrid_from(const Config& c, bool paper_grid = false) {
    if (paper_grid) return vcas::VGrid::paper_default();
    vcas::VGrid g;
    g.h_cuts = c.get_doubles("vcas.h_cuts");
    for (double v : c.get_doubles("vcas.hdot_own_cuts_fpm")) g.hdot_own_cuts.push_back(v * kFpm);
    for (double v : c.get_doubles("vcas.hdot_int_cuts_fpm")) g.hdot_int_cuts.push_back(v * kFpm);
    g.tau_max = int(c.get_int("vcas.tau_max"));
    return g;
}

inline hcas::HGrid hgrid_from(const Config& c, bool paper_grid = false) {
    if (paper_grid) return hcas::HGrid::paper_default();
    hcas::HGrid g;
    g.rho_cuts = c.get_doubles("hcas.rho_cuts");
    for (double v : c.get_doubles("hcas.theta_cuts_deg")) g.theta_cuts.push_back(v * kDeg);
    for (double v : c.get_doubles("hcas.psi_cuts_deg")) g.psi_cuts.push_back(v * kDeg);
    g.tau_max = int(c.get_int("hcas.tau_max"));
    g.v_own = c.get_double("hcas.v_own", 200.0);
    g.v_int = c.get_double("hcas.v_int", 185.0);
    return g;
}

inline vcas::RewardCosts vcosts_from(const Config& c) {
    vcas::RewardCosts r;
    r.nmac = c.get_double("cost.nmac", -1.0);
    r.alert = c.get_double("cost.alert", -5e-3);
    r.reversal = c.get_double("cost.reversal", -8e-3);
    r.strengthen = c.get_double("cost.strengthen", -5e-4);
    r.weaken = c.get_double("cost.weaken", -3e-4);
    r.crossing = c.get_double("cost.crossing", -1e-2);
    return r;
}

inline hcas::RewardCosts hcosts_from(const Config& c) {
    hcas::RewardCosts r;
    r.nmac = c.get_double("cost.nmac", -1.0);
    r.alert = c.get_double("cost.alert", -5e-3);
    r.reversal = c.get_double("cost.reversal", -8e-3);
    r.strengthen = c.get_double("cost.strengthen", -5e-4);
    r.weaken = c.get_double("cost.weaken", -3e-4);
    r.coc_conflict = c.get_double("cost.coc_conflict", -1e-2);
    return r;
}

inline TrainConfig train_config_from(const Config& c, std::uint64_t net_seed_offset) {
    TrainConfig t;
    t.hidden.clear();
    for (double v : c.get_doubles("train.hidden")) t.hidden.push_back(std::size_t(v));
    t.epochs = std::size_t(c.get_int("train.epochs", 400));
    t.batch_size = std::size_t(c.get_int("train.batch_size", 512));
    t.c = c.get_double("train.c", 40.0);
    t.step_size = c.get_double("train.step_size", 1e-3);
    t.beta1 = c.get_double("train.beta1", 0.9);
    t.beta2 = c.get_double("train.beta2", 0.999);
    t.eps = c.get_double("train.eps", 1e-8);
    t.seed = std::uint64_t(c.get_int("seed", 1)) + net_seed_offset;
    return t;
}

inline reach::CellGrid vert_cell_grid_from(const Config& c) {
    reach::CellGrid g;
    std::vector<double> hdot;
    for (double v : c.get_doubles("reach.hdot_cuts_fpm")) hdot.push_back(v * kFpm);
    g.spatial = Grid({c.get_doubles("reach.h_cuts"), hdot});
    g.policy = {reach::OobPolicy::Drop, reach::OobPolicy::Clamp};
    g.tau_segments = std::size_t(c.get_int("reach.tau_segments", 20));
    return g;
}

inline reach::CellGrid hor_cell_grid_from(const Config& c) {
    reach::CellGrid g;
    const std::size_t psi_cells = std::size_t(c.get_int("reach.psi_segments", 24));
    g.spatial = Grid({c.get_doubles("reach.x_cuts"), c.get_doubles("reach.y_cuts"),
                      linspace(-std::numbers::pi, std::numbers::pi, psi_cells + 1)});
    g.policy = {reach::OobPolicy::Drop, reach::OobPolicy::Drop, reach::OobPolicy::Wrap};
    g.tau_segments = 0;
    return g;
}

inline reach::VertReachModel vert_reach_model_from(const Config& c) {
    reach::VertReachModel m;
    m.grid = vert_cell_grid_from(c);
    m.dyn.delta = c.get_double("reach.delta", 0.0);
    return m;
}

inline reach::HorReachModel hor_reach_model_from(const Config& c) {
    reach::HorReachModel m;
    m.grid = hor_cell_grid_from(c);
    m.dyn.delta = c.get_double("reach.delta", 0.0);
    m.v_own = c.get_double("hcas.v_own", 200.0);
    m.v_int = c.get_double("hcas.v_int", 185.0);
    m.sensing_range = c.get_double("reach.sensing_range", 48000.0);
    m.tau_breaks.clear();
    for (double v : c.get_doubles("hcas.tau_breaks")) m.tau_breaks.push_back(int(v));
    return m;
}

// --- table generation ---------------------------------------------------------------

struct GenTableResult {
    std::uint64_t num_states = 0;
    double residual = 0.0;
    std::size_t sweeps = 0;
    bool converged = false;
};

inline GenTableResult gen_table(const Config& c, const std::string& out_path, bool dry_run,
                                bool paper_grid) {
    const std::string model = c.get_string("model");
    GenTableResult out;
    const std::size_t budget = std::size_t(c.get_int("memory_budget_mb", 4096));
    const double tol = c.get_double("solve.tol", 1e-3);
    const std::size_t max_sweeps = std::size_t(c.get_int("solve.max_sweeps", 400));
    const double gamma0 = c.get_double("solve.tau0_discount", 0.95);

    QTableHeader hdr;
    hdr.config_hash = c.hash();
    hdr.seed = std::uint64_t(c.get_int("seed", 1));

    if (model == "vcas") {
        const vcas::VGrid g = vgrid_from(c, paper_grid);
        out.num_states = g.num_states();
        if (dry_run) return out;
        const vcas::VcasMdp mdp = vcas::build_vcas_mdp(g, vcosts_from(c), budget);
        const SolveResult r = vcas::solve_table(mdp, tol, max_sweeps, gamma0);
        out.residual = r.residual;
        out.sweeps = r.sweeps;
        out.converged = r.converged;
        save_qtable(r.table, out_path, hdr);
    } else {
        const hcas::HGrid g = hgrid_from(c, paper_grid);
        out.num_states = g.num_states();
        if (dry_run) return out;
        const hcas::HcasMdp mdp = hcas::build_hcas_mdp(g, hcosts_from(c), budget);
        const SolveResult r = hcas::solve_table(mdp, tol, max_sweeps, gamma0);
        out.residual = r.residual;
        out.sweeps = r.sweeps;
        out.converged = r.converged;
        save_qtable(r.table, out_path, hdr);
    }
    return out;
}

// --- training ------------------------------------------------------------------------

struct NetSpec {
    std::string name;       // file stem
    std::size_t s_adv = 0;
    int tau = -1;           // horizontal networks only
};

inline std::vector<NetSpec> network_inventory(const Config& c) {
    std::vector<NetSpec> out;
    if (c.get_string("model") == "vcas") {
        for (std::size_t s = 0; s < vcas::kNumAdvisories; ++s)
            out.push_back({"vcas_sadv" + std::to_string(s), s, -1});
    } else {
        const auto breaks = c.get_doubles("hcas.tau_breaks");
        for (std::size_t s = 0; s < hcas::kNumAdvisories; ++s)
            for (double tb : breaks)
                out.push_back({"hcas_sadv" + std::to_string(s) + "_tau" + std::to_string(int(tb)),
                               s, int(tb)});
    }
    return out;
}

inline void write_loss_csv(const std::vector<double>& loss, const std::string& path) {
    std::ofstream os(path);
    os << "epoch,loss\n";
    for (std::size_t i = 0; i < loss.size(); ++i) os << i << "," << format_double(loss[i]) << "\n";
}

/// Trains the full network inventory from a solved table. Returns the
/// written file paths in cache order.
inline std::vector<std::string> train_networks(const Config& c, const QTable& table,
                                               const std::string& out_dir,
                                               std::optional<std::size_t> only_s_adv = {},
                                               std::optional<int> only_tau = {},
                                               std::ostream* log = nullptr) {
    std::filesystem::create_directories(out_dir);
    const std::string model = c.get_string("model");
    const auto inventory = network_inventory(c);
    std::vector<std::string> written;
    const std::string comment_base =
        "reach-cas network config_hash=" + std::to_string(c.hash()) +
        " seed=" + std::to_string(c.get_int("seed", 1)) + " version=" + std::string(kToolVersion);
    for (std::size_t idx = 0; idx < inventory.size(); ++idx) {
        const NetSpec& spec = inventory[idx];
        if (only_s_adv && spec.s_adv != *only_s_adv) continue;
        if (only_tau && spec.tau != *only_tau) continue;
        std::vector<TrainRecord> records;
        if (model == "vcas") {
            records = vcas::training_records(table, vgrid_from(c), spec.s_adv);
        } else {
            records = hcas::training_records(table, hgrid_from(c), spec.tau, spec.s_adv);
        }
        TrainResult r = train(records, train_config_from(c, idx));
        r.net.comment = comment_base + " net=" + spec.name;
        if (model == "vcas") {
            r.net.input_names = {"h", "hdot_own", "tau"};
            r.net.output_names.assign(vcas::advisory_names().begin(), vcas::advisory_names().end());
        } else {
            r.net.input_names = {"x", "y", "psi"};
            r.net.output_names.assign(hcas::advisory_names().begin(), hcas::advisory_names().end());
        }
        const std::string path = out_dir + "/" + spec.name + ".nnet";
        save_network(r.net, path);
        write_loss_csv(r.epoch_loss, out_dir + "/" + spec.name + ".loss.csv");
        written.push_back(path);
        if (log)
            *log << "trained " << spec.name << " (" << records.size() << " records, final loss "
                 << r.epoch_loss.back() << ")\n";
    }
    return written;
}

/// Loads the inventory networks in cache order.
inline std::vector<Network> load_networks(const Config& c, const std::string& dir) {
    std::vector<Network> nets;
    for (const auto& spec : network_inventory(c)) {
        const std::string path = dir + "/" + spec.name + ".nnet";
        nets.push_back(load_network(path));
    }
    return nets;
}

// --- verification ------------------------------------------------------------------

/// Query boxes in cache cell order for one model.
inline std::vector<InputBox> verifier_cells(const Config& c) {
    const std::string model = c.get_string("model");
    std::vector<InputBox> cells;
    if (model == "vcas") {
        const reach::CellGrid g = vert_cell_grid_from(c);
        const reach::VertReachModel m{g, {}, vcas::kNmacAltitude};
        cells.reserve(g.num_query_cells());
        for (std::size_t tc = 0; tc < g.tau_segments; ++tc)
            for (std::size_t cell = 0; cell < g.num_cells(); ++cell)
                cells.push_back(m.query_box(cell, int(tc)));
    } else {
        const reach::CellGrid g = hor_cell_grid_from(c);
        const double sensor_error = c.get_double("reach.sensor_error", 0.0);
        if (sensor_error > 0) {
            cells = reach::inflate_cells_for_sensor_error(g, sensor_error);
        } else {
            const reach::HorReachModel m = hor_reach_model_from(c);
            cells.reserve(g.num_cells());
            for (std::size_t cell = 0; cell < g.num_cells(); ++cell)
                cells.push_back(m.query_box(cell, 0));
        }
    }
    return cells;
}

/// Multi-network advisory cache: batch-verifies every network over every
/// cell, resumable, deterministic bytes for a given config hash.
inline AdvisoryCache verify_cells(const Config& c, const std::vector<Network>& nets,
                                  const std::string& cache_path, unsigned threads,
                                  std::ostream* log = nullptr) {
    require(!nets.empty(), "verify_cells: no networks");
    const std::vector<InputBox> cells = verifier_cells(c);
    const std::size_t split_budget = std::size_t(c.get_int("reach.split_budget", 6));

    AdvisoryCacheHeader hdr;
    hdr.config_hash = c.hash();
    hdr.seed = std::uint64_t(c.get_int("seed", 1));
    hdr.num_networks = std::uint32_t(nets.size());
    hdr.num_actions = std::uint32_t(nets.front().output_dim());
    hdr.cells_per_network = cells.size();
    const std::size_t total = nets.size() * cells.size();

    std::vector<AdvisorySet> entries(total);
    std::size_t resume_from = 0;
    if (!cache_path.empty() && std::filesystem::exists(cache_path)) {
        std::ifstream existing(cache_path, std::ios::binary);
        try {
            const AdvisoryCacheHeader old = detail::read_cache_header(existing, cache_path);
            if (old.config_hash == hdr.config_hash && old.seed == hdr.seed &&
                old.num_networks == hdr.num_networks && old.num_actions == hdr.num_actions &&
                old.cells_per_network == hdr.cells_per_network) {
                const std::size_t eb = old.entry_bytes();
                while (resume_from < total) {
                    std::uint32_t bits = 0;
                    bool complete = true;
                    for (std::size_t b = 0; b < eb; ++b) {
                        const int ch = existing.get();
                        if (ch == EOF) {
                            complete = false;
                            break;
                        }
                        bits |= std::uint32_t(ch) << (8 * b);
                    }
                    if (!complete) break;
                    entries[resume_from].bits = bits;
                    ++resume_from;
                }
            }
        } catch (const ParseError&) {
            resume_from = 0;
        }
    }

    std::ofstream out;
    if (!cache_path.empty()) {
        const auto mode = std::ios::binary | (resume_from > 0 ? std::ios::in | std::ios::out
                                                              : std::ios::out | std::ios::trunc);
        out.open(cache_path, mode);
        if (!out) throw std::runtime_error("cannot open cache for writing: " + cache_path);
        if (resume_from == 0) {
            detail::write_cache_header(out, hdr);
        } else {
            out.seekp(std::streamoff(AdvisoryCacheHeader::kHeaderBytes +
                                     resume_from * hdr.entry_bytes()));
        }
    }

    const std::size_t block = 4096;
    for (std::size_t begin = resume_from; begin < total; begin += block) {
        const std::size_t end = std::min(total, begin + block);
        parallel_chunks(end - begin, threads, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) {
                const std::size_t gi = begin + i;
                const std::size_t net_idx = gi / cells.size();
                const std::size_t cell_idx = gi % cells.size();
                entries[gi] = possible_advisories(nets[net_idx], cells[cell_idx], split_budget);
            }
        });
        if (out.is_open()) {
            for (std::size_t i = begin; i < end; ++i)
                detail::append_entry(out, entries[i], hdr.entry_bytes());
            out.flush();
        }
        if (log) *log << "verified " << end << "/" << total << " queries\n";
    }
    return AdvisoryCache(hdr, std::move(entries));
}

/// Sampling soundness audit: per sampled cell, the argmax of the network at
/// sampled points must be inside the cached advisory set. Returns the
/// number of violations (must be zero).
inline std::size_t sample_audit(const Config& c, const std::vector<Network>& nets,
                                const AdvisoryCache& cache, std::size_t cells_to_check,
                                std::size_t points_per_cell, std::uint64_t seed) {
    const std::vector<InputBox> cells = verifier_cells(c);
    Rng rng(seed);
    std::size_t violations = 0;
    for (std::size_t k = 0; k < cells_to_check; ++k) {
        const std::size_t net_idx = rng.below(nets.size());
        const std::size_t cell_idx = rng.below(cells.size());
        const InputBox& box = cells[cell_idx];
        const AdvisorySet s = cache.at(net_idx, cell_idx);
        for (std::size_t p = 0; p < points_per_cell; ++p) {
            std::vector<double> x(box.size());
            for (std::size_t d = 0; d < box.size(); ++d) x[d] = rng.uniform(box.lo[d], box.hi[d]);
            const auto y = evaluate(nets[net_idx], x);
            std::size_t best = 0;
            for (std::size_t a = 1; a < y.size(); ++a)
                if (y[a] > y[best]) best = a;
            if (!s.contains(best)) ++violations;
        }
    }
    return violations;
}

// --- reachability drivers -------------------------------------------------------------

struct ReachRequest {
    double delta = 0.0;
    std::size_t pilot_delay = 0;          // 0 = nominal
    std::optional<std::size_t> reversal_limit;
    std::optional<std::pair<double, double>> safe_region;  // (t, d), horizontal only
    unsigned threads = 1;
};

struct ReachResult {
    reach::Verdict verdict = reach::Verdict::NonConverged;
    double tau0_min_sep = 0.0;
    double converged_min_sep = 0.0;
    int steps = 0;
    int first_nmac_step = -1;
};

inline ReachResult run_reach_vertical(const Config& c, const AdvisoryCache& cache,
                                      const ReachRequest& req, const std::string& out_dir = {}) {
    reach::VertReachModel m = vert_reach_model_from(c);
    m.dyn.delta = req.delta;
    reach::RunOptions opt;
    opt.tau_start = int(m.grid.tau_segments);
    opt.step_cap_after_tau0 = std::size_t(c.get_int("reach.step_cap", 500));
    opt.boundary_injection = c.get_bool("reach.boundary_injection", true);
    opt.threads = req.threads;

    ReachResult res;
    if (req.pilot_delay > 0) {
        const reach::DelayedOutcome out =
            reach::run_reachability_delayed(m, cache, opt, req.pilot_delay, req.reversal_limit);
        res.verdict = out.verdict;
        res.first_nmac_step = out.first_nmac_step;
        res.steps = int(out.trace_cell_counts.size());
        return res;
    }
    const reach::ReachOutcome out = reach::run_reachability(m, cache, opt);
    res.verdict = out.verdict;
    res.tau0_min_sep = out.tau0_min_separation;
    res.converged_min_sep = out.converged_min_separation;
    res.steps = int(out.trace.size()) - 1;
    res.first_nmac_step = out.first_nmac_step;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        reach::export_summary_csv(out, out_dir + "/summary.csv");
        reach::export_cells_csv(out, m, out_dir + "/cells_final.csv", false);
    }
    return res;
}

inline std::vector<reach::SweepRow> sweep_vertical(const Config& c, const AdvisoryCache& cache,
                                                   const std::vector<double>& deltas,
                                                   unsigned threads,
                                                   const std::string& csv_path = {}) {
    reach::VertReachModel m = vert_reach_model_from(c);
    reach::RunOptions opt;
    opt.tau_start = int(m.grid.tau_segments);
    opt.step_cap_after_tau0 = std::size_t(c.get_int("reach.step_cap", 500));
    opt.boundary_injection = c.get_bool("reach.boundary_injection", true);
    opt.threads = threads;
    const auto rows = reach::delta_sweep(m, cache, opt, deltas);
    if (!csv_path.empty()) {
        std::ofstream os(csv_path);
        os << "delta,tau0_min_sep,converged_min_sep,verdict\n";
        for (const auto& r : rows)
            os << format_double(r.delta) << "," << format_double(r.tau0_min_sep) << ","
               << format_double(r.converged_min_sep) << "," << reach::verdict_name(r.verdict)
               << "\n";
    }
    return rows;
}

// --- plot data --------------------------------------------------------------------------

/// Policy slice CSV for external plotting: the table's argmax (and the
/// network's, when given) over the (h, hdot_own) grid at fixed tau, s_adv.
inline void export_vert_policy_csv(const Config& c, const QTable& table, const Network* net,
                                   int tau, std::size_t s_adv, const std::string& path) {
    const vcas::VGrid g = vgrid_from(c);
    require(tau >= 0 && tau <= g.tau_max, "tau outside the table grid");
    require(s_adv < vcas::kNumAdvisories, "bad s_adv");
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "h_ft,hdot_own_fpm,table_advisory" << (net ? ",net_advisory" : "") << "\n";
    const Grid& grid = table.grid;
    std::size_t zero_int = 0;
    for (std::size_t i = 1; i < g.hdot_int_cuts.size(); ++i)
        if (std::abs(g.hdot_int_cuts[i]) < std::abs(g.hdot_int_cuts[zero_int])) zero_int = i;
    for (std::size_t ih = 0; ih < g.h_cuts.size(); ++ih)
        for (std::size_t io = 0; io < g.hdot_own_cuts.size(); ++io) {
            const std::size_t idx[5] = {std::size_t(tau), ih, io, zero_int, s_adv};
            const std::size_t flat = grid.flat(idx);
            os << format_double(g.h_cuts[ih]) << "," << format_double(g.hdot_own_cuts[io] / kFpm)
               << "," << vcas::advisory_names()[policy(table, flat)];
            if (net) {
                const std::vector<double> x = {g.h_cuts[ih], g.hdot_own_cuts[io], double(tau)};
                const auto y = evaluate(*net, x);
                std::size_t best = 0;
                for (std::size_t a = 1; a < y.size(); ++a)
                    if (y[a] > y[best]) best = a;
                os << "," << vcas::advisory_names()[best];
            }
            os << "\n";
        }
}

}  // namespace rcas::pipeline
