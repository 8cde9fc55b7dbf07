// Command-line front end for the collision-avoidance verification pipeline:
// score-table generation, network training, cell verification, and the
// closed-loop reachability analysis.

#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "reachcas/pipeline.hpp"

namespace {

constexpr int kExitSuccess = 0;
constexpr int kExitUnsafe = 1;
constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

unsigned thread_count(const rcas::Config& cfg, unsigned flag) {
    if (flag > 0) return flag;
    return unsigned(cfg.get_int("threads", 1));
}

std::vector<double> parse_delta_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    if (out.empty()) throw rcas::ContractError("empty delta list");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reach-cas: collision-avoidance tables, networks, and reachability proofs"};
    app.require_subcommand(1);

    auto* init = app.add_subcommand("init-config", "write a documented default configuration");
    std::string init_model = "vcas";
    std::string init_out = "reachcas.cfg";
    init->add_option("--model", init_model, "vcas or hcas")->check(CLI::IsMember({"vcas", "hcas"}));
    init->add_option("--out", init_out, "output path");

    auto* gen = app.add_subcommand("gen-table", "solve the MDP and write the score table");
    std::string gen_cfg, gen_out = "table.qtbl";
    bool gen_dry = false, gen_paper = false;
    gen->add_option("--config", gen_cfg, "configuration file")->required();
    gen->add_option("--out", gen_out, "output table path");
    gen->add_flag("--dry-run", gen_dry, "print the state count without solving");
    gen->add_flag("--paper-grid", gen_paper, "use the full-scale published grid");

    auto* tr = app.add_subcommand("train", "train the network inventory from a table");
    std::string tr_cfg, tr_table = "table.qtbl", tr_out = "nets";
    long tr_sadv = -1, tr_tau = -1;
    tr->add_option("--config", tr_cfg, "configuration file")->required();
    tr->add_option("--table", tr_table, "input score table");
    tr->add_option("--out", tr_out, "output directory");
    tr->add_option("--s-adv", tr_sadv, "train only this previous advisory");
    tr->add_option("--tau", tr_tau, "train only this tau breakpoint (hcas)");

    auto* info = app.add_subcommand("nnet-info", "print network dimensions and normalization");
    std::string info_path;
    info->add_option("file", info_path, "network file")->required();

    auto* ver = app.add_subcommand("verify-cells", "compute advisory sets for every cell");
    std::string ver_cfg, ver_nets = "nets", ver_out = "cells.acst";
    unsigned ver_threads = 0;
    long ver_audit = 0;
    ver->add_option("--config", ver_cfg, "configuration file")->required();
    ver->add_option("--nets", ver_nets, "network directory");
    ver->add_option("--out", ver_out, "advisory cache output (resumable)");
    ver->add_option("--threads", ver_threads, "worker threads");
    ver->add_option("--sample-audit", ver_audit, "audit N random cells against sampling");

    auto* re = app.add_subcommand("reach", "run the closed-loop reachability analysis");
    std::string re_cfg, re_cache = "cells.acst", re_out;
    double re_delta = -1;
    unsigned re_threads = 0;
    long re_delay = 0, re_revlimit = -1;
    re->add_option("--config", re_cfg, "configuration file")->required();
    re->add_option("--cache", re_cache, "advisory cache from verify-cells");
    re->add_option("--out-dir", re_out, "trace output directory");
    re->add_option("--delta", re_delta, "dynamics relaxation (overrides config)");
    re->add_option("--pilot-delay", re_delay, "pilot delay epsilon in seconds");
    re->add_option("--reversal-limit", re_revlimit, "online reversal budget");
    re->add_option("--threads", re_threads, "worker threads");

    auto* sw = app.add_subcommand("sweep", "run reachability across a delta list");
    std::string sw_cfg, sw_cache = "cells.acst", sw_deltas = "0", sw_out = "sweep.csv";
    unsigned sw_threads = 0;
    sw->add_option("--config", sw_cfg, "configuration file")->required();
    sw->add_option("--cache", sw_cache, "advisory cache");
    sw->add_option("--deltas", sw_deltas, "comma-separated delta values");
    sw->add_option("--out", sw_out, "sweep CSV");
    sw->add_option("--threads", sw_threads, "worker threads");

    auto* ex = app.add_subcommand("export-plot-data", "policy slice CSV for plotting");
    std::string ex_cfg, ex_table = "table.qtbl", ex_net, ex_out = "policy.csv";
    long ex_tau = 0, ex_sadv = 0;
    ex->add_option("--config", ex_cfg, "configuration file")->required();
    ex->add_option("--table", ex_table, "score table");
    ex->add_option("--net", ex_net, "optional network for side-by-side policies");
    ex->add_option("--tau", ex_tau, "tau slice");
    ex->add_option("--s-adv", ex_sadv, "previous advisory");
    ex->add_option("--out", ex_out, "output CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitSuccess : kExitUsage;
    }

    try {
        if (*init) {
            rcas::pipeline::default_config(init_model).to_file(init_out);
            std::cout << "wrote " << init_out << "\n";
            return kExitSuccess;
        }

        if (*gen) {
            const rcas::Config cfg = rcas::Config::from_file(gen_cfg);
            const auto r = rcas::pipeline::gen_table(cfg, gen_out, gen_dry, gen_paper);
            std::cout << "states: " << r.num_states << "\n";
            if (!gen_dry) {
                std::cout << "sweeps: " << r.sweeps << "\nresidual: " << r.residual << "\n";
                if (!r.converged) std::cout << "warning: solve did not reach tolerance\n";
                std::cout << "wrote " << gen_out << "\n";
            }
            return kExitSuccess;
        }

        if (*tr) {
            const rcas::Config cfg = rcas::Config::from_file(tr_cfg);
            const rcas::QTable table = rcas::load_qtable(tr_table);
            std::optional<std::size_t> only_sadv;
            std::optional<int> only_tau;
            if (tr_sadv >= 0) only_sadv = std::size_t(tr_sadv);
            if (tr_tau >= 0) only_tau = int(tr_tau);
            const auto written = rcas::pipeline::train_networks(cfg, table, tr_out, only_sadv,
                                                                only_tau, &std::cout);
            std::cout << "wrote " << written.size() << " networks to " << tr_out << "\n";
            return kExitSuccess;
        }

        if (*info) {
            const rcas::Network n = rcas::load_network(info_path);
            std::cout << "layers: " << n.layers.size() << "\nshape: " << n.input_dim();
            for (const auto& l : n.layers) std::cout << " -> " << l.rows;
            std::cout << "\ninput mins:";
            for (double v : n.in_min) std::cout << " " << v;
            std::cout << "\ninput maxes:";
            for (double v : n.in_max) std::cout << " " << v;
            std::cout << "\ninput means:";
            for (double v : n.in_mean) std::cout << " " << v;
            std::cout << "\ninput ranges:";
            for (double v : n.in_range) std::cout << " " << v;
            std::cout << "\noutput mean/range: " << n.out_mean << " " << n.out_range << "\n";
            if (!n.input_names.empty()) {
                std::cout << "inputs:";
                for (const auto& s : n.input_names) std::cout << " " << s;
                std::cout << "\n";
            }
            if (!n.output_names.empty()) {
                std::cout << "outputs:";
                for (const auto& s : n.output_names) std::cout << " " << s;
                std::cout << "\n";
            }
            return kExitSuccess;
        }

        if (*ver) {
            const rcas::Config cfg = rcas::Config::from_file(ver_cfg);
            const auto nets = rcas::pipeline::load_networks(cfg, ver_nets);
            const auto cache = rcas::pipeline::verify_cells(cfg, nets, ver_out,
                                                            thread_count(cfg, ver_threads),
                                                            &std::cout);
            std::cout << "cache entries: " << cache.size() << "\nwrote " << ver_out << "\n";
            if (ver_audit > 0) {
                const std::size_t bad = rcas::pipeline::sample_audit(
                    cfg, nets, cache, std::size_t(ver_audit), 100,
                    std::uint64_t(cfg.get_int("seed", 1)));
                std::cout << "sample audit violations: " << bad << "\n";
                if (bad > 0) return kExitInternal;
            }
            return kExitSuccess;
        }

        if (*re) {
            const rcas::Config cfg = rcas::Config::from_file(re_cfg);
            if (cfg.get_string("model") != "vcas")
                throw rcas::ContractError("reach currently drives the vertical model; "
                                          "use the library API for horizontal studies");
            const auto cache = rcas::load_advisory_cache(re_cache);
            rcas::pipeline::ReachRequest req;
            req.delta = re_delta >= 0 ? re_delta : cfg.get_double("reach.delta", 0.0);
            req.pilot_delay = std::size_t(std::max(0l, re_delay));
            if (re_revlimit >= 0) req.reversal_limit = std::size_t(re_revlimit);
            req.threads = thread_count(cfg, re_threads);
            const auto res = rcas::pipeline::run_reach_vertical(cfg, cache, req, re_out);
            std::cout << "verdict: " << rcas::reach::verdict_name(res.verdict) << "\n";
            if (req.pilot_delay == 0) {
                std::cout << "tau0 min separation: " << res.tau0_min_sep << " ft\n";
                std::cout << "converged min separation: " << res.converged_min_sep << " ft\n";
            }
            if (res.first_nmac_step >= 0)
                std::cout << "first NMAC at step " << res.first_nmac_step << "\n";
            return res.verdict == rcas::reach::Verdict::PotentiallyUnsafe ? kExitUnsafe
                                                                          : kExitSuccess;
        }

        if (*sw) {
            const rcas::Config cfg = rcas::Config::from_file(sw_cfg);
            const auto cache = rcas::load_advisory_cache(sw_cache);
            const auto rows = rcas::pipeline::sweep_vertical(
                cfg, cache, parse_delta_list(sw_deltas), thread_count(cfg, sw_threads), sw_out);
            for (const auto& r : rows)
                std::cout << "delta " << r.delta << ": " << rcas::reach::verdict_name(r.verdict)
                          << " (tau0 " << r.tau0_min_sep << " ft, converged "
                          << r.converged_min_sep << " ft)\n";
            std::cout << "wrote " << sw_out << "\n";
            return kExitSuccess;
        }

        if (*ex) {
            const rcas::Config cfg = rcas::Config::from_file(ex_cfg);
            const rcas::QTable table = rcas::load_qtable(ex_table);
            std::optional<rcas::Network> net;
            if (!ex_net.empty()) net = rcas::load_network(ex_net);
            rcas::pipeline::export_vert_policy_csv(cfg, table, net ? &*net : nullptr, int(ex_tau),
                                                   std::size_t(ex_sadv), ex_out);
            std::cout << "wrote " << ex_out << "\n";
            return kExitSuccess;
        }
    } catch (const rcas::ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const rcas::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const rcas::CapacityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitUsage;
}
