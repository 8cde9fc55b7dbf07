#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "reachcas/common.hpp"
#include "reachcas/nnet.hpp"

namespace rcas {

/// Axis-aligned box in raw (unnormalized) network-input units.
struct InputBox {
    std::vector<double> lo, hi;

    std::size_t size() const { return lo.size(); }

    void check_valid() const {
        require(lo.size() == hi.size(), "box dimension mismatch");
        for (std::size_t i = 0; i < lo.size(); ++i)
            require(lo[i] <= hi[i], "box lo > hi");
    }
};

/// Set of output actions, at most 32.
struct AdvisorySet {
    std::uint32_t bits = 0;

    static AdvisorySet all(std::size_t n) { return {n >= 32 ? ~0u : ((1u << n) - 1u)}; }
    bool contains(std::size_t a) const { return (bits >> a) & 1u; }
    void add(std::size_t a) { bits |= (1u << a); }
    void remove(std::size_t a) { bits &= ~(1u << a); }
    std::size_t count() const { return std::size_t(__builtin_popcount(bits)); }
    bool subset_of(const AdvisorySet& o) const { return (bits & ~o.bits) == 0; }
    AdvisorySet operator|(const AdvisorySet& o) const { return {bits | o.bits}; }
    bool operator==(const AdvisorySet& o) const = default;
};

/// Affine function of the normalized network input.
struct AffineForm {
    std::vector<double> coef;
    double cst = 0.0;

    double lower_over(std::span<const double> lo, std::span<const double> hi) const {
        double v = cst;
        for (std::size_t i = 0; i < coef.size(); ++i) v += coef[i] * (coef[i] >= 0 ? lo[i] : hi[i]);
        return v;
    }
    double upper_over(std::span<const double> lo, std::span<const double> hi) const {
        double v = cst;
        for (std::size_t i = 0; i < coef.size(); ++i) v += coef[i] * (coef[i] >= 0 ? hi[i] : lo[i]);
        return v;
    }
};

/// Affine lower/upper envelopes of one neuron over a fixed input box,
/// with cached concrete bounds.
struct SymbolicBounds {
    AffineForm lo_form, up_form;
    double concrete_lo = 0.0;
    double concrete_up = 0.0;
};

namespace detail {

/// Normalized box (clamped to the network's declared input range).
inline void normalize_box(const Network& net, const InputBox& box, std::vector<double>& lo,
                          std::vector<double>& hi) {
    const std::size_t n = net.input_dim();
    lo.resize(n);
    hi.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double l = std::clamp(box.lo[i], net.in_min[i], net.in_max[i]);
        const double h = std::clamp(box.hi[i], net.in_min[i], net.in_max[i]);
        lo[i] = (l - net.in_mean[i]) / net.in_range[i];
        hi[i] = (h - net.in_mean[i]) / net.in_range[i];
    }
}

/// Affine image through one layer: for each output neuron, the lower form
/// pulls lower/upper input forms by weight sign, and vice versa.
inline std::vector<SymbolicBounds> affine_layer(const Layer& layer,
                                                const std::vector<SymbolicBounds>& in,
                                                std::span<const double> lo, std::span<const double> hi) {
    const std::size_t n_in_coef = in.empty() ? 0 : in[0].lo_form.coef.size();
    std::vector<SymbolicBounds> out(layer.rows);
    for (std::size_t r = 0; r < layer.rows; ++r) {
        AffineForm& lf = out[r].lo_form;
        AffineForm& uf = out[r].up_form;
        lf.coef.assign(n_in_coef, 0.0);
        uf.coef.assign(n_in_coef, 0.0);
        lf.cst = layer.b[r];
        uf.cst = layer.b[r];
        const double* w = layer.w.data() + r * layer.cols;
        for (std::size_t c = 0; c < layer.cols; ++c) {
            const AffineForm& pick_lo = w[c] >= 0 ? in[c].lo_form : in[c].up_form;
            const AffineForm& pick_up = w[c] >= 0 ? in[c].up_form : in[c].lo_form;
            for (std::size_t k = 0; k < n_in_coef; ++k) {
                lf.coef[k] += w[c] * pick_lo.coef[k];
                uf.coef[k] += w[c] * pick_up.coef[k];
            }
            lf.cst += w[c] * pick_lo.cst;
            uf.cst += w[c] * pick_up.cst;
        }
        out[r].concrete_lo = lf.lower_over(lo, hi);
        out[r].concrete_up = uf.upper_over(lo, hi);
    }
    return out;
}

/// ReLU relaxation: active neurons pass through, inactive collapse to zero,
/// unstable neurons keep the chord-scaled upper form and the zero function
/// as lower bound.
inline void relu_layer(std::vector<SymbolicBounds>& ns, std::span<const double> lo,
                       std::span<const double> hi) {
    for (auto& n : ns) {
        if (n.concrete_lo >= 0.0) continue;  // active
        if (n.concrete_up <= 0.0) {          // inactive
            n.lo_form.coef.assign(n.lo_form.coef.size(), 0.0);
            n.lo_form.cst = 0.0;
            n.up_form = n.lo_form;
            n.concrete_lo = 0.0;
            n.concrete_up = 0.0;
            continue;
        }
        // unstable: relu(z) <= u (z - l) / (u - l) for z in [l, u]
        const double l = n.concrete_lo, u = n.concrete_up;
        const double slope = u / (u - l);
        for (auto& c : n.up_form.coef) c *= slope;
        n.up_form.cst = slope * (n.up_form.cst - l);
        n.lo_form.coef.assign(n.lo_form.coef.size(), 0.0);
        n.lo_form.cst = 0.0;
        n.concrete_lo = 0.0;
        n.concrete_up = n.up_form.upper_over(lo, hi);
    }
}

struct PropagateState {
    std::vector<SymbolicBounds> last_hidden;  // before the output layer
    std::vector<SymbolicBounds> outputs;      // normalized output units
    std::vector<double> lo, hi;               // normalized box
};

inline PropagateState propagate_normalized(const Network& net, const InputBox& box) {
    box.check_valid();
    require(box.size() == net.input_dim(), "propagate: box dimension mismatch");
    PropagateState st;
    normalize_box(net, box, st.lo, st.hi);

    std::vector<SymbolicBounds> cur(net.input_dim());
    for (std::size_t i = 0; i < net.input_dim(); ++i) {
        cur[i].lo_form.coef.assign(net.input_dim(), 0.0);
        cur[i].lo_form.coef[i] = 1.0;
        cur[i].up_form = cur[i].lo_form;
        cur[i].concrete_lo = st.lo[i];
        cur[i].concrete_up = st.hi[i];
    }
    for (std::size_t li = 0; li + 1 < net.layers.size(); ++li) {
        cur = affine_layer(net.layers[li], cur, st.lo, st.hi);
        relu_layer(cur, st.lo, st.hi);
    }
    st.last_hidden = cur;
    st.outputs = affine_layer(net.layers.back(), cur, st.lo, st.hi);
    return st;
}

}  // namespace detail

/// Sound affine lower/upper bounds of each denormalized output over the box.
inline std::vector<SymbolicBounds> propagate(const Network& net, const InputBox& box) {
    net.check_valid();
    auto st = detail::propagate_normalized(net, box);
    for (auto& o : st.outputs) {
        for (auto& c : o.lo_form.coef) c *= net.out_range;
        for (auto& c : o.up_form.coef) c *= net.out_range;
        o.lo_form.cst = o.lo_form.cst * net.out_range + net.out_mean;
        o.up_form.cst = o.up_form.cst * net.out_range + net.out_mean;
        o.concrete_lo = o.concrete_lo * net.out_range + net.out_mean;
        o.concrete_up = o.concrete_up * net.out_range + net.out_mean;
    }
    return st.outputs;
}

inline constexpr double kDominanceMargin = 1e-9;

namespace detail {

/// Actions that could be the argmax somewhere in the box: a is excluded
/// only when some b dominates it, i.e. the symbolic lower bound of
/// (score_b - score_a) is positive over the whole box. The difference is
/// taken through the shared last hidden layer so input correlations are
/// kept.
inline AdvisorySet surviving_actions(const Network& net, const PropagateState& st) {
    const Layer& out = net.layers.back();
    const std::size_t n = out.rows;
    const std::size_t n_coef = net.input_dim();
    AdvisorySet result = AdvisorySet::all(n);
    AffineForm diff;
    diff.coef.resize(n_coef);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n && result.contains(a); ++b) {
            if (b == a) continue;
            // lower affine form of score_b - score_a over the box
            std::fill(diff.coef.begin(), diff.coef.end(), 0.0);
            diff.cst = out.b[b] - out.b[a];
            const double* wb = out.w.data() + b * out.cols;
            const double* wa = out.w.data() + a * out.cols;
            for (std::size_t c = 0; c < out.cols; ++c) {
                const double w = wb[c] - wa[c];
                const AffineForm& pick = w >= 0 ? st.last_hidden[c].lo_form : st.last_hidden[c].up_form;
                for (std::size_t k = 0; k < n_coef; ++k) diff.coef[k] += w * pick.coef[k];
                diff.cst += w * pick.cst;
            }
            const double lb = diff.lower_over(st.lo, st.hi) * net.out_range;
            if (lb > kDominanceMargin) result.remove(a);
        }
    }
    return result;
}

inline AdvisorySet possible_advisories_rec(const Network& net, const InputBox& box,
                                           std::size_t split_budget) {
    const auto st = propagate_normalized(net, box);
    AdvisorySet s = surviving_actions(net, st);
    if (s.count() <= 1 || split_budget == 0) return s;

    // bisect the widest dimension in normalized units; ties take the
    // lowest dimension index
    std::size_t dim = 0;
    double widest = -1.0;
    for (std::size_t i = 0; i < box.size(); ++i) {
        const double w = st.hi[i] - st.lo[i];
        if (w > widest + 1e-15) {
            widest = w;
            dim = i;
        }
    }
    if (widest <= 1e-12) return s;  // nothing left to split
    InputBox left = box, right = box;
    const double mid = 0.5 * (box.lo[dim] + box.hi[dim]);
    left.hi[dim] = mid;
    right.lo[dim] = mid;
    const AdvisorySet split = possible_advisories_rec(net, left, split_budget - 1) |
                              possible_advisories_rec(net, right, split_budget - 1);
    // children are refinements of this box, so the union can only shrink
    return {split.bits & s.bits};
}

}  // namespace detail

/// Over-approximation of the set of argmax actions over the box, refined by
/// recursive bisection up to split_budget levels.
inline AdvisorySet possible_advisories(const Network& net, const InputBox& box,
                                       std::size_t split_budget) {
    net.check_valid();
    require(net.output_dim() <= 32, "possible_advisories supports at most 32 actions");
    return detail::possible_advisories_rec(net, box, split_budget);
}

// --- advisory-set cache file ------------------------------------------------
//
//   magic "ACST" | u32 version | u64 config_hash | u64 seed
//   u32 num_networks | u32 num_actions | u64 cells_per_network
//   entries net-major, cell-minor; ceil(num_actions / 8) bytes each,
//   little-endian bit order.

struct AdvisoryCacheHeader {
    std::uint32_t version = 1;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::uint32_t num_networks = 0;
    std::uint32_t num_actions = 0;
    std::uint64_t cells_per_network = 0;

    std::size_t entry_bytes() const { return (num_actions + 7) / 8; }
    static constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 8 + 4 + 4 + 8;
};

class AdvisoryCache {
public:
    AdvisoryCache() = default;
    AdvisoryCache(AdvisoryCacheHeader hdr, std::vector<AdvisorySet> entries)
        : hdr_(hdr), entries_(std::move(entries)) {
        require(entries_.size() == hdr_.num_networks * hdr_.cells_per_network,
                "cache entry count mismatch");
    }

    const AdvisoryCacheHeader& header() const { return hdr_; }
    std::size_t size() const { return entries_.size(); }

    AdvisorySet at(std::size_t net_idx, std::size_t cell_idx) const {
        require(net_idx < hdr_.num_networks && cell_idx < hdr_.cells_per_network,
                "cache lookup out of range: net " + std::to_string(net_idx) + " cell " +
                    std::to_string(cell_idx));
        return entries_[net_idx * hdr_.cells_per_network + cell_idx];
    }

    const std::vector<AdvisorySet>& entries() const { return entries_; }

private:
    AdvisoryCacheHeader hdr_;
    std::vector<AdvisorySet> entries_;
};

namespace detail {

inline void write_cache_header(std::ostream& os, const AdvisoryCacheHeader& hdr) {
    os.write("ACST", 4);
    write_raw(os, hdr.version);
    write_raw(os, hdr.config_hash);
    write_raw(os, hdr.seed);
    write_raw(os, hdr.num_networks);
    write_raw(os, hdr.num_actions);
    write_raw(os, hdr.cells_per_network);
}

inline AdvisoryCacheHeader read_cache_header(std::istream& is, const std::string& path) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "ACST", 4) != 0) throw ParseError(path + ": not an ACST file");
    AdvisoryCacheHeader hdr;
    hdr.version = read_raw<std::uint32_t>(is, "version");
    if (hdr.version != 1) throw ParseError(path + ": unsupported ACST version");
    hdr.config_hash = read_raw<std::uint64_t>(is, "config hash");
    hdr.seed = read_raw<std::uint64_t>(is, "seed");
    hdr.num_networks = read_raw<std::uint32_t>(is, "network count");
    hdr.num_actions = read_raw<std::uint32_t>(is, "action count");
    hdr.cells_per_network = read_raw<std::uint64_t>(is, "cell count");
    if (hdr.num_actions == 0 || hdr.num_actions > 32) throw ParseError(path + ": bad action count");
    return hdr;
}

inline void append_entry(std::ostream& os, const AdvisorySet& s, std::size_t entry_bytes) {
    for (std::size_t b = 0; b < entry_bytes; ++b) {
        const unsigned char byte = (s.bits >> (8 * b)) & 0xffu;
        os.put(char(byte));
    }
}

}  // namespace detail

inline void save_advisory_cache(const AdvisoryCache& cache, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    detail::write_cache_header(os, cache.header());
    for (const auto& e : cache.entries())
        detail::append_entry(os, e, cache.header().entry_bytes());
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline AdvisoryCache load_advisory_cache(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    const AdvisoryCacheHeader hdr = detail::read_cache_header(is, path);
    const std::size_t n = hdr.num_networks * hdr.cells_per_network;
    std::vector<AdvisorySet> entries(n);
    const std::size_t eb = hdr.entry_bytes();
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits = 0;
        for (std::size_t b = 0; b < eb; ++b) {
            const int ch = is.get();
            if (ch == EOF) throw ParseError(path + ": truncated cache, entry " + std::to_string(i));
            bits |= std::uint32_t(ch) << (8 * b);
        }
        entries[i].bits = bits;
    }
    return AdvisoryCache(hdr, std::move(entries));
}

struct BatchProgress {
    std::size_t done = 0;
    std::size_t total = 0;
};

/// Element-wise possible_advisories over a list of cells, parallel over a
/// deterministic chunking, resumable from a partial cache file. The output
/// bytes are identical regardless of thread count or interruptions.
inline std::vector<AdvisorySet> batch_verify(
    const Network& net, const std::vector<InputBox>& cells, std::size_t split_budget,
    unsigned threads = 1, const std::string& checkpoint_path = {},
    const AdvisoryCacheHeader& hdr_template = {},
    const std::function<void(const BatchProgress&)>& progress = {}) {
    net.check_valid();
    std::vector<AdvisorySet> results(cells.size());
    std::size_t resume_from = 0;

    AdvisoryCacheHeader hdr = hdr_template;
    hdr.num_networks = 1;
    hdr.num_actions = std::uint32_t(net.output_dim());
    hdr.cells_per_network = cells.size();

    std::ofstream checkpoint;
    if (!checkpoint_path.empty()) {
        // recover finished entries from an interrupted run
        std::ifstream existing(checkpoint_path, std::ios::binary);
        if (existing) {
            try {
                const AdvisoryCacheHeader old = detail::read_cache_header(existing, checkpoint_path);
                if (old.config_hash == hdr.config_hash && old.seed == hdr.seed &&
                    old.num_actions == hdr.num_actions && old.cells_per_network == cells.size()) {
                    const std::size_t eb = old.entry_bytes();
                    while (resume_from < cells.size()) {
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
                        results[resume_from].bits = bits;
                        ++resume_from;
                    }
                }
            } catch (const ParseError&) {
                resume_from = 0;  // unusable checkpoint, recompute everything
            }
        }
        existing.close();
        const auto mode = std::ios::binary | (resume_from > 0 ? std::ios::in | std::ios::out
                                                              : std::ios::out | std::ios::trunc);
        checkpoint.open(checkpoint_path, mode);
        if (!checkpoint) throw std::runtime_error("cannot open checkpoint: " + checkpoint_path);
        if (resume_from == 0) {
            detail::write_cache_header(checkpoint, hdr);
        } else {
            checkpoint.seekp(std::streamoff(AdvisoryCacheHeader::kHeaderBytes +
                                            resume_from * hdr.entry_bytes()));
        }
    }

    // compute in sequential blocks (parallel inside each) so the checkpoint
    // grows as work finishes; a single writer appends in cell order
    const std::size_t block = 4096;
    for (std::size_t begin = resume_from; begin < cells.size(); begin += block) {
        const std::size_t end = std::min(cells.size(), begin + block);
        parallel_chunks(end - begin, threads, [&](std::size_t, std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i)
                results[begin + i] = possible_advisories(net, cells[begin + i], split_budget);
        });
        if (!checkpoint_path.empty()) {
            for (std::size_t i = begin; i < end; ++i)
                detail::append_entry(checkpoint, results[i], hdr.entry_bytes());
            checkpoint.flush();
            if (!checkpoint) throw std::runtime_error("checkpoint write failed: " + checkpoint_path);
        }
        if (progress) progress({end, cells.size()});
    }
    return results;
}

}  // namespace rcas
