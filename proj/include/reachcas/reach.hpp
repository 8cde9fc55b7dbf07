#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reachcas/common.hpp"
#include "reachcas/grid.hpp"
#include "reachcas/hcas.hpp"
#include "reachcas/interval.hpp"
#include "reachcas/nnet.hpp"
#include "reachcas/vcas.hpp"
#include "reachcas/verifier.hpp"

namespace rcas::reach {

// --- turning error functions -------------------------------------------------

/// e1(x) = (x - sin x) / x, even, zero at zero; series below 1e-4 avoids
/// catastrophic cancellation.
inline double e1(double x) {
    const double ax = std::abs(x);
    if (ax < 1e-4) {
        const double x2 = x * x;
        return x2 / 6.0 - x2 * x2 / 120.0;
    }
    return (x - std::sin(x)) / x;
}

/// e2(x) = (1 - cos x) / x, odd, zero at zero.
inline double e2(double x) {
    if (std::abs(x) < 1e-4) {
        const double x2 = x * x;
        return x / 2.0 - x * x2 / 24.0;
    }
    return (1.0 - std::cos(x)) / x;
}

/// Exact range of e1 over an interval: even and increasing in |x| on (-pi, pi).
inline Interval e1_range(const Interval& u) {
    require(u.lo > -std::numbers::pi && u.hi < std::numbers::pi, "e1 domain is (-pi, pi)");
    const double a = std::abs(u.lo), b = std::abs(u.hi);
    const double hi = e1(std::max(a, b));
    const double lo = u.contains(0.0) ? 0.0 : e1(std::min(a, b));
    return {lo, hi};
}

/// Exact range of e2 over an interval: odd, increasing on the turn-rate
/// domain up to its interior maximum at x* = 2.3311; both candidates and the
/// endpoints are checked.
inline Interval e2_range(const Interval& u) {
    require(u.lo > -std::numbers::pi && u.hi < std::numbers::pi, "e2 domain is (-pi, pi)");
    constexpr double kCrit = 2.331122370414423;  // root of x sin x + cos x = 1
    double lo = std::min(e2(u.lo), e2(u.hi));
    double hi = std::max(e2(u.lo), e2(u.hi));
    if (u.contains(kCrit)) hi = std::max(hi, e2(kCrit));
    if (u.contains(-kCrit)) lo = std::min(lo, e2(-kCrit));
    return {lo, hi};
}

// --- cells -------------------------------------------------------------------

/// What happens to successor mass leaving the grid in one dimension.
/// Drop: the state exits the monitored domain (covered by boundary
/// injection). Clamp: the model saturates at the domain edge. Wrap: the
/// coordinate is an angle.
enum class OobPolicy { Drop, Clamp, Wrap };

/// Spatial cell grid for reachability, plus the unit tau segments used to
/// build verifier query boxes when tau is a network input.
struct CellGrid {
    Grid spatial;
    std::vector<OobPolicy> policy;
    std::size_t tau_segments = 0;  // 0 when tau is not a network input

    std::size_t ndims() const { return spatial.ndims(); }

    std::size_t num_cells() const {
        std::size_t n = 1;
        for (std::size_t d = 0; d < spatial.ndims(); ++d) n *= spatial.dim_size(d) - 1;
        return n;
    }

    std::size_t num_query_cells() const { return num_cells() * std::max<std::size_t>(1, tau_segments); }

    std::size_t cells_in_dim(std::size_t d) const { return spatial.dim_size(d) - 1; }

    std::size_t cell_flat(std::span<const std::size_t> idx) const {
        std::size_t f = 0;
        for (std::size_t d = 0; d < ndims(); ++d) f = f * cells_in_dim(d) + idx[d];
        return f;
    }

    void cell_unflat(std::size_t f, std::span<std::size_t> out) const {
        for (std::size_t d = ndims(); d-- > 0;) {
            out[d] = f % cells_in_dim(d);
            f /= cells_in_dim(d);
        }
    }

    Interval cell_interval(std::size_t d, std::size_t i) const {
        return {spatial.cuts(d)[i], spatial.cuts(d)[i + 1]};
    }

    std::vector<Interval> cell_box(std::size_t cell) const {
        std::vector<std::size_t> idx(ndims());
        cell_unflat(cell, idx);
        std::vector<Interval> box(ndims());
        for (std::size_t d = 0; d < ndims(); ++d) box[d] = cell_interval(d, idx[d]);
        return box;
    }

    /// Cell containing a point (clamped; points on a cut go to the lower cell).
    std::size_t locate(std::span<const double> x) const {
        std::size_t f = 0;
        for (std::size_t d = 0; d < ndims(); ++d) {
            auto [i, t] = spatial.bracket(d, x[d]);
            if (i >= cells_in_dim(d)) i = cells_in_dim(d) - 1;
            f = f * cells_in_dim(d) + i;
        }
        return f;
    }

    bool in_domain(std::span<const double> x) const {
        for (std::size_t d = 0; d < ndims(); ++d)
            if (x[d] < spatial.cuts(d).front() || x[d] > spatial.cuts(d).back()) return false;
        return true;
    }

    void check_valid() const {
        require(policy.size() == spatial.ndims(), "cell grid policy size mismatch");
        for (std::size_t d = 0; d < spatial.ndims(); ++d)
            require(spatial.dim_size(d) >= 2, "cell grid dimension needs at least one cell");
    }
};

/// Over-approximated next-step state region: an axis-aligned box over the
/// spatial dimensions plus optional coupled linear constraints
/// lo <= coef . x <= hi that hold for every trajectory from the cell.
struct DynBounds {
    std::vector<Interval> box;
    struct Coupled {
        std::vector<double> coef;
        double lo, hi;
    };
    std::vector<Coupled> coupled;
};

// --- dynamics bounds ----------------------------------------------------------

/// Vertical next-step bounds for a cell (h, hdot_own intervals) under an
/// acceleration interval, assuming a level intruder. Box per the one-step
/// kinematics; the coupled constraint eliminates the acceleration:
/// 2h' + hdot' = 2h - hdot exactly.
inline DynBounds vert_reach_bounds(const Interval& h, const Interval& hdot, const Interval& accel) {
    DynBounds b;
    b.box.resize(2);
    b.box[0] = {h.lo - hdot.hi - 0.5 * accel.hi, h.hi - hdot.lo - 0.5 * accel.lo};
    b.box[1] = {hdot.lo + accel.lo, hdot.hi + accel.hi};
    b.coupled.push_back({{2.0, 1.0}, 2.0 * h.lo - hdot.hi, 2.0 * h.hi - hdot.lo});
    return b;
}

/// Horizontal next-step bounds for a cell (x, y, psi intervals) under
/// bounded turn rates. Each summand of the rearranged position update is
/// bounded by interval arithmetic with exact trig ranges, then the box is
/// rotated into the new ownship frame (heading change -u_own).
inline DynBounds hor_reach_bounds(const Interval& x, const Interval& y, const Interval& psi,
                                  const Interval& u_own, const Interval& u_int, double v_own,
                                  double v_int) {
    require(u_own.lo > -std::numbers::pi && u_own.hi < std::numbers::pi &&
                u_int.lo > -std::numbers::pi && u_int.hi < std::numbers::pi,
            "turn interval outside the e1/e2 domain");
    const Interval cos_psi = cos_range(psi);
    const Interval sin_psi = sin_range(psi);
    const Interval e1_own = e1_range(u_own);
    const Interval e2_own = e2_range(u_own);
    const Interval e1_int = e1_range(u_int);
    const Interval e2_int = e2_range(u_int);

    // x' = x + v_int cos(psi) - v_own + v_own e1(u_own)
    //        - v_int sin(psi) e2(u_int) - v_int cos(psi) e1(u_int)
    Interval xp = x + cos_psi * v_int + Interval::point(-v_own) + e1_own * v_own -
                  (sin_psi * e2_int) * v_int - (cos_psi * e1_int) * v_int;
    // y' = y + v_int sin(psi) - v_own e2(u_own)
    //        + v_int cos(psi) e2(u_int) - v_int sin(psi) e1(u_int)
    Interval yp = y + sin_psi * v_int - e2_own * v_own + (cos_psi * e2_int) * v_int -
                  (sin_psi * e1_int) * v_int;

    // rotate into the new ownship frame: angle interval -u_own
    const Interval alpha{-u_own.hi, -u_own.lo};
    const Interval cos_a = cos_range(alpha);
    const Interval sin_a = sin_range(alpha);
    DynBounds b;
    b.box.resize(3);
    b.box[0] = xp * cos_a - yp * sin_a;
    b.box[1] = xp * sin_a + yp * cos_a;
    b.box[2] = {psi.lo + u_int.lo - u_own.hi, psi.hi + u_int.hi - u_own.lo};
    return b;
}

// --- cell intersection --------------------------------------------------------

namespace detail {

struct DimRanges {
    // up to two [first, last] inclusive index ranges per dimension (wrap)
    std::array<std::pair<std::size_t, std::size_t>, 2> r;
    std::size_t n = 0;
    bool clamped = false;  // the box overhung a Clamp dimension
};

inline DimRanges dim_cell_ranges(const CellGrid& grid, std::size_t d, Interval iv) {
    const auto& cuts = grid.spatial.cuts(d);
    const double lo_dom = cuts.front(), hi_dom = cuts.back();
    const std::size_t n_cells = grid.cells_in_dim(d);
    DimRanges out;

    auto push_range = [&](double lo, double hi) {
        // cells [i, i+1] with nonzero-measure overlap of (lo, hi)
        if (!(lo < hi)) {
            // degenerate interval: keep the containing cell when interior
            if (lo < lo_dom || lo > hi_dom) return;
            auto [i, t] = grid.spatial.bracket(d, lo);
            if (i >= n_cells) i = n_cells - 1;
            const bool on_cut = t == 0.0 && lo > lo_dom && lo < hi_dom &&
                                lo == cuts[i];
            if (on_cut) return;  // boundary touching only
            out.r[out.n++] = {i, i};
            return;
        }
        const double l = std::max(lo, lo_dom);
        const double h = std::min(hi, hi_dom);
        if (!(l < h)) return;
        auto [i0, t0] = grid.spatial.bracket(d, l);
        if (i0 >= n_cells) i0 = n_cells - 1;
        auto [i1, t1] = grid.spatial.bracket(d, h);
        if (i1 >= n_cells) i1 = n_cells - 1;
        // upper end exactly on a cut touches the higher cell with zero measure
        if (t1 == 0.0 && i1 > 0 && h == cuts[i1]) --i1;
        if (i1 < i0) i1 = i0;
        out.r[out.n++] = {i0, i1};
    };

    switch (grid.policy[d]) {
        case OobPolicy::Drop:
            push_range(iv.lo, iv.hi);
            break;
        case OobPolicy::Clamp: {
            if (iv.lo < lo_dom || iv.hi > hi_dom) out.clamped = true;
            const double l = std::clamp(iv.lo, lo_dom, hi_dom);
            const double h = std::clamp(iv.hi, lo_dom, hi_dom);
            if (l < h) {
                push_range(l, h);
            } else {
                // entire box beyond the edge saturates into the edge cell
                const std::size_t i = iv.hi <= lo_dom ? 0 : n_cells - 1;
                out.r[out.n++] = {i, i};
            }
            break;
        }
        case OobPolicy::Wrap: {
            const double span = hi_dom - lo_dom;
            if (iv.width() >= span) {
                out.r[out.n++] = {0, n_cells - 1};
            } else {
                double lo = iv.lo, hi = iv.hi;
                while (lo < lo_dom) {
                    lo += span;
                    hi += span;
                }
                while (lo >= hi_dom) {
                    lo -= span;
                    hi -= span;
                }
                if (hi <= hi_dom) {
                    push_range(lo, hi);
                } else {
                    push_range(lo, hi_dom);
                    push_range(lo_dom, hi - span);
                }
            }
            break;
        }
    }
    return out;
}

}  // namespace detail

/// All cells whose box overlaps b's box with nonzero measure and that are
/// not wholly excluded by a coupled constraint. Coupled pruning is skipped
/// whenever the box overhangs a Clamp dimension: saturation breaks the
/// linear identity, so pruning would no longer be sound there.
inline std::vector<std::size_t> cells_intersecting(const DynBounds& b, const CellGrid& grid) {
    grid.check_valid();
    require(b.box.size() == grid.ndims(), "bounds dimension mismatch");
    std::vector<detail::DimRanges> ranges(grid.ndims());
    bool any_clamped = false;
    for (std::size_t d = 0; d < grid.ndims(); ++d) {
        ranges[d] = detail::dim_cell_ranges(grid, d, b.box[d]);
        if (ranges[d].n == 0) return {};
        any_clamped = any_clamped || ranges[d].clamped;
    }

    const bool use_coupled = !b.coupled.empty() && !any_clamped;
    std::vector<std::size_t> out;
    std::vector<std::size_t> idx(grid.ndims());
    // iterate the cartesian product of per-dimension ranges
    std::vector<std::size_t> choice(grid.ndims(), 0);
    std::vector<std::size_t> pos(grid.ndims());
    for (std::size_t d = 0; d < grid.ndims(); ++d) pos[d] = ranges[d].r[0].first;
    while (true) {
        bool keep = true;
        if (use_coupled) {
            for (const auto& c : b.coupled) {
                double f_lo = 0.0, f_hi = 0.0;
                for (std::size_t d = 0; d < grid.ndims(); ++d) {
                    const Interval iv = grid.cell_interval(d, pos[d]);
                    if (c.coef[d] >= 0) {
                        f_lo += c.coef[d] * iv.lo;
                        f_hi += c.coef[d] * iv.hi;
                    } else {
                        f_lo += c.coef[d] * iv.hi;
                        f_hi += c.coef[d] * iv.lo;
                    }
                }
                if (f_hi < c.lo || f_lo > c.hi) {
                    keep = false;
                    break;
                }
            }
        }
        if (keep) out.push_back(grid.cell_flat(pos));

        // advance the odometer
        std::size_t d = grid.ndims();
        while (d-- > 0) {
            if (pos[d] < ranges[d].r[choice[d]].second) {
                ++pos[d];
                break;
            }
            if (choice[d] + 1 < ranges[d].n) {
                ++choice[d];
                pos[d] = ranges[d].r[choice[d]].first;
                break;
            }
            choice[d] = 0;
            pos[d] = ranges[d].r[0].first;
            if (d == 0) {
                std::sort(out.begin(), out.end());
                out.erase(std::unique(out.begin(), out.end()), out.end());
                return out;
            }
        }
    }
}

// --- reach sets ----------------------------------------------------------------

/// Bitset over (previous advisory, spatial cell).
class ReachSet {
public:
    ReachSet() = default;
    ReachSet(std::size_t n_sadv, std::size_t n_cells)
        : n_sadv_(n_sadv), n_cells_(n_cells), words_per_(( n_cells + 63) / 64),
          words_(n_sadv * words_per_, 0) {}

    std::size_t n_sadv() const { return n_sadv_; }
    std::size_t n_cells() const { return n_cells_; }

    bool test(std::size_t s_adv, std::size_t cell) const {
        return (words_[s_adv * words_per_ + cell / 64] >> (cell % 64)) & 1u;
    }
    void set(std::size_t s_adv, std::size_t cell) {
        words_[s_adv * words_per_ + cell / 64] |= std::uint64_t(1) << (cell % 64);
    }

    void or_with(const ReachSet& o) {
        for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
    }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto w : words_) n += std::size_t(__builtin_popcountll(w));
        return n;
    }

    bool any() const {
        for (auto w : words_)
            if (w) return true;
        return false;
    }

    std::uint64_t fingerprint() const { return fnv1a_bytes(words_.data(), words_.size() * 8); }

    bool operator==(const ReachSet& o) const = default;

    /// Cells reachable under at least one previous advisory.
    template <typename Fn>
    void for_each(Fn&& fn) const {
        for (std::size_t s = 0; s < n_sadv_; ++s)
            for (std::size_t w = 0; w < words_per_; ++w) {
                std::uint64_t bits = words_[s * words_per_ + w];
                while (bits) {
                    const int b = __builtin_ctzll(bits);
                    bits &= bits - 1;
                    const std::size_t cell = w * 64 + std::size_t(b);
                    if (cell < n_cells_) fn(s, cell);
                }
            }
    }

private:
    std::size_t n_sadv_ = 0, n_cells_ = 0, words_per_ = 0;
    std::vector<std::uint64_t> words_;
};

// --- delta models ----------------------------------------------------------------

/// Pilot acceleration limits assumed by the vertical analysis, relaxed by
/// delta. At delta = 0 the non-COC advisories pin the mean response.
struct VertDeltaModel {
    double delta = 0.0;

    Interval accel(std::size_t adv) const {
        using namespace vcas;
        switch (adv) {
            case COC: return {-3.0 - delta, 3.0 + delta};
            case DNC:
            case DES1500: return {-12.2 - delta, -12.2 + delta};
            case DND:
            case CL1500: return {12.2 - delta, 12.2 + delta};
            case SDES1500:
            case SDES2500: return {-13.4 - delta, -13.4 + delta};
            case SCL1500:
            case SCL2500: return {13.4 - delta, 13.4 + delta};
            default: throw ContractError("bad advisory");
        }
    }
};

/// Turn-rate limits for the horizontal analysis; the intruder may turn
/// within [-delta, delta].
struct HorDeltaModel {
    double delta = 0.0;  // deg/s

    Interval own_turn(std::size_t adv) const {
        using namespace hcas;
        const double d = delta * kDeg;
        switch (adv) {
            case COC: return {-d, d};
            case WL: return {1.5 * kDeg - d, 1.5 * kDeg + d};
            case WR: return {-1.5 * kDeg - d, -1.5 * kDeg + d};
            case SL: return {3.5 * kDeg - d, 3.5 * kDeg + d};
            case SR: return {-3.5 * kDeg - d, -3.5 * kDeg + d};
            default: throw ContractError("bad advisory");
        }
    }

    Interval int_turn() const {
        const double d = delta * hcas::kDeg;
        return {-d, d};
    }
};

// --- reach models ----------------------------------------------------------------

/// Vertical analysis model: cells over (h, hdot_own), level intruder, one
/// network per previous advisory with inputs (h, hdot_own, tau).
struct VertReachModel {
    CellGrid grid;
    VertDeltaModel dyn;
    double nmac_alt = vcas::kNmacAltitude;

    static constexpr std::size_t kNumAdvisories = vcas::kNumAdvisories;

    std::size_t n_networks() const { return kNumAdvisories; }
    std::size_t net_index(std::size_t s_adv, int /*tau*/) const { return s_adv; }

    std::size_t query_cell_index(std::size_t cell, int tau) const {
        const std::size_t tc =
            std::min<std::size_t>(std::size_t(std::max(0, tau)), grid.tau_segments - 1);
        return tc * grid.num_cells() + cell;
    }

    InputBox query_box(std::size_t cell, int tau) const {
        const auto box = grid.cell_box(cell);
        const std::size_t tc =
            std::min<std::size_t>(std::size_t(std::max(0, tau)), grid.tau_segments - 1);
        InputBox q;
        q.lo = {box[0].lo, box[1].lo, double(tc)};
        q.hi = {box[0].hi, box[1].hi, double(tc + 1)};
        return q;
    }

    DynBounds bounds(const std::vector<Interval>& cell_box, std::size_t adv) const {
        return vert_reach_bounds(cell_box[0], cell_box[1], dyn.accel(adv));
    }

    bool is_nmac(const std::vector<Interval>& cell_box) const {
        return cell_box[0].overlaps_open({-nmac_alt, nmac_alt});
    }

    double separation(const std::vector<Interval>& cell_box) const {
        const Interval& h = cell_box[0];
        if (h.lo > 0) return h.lo;
        if (h.hi < 0) return -h.hi;
        return 0.0;
    }

    bool is_reversal(std::size_t prev, std::size_t next) const {
        return vcas::is_reversal(prev, next);
    }

    std::vector<std::size_t> boundary_cells() const {
        std::vector<std::size_t> out;
        const std::size_t nh = grid.cells_in_dim(0);
        const std::size_t nr = grid.cells_in_dim(1);
        for (std::size_t r = 0; r < nr; ++r) {
            out.push_back(0 * nr + r);
            out.push_back((nh - 1) * nr + r);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
};

/// Horizontal analysis model: cells over (x, y, psi), one network per
/// (previous advisory, tau breakpoint), inputs (x, y, psi).
struct HorReachModel {
    CellGrid grid;
    HorDeltaModel dyn;
    double v_own = 200.0;
    double v_int = 185.0;
    double nmac_range = hcas::kNmacRange;
    double sensing_range = 48000.0;
    std::vector<int> tau_breaks = {0, 5, 10, 15, 20, 30, 40, 60};

    static constexpr std::size_t kNumAdvisories = hcas::kNumAdvisories;

    std::size_t n_networks() const { return kNumAdvisories * tau_breaks.size(); }

    std::size_t break_index(int tau) const {
        std::size_t b = 0;
        for (std::size_t i = 0; i < tau_breaks.size(); ++i)
            if (tau_breaks[i] <= tau) b = i;
        return b;
    }

    std::size_t net_index(std::size_t s_adv, int tau) const {
        return s_adv * tau_breaks.size() + break_index(tau);
    }

    std::size_t query_cell_index(std::size_t cell, int /*tau*/) const { return cell; }

    InputBox query_box(std::size_t cell, int /*tau*/) const {
        const auto box = grid.cell_box(cell);
        InputBox q;
        q.lo = {box[0].lo, box[1].lo, box[2].lo};
        q.hi = {box[0].hi, box[1].hi, box[2].hi};
        return q;
    }

    DynBounds bounds(const std::vector<Interval>& cell_box, std::size_t adv) const {
        return hor_reach_bounds(cell_box[0], cell_box[1], cell_box[2], dyn.own_turn(adv),
                                dyn.int_turn(), v_own, v_int);
    }

    static double box_min_range(const std::vector<Interval>& b) {
        auto axis_dist = [](const Interval& iv) {
            if (iv.lo > 0) return iv.lo;
            if (iv.hi < 0) return -iv.hi;
            return 0.0;
        };
        return std::hypot(axis_dist(b[0]), axis_dist(b[1]));
    }

    static double box_max_range(const std::vector<Interval>& b) {
        return std::hypot(std::max(std::abs(b[0].lo), std::abs(b[0].hi)),
                          std::max(std::abs(b[1].lo), std::abs(b[1].hi)));
    }

    bool is_nmac(const std::vector<Interval>& cell_box) const {
        return box_min_range(cell_box) < nmac_range;
    }

    double separation(const std::vector<Interval>& cell_box) const {
        return box_min_range(cell_box);
    }

    bool is_reversal(std::size_t prev, std::size_t next) const {
        return hcas::is_reversal(prev, next);
    }

    std::vector<std::size_t> boundary_cells() const {
        std::vector<std::size_t> out;
        for (std::size_t c = 0; c < grid.num_cells(); ++c) {
            const auto box = grid.cell_box(c);
            if (box_min_range(box) <= sensing_range && box_max_range(box) >= sensing_range)
                out.push_back(c);
        }
        return out;
    }
};

// --- reach step ----------------------------------------------------------------

struct StepOptions {
    bool boundary_injection = true;
    unsigned threads = 1;
};

/// One image step: every advisory the verifier allows in a reachable cell
/// expands through the bounded dynamics; successors are tagged with the
/// issued advisory. The result is independent of iteration order and
/// thread count.
template <typename Model>
ReachSet reach_step(const ReachSet& r, int tau, const Model& model, const AdvisoryCache& cache,
                    const StepOptions& opt = {}) {
    const std::size_t n_cells = model.grid.num_cells();
    require(r.n_cells() == n_cells && r.n_sadv() == Model::kNumAdvisories,
            "reach set does not match the grid");

    // collect the present (s_adv, cell) pairs once so work can be chunked
    std::vector<std::pair<std::uint32_t, std::uint32_t>> work;
    r.for_each([&](std::size_t s, std::size_t c) { work.push_back({std::uint32_t(s), std::uint32_t(c)}); });

    const std::size_t nchunks = opt.threads > 1 ? std::min<std::size_t>(opt.threads, work.size() ? work.size() : 1) : 1;
    std::vector<ReachSet> partial(nchunks, ReachSet(Model::kNumAdvisories, n_cells));
    parallel_chunks(work.size(), unsigned(nchunks), [&](std::size_t chunk, std::size_t b, std::size_t e) {
        ReachSet& out = partial[chunk];
        for (std::size_t i = b; i < e; ++i) {
            const auto [s_adv, cell] = work[i];
            const AdvisorySet advisories =
                cache.at(model.net_index(s_adv, tau), model.query_cell_index(cell, tau));
            const auto cell_box = model.grid.cell_box(cell);
            for (std::size_t a = 0; a < Model::kNumAdvisories; ++a) {
                if (!advisories.contains(a)) continue;
                const DynBounds b2 = model.bounds(cell_box, a);
                for (std::size_t succ : cells_intersecting(b2, model.grid)) out.set(a, succ);
            }
        }
    });
    ReachSet out = std::move(partial[0]);
    for (std::size_t i = 1; i < nchunks; ++i) out.or_with(partial[i]);

    if (opt.boundary_injection) {
        for (std::size_t cell : model.boundary_cells())
            for (std::size_t s = 0; s < Model::kNumAdvisories; ++s) out.set(s, cell);
    }
    return out;
}

// --- full reachability ----------------------------------------------------------

enum class Verdict { Safe, PotentiallyUnsafe, NonConverged };

inline const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::Safe: return "SAFE";
        case Verdict::PotentiallyUnsafe: return "POTENTIALLY-UNSAFE";
        case Verdict::NonConverged: return "NON-CONVERGED";
    }
    return "?";
}

struct StepStats {
    int step;
    int tau;
    std::size_t cell_count;
    double min_separation;
};

struct WitnessLink {
    std::size_t cell;
    std::size_t s_adv;
    std::size_t advisory;  // advisory issued from this cell
};

struct ReachOutcome {
    Verdict verdict = Verdict::NonConverged;
    std::vector<StepStats> trace;
    std::vector<ReachSet> sets;               // one per step, including step 0
    double tau0_min_separation = 0.0;         // at the step tau first reaches 0
    double converged_min_separation = 0.0;    // at the final set
    int first_nmac_step = -1;
    std::vector<WitnessLink> witness;         // only on PotentiallyUnsafe
};

struct RunOptions {
    int tau_start = 0;
    std::size_t step_cap_after_tau0 = 500;
    bool boundary_injection = true;
    unsigned threads = 1;
    std::optional<ReachSet> initial;  // defaults to every cell, every s_adv
};

namespace detail {

template <typename Model>
double min_separation(const ReachSet& r, const Model& model) {
    double best = std::numeric_limits<double>::infinity();
    std::vector<bool> seen(model.grid.num_cells(), false);
    r.for_each([&](std::size_t, std::size_t c) {
        if (seen[c]) return;
        seen[c] = true;
        best = std::min(best, model.separation(model.grid.cell_box(c)));
    });
    return std::isfinite(best) ? best : 0.0;
}

template <typename Model>
bool set_has_nmac(const ReachSet& r, const Model& model, std::size_t* which = nullptr,
                  std::size_t* which_sadv = nullptr) {
    bool found = false;
    r.for_each([&](std::size_t s, std::size_t c) {
        if (found) return;
        if (model.is_nmac(model.grid.cell_box(c))) {
            found = true;
            if (which) *which = c;
            if (which_sadv) *which_sadv = s;
        }
    });
    return found;
}

/// Reconstructs one (cell, advisory) chain from the initial set to the
/// NMAC cell by scanning predecessors backward through the stored sets.
template <typename Model>
std::vector<WitnessLink> reconstruct_witness(const std::vector<ReachSet>& sets,
                                             const std::vector<int>& taus, const Model& model,
                                             const AdvisoryCache& cache, std::size_t nmac_cell,
                                             std::size_t nmac_sadv) {
    std::vector<WitnessLink> chain;
    std::size_t target_cell = nmac_cell;
    std::size_t target_sadv = nmac_sadv;
    for (std::size_t t = sets.size() - 1; t-- > 0;) {
        bool found = false;
        sets[t].for_each([&](std::size_t s, std::size_t c) {
            if (found) return;
            const AdvisorySet advisories =
                cache.at(model.net_index(s, taus[t]), model.query_cell_index(c, taus[t]));
            if (!advisories.contains(target_sadv)) return;
            const DynBounds b = model.bounds(model.grid.cell_box(c), target_sadv);
            const auto succ = cells_intersecting(b, model.grid);
            if (std::binary_search(succ.begin(), succ.end(), target_cell)) {
                chain.push_back({c, s, target_sadv});
                target_cell = c;
                target_sadv = s;
                found = true;
            }
        });
        if (!found) break;  // entered via boundary injection at this step
    }
    std::reverse(chain.begin(), chain.end());
    chain.push_back({nmac_cell, nmac_sadv, std::size_t(-1)});
    return chain;
}

}  // namespace detail

/// Algorithm-1 style loop: start from all cells at maximum tau (or a given
/// initial set), step until an NMAC cell is reached (PotentiallyUnsafe), the
/// set reaches a fixed point or revisits a previous set after tau hits zero
/// (Safe), or the step cap runs out (NonConverged).
template <typename Model>
ReachOutcome run_reachability(const Model& model, const AdvisoryCache& cache,
                              const RunOptions& opt) {
    model.grid.check_valid();
    const std::size_t n_cells = model.grid.num_cells();
    require(cache.header().num_networks == model.n_networks(),
            "cache network count does not match the model");
    require(cache.header().cells_per_network == model.grid.num_query_cells(),
            "cache cell count does not match the grid");

    ReachOutcome out;
    ReachSet cur = opt.initial ? *opt.initial : ReachSet(Model::kNumAdvisories, n_cells);
    if (!opt.initial) {
        for (std::size_t s = 0; s < Model::kNumAdvisories; ++s)
            for (std::size_t c = 0; c < n_cells; ++c) cur.set(s, c);
    }

    std::vector<int> taus;
    int tau = opt.tau_start;
    int step = 0;
    auto record = [&](const ReachSet& r) {
        out.sets.push_back(r);
        taus.push_back(tau);
        out.trace.push_back({step, tau, r.count(), detail::min_separation(r, model)});
    };
    record(cur);

    auto unsafe_check = [&](const ReachSet& r) {
        std::size_t cell = 0, sadv = 0;
        if (tau == 0 && detail::set_has_nmac(r, model, &cell, &sadv)) {
            out.verdict = Verdict::PotentiallyUnsafe;
            out.first_nmac_step = step;
            out.witness = detail::reconstruct_witness(out.sets, taus, model, cache, cell, sadv);
            return true;
        }
        return false;
    };

    if (unsafe_check(cur)) {
        out.tau0_min_separation = out.trace.back().min_separation;
        out.converged_min_separation = out.trace.back().min_separation;
        return out;
    }

    std::map<std::uint64_t, std::vector<std::size_t>> seen;  // fingerprint -> step ids
    std::size_t steps_at_tau0 = tau == 0 ? 1 : 0;
    const StepOptions step_opt{opt.boundary_injection, opt.threads};
    while (true) {
        const ReachSet next = reach_step(cur, tau, model, cache, step_opt);
        const int prev_tau = tau;
        tau = std::max(0, tau - 1);
        ++step;
        record(next);
        if (prev_tau > 0 && tau == 0) out.tau0_min_separation = out.trace.back().min_separation;

        if (unsafe_check(next)) {
            out.converged_min_separation = out.trace.back().min_separation;
            return out;
        }
        if (tau == 0) {
            ++steps_at_tau0;
            if (next == cur) {
                out.verdict = Verdict::Safe;
                out.converged_min_separation = out.trace.back().min_separation;
                return out;
            }
            // cycle detection: any repeat of an earlier tau-0 set proves a
            // safe loop (every set along the way was NMAC-free)
            auto& ids = seen[next.fingerprint()];
            for (std::size_t id : ids)
                if (out.sets[id] == next) {
                    out.verdict = Verdict::Safe;
                    out.converged_min_separation = out.trace.back().min_separation;
                    return out;
                }
            ids.push_back(out.sets.size() - 1);
            if (steps_at_tau0 > opt.step_cap_after_tau0) {
                out.verdict = Verdict::NonConverged;
                out.converged_min_separation = out.trace.back().min_separation;
                return out;
            }
        }
        cur = next;
    }
}

/// Safe-region initial set: cells kept only when some point of the cell
/// satisfies (x - v t)^2 + y^2 >= (v t + d)^2, i.e. the farthest corner
/// from (v t, 0) reaches the radius.
inline ReachSet safe_region_init(const CellGrid& grid, double t, double d, double v_own,
                                 std::size_t n_sadv) {
    const double cx = v_own * t;
    const double radius = v_own * t + d;
    ReachSet r(n_sadv, grid.num_cells());
    for (std::size_t c = 0; c < grid.num_cells(); ++c) {
        const auto box = grid.cell_box(c);
        const double dx = std::max(std::abs(box[0].lo - cx), std::abs(box[0].hi - cx));
        const double dy = std::max(std::abs(box[1].lo), std::abs(box[1].hi));
        if (std::hypot(dx, dy) >= radius)
            for (std::size_t s = 0; s < n_sadv; ++s) r.set(s, c);
    }
    return r;
}

/// Sensor-error inflation: every cell's x and y bounds move outward by
/// fraction times the range to the cell center; psi is untouched. The
/// inflated boxes replace the raw cells in batch verification.
inline std::vector<InputBox> inflate_cells_for_sensor_error(const CellGrid& grid, double fraction) {
    require(fraction >= 0.0, "sensor error fraction must be nonnegative");
    std::vector<InputBox> out;
    out.reserve(grid.num_cells());
    for (std::size_t c = 0; c < grid.num_cells(); ++c) {
        const auto box = grid.cell_box(c);
        const double cx = box[0].mid(), cy = box[1].mid();
        const double pad = fraction * std::hypot(cx, cy);
        InputBox q;
        q.lo = {box[0].lo - pad, box[1].lo - pad, box[2].lo};
        q.hi = {box[0].hi + pad, box[1].hi + pad, box[2].hi};
        out.push_back(std::move(q));
    }
    return out;
}

// --- delta sweep ----------------------------------------------------------------

struct SweepRow {
    double delta;
    double tau0_min_sep;
    double converged_min_sep;
    Verdict verdict;
};

/// Runs the analysis per delta, reusing the advisory cache (the advisory
/// sets do not depend on the dynamics model).
template <typename Model>
std::vector<SweepRow> delta_sweep(Model model, const AdvisoryCache& cache, const RunOptions& opt,
                                  const std::vector<double>& deltas) {
    std::vector<SweepRow> rows;
    for (double d : deltas) {
        model.dyn.delta = d;
        const ReachOutcome r = run_reachability(model, cache, opt);
        rows.push_back({d, r.tau0_min_separation, r.converged_min_separation, r.verdict});
    }
    return rows;
}

// --- pilot delay ------------------------------------------------------------------

/// Reach set with advisory-history annotations: per cell, the set of
/// (last-eps advisories, reversal count) pairs that can reach it.
struct DelayedReachSet {
    std::size_t n_cells = 0;
    std::size_t eps = 1;
    std::vector<std::vector<std::uint32_t>> ann;  // sorted unique per cell

    DelayedReachSet() = default;
    DelayedReachSet(std::size_t cells, std::size_t eps_) : n_cells(cells), eps(eps_), ann(cells) {}

    // packed annotation: 4 bits per advisory (oldest first), then 4 bits of
    // reversal counter
    static std::uint32_t pack(std::span<const std::size_t> hist, std::size_t reversals) {
        std::uint32_t v = 0;
        for (std::size_t i = 0; i < hist.size(); ++i) v |= std::uint32_t(hist[i] & 0xf) << (4 * i);
        v |= std::uint32_t(reversals & 0xf) << (4 * hist.size());
        return v;
    }

    static void unpack(std::uint32_t v, std::span<std::size_t> hist, std::size_t& reversals) {
        for (std::size_t i = 0; i < hist.size(); ++i) hist[i] = (v >> (4 * i)) & 0xf;
        reversals = (v >> (4 * hist.size())) & 0xf;
    }

    void insert(std::size_t cell, std::uint32_t packed) {
        auto& v = ann[cell];
        const auto it = std::lower_bound(v.begin(), v.end(), packed);
        if (it == v.end() || *it != packed) v.insert(it, packed);
    }

    bool operator==(const DelayedReachSet& o) const = default;

    std::size_t cell_count() const {
        std::size_t n = 0;
        for (const auto& v : ann) n += !v.empty();
        return n;
    }
};

struct DelayedOutcome {
    Verdict verdict = Verdict::NonConverged;
    int first_nmac_step = -1;
    std::vector<std::size_t> trace_cell_counts;
};

/// Pilot-delay reachability: the system's advisory stream advances the
/// per-cell histories while the dynamics may follow any advisory within the
/// last eps entries. With a reversal limit, an advisory that would exceed
/// the per-history reversal budget is replaced by continuing the previous
/// advisory.
template <typename Model>
DelayedOutcome run_reachability_delayed(const Model& model, const AdvisoryCache& cache,
                                        const RunOptions& opt, std::size_t eps,
                                        std::optional<std::size_t> reversal_limit) {
    require(eps >= 1 && eps <= 5, "pilot delay must be in [1, 5] seconds");
    const std::size_t n_cells = model.grid.num_cells();

    DelayedReachSet cur(n_cells, eps);
    // fresh histories carry the no-alert advisory (index 0 in both models)
    const std::vector<std::size_t> all_coc(eps, 0);
    const std::uint32_t init_ann = DelayedReachSet::pack(all_coc, 0);
    if (opt.initial) {
        opt.initial->for_each([&](std::size_t, std::size_t c) { cur.insert(c, init_ann); });
    } else {
        for (std::size_t c = 0; c < n_cells; ++c) cur.insert(c, init_ann);
    }

    DelayedOutcome out;
    int tau = opt.tau_start;
    auto has_nmac = [&](const DelayedReachSet& r) {
        for (std::size_t c = 0; c < n_cells; ++c)
            if (!r.ann[c].empty() && model.is_nmac(model.grid.cell_box(c))) return true;
        return false;
    };
    if (tau == 0 && has_nmac(cur)) {
        out.verdict = Verdict::PotentiallyUnsafe;
        out.first_nmac_step = 0;
        return out;
    }

    std::vector<std::size_t> hist(eps), hist2(eps);
    for (int step = 1;; ++step) {
        DelayedReachSet next(n_cells, eps);
        for (std::size_t cell = 0; cell < n_cells; ++cell) {
            if (cur.ann[cell].empty()) continue;
            const auto cell_box = model.grid.cell_box(cell);
            for (std::uint32_t packed : cur.ann[cell]) {
                std::size_t reversals = 0;
                DelayedReachSet::unpack(packed, hist, reversals);
                const std::size_t s_adv = hist.back();
                const AdvisorySet advisories =
                    cache.at(model.net_index(s_adv, tau), model.query_cell_index(cell, tau));
                for (std::size_t a = 0; a < Model::kNumAdvisories; ++a) {
                    if (!advisories.contains(a)) continue;
                    std::size_t issued = a;
                    std::size_t rev = reversals;
                    if (model.is_reversal(s_adv, issued)) {
                        if (reversal_limit && rev >= *reversal_limit) {
                            issued = s_adv;  // continue the previous advisory
                        } else {
                            rev = std::min<std::size_t>(rev + 1, 15);
                        }
                    }
                    if (!reversal_limit) rev = 0;  // untracked without a limit
                    for (std::size_t i = 0; i + 1 < eps; ++i) hist2[i] = hist[i + 1];
                    hist2[eps - 1] = issued;
                    const std::uint32_t packed2 = DelayedReachSet::pack(hist2, rev);
                    // the pilot may still be executing any advisory in the
                    // updated window
                    std::uint32_t done = 0;
                    for (std::size_t i = 0; i < eps; ++i) {
                        const std::size_t exec = hist2[i];
                        if ((done >> exec) & 1u) continue;
                        done |= 1u << exec;
                        const DynBounds b = model.bounds(cell_box, exec);
                        for (std::size_t succ : cells_intersecting(b, model.grid))
                            next.insert(succ, packed2);
                    }
                }
            }
        }
        if (opt.boundary_injection)
            for (std::size_t cell : model.boundary_cells()) next.insert(cell, init_ann);

        tau = std::max(0, tau - 1);
        out.trace_cell_counts.push_back(next.cell_count());
        if (tau == 0 && has_nmac(next)) {
            out.verdict = Verdict::PotentiallyUnsafe;
            out.first_nmac_step = step;
            return out;
        }
        if (tau == 0 && next == cur) {
            out.verdict = Verdict::Safe;
            return out;
        }
        if (std::size_t(step) > opt.step_cap_after_tau0 + std::size_t(std::max(0, opt.tau_start))) {
            out.verdict = Verdict::NonConverged;
            return out;
        }
        cur = std::move(next);
    }
}

// --- trace export -----------------------------------------------------------------

/// Summary CSV: one row per step.
inline void export_summary_csv(const ReachOutcome& out, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "step,tau,reachable_cells,min_separation\n";
    for (const auto& s : out.trace)
        os << s.step << "," << s.tau << "," << s.cell_count << ","
           << format_double(s.min_separation) << "\n";
}

/// Per-cell CSV for selected steps: step, tau, s_adv, cell id, cell bounds.
template <typename Model>
void export_cells_csv(const ReachOutcome& out, const Model& model, const std::string& path,
                      bool all_steps) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "step,tau,s_adv,cell";
    for (std::size_t d = 0; d < model.grid.ndims(); ++d) os << ",lo" << d << ",hi" << d;
    os << "\n";
    const std::size_t first = all_steps ? 0 : out.sets.size() - 1;
    for (std::size_t t = first; t < out.sets.size(); ++t) {
        out.sets[t].for_each([&](std::size_t s, std::size_t c) {
            os << out.trace[t].step << "," << out.trace[t].tau << "," << s << "," << c;
            for (const auto& iv : model.grid.cell_box(c))
                os << "," << format_double(iv.lo) << "," << format_double(iv.hi);
            os << "\n";
        });
    }
}

}  // namespace rcas::reach
