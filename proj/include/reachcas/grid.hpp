#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "reachcas/common.hpp"

namespace rcas {

/// Rectilinear grid: strictly increasing cut points per dimension. Maps
/// between multi-indices and flat indices (C order, dimension 0 slowest)
/// and distributes off-grid points onto neighboring grid points.
class Grid {
public:
    Grid() = default;

    explicit Grid(std::vector<std::vector<double>> cuts) : cuts_(std::move(cuts)) {
        require(!cuts_.empty(), "grid needs at least one dimension");
        for (const auto& c : cuts_) {
            require(!c.empty(), "grid dimension with no cut points");
            for (std::size_t i = 1; i < c.size(); ++i)
                require(c[i] > c[i - 1], "grid cut points must be strictly increasing");
        }
        strides_.assign(cuts_.size(), 1);
        for (std::size_t d = cuts_.size(); d-- > 1;)
            strides_[d - 1] = strides_[d] * cuts_[d].size();
        size_ = strides_[0] * cuts_[0].size();
    }

    /// Trivial grid {0, 1, ..., n-1}; used when states have no geometry.
    static Grid index_grid(std::size_t n) {
        std::vector<double> c(n);
        for (std::size_t i = 0; i < n; ++i) c[i] = static_cast<double>(i);
        return Grid({std::move(c)});
    }

    std::size_t ndims() const { return cuts_.size(); }
    std::size_t size() const { return size_; }
    std::size_t dim_size(std::size_t d) const { return cuts_[d].size(); }
    const std::vector<double>& cuts(std::size_t d) const { return cuts_[d]; }
    const std::vector<std::vector<double>>& all_cuts() const { return cuts_; }
    std::size_t stride(std::size_t d) const { return strides_[d]; }

    std::size_t flat(std::span<const std::size_t> idx) const {
        std::size_t f = 0;
        for (std::size_t d = 0; d < cuts_.size(); ++d) {
            require(idx[d] < cuts_[d].size(), "grid index out of range");
            f += idx[d] * strides_[d];
        }
        return f;
    }

    void unflat(std::size_t f, std::span<std::size_t> out) const {
        for (std::size_t d = 0; d < cuts_.size(); ++d) {
            out[d] = f / strides_[d];
            f %= strides_[d];
        }
    }

    double coord(std::size_t d, std::size_t i) const { return cuts_[d][i]; }

    /// Bracket of x in dimension d: index i and fraction t such that x lies
    /// at cuts[i] + t * (cuts[i+1] - cuts[i]), clamped to the grid range.
    /// For x on the last cut (or beyond) returns (last, 0).
    std::pair<std::size_t, double> bracket(std::size_t d, double x) const {
        const auto& c = cuts_[d];
        if (x <= c.front()) return {0, 0.0};
        if (x >= c.back()) return {c.size() - 1, 0.0};
        const auto it = std::upper_bound(c.begin(), c.end(), x);
        const std::size_t i = static_cast<std::size_t>(it - c.begin()) - 1;
        const double t = (x - c[i]) / (c[i + 1] - c[i]);
        return {i, t};
    }

    struct PointWeight {
        std::size_t flat;
        double weight;
    };

    /// Multilinear distribution of unit mass at x over the surrounding grid
    /// points; clamps outside the range. Only the dimensions listed in
    /// `dims` vary; `base_idx` supplies the (exact) indices of the rest.
    void snap(std::span<const double> x, std::span<const std::size_t> dims,
              std::span<const std::size_t> base_idx, std::vector<PointWeight>& out) const {
        std::size_t base_flat = 0;
        for (std::size_t d = 0; d < cuts_.size(); ++d) base_flat += base_idx[d] * strides_[d];
        for (std::size_t d : dims) base_flat -= base_idx[d] * strides_[d];

        out.clear();
        out.push_back({base_flat, 1.0});
        for (std::size_t k = 0; k < dims.size(); ++k) {
            const std::size_t d = dims[k];
            const auto [i, t] = bracket(d, x[k]);
            const std::size_t n = out.size();
            for (std::size_t j = 0; j < n; ++j) {
                const auto [f, w] = out[j];
                if (t == 0.0) {
                    out[j] = {f + i * strides_[d], w};
                } else {
                    out[j] = {f + i * strides_[d], w * (1.0 - t)};
                    out.push_back({f + (i + 1) * strides_[d], w * t});
                }
            }
        }
    }

    /// Interpolation over all dimensions at once (lookup use).
    void snap_all(std::span<const double> x, std::vector<PointWeight>& out) const {
        std::vector<std::size_t> dims(cuts_.size());
        for (std::size_t d = 0; d < dims.size(); ++d) dims[d] = d;
        const std::vector<std::size_t> base(cuts_.size(), 0);
        snap(x, dims, base, out);
    }

    /// Flat index of the grid point nearest to x (clamped; ties toward the
    /// lower cut).
    std::size_t nearest(std::span<const double> x) const {
        std::size_t f = 0;
        for (std::size_t d = 0; d < cuts_.size(); ++d) {
            const auto [i, t] = bracket(d, x[d]);
            f += (t > 0.5 ? i + 1 : i) * strides_[d];
        }
        return f;
    }

private:
    std::vector<std::vector<double>> cuts_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

/// Evenly spaced cut points, inclusive of both ends.
inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
    require(count >= 2 && hi > lo, "linspace needs count >= 2 and hi > lo");
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i)
        v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    v.back() = hi;
    return v;
}

}  // namespace rcas
