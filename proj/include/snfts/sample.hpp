#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "snfts/errors.hpp"

namespace snfts {

/// One noisy observation (design point, value) of a curve.
struct Observation {
    double x = 0.0; // design point in [0,1]
    double y = 0.0;
};

/// One discretely observed curve: time position i and its N_i observations.
struct Curve {
    int index = 0; // 1-based time position within the sample
    std::vector<Observation> points;

    int n_obs() const { return static_cast<int>(points.size()); }
};

/// A time-ordered sample of discretely observed curves.
///
/// Invariants: at least one curve, indices contiguous 1..n, every curve
/// nonempty with all design points in [0,1].
class FunctionalSample {
public:
    FunctionalSample() = default;

    static FunctionalSample from_curves(std::vector<Curve> curves) {
        FunctionalSample s;
        s.curves_ = std::move(curves);
        s.validate();
        return s;
    }

    /// Builds a sample from per-curve observation lists, assigning indices 1..n.
    static FunctionalSample from_points(std::vector<std::vector<Observation>> per_curve) {
        std::vector<Curve> curves;
        curves.reserve(per_curve.size());
        for (std::size_t i = 0; i < per_curve.size(); ++i)
            curves.push_back(Curve{static_cast<int>(i) + 1, std::move(per_curve[i])});
        return from_curves(std::move(curves));
    }

    int n() const { return static_cast<int>(curves_.size()); }
    const std::vector<Curve>& curves() const { return curves_; }
    const Curve& curve(int i) const { return curves_.at(static_cast<std::size_t>(i)); }
    std::span<const Curve> span() const { return curves_; }

    /// Curves [first, last], 1-based inclusive, as a view.
    std::span<const Curve> window(int first, int last) const {
        if (first < 1 || last > n() || first > last)
            throw DomainError("curve window [" + std::to_string(first) + "," +
                              std::to_string(last) + "] out of range for n=" +
                              std::to_string(n()));
        return std::span<const Curve>(curves_).subspan(static_cast<std::size_t>(first - 1),
                                                       static_cast<std::size_t>(last - first + 1));
    }

    /// Total observation count over all curves.
    long total_obs() const {
        long total = 0;
        for (const auto& c : curves_) total += c.n_obs();
        return total;
    }

    /// Harmonic mean of the N_i: (n^{-1} sum 1/N_i)^{-1}.
    double harmonic_mean_obs() const {
        double inv = 0.0;
        for (const auto& c : curves_) inv += 1.0 / c.n_obs();
        return static_cast<double>(n()) / inv;
    }

    /// Returns a copy with y replaced by y - baseline(x) curve-wise.
    template <typename Fn>
    FunctionalSample recentered(Fn&& baseline) const {
        FunctionalSample out = *this;
        for (auto& c : out.curves_)
            for (auto& p : c.points) p.y -= baseline(p.x);
        return out;
    }

private:
    void validate() const {
        if (curves_.empty()) throw DomainError("sample must contain at least one curve");
        for (std::size_t i = 0; i < curves_.size(); ++i) {
            const Curve& c = curves_[i];
            if (c.index != static_cast<int>(i) + 1)
                throw DomainError("curve indices must be contiguous 1..n; found index " +
                                  std::to_string(c.index) + " at position " + std::to_string(i + 1));
            if (c.points.empty())
                throw DomainError("curve " + std::to_string(c.index) + " has no observations");
            for (const auto& p : c.points) {
                if (!(p.x >= 0.0 && p.x <= 1.0) || !std::isfinite(p.y))
                    throw DomainError("curve " + std::to_string(c.index) +
                                      " has an observation outside [0,1] or a non-finite value");
            }
        }
    }

    std::vector<Curve> curves_;
};

namespace detail {

/// Floor of a product like 0.1*400 whose exact value is integral but whose
/// floating representation may sit a few ulp below it. The forward nudge is
/// far smaller than any genuine fractional part arising from i/n grids.
inline int floor_index(double v) { return static_cast<int>(std::floor(v + 1e-9)); }

inline int ceil_index(double v) { return static_cast<int>(std::ceil(v - 1e-9)); }

} // namespace detail

} // namespace snfts
