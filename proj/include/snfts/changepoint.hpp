#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snfts/banded.hpp"
#include "snfts/errors.hpp"
#include "snfts/fit.hpp"
#include "snfts/sample.hpp"
#include "snfts/spline.hpp"

namespace snfts {

/// L2-CUSUM localization result over the trimmed range
/// k in [ceil(eps n), floor((1-eps) n)].
struct ChangePointEstimate {
    int k_hat = 0;
    double objective = 0.0;
    int k_min = 0;               // first scanned k; profile[i] belongs to k_min + i
    std::vector<double> profile;
};

namespace detail {

/// Per-curve moment vectors v_i = (1/N_i) sum_j B(X_ij) Y_ij.
inline std::vector<std::vector<double>> curve_moments(std::span<const Curve> curves,
                                                      const Basis& basis) {
    std::vector<std::vector<double>> v;
    v.reserve(curves.size());
    double vals[16];
    for (const auto& curve : curves) {
        std::vector<double> m(static_cast<std::size_t>(basis.dimension()), 0.0);
        const double w = 1.0 / curve.n_obs();
        for (const auto& p : curve.points) {
            const int first = basis.eval_nonzero(p.x, vals);
            const double wy = w * p.y;
            for (int a = 0; a < basis.order(); ++a)
                m[static_cast<std::size_t>(first + a)] += wy * vals[a];
        }
        v.push_back(std::move(m));
    }
    return v;
}

/// CUSUM objectives over k in [k_lo, k_hi] for the given curve window:
/// || B^T Qhat^{-1} { P(k) - (k/n) P(n) } ||^2_{L2}, with Qhat the
/// window Gram matrix normalized by 1/n and M the analytic basis
/// inner-product matrix.
inline std::vector<double> cusum_profile(std::span<const Curve> curves, const SplineSpec& spec,
                                         int k_lo, int k_hi) {
    const int n = static_cast<int>(curves.size());
    Basis basis(spec);

    PrefixFitter full(spec);
    for (const auto& c : curves) full.add_curve(c);
    const BandedCholesky chol(full.normalized_gram());

    const SquaredL2Quadrature quad(spec);
    const BandedSymMatrix m = quad.inner_product_matrix();

    const auto moments = curve_moments(curves, basis);
    const std::size_t dim = static_cast<std::size_t>(spec.dimension());
    std::vector<double> total(dim, 0.0);
    for (const auto& v : moments)
        for (std::size_t d = 0; d < dim; ++d) total[d] += v[d];

    std::vector<double> prefix(dim, 0.0);
    std::vector<double> u(dim, 0.0);
    std::vector<double> profile;
    profile.reserve(static_cast<std::size_t>(std::max(0, k_hi - k_lo + 1)));
    for (int k = 1; k <= k_hi; ++k) {
        const auto& v = moments[static_cast<std::size_t>(k - 1)];
        for (std::size_t d = 0; d < dim; ++d) prefix[d] += v[d];
        if (k < k_lo) continue;
        const double frac = static_cast<double>(k) / n;
        for (std::size_t d = 0; d < dim; ++d) u[d] = prefix[d] - frac * total[d];
        chol.solve_in_place(u);
        profile.push_back(m.quad_form(u));
    }

    // Objectives that survive only as cancellation noise of the prefix sums
    // (identical curves) are snapped to zero. The scale n^2 ||mhat||^2 is the
    // squared norm of the contrast at full weight.
    std::vector<double> mean_dir = chol.solve(total);
    const double scale = m.quad_form(mean_dir);
    for (auto& obj : profile)
        if (std::abs(obj) <= 1e-15 * scale) obj = 0.0;
    return profile;
}

/// Smallest index attaining the profile maximum up to a relative tolerance.
/// The L2-CUSUM is exactly flat between equal same-sign jumps, so the
/// plateau tie must break deterministically toward the smallest k.
inline std::size_t argmax_first_near(std::span<const double> profile) {
    double best = profile[0];
    for (const double v : profile) best = std::max(best, v);
    const double tol = 1e-10 * std::abs(best);
    for (std::size_t i = 0; i < profile.size(); ++i)
        if (profile[i] >= best - tol) return i;
    return 0;
}

} // namespace detail

/// CUSUM objective at a single split index k (1 <= k <= n); k = n gives
/// exactly zero since the contrast vanishes at the full sample.
inline double cusum_objective(const FunctionalSample& sample, const SplineSpec& spec, int k) {
    if (k < 1 || k > sample.n())
        throw DomainError("split index " + std::to_string(k) + " outside [1," +
                          std::to_string(sample.n()) + "]");
    return detail::cusum_profile(sample.span(), spec, k, k).front();
}

/// L2-CUSUM single change point estimator over the trimmed range; ties in
/// the argmax break toward the smallest k.
inline ChangePointEstimate estimate_single(const FunctionalSample& sample, const SplineSpec& spec,
                                           double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 0.5))
        throw DomainError("trimming epsilon must lie in (0, 0.5) for change point scans");
    const int n = sample.n();
    if (static_cast<double>(n) < 2.0 / epsilon)
        throw DomainError("need n >= 2/epsilon curves to scan for a change point");
    const int k_lo = std::max(1, detail::ceil_index(epsilon * n));
    const int k_hi = std::min(n - 1, detail::floor_index((1.0 - epsilon) * n));
    if (k_lo > k_hi) throw DomainError("trimmed change point range is empty");

    ChangePointEstimate est;
    est.k_min = k_lo;
    est.profile = detail::cusum_profile(sample.span(), spec, k_lo, k_hi);
    const std::size_t at = detail::argmax_first_near(est.profile);
    est.k_hat = k_lo + static_cast<int>(at);
    est.objective = est.profile[at];
    return est;
}

/// Result of the greedy multiple change point search.
struct Segmentation {
    std::vector<int> change_points; // sorted 1-based split indices
    std::vector<double> objectives; // aligned with change_points
    bool shortfall = false;         // fewer than K genuine splits found
};

/// Smallest segment that keeps every subsequent test prefix fittable.
inline int default_min_segment(const SplineSpec& spec, double epsilon) {
    return detail::ceil_index(2.0 * spec.dimension() / epsilon);
}

/// Greedy binary segmentation: recursively splits at the strongest CUSUM
/// maximum, keeping the K splits with the largest objective values.
/// Branches stop when a segment is too short to scan or its best objective
/// falls below the numerical floor 1e-10; finding fewer than K splits sets
/// the shortfall flag.
inline Segmentation binary_segmentation(const FunctionalSample& sample, const SplineSpec& spec,
                                        double epsilon, int n_splits,
                                        std::optional<int> min_segment = std::nullopt) {
    const int n = sample.n();
    const int min_seg = min_segment ? *min_segment : default_min_segment(spec, epsilon);
    if (n_splits < 1) throw DomainError("number of change points K must be >= 1");
    if (min_seg < 1) throw DomainError("min_segment must be >= 1");
    if (static_cast<long>(n_splits) * min_seg >= n)
        throw DomainError("K * min_segment must be smaller than n");

    struct Candidate {
        int lo, hi;     // 0-based curve range [lo, hi)
        int split_abs;  // 1-based split index
        double objective;
    };

    auto evaluate = [&](int lo, int hi) -> std::optional<Candidate> {
        const int len = hi - lo;
        if (static_cast<double>(len) < 2.0 / epsilon) return std::nullopt;
        const int kl = std::max({1, detail::ceil_index(epsilon * len), min_seg});
        const int kh = std::min(len - min_seg, detail::floor_index((1.0 - epsilon) * len));
        if (kl > kh) return std::nullopt;
        std::vector<double> profile;
        try {
            profile = detail::cusum_profile(
                sample.span().subspan(static_cast<std::size_t>(lo), static_cast<std::size_t>(len)),
                spec, kl, kh);
        } catch (const IllConditionedError&) {
            return std::nullopt;
        }
        const std::size_t at = detail::argmax_first_near(profile);
        const double best = profile[at];
        if (best <= 1e-10) return std::nullopt;
        return Candidate{lo, hi, lo + kl + static_cast<int>(at), best};
    };

    std::vector<Candidate> heap;
    if (auto c = evaluate(0, n)) heap.push_back(*c);

    Segmentation result;
    while (static_cast<int>(result.change_points.size()) < n_splits && !heap.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < heap.size(); ++i) {
            if (heap[i].objective > heap[best].objective ||
                (heap[i].objective == heap[best].objective && heap[i].split_abs < heap[best].split_abs))
                best = i;
        }
        const Candidate chosen = heap[best];
        heap.erase(heap.begin() + static_cast<std::ptrdiff_t>(best));
        result.change_points.push_back(chosen.split_abs);
        result.objectives.push_back(chosen.objective);
        if (auto c = evaluate(chosen.lo, chosen.split_abs)) heap.push_back(*c);
        if (auto c = evaluate(chosen.split_abs, chosen.hi)) heap.push_back(*c);
    }

    std::vector<std::size_t> order(result.change_points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return result.change_points[a] < result.change_points[b];
    });
    Segmentation sorted;
    sorted.shortfall = static_cast<int>(result.change_points.size()) < n_splits;
    for (const std::size_t i : order) {
        sorted.change_points.push_back(result.change_points[i]);
        sorted.objectives.push_back(result.objectives[i]);
    }
    return sorted;
}

} // namespace snfts
