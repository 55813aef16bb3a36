#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "snfts/rng.hpp"
#include "snfts/sample.hpp"

namespace testutil {

/// n curves with n_obs random design points each and y = fn(i, x) + noise.
inline snfts::FunctionalSample make_sample(int n, int n_obs, std::uint64_t seed,
                                           const std::function<double(int, double)>& fn,
                                           double noise_sd = 0.0) {
    snfts::Rng rng(seed, 0);
    std::vector<std::vector<snfts::Observation>> pts(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto& curve = pts[static_cast<std::size_t>(i)];
        curve.reserve(static_cast<std::size_t>(n_obs));
        for (int j = 0; j < n_obs; ++j) {
            const double x = rng.uniform01();
            double y = fn(i + 1, x);
            if (noise_sd > 0.0) y += noise_sd * rng.normal();
            curve.push_back({x, y});
        }
    }
    return snfts::FunctionalSample::from_points(std::move(pts));
}

inline snfts::FunctionalSample make_constant_sample(int n, int n_obs, double value,
                                                    std::uint64_t seed) {
    return make_sample(n, n_obs, seed, [value](int, double) { return value; });
}

/// Every curve observed on the same regular grid; y = fn(i, x).
inline snfts::FunctionalSample make_grid_sample(int n, int n_obs,
                                                const std::function<double(int, double)>& fn) {
    std::vector<std::vector<snfts::Observation>> pts(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto& curve = pts[static_cast<std::size_t>(i)];
        for (int j = 0; j < n_obs; ++j) {
            const double x = (j + 0.5) / n_obs;
            curve.push_back({x, fn(i + 1, x)});
        }
    }
    return snfts::FunctionalSample::from_points(std::move(pts));
}

/// Noiseless step of the given height after curve k0.
inline snfts::FunctionalSample make_step_sample(int n, int n_obs, double height, int k0,
                                                std::uint64_t seed) {
    return make_sample(n, n_obs, seed,
                       [height, k0](int i, double) { return i > k0 ? height : 0.0; });
}

/// Midpoint Riemann integral of fn over [0,1].
template <typename Fn>
double riemann_01(Fn&& fn, long cells = 1000000) {
    double acc = 0.0;
    for (long c = 0; c < cells; ++c) acc += fn((c + 0.5) / static_cast<double>(cells));
    return acc / static_cast<double>(cells);
}

} // namespace testutil
