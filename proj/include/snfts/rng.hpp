#pragma once

#include <cmath>
#include <cstdint>

namespace snfts {

namespace detail {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

/// Finalizer from splitmix64; full-avalanche 64-bit mixer.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Counter-based splitmix64 stream. A stream is fully determined by
/// (seed, stream_id), so work split across threads by stream id produces
/// the same draws regardless of the degree of parallelism. All
/// distributions are implemented locally for bit-identical output across
/// standard libraries (std::normal_distribution is not portable).
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream_id = 0)
        : state_(detail::mix64(seed + detail::kGolden) ^
                 detail::mix64(stream_id * detail::kGolden + 0x243f6a8885a308d3ULL)) {}

    std::uint64_t next_u64() {
        state_ += detail::kGolden;
        return detail::mix64(state_);
    }

    /// Uniform on [0,1).
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0,1]; safe as a log argument.
    double uniform01_open0() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; generates pairs, caches the second.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01_open0();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    /// Uniform on (-sqrt(3), sqrt(3)): mean 0, variance 1.
    double uniform_unit_var() {
        return (2.0 * uniform01() - 1.0) * 1.7320508075688772935274463415059;
    }

    /// Laplace with density 2^{-1/2} exp(-sqrt(2)|x|): mean 0, variance 1.
    double laplace_unit_var() {
        const double u = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
        const double b = 0.70710678118654752440084436210485; // 1/sqrt(2)
        return u < 0.5 ? b * std::log(2.0 * u) : -b * std::log(2.0 * (1.0 - u));
    }

    /// Integer uniform on {lo, ..., hi} inclusive.
    int uniform_int(int lo, int hi) {
        const int span = hi - lo + 1;
        int k = static_cast<int>(uniform01() * span);
        if (k >= span) k = span - 1;
        return lo + k;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace snfts
