#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snfts/errors.hpp"
#include "snfts/parallel.hpp"
#include "snfts/rng.hpp"
#include "snfts/sample.hpp"

namespace snfts {

/// Functional of t -> t{W(t) - tW(1)} used as the self-normalizer:
/// Integral  [int_eps^1 t^2 {W(t)-tW(1)}^2 dt]^{1/2}
/// Sup       sup_t |t{W(t)-tW(1)}|
/// Range     sup_t t{W(t)-tW(1)} - inf_t t{W(t)-tW(1)}
enum class NormalizerKind { Integral, Sup, Range };

inline const char* to_string(NormalizerKind kind) {
    switch (kind) {
        case NormalizerKind::Integral: return "integral";
        case NormalizerKind::Sup: return "sup";
        case NormalizerKind::Range: return "range";
    }
    return "integral";
}

inline NormalizerKind normalizer_from_string(const std::string& name) {
    if (name == "integral") return NormalizerKind::Integral;
    if (name == "sup") return NormalizerKind::Sup;
    if (name == "range") return NormalizerKind::Range;
    throw DomainError("unknown normalizer kind '" + name + "' (expected integral|sup|range)");
}

/// Monte Carlo setup for tabulating the pivotal ratio distribution.
struct PivotalConfig {
    double epsilon = 0.1;
    NormalizerKind kind = NormalizerKind::Integral;
    std::int64_t n_paths = 200000;
    int n_steps = 2000; // grid resolution of W on [0,1]
    std::uint64_t seed = 0;

    void validate() const {
        if (!(epsilon > 0.0 && epsilon < 1.0))
            throw DomainError("trimming epsilon must lie in (0,1)");
        if (n_paths < 1) throw DomainError("need at least one pivotal path");
        if (n_steps < 2) throw DomainError("need at least two grid steps");
        if (n_steps * epsilon < 2.0)
            throw DomainError("n_steps * epsilon must be >= 2 to resolve the trimmed range");
        if ((1.0 - epsilon) * n_steps < 1.0)
            throw DomainError("epsilon leaves no grid cell inside the trimmed range");
    }
};

/// Sorted Monte Carlo sample of the pivotal ratio for one (epsilon, kind).
struct PivotalTable {
    PivotalConfig config;
    std::vector<double> sorted_samples;
    std::uint64_t resampled_paths = 0; // degenerate paths redrawn (diagnostics)
};

/// One simulated path: the scaled increments of W plus, per grid cell of
/// the trimmed range, the two uniforms that drive the exact conditional
/// draws of the within-cell maximum and minimum of W.
struct PathDraw {
    std::vector<double> increments;
    std::vector<double> bridge_u_max;
    std::vector<double> bridge_u_min;
};

/// Grid cells of [epsilon, 1]: one per step from the first grid index at or
/// past epsilon up to 1.
inline int trimmed_cell_count(double epsilon, int n_steps) {
    const int k_start = std::clamp(detail::ceil_index(epsilon * n_steps), 1, n_steps);
    return n_steps - k_start;
}

/// Fills a PathDraw from the stream: n_steps Gaussian increments of
/// variance 1/n_steps, then two uniforms per trimmed cell. The draw count
/// depends only on (n_steps, epsilon), never on the requested kinds.
inline void draw_path(Rng& rng, int n_steps, double epsilon, PathDraw& draw) {
    draw.increments.resize(static_cast<std::size_t>(n_steps));
    const double sqrt_dt = std::sqrt(1.0 / n_steps);
    for (auto& z : draw.increments) z = sqrt_dt * rng.normal();
    const std::size_t cells = static_cast<std::size_t>(trimmed_cell_count(epsilon, n_steps));
    draw.bridge_u_max.resize(cells);
    draw.bridge_u_min.resize(cells);
    for (std::size_t c = 0; c < cells; ++c) {
        draw.bridge_u_max[c] = rng.uniform01_open0();
        draw.bridge_u_min[c] = rng.uniform01_open0();
    }
}

/// W(1) together with the three normalizer functionals of one path over
/// the trimmed grid: trapezoid rule for the integral; extrema refined by
/// exact conditional draws of the within-cell max/min of W (inverting
/// P(max <= m | endpoints) = 1 - exp(-2(m-a)(m-b)/dt)), which removes the
/// O(sqrt(dt)) downward bias of raw grid extrema. Negating the increments
/// and swapping the two bridge-uniform arrays negates the path exactly.
struct PathFunctionals {
    double w1 = 0.0;
    double integral = 0.0;
    double sup = 0.0;
    double range = 0.0;
    bool degenerate = false;

    double normalizer(NormalizerKind kind) const {
        switch (kind) {
            case NormalizerKind::Integral: return integral;
            case NormalizerKind::Sup: return sup;
            case NormalizerKind::Range: return range;
        }
        return integral;
    }
};

inline PathFunctionals path_functionals(const PathDraw& draw, double epsilon) {
    const int n_steps = static_cast<int>(draw.increments.size());
    const double dt = 1.0 / n_steps;
    double w1 = 0.0;
    for (const double z : draw.increments) w1 += z;

    // First grid index at or past epsilon. W is re-accumulated in the same
    // left-to-right order as w1, so f vanishes exactly at the last point.
    const int k_start = std::clamp(detail::ceil_index(epsilon * n_steps), 1, n_steps);

    PathFunctionals out;
    out.w1 = w1;
    double sup_f = -std::numeric_limits<double>::infinity();
    double inf_f = std::numeric_limits<double>::infinity();
    double grid_abs = 0.0;
    double integral = 0.0;
    double prev_fsq = 0.0;
    double w = 0.0;
    double w_prev = 0.0;
    for (int k = 1; k <= n_steps; ++k) {
        w += draw.increments[static_cast<std::size_t>(k - 1)];
        if (k < k_start) continue;
        const double t = static_cast<double>(k) * dt;
        const double f = t * (w - t * w1);
        grid_abs = std::max(grid_abs, std::abs(f));
        const double fsq = f * f;
        if (k > k_start) {
            integral += 0.5 * (prev_fsq + fsq) * dt;
            // cell [k-1, k]: extrema of W given the endpoints, then the
            // envelope of t (W - t w1) at both cell edges
            const std::size_t c = static_cast<std::size_t>(k - 1 - k_start);
            const double d = w - w_prev;
            const double s = w_prev + w;
            const double hi =
                0.5 * (s + std::sqrt(d * d - 2.0 * dt * std::log(draw.bridge_u_max[c])));
            const double lo =
                0.5 * (s - std::sqrt(d * d - 2.0 * dt * std::log(draw.bridge_u_min[c])));
            const double t_lo = t - dt;
            sup_f = std::max({sup_f, t_lo * (hi - t_lo * w1), t * (hi - t * w1)});
            inf_f = std::min({inf_f, t_lo * (lo - t_lo * w1), t * (lo - t * w1)});
        }
        prev_fsq = fsq;
        w_prev = w;
    }
    out.sup = std::max(sup_f, -inf_f);
    out.range = sup_f - inf_f;
    out.integral = std::sqrt(integral);
    out.degenerate = (grid_abs == 0.0);
    return out;
}

namespace detail {

inline constexpr std::int64_t kPivotalBlockSize = 1024;

/// Simulates the shared path ensemble; one output array per requested kind.
/// Paths are drawn in blocks keyed by (seed, block index), so the ensemble
/// is bit-identical for any thread count and for any subset of kinds.
/// Paths come in antithetic pairs: every drawn path also contributes its
/// exact mirror (negated ratio, identical normalizers), so the sample is
/// exactly symmetric and its median exactly zero.
inline std::vector<std::vector<double>> simulate_ratio_arrays(const PivotalConfig& config,
                                                              std::span<const NormalizerKind> kinds,
                                                              std::uint64_t& resampled_total,
                                                              int n_threads) {
    const std::int64_t n_paths = config.n_paths;
    const int n_steps = config.n_steps;
    const std::int64_t n_blocks = (n_paths + kPivotalBlockSize - 1) / kPivotalBlockSize;

    std::vector<std::vector<double>> out(kinds.size());
    for (auto& v : out) v.assign(static_cast<std::size_t>(n_paths), 0.0);
    std::vector<std::uint64_t> resampled(static_cast<std::size_t>(n_blocks), 0);

    parallel_for(static_cast<int>(n_blocks), n_threads, [&](int block) {
        Rng rng(config.seed, static_cast<std::uint64_t>(block));
        PathDraw draw;
        const std::int64_t first = static_cast<std::int64_t>(block) * kPivotalBlockSize;
        const std::int64_t last = std::min(n_paths, first + kPivotalBlockSize);
        for (std::int64_t path = first; path < last; path += 2) {
            PathFunctionals pf;
            do {
                draw_path(rng, n_steps, config.epsilon, draw);
                pf = path_functionals(draw, config.epsilon);
                if (pf.degenerate) ++resampled[static_cast<std::size_t>(block)];
            } while (pf.degenerate);
            for (std::size_t ki = 0; ki < kinds.size(); ++ki) {
                const double ratio = pf.w1 / pf.normalizer(kinds[ki]);
                out[ki][static_cast<std::size_t>(path)] = ratio;
                if (path + 1 < last) out[ki][static_cast<std::size_t>(path + 1)] = -ratio;
            }
        }
    });

    resampled_total = 0;
    for (const auto r : resampled) resampled_total += r;
    return out;
}

} // namespace detail

/// Tabulates the pivotal ratio for several normalizer kinds from one shared
/// path ensemble. Tables come back in the order of `kinds`, each sorted.
inline std::vector<PivotalTable> simulate_ratio_tables(const PivotalConfig& config,
                                                       std::span<const NormalizerKind> kinds,
                                                       int n_threads = 0) {
    config.validate();
    std::uint64_t resampled = 0;
    auto arrays = detail::simulate_ratio_arrays(config, kinds, resampled, n_threads);
    std::vector<PivotalTable> tables;
    tables.reserve(kinds.size());
    for (std::size_t ki = 0; ki < kinds.size(); ++ki) {
        PivotalTable t;
        t.config = config;
        t.config.kind = kinds[ki];
        t.sorted_samples = std::move(arrays[ki]);
        std::sort(t.sorted_samples.begin(), t.sorted_samples.end());
        t.resampled_paths = resampled;
        tables.push_back(std::move(t));
    }
    return tables;
}

inline PivotalTable simulate_ratio_samples(const PivotalConfig& config, int n_threads = 0) {
    const NormalizerKind kinds[1] = {config.kind};
    return std::move(simulate_ratio_tables(config, kinds, n_threads).front());
}

/// Empirical quantile by the nearest-rank rule: sorted[ceil(level*n)] with
/// 1-based rank. Deterministic across platforms (no interpolation).
inline double quantile(const PivotalTable& table, double level) {
    if (!(level > 0.0 && level < 1.0))
        throw DomainError("quantile level " + std::to_string(level) + " outside (0,1)");
    const std::size_t n = table.sorted_samples.size();
    if (n == 0) throw DomainError("quantile of an empty table");
    auto rank = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n) - 1e-9));
    if (rank < 1) rank = 1;
    if (rank > n) rank = n;
    return table.sorted_samples[rank - 1];
}

// ---------------------------------------------------------------------------
// Table cache: one self-describing binary file per config.
// Layout (little-endian): magic "SNFTSPVT", u32 version, u32 kind,
// f64 epsilon, i64 n_paths, i32 n_steps, u64 seed, u64 resampled_paths,
// then n_paths f64 sorted samples.
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr char kTableMagic[8] = {'S', 'N', 'F', 'T', 'S', 'P', 'V', 'T'};
inline constexpr std::uint32_t kTableVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    return static_cast<bool>(is);
}

inline bool config_matches(const PivotalConfig& a, const PivotalConfig& b) {
    return a.kind == b.kind && std::abs(a.epsilon - b.epsilon) <= 5e-7 &&
           a.n_paths == b.n_paths && a.n_steps == b.n_steps && a.seed == b.seed;
}

} // namespace detail

inline void save_table(const PivotalTable& table, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open '" + path.string() + "' for writing");
    os.write(detail::kTableMagic, sizeof(detail::kTableMagic));
    detail::write_pod(os, detail::kTableVersion);
    detail::write_pod(os, static_cast<std::uint32_t>(table.config.kind));
    detail::write_pod(os, table.config.epsilon);
    detail::write_pod(os, static_cast<std::int64_t>(table.config.n_paths));
    detail::write_pod(os, static_cast<std::int32_t>(table.config.n_steps));
    detail::write_pod(os, table.config.seed);
    detail::write_pod(os, table.resampled_paths);
    os.write(reinterpret_cast<const char*>(table.sorted_samples.data()),
             static_cast<std::streamsize>(table.sorted_samples.size() * sizeof(double)));
    if (!os) throw Error("failed writing table to '" + path.string() + "'");
}

/// Loads and validates a table file. Throws CorruptFileError on truncation,
/// bad magic/version, unsorted samples, or a median far from zero.
inline PivotalTable load_table(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CorruptFileError("cannot open table file '" + path.string() + "'");
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, detail::kTableMagic, sizeof(magic)) != 0)
        throw CorruptFileError("'" + path.string() + "' is not a quantile table file");
    std::uint32_t version = 0, kind_raw = 0;
    std::int64_t n_paths = 0;
    std::int32_t n_steps = 0;
    PivotalTable table;
    if (!detail::read_pod(is, version) || version != detail::kTableVersion)
        throw CorruptFileError("unsupported table file version in '" + path.string() + "'");
    if (!detail::read_pod(is, kind_raw) || kind_raw > 2)
        throw CorruptFileError("bad normalizer kind in '" + path.string() + "'");
    if (!detail::read_pod(is, table.config.epsilon) || !detail::read_pod(is, n_paths) ||
        !detail::read_pod(is, n_steps) || !detail::read_pod(is, table.config.seed) ||
        !detail::read_pod(is, table.resampled_paths))
        throw CorruptFileError("truncated table header in '" + path.string() + "'");
    table.config.kind = static_cast<NormalizerKind>(kind_raw);
    table.config.n_paths = n_paths;
    table.config.n_steps = n_steps;
    if (n_paths < 1) throw CorruptFileError("empty table in '" + path.string() + "'");
    table.sorted_samples.assign(static_cast<std::size_t>(n_paths), 0.0);
    is.read(reinterpret_cast<char*>(table.sorted_samples.data()),
            static_cast<std::streamsize>(table.sorted_samples.size() * sizeof(double)));
    if (!is || is.gcount() != static_cast<std::streamsize>(table.sorted_samples.size() * sizeof(double)))
        throw CorruptFileError("truncated sample block in '" + path.string() + "'");
    if (!std::is_sorted(table.sorted_samples.begin(), table.sorted_samples.end()))
        throw CorruptFileError("table samples in '" + path.string() + "' are not sorted");

    // Symmetry invariant: |median| <= 3 sd / sqrt(n). Only meaningful for
    // ensembles large enough for the normal approximation.
    const std::size_t n = table.sorted_samples.size();
    if (n >= 100) {
        const double median = 0.5 * (table.sorted_samples[(n - 1) / 2] + table.sorted_samples[n / 2]);
        double mean = 0.0;
        for (const double v : table.sorted_samples) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const double v : table.sorted_samples) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n - 1);
        const double band = 3.0 * std::sqrt(var / static_cast<double>(n));
        if (std::abs(median) > std::max(band, 1e-12))
            throw CorruptFileError("table median " + std::to_string(median) +
                                   " violates the symmetry invariant in '" + path.string() + "'");
    }
    return table;
}

/// Cache-aware load: nullopt (a cache miss) when the file is absent,
/// unreadable, or was built for a different config.
inline std::optional<PivotalTable> load_matching(const std::filesystem::path& path,
                                                 const PivotalConfig& config) {
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
        PivotalTable table = load_table(path);
        if (!detail::config_matches(table.config, config)) return std::nullopt;
        return table;
    } catch (const CorruptFileError&) {
        return std::nullopt;
    }
}

/// File name key: kind, epsilon rounded to 1e-6, paths, steps, seed.
inline std::string cache_file_name(const PivotalConfig& config) {
    char eps[32];
    std::snprintf(eps, sizeof(eps), "%.6f", config.epsilon);
    return std::string("pivotal_") + to_string(config.kind) + "_eps" + eps + "_paths" +
           std::to_string(config.n_paths) + "_steps" + std::to_string(config.n_steps) + "_seed" +
           std::to_string(config.seed) + ".snpt";
}

/// Loads the table for `config` from `cache_dir`, simulating and saving it
/// on a miss. use_cache = false always regenerates and leaves disk alone.
inline PivotalTable get_or_build_table(const std::filesystem::path& cache_dir,
                                       const PivotalConfig& config, int n_threads = 0,
                                       bool use_cache = true) {
    const std::filesystem::path file = cache_dir / cache_file_name(config);
    if (use_cache) {
        if (auto cached = load_matching(file, config)) return std::move(*cached);
    }
    PivotalTable table = simulate_ratio_samples(config, n_threads);
    if (use_cache) {
        std::error_code ec;
        std::filesystem::create_directories(cache_dir, ec);
        if (!ec) save_table(table, file);
    }
    return table;
}

} // namespace snfts
