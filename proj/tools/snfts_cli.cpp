// snfts: self-normalized relevant-hypothesis tests for functional time
// series observed discretely with noise. Subcommands cover data ingestion,
// the four tests, quantile-table management, delta sweeps, and Monte Carlo
// studies. Exit codes for test commands: 0 fail-to-reject, 1 reject, 2 error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "snfts/reporting.hpp"
#include "snfts/snfts.hpp"

namespace {

constexpr std::uint64_t kDefaultSeed = 12345; // fixed default so runs without --seed reproduce

struct CommonTestFlags {
    std::string input;
    double delta = 0.0;
    double alpha = 0.05;
    double epsilon = 0.1;
    std::string normalizer = "integral";
    std::string knots = "auto";
    int order = 4;
    bool rescale_x = false;
    std::string table_cache;
    bool no_cache = false;
    long paths = 200000;
    int steps = 2000;
    std::uint64_t seed = kDefaultSeed;
    int threads = 0;
};

void add_common_flags(CLI::App* cmd, CommonTestFlags& f, bool need_delta = true) {
    cmd->add_option("--input", f.input, "input curves CSV (curve_id,x,y[,sample_id][,time])")
        ->required();
    auto* delta = cmd->add_option("--delta", f.delta, "relevance threshold (squared-L2 units)");
    if (need_delta) delta->required();
    cmd->add_option("--alpha", f.alpha, "significance level");
    cmd->add_option("--epsilon", f.epsilon, "trimming parameter");
    cmd->add_option("--normalizer", f.normalizer, "self-normalizer: integral|sup|range");
    cmd->add_option("--knots", f.knots, "interior knots: auto (BIC) or an integer");
    cmd->add_option("--order", f.order, "spline order (4 = cubic)");
    cmd->add_flag("--rescale-x", f.rescale_x, "min-max rescale x to [0,1]");
    cmd->add_option("--table-cache", f.table_cache,
                    "quantile table cache directory (default: $SNFTS_CACHE_DIR or .snfts-cache)");
    cmd->add_flag("--no-cache", f.no_cache, "regenerate the quantile table, do not touch the cache");
    cmd->add_option("--paths", f.paths, "Monte Carlo paths for the quantile table");
    cmd->add_option("--steps", f.steps, "Brownian grid steps for the quantile table");
    cmd->add_option("--seed", f.seed, "seed for all randomness");
    cmd->add_option("--threads", f.threads, "worker threads (0 = hardware)");
}

std::filesystem::path resolve_cache_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("SNFTS_CACHE_DIR"); env && *env) return env;
    return ".snfts-cache";
}

snfts::PivotalTable fetch_table(const CommonTestFlags& f, snfts::NormalizerKind kind) {
    snfts::PivotalConfig config;
    config.epsilon = f.epsilon;
    config.kind = kind;
    config.n_paths = f.paths;
    config.n_steps = f.steps;
    config.seed = f.seed;
    return snfts::get_or_build_table(resolve_cache_dir(f.table_cache), config, f.threads,
                                     !f.no_cache);
}

std::optional<snfts::SplineSpec> parse_knots(const std::string& knots, int order) {
    if (knots == "auto") return std::nullopt;
    try {
        const int j = std::stoi(knots);
        if (j < 0) throw snfts::DomainError("knot count must be >= 0");
        return snfts::SplineSpec{order, j};
    } catch (const std::invalid_argument&) {
        throw snfts::DomainError("--knots expects 'auto' or a nonnegative integer, got '" + knots +
                                 "'");
    }
}

snfts::TestSpec make_test_spec(const CommonTestFlags& f) {
    snfts::TestSpec spec;
    spec.delta = f.delta;
    spec.alpha = f.alpha;
    spec.epsilon = f.epsilon;
    spec.kind = snfts::normalizer_from_string(f.normalizer);
    spec.spline = parse_knots(f.knots, f.order);
    spec.order = f.order;
    return spec;
}

int emit_report(const snfts::TestReport& report, const snfts::PivotalTable& table) {
    nlohmann::json j = snfts::report_to_json(report);
    j["pivotal_table"] = snfts::table_to_json(table.config);
    std::cout << j.dump(2) << "\n";
    return report.reject ? 1 : 0;
}

snfts::FunctionalSample load_single_sample(const std::string& path, bool rescale) {
    snfts::LoadedCurves loaded = snfts::read_curves_file(path, rescale);
    if (loaded.sample2)
        throw snfts::CsvError("'" + path + "' contains two samples; this command expects one");
    return std::move(loaded.sample1);
}

std::vector<double> parse_double_list(const std::string& csv, const char* what) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw snfts::DomainError(std::string("cannot parse ") + what + " entry '" + item + "'");
        }
    }
    if (out.empty()) throw snfts::DomainError(std::string("empty ") + what + " list");
    return out;
}

// ---------------------------------------------------------------------------
// delta-sweep
// ---------------------------------------------------------------------------

struct SweepFlags {
    CommonTestFlags common;
    std::string test = "one-sample";
    std::string deltas;
    std::string alphas = "0.90,0.95,0.99";
    std::string input2;
    std::string khat = "auto";
    std::string thetas;
    std::string out;
};

int run_delta_sweep(const SweepFlags& f) {
    const auto deltas = parse_double_list(f.deltas, "--deltas");
    const auto levels = parse_double_list(f.alphas, "--alphas");
    const snfts::NormalizerKind kind = snfts::normalizer_from_string(f.common.normalizer);
    const snfts::PivotalTable table = fetch_table(f.common, kind);

    // The statistic and normalizer do not depend on delta or alpha, so one
    // stat curve serves the whole grid.
    snfts::TestSpec spec = make_test_spec(f.common);
    spec.delta = deltas.front();
    snfts::TestReport base;
    if (f.test == "one-sample") {
        base = snfts::one_sample_test(load_single_sample(f.common.input, f.common.rescale_x), spec,
                                      table);
    } else if (f.test == "two-sample") {
        snfts::LoadedCurves loaded = snfts::read_curves_file(f.common.input, f.common.rescale_x);
        if (!f.input2.empty()) {
            base = snfts::two_sample_test(loaded.sample1,
                                          load_single_sample(f.input2, f.common.rescale_x), spec,
                                          table);
        } else if (loaded.sample2) {
            base = snfts::two_sample_test(loaded.sample1, *loaded.sample2, spec, table);
        } else {
            throw snfts::CsvError("two-sample sweep needs --input2 or a sample_id column");
        }
    } else if (f.test == "changepoint") {
        std::optional<int> khat;
        if (f.khat != "auto") khat = std::stoi(f.khat);
        base = snfts::changepoint_test(load_single_sample(f.common.input, f.common.rescale_x), khat,
                                       spec, table);
    } else if (f.test == "multi-changepoint") {
        if (f.thetas.empty()) throw snfts::DomainError("multi-changepoint sweep needs --thetas");
        const auto th = parse_double_list(f.thetas, "--thetas");
        base = snfts::multi_changepoint_test(load_single_sample(f.common.input, f.common.rescale_x),
                                             th, spec, table);
    } else {
        throw snfts::DomainError("unknown --test '" + f.test + "'");
    }

    std::ostringstream body;
    body << "delta";
    for (const double level : levels) {
        char label[32];
        std::snprintf(label, sizeof(label), ",q%g", level * 100.0);
        body << label;
    }
    body << "\n";
    for (const double delta : deltas) {
        body << delta;
        for (const double level : levels) {
            const double q = snfts::quantile(table, level);
            const bool reject = base.statistic > delta + q * base.normalizer;
            body << ',' << (reject ? "True" : "False");
        }
        body << "\n";
    }
    if (f.out.empty()) {
        std::cout << body.str();
    } else {
        std::ofstream os(f.out);
        if (!os) throw snfts::Error("cannot open '" + f.out + "' for writing");
        os << body.str();
    }
    return 0;
}

// ---------------------------------------------------------------------------
// simulate (study config JSON -> CSV)
// ---------------------------------------------------------------------------

snfts::Scenario scenario_from_json(const nlohmann::json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "one-sample-mean") return snfts::Scenario::one_sample_mean(j.at("a").get<double>());
    if (type == "two-sample-means") return snfts::Scenario::two_sample_means(j.at("a").get<double>());
    if (type == "jump-constant")
        return snfts::Scenario::jump_constant(j.at("a").get<double>(), j.value("frac", 0.4));
    if (type == "jump-quadratic")
        return snfts::Scenario::jump_quadratic(j.at("a").get<double>(), j.value("frac", 0.4));
    if (type == "multi-jump") {
        std::vector<snfts::Jump> jumps;
        for (const auto& item : j.at("jumps")) {
            snfts::Jump jump;
            jump.frac = item.at("frac").get<double>();
            jump.a = item.at("a").get<double>();
            jump.quadratic = item.value("quadratic", false);
            jumps.push_back(jump);
        }
        return snfts::Scenario::multi_jump(std::move(jumps));
    }
    throw snfts::DomainError("unknown scenario type '" + type + "'");
}

int run_simulate(const std::string& config_path, const std::string& out_path,
                 const std::string& cache_flag, int threads) {
    std::ifstream is(config_path);
    if (!is) throw snfts::Error("cannot open study config '" + config_path + "'");
    nlohmann::json j;
    is >> j;

    const std::uint64_t master_seed = j.value("seed", kDefaultSeed);
    const int default_reps = j.value("replications", 500);
    const long table_paths = j.value("table_paths", 200000L);
    const int table_steps = j.value("table_steps", 2000);
    const std::uint64_t table_seed = j.value("table_seed", kDefaultSeed);
    const std::filesystem::path cache_dir = resolve_cache_dir(cache_flag);

    std::vector<snfts::StudyResult> results;
    for (const auto& sj : j.at("studies")) {
        snfts::StudyConfig sc;
        sc.dgp.n = sj.at("n").get<int>();
        sc.dgp.scheme = snfts::scheme_from_string(sj.value("scheme", std::string("S2")));
        sc.dgp.law = snfts::score_law_from_string(sj.value("law", std::string("normal")));
        sc.dgp.scenario = scenario_from_json(sj.at("scenario"));
        sc.dgp.sigma = sj.value("sigma", 1.0);
        sc.dgp.seed = sj.value("seed", master_seed);
        sc.delta = sj.at("delta").get<double>();
        if (sj.contains("alphas")) sc.alphas = sj.at("alphas").get<std::vector<double>>();
        sc.epsilon = sj.value("epsilon", 0.1);
        sc.replications = sj.value("replications", default_reps);
        sc.order = sj.value("order", 4);
        if (sj.contains("knots"))
            sc.spline = snfts::SplineSpec{sc.order, sj.at("knots").get<int>()};
        if (sj.contains("thetas")) sc.thetas = sj.at("thetas").get<std::vector<double>>();
        sc.kinds.clear();
        if (sj.contains("kinds")) {
            for (const auto& k : sj.at("kinds"))
                sc.kinds.push_back(snfts::normalizer_from_string(k.get<std::string>()));
        } else {
            sc.kinds.push_back(snfts::NormalizerKind::Integral);
        }

        std::vector<snfts::PivotalTable> tables;
        for (const auto kind : sc.kinds) {
            snfts::PivotalConfig pc;
            pc.epsilon = sc.epsilon;
            pc.kind = kind;
            pc.n_paths = table_paths;
            pc.n_steps = table_steps;
            pc.seed = table_seed;
            tables.push_back(snfts::get_or_build_table(cache_dir, pc, threads));
        }
        results.push_back(snfts::rejection_study(sc, tables, threads));
    }

    if (out_path.empty()) {
        snfts::write_study_csv(std::cout, results);
    } else {
        std::ofstream os(out_path);
        if (!os) throw snfts::Error("cannot open '" + out_path + "' for writing");
        snfts::write_study_csv(os, results);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-normalized relevant-hypothesis tests for functional time series"};
    app.require_subcommand(1);

    CommonTestFlags one_f, two_f, cp_f, multi_f;
    std::string one_m0 = "zero";
    std::string two_input2;
    std::string two_knots2 = "auto";
    std::string cp_khat = "auto";
    std::string cp_profile;
    std::string multi_thetas;
    int multi_segments = 0;
    int multi_min_segment = 0;

    auto* one = app.add_subcommand("test-one-sample", "one-sample relevant mean test");
    add_common_flags(one, one_f);
    one->add_option("--m0", one_m0, "baseline: zero or a CSV of (x,y) points");

    auto* two = app.add_subcommand("test-two-sample", "two-sample relevant mean test");
    add_common_flags(two, two_f);
    two->add_option("--input2", two_input2, "second sample CSV (else sample_id column splits --input)");
    two->add_option("--knots2", two_knots2, "interior knots for the second sample");

    auto* cp = app.add_subcommand("test-changepoint", "single relevant change point test");
    add_common_flags(cp, cp_f);
    cp->add_option("--khat", cp_khat, "change point index: auto (L2-CUSUM) or an integer");
    cp->add_option("--profile", cp_profile, "write the CUSUM objective profile to this CSV");

    auto* multi = app.add_subcommand("test-multi-changepoint", "multiple relevant change point test");
    add_common_flags(multi, multi_f);
    multi->add_option("--thetas", multi_thetas, "comma list of change point fractions in (0,1)");
    multi->add_option("--segments", multi_segments, "estimate K change points by binary segmentation");
    multi->add_option("--min-segment", multi_min_segment,
                      "minimum segment length for binary segmentation (0 = default)");

    SweepFlags sweep_f;
    auto* sweep = app.add_subcommand("delta-sweep", "True/False decision table over a delta grid");
    add_common_flags(sweep, sweep_f.common, /*need_delta=*/false);
    sweep->add_option("--test", sweep_f.test,
                      "one-sample|two-sample|changepoint|multi-changepoint");
    sweep->add_option("--deltas", sweep_f.deltas, "comma list of thresholds")->required();
    sweep->add_option("--alphas", sweep_f.alphas, "comma list of quantile levels");
    sweep->add_option("--input2", sweep_f.input2, "second sample CSV (two-sample)");
    sweep->add_option("--khat", sweep_f.khat, "change point index (changepoint)");
    sweep->add_option("--thetas", sweep_f.thetas, "change point fractions (multi-changepoint)");
    sweep->add_option("--out", sweep_f.out, "output CSV path (default: stdout)");

    double q_epsilon = 0.1;
    std::string q_kind = "integral";
    long q_paths = 200000;
    int q_steps = 2000;
    std::uint64_t q_seed = kDefaultSeed;
    int q_threads = 0;
    std::string q_out;
    auto* quant = app.add_subcommand("quantiles", "tabulate a pivotal quantile table");
    quant->add_option("--epsilon", q_epsilon, "trimming parameter");
    quant->add_option("--kind", q_kind, "integral|sup|range");
    quant->add_option("--paths", q_paths, "Monte Carlo paths");
    quant->add_option("--steps", q_steps, "Brownian grid steps");
    quant->add_option("--seed", q_seed, "seed");
    quant->add_option("--threads", q_threads, "worker threads (0 = hardware)");
    quant->add_option("--out", q_out, "output table file")->required();

    std::string sim_config, sim_out, sim_cache;
    int sim_threads = 0;
    auto* sim = app.add_subcommand("simulate", "run Monte Carlo rejection studies from a JSON config");
    sim->add_option("--study-config", sim_config, "study configuration JSON")->required();
    sim->add_option("--out", sim_out, "output CSV path (default: stdout)");
    sim->add_option("--table-cache", sim_cache, "quantile table cache directory");
    sim->add_option("--threads", sim_threads, "worker threads (0 = hardware)");

    std::string rs_input, rs_out;
    auto* reshape = app.add_subcommand("reshape", "convert a wide-format grid CSV to long format");
    reshape->add_option("--input", rs_input, "wide CSV: curve_id,<x1>,<x2>,...")->required();
    reshape->add_option("--out", rs_out, "output long CSV (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (one->parsed()) {
            const snfts::TestSpec spec = make_test_spec(one_f);
            const snfts::PivotalTable table = fetch_table(one_f, spec.kind);
            const snfts::FunctionalSample sample = load_single_sample(one_f.input, one_f.rescale_x);
            std::function<double(double)> baseline;
            if (one_m0 != "zero") baseline = snfts::read_baseline_csv(one_m0);
            return emit_report(snfts::one_sample_test(sample, baseline, spec, table), table);
        }
        if (two->parsed()) {
            const snfts::TestSpec spec = make_test_spec(two_f);
            const snfts::PivotalTable table = fetch_table(two_f, spec.kind);
            snfts::LoadedCurves loaded = snfts::read_curves_file(two_f.input, two_f.rescale_x);
            snfts::FunctionalSample sample2 = [&]() {
                if (!two_input2.empty()) {
                    if (loaded.sample2)
                        throw snfts::CsvError("--input already holds two samples; drop --input2");
                    return load_single_sample(two_input2, two_f.rescale_x);
                }
                if (!loaded.sample2)
                    throw snfts::CsvError("two-sample test needs --input2 or a sample_id column");
                return std::move(*loaded.sample2);
            }();
            const auto spline2 = parse_knots(two_knots2, two_f.order);
            return emit_report(snfts::two_sample_test(loaded.sample1, sample2, spec, table,
                                                      spec.spline, spline2),
                               table);
        }
        if (cp->parsed()) {
            const snfts::TestSpec spec = make_test_spec(cp_f);
            const snfts::PivotalTable table = fetch_table(cp_f, spec.kind);
            const snfts::FunctionalSample sample = load_single_sample(cp_f.input, cp_f.rescale_x);
            std::optional<int> khat;
            if (cp_khat != "auto") khat = std::stoi(cp_khat);
            if (!cp_profile.empty() || !khat) {
                const snfts::SplineSpec sp =
                    spec.spline ? *spec.spline
                                : snfts::SplineSpec{spec.order,
                                                    snfts::select_knots_bic(sample, spec.order).selected};
                const snfts::ChangePointEstimate est =
                    snfts::estimate_single(sample, sp, spec.epsilon);
                if (!khat) khat = est.k_hat;
                if (!cp_profile.empty()) {
                    std::ofstream os(cp_profile);
                    if (!os) throw snfts::Error("cannot open '" + cp_profile + "' for writing");
                    os << "k,objective\n";
                    for (std::size_t i = 0; i < est.profile.size(); ++i)
                        os << est.k_min + static_cast<int>(i) << ',' << est.profile[i] << '\n';
                }
            }
            return emit_report(snfts::changepoint_test(sample, khat, spec, table), table);
        }
        if (multi->parsed()) {
            const snfts::TestSpec spec = make_test_spec(multi_f);
            const snfts::PivotalTable table = fetch_table(multi_f, spec.kind);
            const snfts::FunctionalSample sample =
                load_single_sample(multi_f.input, multi_f.rescale_x);
            std::vector<double> thetas;
            if (!multi_thetas.empty()) {
                thetas = parse_double_list(multi_thetas, "--thetas");
            } else if (multi_segments > 0) {
                const snfts::SplineSpec sp =
                    spec.spline ? *spec.spline
                                : snfts::SplineSpec{spec.order,
                                                    snfts::select_knots_bic(sample, spec.order).selected};
                const std::optional<int> min_seg =
                    multi_min_segment > 0 ? std::optional<int>(multi_min_segment) : std::nullopt;
                const snfts::Segmentation seg =
                    snfts::binary_segmentation(sample, sp, spec.epsilon, multi_segments, min_seg);
                if (seg.change_points.empty())
                    throw snfts::DomainError("binary segmentation found no change points");
                for (const int k : seg.change_points)
                    thetas.push_back(static_cast<double>(k) / sample.n());
            } else {
                throw snfts::DomainError("test-multi-changepoint needs --thetas or --segments");
            }
            return emit_report(snfts::multi_changepoint_test(sample, thetas, spec, table), table);
        }
        if (sweep->parsed()) return run_delta_sweep(sweep_f);
        if (quant->parsed()) {
            snfts::PivotalConfig config;
            config.epsilon = q_epsilon;
            config.kind = snfts::normalizer_from_string(q_kind);
            config.n_paths = q_paths;
            config.n_steps = q_steps;
            config.seed = q_seed;
            const snfts::PivotalTable table = snfts::simulate_ratio_samples(config, q_threads);
            snfts::save_table(table, q_out);
            std::cout << "wrote " << table.sorted_samples.size() << " samples to " << q_out << "\n";
            return 0;
        }
        if (sim->parsed()) return run_simulate(sim_config, sim_out, sim_cache, sim_threads);
        if (reshape->parsed()) {
            std::ifstream is(rs_input);
            if (!is) throw snfts::Error("cannot open '" + rs_input + "'");
            if (rs_out.empty()) {
                snfts::reshape_wide_to_long(is, std::cout);
            } else {
                std::ofstream os(rs_out);
                if (!os) throw snfts::Error("cannot open '" + rs_out + "' for writing");
                snfts::reshape_wide_to_long(is, os);
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
