#pragma once

#include <json.hpp>

#include "snfts/pivotal.hpp"
#include "snfts/testing.hpp"

namespace snfts {

/// JSON view of a decision record; the schema is documented in the README.
inline nlohmann::json report_to_json(const TestReport& report) {
    nlohmann::json j;
    j["family"] = report.family;
    j["statistic"] = report.statistic;
    j["normalizer"] = report.normalizer;
    j["quantile"] = report.quantile;
    j["threshold"] = report.threshold;
    j["reject"] = report.reject;
    j["degenerate_normalizer"] = report.degenerate_normalizer;
    j["delta"] = report.delta;
    j["alpha"] = report.alpha;
    j["epsilon"] = report.epsilon;
    j["normalizer_kind"] = to_string(report.kind);
    j["n"] = report.n;
    if (report.n2 > 0) j["n2"] = report.n2;
    j["spline"] = {{"order", report.spline.order}, {"interior_knots", report.spline.interior_knots}};
    if (report.has_second_spline)
        j["spline2"] = {{"order", report.spline2.order},
                        {"interior_knots", report.spline2.interior_knots}};
    if (!report.change_points.empty()) j["change_points"] = report.change_points;
    if (!report.thetas.empty()) j["thetas"] = report.thetas;
    return j;
}

inline nlohmann::json table_to_json(const PivotalConfig& config) {
    return nlohmann::json{{"epsilon", config.epsilon},
                          {"kind", to_string(config.kind)},
                          {"paths", config.n_paths},
                          {"steps", config.n_steps},
                          {"seed", config.seed}};
}

} // namespace snfts
