#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "snfts/errors.hpp"
#include "snfts/sample.hpp"

namespace snfts {

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            cells.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return cells;
}

inline double parse_double(std::string_view cell, long line_no, const char* column) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size())
        throw CsvError("line " + std::to_string(line_no) + ": cannot parse " + column + " value '" +
                       std::string(cell) + "'");
    return v;
}

} // namespace detail

/// Result of ingesting a long-format curve table. A sample_id column with
/// two distinct values splits the rows into two samples (ordered by first
/// appearance); otherwise everything lands in sample1.
struct LoadedCurves {
    FunctionalSample sample1;
    std::optional<FunctionalSample> sample2;
    bool rescaled = false;
    double x_min = 0.0;
    double x_max = 1.0;
};

/// Reads the long format `curve_id,x,y[,sample_id][,time]` (header required,
/// columns located by name). Curve order is first appearance, or ascending
/// `time` when that column exists. rescale_x min-max rescales x to [0,1]
/// over the whole file; without it any x outside [0,1] is an error naming
/// the line.
inline LoadedCurves read_curves_csv(std::istream& is, bool rescale_x = false) {
    std::string line;
    if (!std::getline(is, line)) throw CsvError("empty input: missing header row");
    const auto header = detail::split_csv_line(line);
    int col_curve = -1, col_x = -1, col_y = -1, col_sample = -1, col_time = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "curve_id") col_curve = static_cast<int>(c);
        else if (header[c] == "x") col_x = static_cast<int>(c);
        else if (header[c] == "y") col_y = static_cast<int>(c);
        else if (header[c] == "sample_id") col_sample = static_cast<int>(c);
        else if (header[c] == "time") col_time = static_cast<int>(c);
    }
    if (col_curve < 0 || col_x < 0 || col_y < 0)
        throw CsvError("header must name the columns curve_id,x,y");
    const std::size_t n_columns = header.size();

    struct Row {
        double x, y;
        long line_no;
    };
    struct CurveAcc {
        std::vector<Row> rows;
        double time = 0.0;
        long order = 0;
    };
    // (sample key, curve key) -> accumulated rows
    std::map<std::string, std::map<std::string, CurveAcc>> groups;
    std::vector<std::string> sample_order;
    double x_min = 0.0, x_max = 0.0;
    bool any = false;
    long out_of_range_line = 0;
    double out_of_range_x = 0.0;

    long line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != n_columns)
            throw CsvError("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(n_columns) + " columns, found " +
                           std::to_string(cells.size()));
        const double x = detail::parse_double(cells[static_cast<std::size_t>(col_x)], line_no, "x");
        const double y = detail::parse_double(cells[static_cast<std::size_t>(col_y)], line_no, "y");
        const std::string sample_key =
            col_sample >= 0 ? std::string(cells[static_cast<std::size_t>(col_sample)]) : std::string();
        const std::string curve_key(cells[static_cast<std::size_t>(col_curve)]);

        if (!any || x < x_min) x_min = x;
        if (!any || x > x_max) x_max = x;
        any = true;
        if (!rescale_x && !(x >= 0.0 && x <= 1.0) && out_of_range_line == 0) {
            out_of_range_line = line_no;
            out_of_range_x = x;
        }

        auto& sample_group = groups[sample_key];
        if (sample_group.empty() &&
            std::find(sample_order.begin(), sample_order.end(), sample_key) == sample_order.end())
            sample_order.push_back(sample_key);
        auto [it, inserted] = sample_group.try_emplace(curve_key);
        if (inserted) {
            it->second.order = line_no;
            if (col_time >= 0)
                it->second.time =
                    detail::parse_double(cells[static_cast<std::size_t>(col_time)], line_no, "time");
        }
        it->second.rows.push_back(Row{x, y, line_no});
    }
    if (!any) throw CsvError("input contains a header but no data rows");
    if (out_of_range_line != 0)
        throw CsvError("line " + std::to_string(out_of_range_line) + ": x = " +
                       std::to_string(out_of_range_x) +
                       " outside [0,1]; pass the rescale flag to min-max rescale");
    if (sample_order.size() > 2)
        throw CsvError("sample_id column has " + std::to_string(sample_order.size()) +
                       " distinct values; at most 2 are supported");

    LoadedCurves out;
    out.rescaled = rescale_x;
    out.x_min = x_min;
    out.x_max = x_max;
    const double span = x_max - x_min;
    if (rescale_x && !(span > 0.0))
        throw CsvError("cannot rescale: all x values are identical");

    auto build_sample = [&](std::map<std::string, CurveAcc>& curves_by_key) {
        std::vector<const CurveAcc*> ordered;
        ordered.reserve(curves_by_key.size());
        for (const auto& [key, acc] : curves_by_key) ordered.push_back(&acc);
        std::sort(ordered.begin(), ordered.end(), [&](const CurveAcc* a, const CurveAcc* b) {
            if (col_time >= 0 && a->time != b->time) return a->time < b->time;
            return a->order < b->order;
        });
        std::vector<Curve> curves;
        curves.reserve(ordered.size());
        for (std::size_t i = 0; i < ordered.size(); ++i) {
            Curve c;
            c.index = static_cast<int>(i) + 1;
            c.points.reserve(ordered[i]->rows.size());
            for (const Row& r : ordered[i]->rows) {
                double x = r.x;
                if (rescale_x) x = (x - x_min) / span;
                c.points.push_back(Observation{std::clamp(x, 0.0, 1.0), r.y});
            }
            curves.push_back(std::move(c));
        }
        return FunctionalSample::from_curves(std::move(curves));
    };

    out.sample1 = build_sample(groups[sample_order[0]]);
    if (sample_order.size() == 2) out.sample2 = build_sample(groups[sample_order[1]]);
    return out;
}

inline LoadedCurves read_curves_file(const std::filesystem::path& path, bool rescale_x = false) {
    std::ifstream is(path);
    if (!is) throw CsvError("cannot open input file '" + path.string() + "'");
    return read_curves_csv(is, rescale_x);
}

/// Long-format export with %.17g values, so a write/read round trip
/// reproduces every double bit-exactly.
inline void write_curves_csv(std::ostream& os, const FunctionalSample& sample) {
    os << "curve_id,x,y\n";
    char buf[64];
    for (const auto& curve : sample.curves()) {
        for (const auto& p : curve.points) {
            os << curve.index << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", p.x);
            os << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", p.y);
            os << buf << '\n';
        }
    }
}

/// Wide-to-long conversion: header `curve_id,<x1>,<x2>,...` with numeric
/// column labels; each subsequent row is one curve, empty cells are
/// missing observations.
inline void reshape_wide_to_long(std::istream& is, std::ostream& os) {
    std::string line;
    if (!std::getline(is, line)) throw CsvError("empty input: missing header row");
    const auto header = detail::split_csv_line(line);
    if (header.size() < 2 || header[0] != "curve_id")
        throw CsvError("wide header must start with curve_id followed by numeric x labels");
    std::vector<double> grid;
    grid.reserve(header.size() - 1);
    for (std::size_t c = 1; c < header.size(); ++c)
        grid.push_back(detail::parse_double(header[c], 1, "x label"));

    os << "curve_id,x,y\n";
    char buf[64];
    long line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw CsvError("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(header.size()) + " columns, found " +
                           std::to_string(cells.size()));
        for (std::size_t c = 1; c < cells.size(); ++c) {
            if (cells[c].empty()) continue;
            const double y = detail::parse_double(cells[c], line_no, "y");
            os << cells[0] << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", grid[c - 1]);
            os << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", y);
            os << buf << '\n';
        }
    }
}

/// Reads a baseline function from `x,y` rows and returns its piecewise
/// linear interpolant (clamped to the end values outside the range).
inline std::function<double(double)> read_baseline_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw CsvError("cannot open baseline file '" + path.string() + "'");
    std::string line;
    if (!std::getline(is, line)) throw CsvError("baseline file is empty");
    const auto header = detail::split_csv_line(line);
    int col_x = -1, col_y = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "x") col_x = static_cast<int>(c);
        else if (header[c] == "y") col_y = static_cast<int>(c);
    }
    if (col_x < 0 || col_y < 0) throw CsvError("baseline header must name the columns x,y");

    std::vector<std::pair<double, double>> pts;
    long line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw CsvError("line " + std::to_string(line_no) + ": expected " +
                           std::to_string(header.size()) + " columns");
        pts.emplace_back(detail::parse_double(cells[static_cast<std::size_t>(col_x)], line_no, "x"),
                         detail::parse_double(cells[static_cast<std::size_t>(col_y)], line_no, "y"));
    }
    if (pts.empty()) throw CsvError("baseline file has no data rows");
    std::sort(pts.begin(), pts.end());
    return [pts = std::move(pts)](double x) {
        if (x <= pts.front().first) return pts.front().second;
        if (x >= pts.back().first) return pts.back().second;
        const auto it = std::upper_bound(pts.begin(), pts.end(), std::make_pair(x, 0.0),
                                         [](const auto& a, const auto& b) { return a.first < b.first; });
        const auto lo = it - 1;
        const double w = (x - lo->first) / (it->first - lo->first);
        return lo->second + w * (it->second - lo->second);
    };
}

} // namespace snfts
