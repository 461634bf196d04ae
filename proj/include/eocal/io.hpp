#pragma once

// Text formats: cohort CSV input, calibration reports (CSV or JSON) and
// simulation summaries (CSV or fixed-width tables).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "eocal/calibration.hpp"
#include "eocal/error.hpp"
#include "eocal/risk_models.hpp"
#include "eocal/simulation.hpp"
#include "eocal/survival.hpp"

namespace eocal::io {

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

inline std::optional<double> to_double(std::string_view s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

inline std::optional<long long> to_integer(std::string_view s) {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
        return std::nullopt;
    }
    return v;
}

inline std::string fixed4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

inline std::string sci4(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4e", v);
    return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Cohort CSV

/// Parsed cohort file. Covariates are present only when the file carries
/// the reproductive-history columns.
struct CohortData {
    std::vector<Subject> subjects;
    std::optional<std::vector<RCMCovariates>> covariates;
};

/// Reads a header-named CSV with required columns `z` and `delta` and the
/// optional RCM columns age, age_menarche, menopausal, age_menopause,
/// parity and birth_ages (a `;`-separated list). Every invalid row is
/// reported; the thrown message lists them all.
inline CohortData read_cohort_csv(std::istream& in) {
    using detail::split;
    using detail::trim;

    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string_view> header;
    std::string header_line;
    while (std::getline(in, header_line)) {
        ++line_no;
        if (!trim(header_line).empty()) {
            header = split(header_line, ',');
            break;
        }
    }
    if (header.empty()) {
        throw Error(ErrorKind::parse, "cohort file has no header");
    }

    std::map<std::string, std::size_t, std::less<>> col;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (!col.emplace(std::string(header[i]), i).second) {
            throw Error(ErrorKind::parse, "duplicate column '" + std::string(header[i]) + "'");
        }
    }
    for (const char* required : {"z", "delta"}) {
        if (!col.contains(required)) {
            throw Error(ErrorKind::parse, std::string("cohort file is missing the '") + required + "' column");
        }
    }
    const bool has_rcm = col.contains("age") || col.contains("age_menarche") || col.contains("parity") ||
                         col.contains("birth_ages") || col.contains("menopausal") ||
                         col.contains("age_menopause");
    if (has_rcm && (!col.contains("age") || !col.contains("age_menarche"))) {
        throw Error(ErrorKind::parse, "covariate columns require both 'age' and 'age_menarche'");
    }

    CohortData data;
    if (has_rcm) {
        data.covariates.emplace();
    }
    std::vector<std::string> problems;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        ++row;
        const std::string where = "row " + std::to_string(row) + " (line " + std::to_string(line_no) + "): ";
        const auto cells = split(line, ',');
        if (cells.size() != header.size()) {
            problems.push_back(where + "expected " + std::to_string(header.size()) + " fields, got " +
                               std::to_string(cells.size()));
            continue;
        }
        auto cell = [&](std::string_view name) -> std::string_view {
            auto it = col.find(name);
            return it == col.end() ? std::string_view{} : cells[it->second];
        };
        std::vector<std::string> row_errors;

        Subject s;
        if (auto z = detail::to_double(cell("z")); z && *z > 0.0) {
            s.z = *z;
        } else {
            row_errors.push_back("z must be a positive number, got '" + std::string(cell("z")) + "'");
        }
        if (auto d = detail::to_integer(cell("delta")); d && (*d == 0 || *d == 1)) {
            s.delta = static_cast<int>(*d);
        } else {
            row_errors.push_back("delta must be 0 or 1, got '" + std::string(cell("delta")) + "'");
        }

        RCMCovariates cov;
        if (has_rcm) {
            auto real = [&](std::string_view name, double& out) {
                if (auto v = detail::to_double(cell(name))) {
                    out = *v;
                } else {
                    row_errors.push_back(std::string(name) + " must be a number, got '" +
                                         std::string(cell(name)) + "'");
                }
            };
            real("age", cov.age);
            real("age_menarche", cov.age_menarche);
            if (!cell("menopausal").empty()) {
                auto m = detail::to_integer(cell("menopausal"));
                if (m && (*m == 0 || *m == 1)) {
                    cov.menopausal = *m == 1;
                } else {
                    row_errors.push_back("menopausal must be 0 or 1, got '" + std::string(cell("menopausal")) + "'");
                }
            }
            if (!cell("age_menopause").empty()) {
                double am = 0.0;
                real("age_menopause", am);
                cov.age_menopause = am;
            }
            if (!cell("birth_ages").empty()) {
                for (std::string_view b : split(cell("birth_ages"), ';')) {
                    if (auto v = detail::to_double(b)) {
                        cov.birth_ages.push_back(*v);
                    } else {
                        row_errors.push_back("bad birth age '" + std::string(b) + "'");
                    }
                }
            }
            if (!cell("parity").empty()) {
                auto p = detail::to_integer(cell("parity"));
                if (!p || *p < 0) {
                    row_errors.push_back("parity must be a nonnegative integer, got '" +
                                         std::string(cell("parity")) + "'");
                } else if (static_cast<std::size_t>(*p) != cov.birth_ages.size()) {
                    row_errors.push_back("parity " + std::to_string(*p) + " does not match " +
                                         std::to_string(cov.birth_ages.size()) + " birth ages");
                }
            }
            if (row_errors.empty()) {
                try {
                    validate(cov);
                } catch (const Error& err) {
                    row_errors.push_back(err.what());
                }
            }
        }

        if (!row_errors.empty()) {
            for (const std::string& e : row_errors) {
                problems.push_back(where + e);
            }
            continue;
        }
        data.subjects.push_back(s);
        if (has_rcm) {
            data.covariates->push_back(std::move(cov));
        }
    }

    if (!problems.empty()) {
        std::string msg = std::to_string(problems.size()) + " invalid cohort entr" +
                          (problems.size() == 1 ? "y" : "ies") + ":";
        for (const std::string& p : problems) {
            msg += "\n  " + p;
        }
        throw Error(ErrorKind::parse, msg);
    }
    if (data.subjects.empty()) {
        throw Error(ErrorKind::parse, "cohort file has no data rows");
    }
    return data;
}

// ---------------------------------------------------------------------------
// Calibration reports

inline nlohmann::json to_json(const EORatioEstimate& e) {
    return {{"method", std::string(to_string(e.method))},
            {"point", e.point},
            {"ci_low", e.ci_low},
            {"ci_high", e.ci_high},
            {"numerator", e.numerator},
            {"denominator", e.denominator},
            {"ci_degenerate", e.ci_degenerate}};
}

inline EORatioEstimate estimate_from_json(const nlohmann::json& j) {
    EORatioEstimate e;
    auto m = parse_method(j.at("method").get<std::string>());
    if (!m) {
        throw Error(ErrorKind::parse, "unknown method '" + j.at("method").get<std::string>() + "'");
    }
    e.method = *m;
    e.point = j.at("point").get<double>();
    e.ci_low = j.at("ci_low").get<double>();
    e.ci_high = j.at("ci_high").get<double>();
    e.numerator = j.at("numerator").get<double>();
    e.denominator = j.at("denominator").get<double>();
    e.ci_degenerate = j.at("ci_degenerate").get<bool>();
    return e;
}

inline nlohmann::json to_json(const CalibrationReport& r) {
    nlohmann::json j;
    j["t0"] = r.t0;
    j["n"] = r.n;
    j["n_ks"] = r.n_ks;
    j["n_uks"] = r.n_uks;
    j["o_ks"] = r.observed.o_ks;
    j["o_hat"] = r.observed.o_hat;
    j["expected"] = {{"e_full", r.sums.e_full}, {"e_ks", r.sums.e_ks}, {"e_uks", r.sums.e_uks},
                     {"e_m1", r.sums.e_m1},     {"e_m2", r.sums.e_m2}};
    j["km_incidence"] = r.km_incidence;
    j["km_greenwood_var"] = r.km_greenwood_var;
    j["km_degenerate"] = r.km_degenerate;
    j["f_ks"] = r.f_ks;
    j["c0_tilde"] = r.c0_tilde;
    j["c1"] = r.c1;
    j["estimates"] = nlohmann::json::array();
    for (const EORatioEstimate& e : r.estimates) {
        j["estimates"].push_back(to_json(e));
    }
    if (!r.groups.empty()) {
        j["groups"] = nlohmann::json::array();
        for (const GroupEstimate& g : r.groups) {
            nlohmann::json gj = {{"group", g.group},       {"n", g.n},
                                 {"n_ks", g.n_ks},         {"o_ks", g.o_ks},
                                 {"risk_low", g.risk_low}, {"risk_high", g.risk_high},
                                 {"note", g.note}};
            gj["m0"] = g.m0 ? to_json(*g.m0) : nlohmann::json();
            gj["m3"] = g.m3 ? to_json(*g.m3) : nlohmann::json();
            j["groups"].push_back(std::move(gj));
        }
    }
    return j;
}

inline CalibrationReport report_from_json(const nlohmann::json& j) {
    try {
        CalibrationReport r;
        r.t0 = j.at("t0").get<double>();
        r.n = j.at("n").get<std::size_t>();
        r.n_ks = j.at("n_ks").get<std::size_t>();
        r.n_uks = j.at("n_uks").get<std::size_t>();
        r.observed.o_ks = j.at("o_ks").get<std::size_t>();
        r.observed.o_m1 = r.observed.o_ks;
        r.observed.o_hat = j.at("o_hat").get<double>();
        const auto& ex = j.at("expected");
        r.sums = {ex.at("e_full").get<double>(), ex.at("e_ks").get<double>(), ex.at("e_uks").get<double>(),
                  ex.at("e_m1").get<double>(), ex.at("e_m2").get<double>()};
        r.km_incidence = j.at("km_incidence").get<double>();
        r.km_greenwood_var = j.at("km_greenwood_var").get<double>();
        r.km_degenerate = j.at("km_degenerate").get<bool>();
        r.f_ks = j.at("f_ks").get<double>();
        r.c0_tilde = j.at("c0_tilde").get<double>();
        r.c1 = j.at("c1").get<double>();
        for (const auto& e : j.at("estimates")) {
            r.estimates.push_back(estimate_from_json(e));
        }
        if (j.contains("groups")) {
            for (const auto& gj : j.at("groups")) {
                GroupEstimate g;
                g.group = gj.at("group").get<std::size_t>();
                g.n = gj.at("n").get<std::size_t>();
                g.n_ks = gj.at("n_ks").get<std::size_t>();
                g.o_ks = gj.at("o_ks").get<std::size_t>();
                g.risk_low = gj.at("risk_low").get<double>();
                g.risk_high = gj.at("risk_high").get<double>();
                g.note = gj.at("note").get<std::string>();
                if (!gj.at("m0").is_null()) g.m0 = estimate_from_json(gj.at("m0"));
                if (!gj.at("m3").is_null()) g.m3 = estimate_from_json(gj.at("m3"));
                r.groups.push_back(std::move(g));
            }
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse, std::string("malformed JSON report: ") + e.what());
    }
}

inline void write_report_json(std::ostream& out, const CalibrationReport& r) { out << to_json(r).dump(2) << '\n'; }

inline CalibrationReport read_report_json(std::istream& in) {
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse, std::string("malformed JSON report: ") + e.what());
    }
    return report_from_json(j);
}

inline constexpr std::string_view estimate_header = "method,point,ci_low,ci_high,numerator,denominator,ci_degenerate";
inline constexpr std::string_view group_header =
    "group,n,n_ks,o_ks,risk_low,risk_high,m0_point,m0_ci_low,m0_ci_high,m3_point,m3_ci_low,m3_ci_high,note";

/// CSV report: a quantity/value block, then one row per estimator, then
/// (for adjusted reports) one row per risk group. Blocks are separated by a
/// blank line. Values use 4 decimals; the Greenwood variance uses 4
/// significant decimals in scientific notation.
inline void write_report_csv(std::ostream& out, const CalibrationReport& r) {
    using detail::fixed4;
    out << "quantity,value\n";
    out << "t0," << fixed4(r.t0) << '\n';
    out << "n," << r.n << '\n';
    out << "n_ks," << r.n_ks << '\n';
    out << "n_uks," << r.n_uks << '\n';
    out << "o_ks," << r.observed.o_ks << '\n';
    out << "o_hat," << fixed4(r.observed.o_hat) << '\n';
    out << "e_full," << fixed4(r.sums.e_full) << '\n';
    out << "e_ks," << fixed4(r.sums.e_ks) << '\n';
    out << "e_uks," << fixed4(r.sums.e_uks) << '\n';
    out << "e_m1," << fixed4(r.sums.e_m1) << '\n';
    out << "e_m2," << fixed4(r.sums.e_m2) << '\n';
    out << "km_incidence," << fixed4(r.km_incidence) << '\n';
    out << "km_greenwood_var," << detail::sci4(r.km_greenwood_var) << '\n';
    out << "km_degenerate," << (r.km_degenerate ? 1 : 0) << '\n';
    out << "f_ks," << fixed4(r.f_ks) << '\n';
    out << "c0_tilde," << fixed4(r.c0_tilde) << '\n';
    out << "c1," << fixed4(r.c1) << '\n';
    out << '\n' << estimate_header << '\n';
    for (const EORatioEstimate& e : r.estimates) {
        out << to_string(e.method) << ',' << fixed4(e.point) << ',' << fixed4(e.ci_low) << ','
            << fixed4(e.ci_high) << ',' << fixed4(e.numerator) << ',' << fixed4(e.denominator) << ','
            << (e.ci_degenerate ? 1 : 0) << '\n';
    }
    if (!r.groups.empty()) {
        out << '\n' << group_header << '\n';
        auto triple = [&](const std::optional<EORatioEstimate>& e) {
            if (e) {
                out << fixed4(e->point) << ',' << fixed4(e->ci_low) << ',' << fixed4(e->ci_high);
            } else {
                out << ",,";
            }
        };
        for (const GroupEstimate& g : r.groups) {
            out << g.group << ',' << g.n << ',' << g.n_ks << ',' << g.o_ks << ',' << fixed4(g.risk_low) << ','
                << fixed4(g.risk_high) << ',';
            triple(g.m0);
            out << ',';
            triple(g.m3);
            std::string note = g.note;
            std::replace(note.begin(), note.end(), ',', ';');
            std::replace(note.begin(), note.end(), '\n', ' ');
            out << ',' << note << '\n';
        }
    }
}

inline CalibrationReport read_report_csv(std::istream& in) {
    using detail::split;
    std::vector<std::vector<std::string>> blocks(1);
    std::vector<std::vector<std::size_t>> block_lines(1);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) {
            if (!blocks.back().empty()) {
                blocks.emplace_back();
                block_lines.emplace_back();
            }
            continue;
        }
        blocks.back().push_back(line);
        block_lines.back().push_back(line_no);
    }
    if (blocks.back().empty()) {
        blocks.pop_back();
    }
    auto fail = [](std::size_t at, const std::string& msg) {
        throw Error(ErrorKind::parse, "report line " + std::to_string(at) + ": " + msg);
    };
    if (blocks.size() < 2 || blocks[0].empty() || blocks[0][0] != "quantity,value" ||
        blocks[1][0] != estimate_header) {
        throw Error(ErrorKind::parse, "not a calibration report CSV");
    }

    auto number = [&](std::string_view s, std::size_t at) {
        auto v = detail::to_double(s);
        if (!v) fail(at, "bad number '" + std::string(s) + "'");
        return *v;
    };
    auto count = [&](std::string_view s, std::size_t at) {
        auto v = detail::to_integer(s);
        if (!v || *v < 0) fail(at, "bad count '" + std::string(s) + "'");
        return static_cast<std::size_t>(*v);
    };

    CalibrationReport r;
    std::map<std::string, std::pair<std::string, std::size_t>, std::less<>> kv;
    for (std::size_t i = 1; i < blocks[0].size(); ++i) {
        const auto cells = split(blocks[0][i], ',');
        if (cells.size() != 2) fail(block_lines[0][i], "expected quantity,value");
        kv[std::string(cells[0])] = {std::string(cells[1]), block_lines[0][i]};
    }
    auto get = [&](const char* key) -> const std::pair<std::string, std::size_t>& {
        auto it = kv.find(key);
        if (it == kv.end()) throw Error(ErrorKind::parse, std::string("report is missing '") + key + "'");
        return it->second;
    };
    auto real = [&](const char* key) { const auto& [v, at] = get(key); return number(v, at); };
    auto cnt = [&](const char* key) { const auto& [v, at] = get(key); return count(v, at); };
    r.t0 = real("t0");
    r.n = cnt("n");
    r.n_ks = cnt("n_ks");
    r.n_uks = cnt("n_uks");
    r.observed.o_ks = cnt("o_ks");
    r.observed.o_m1 = r.observed.o_ks;
    r.observed.o_hat = real("o_hat");
    r.sums = {real("e_full"), real("e_ks"), real("e_uks"), real("e_m1"), real("e_m2")};
    r.km_incidence = real("km_incidence");
    r.km_greenwood_var = real("km_greenwood_var");
    r.km_degenerate = cnt("km_degenerate") != 0;
    r.f_ks = real("f_ks");
    r.c0_tilde = real("c0_tilde");
    r.c1 = real("c1");

    auto parse_estimate = [&](Method m, std::string_view p, std::string_view lo, std::string_view hi,
                              std::size_t at) {
        EORatioEstimate e;
        e.method = m;
        e.point = number(p, at);
        e.ci_low = number(lo, at);
        e.ci_high = number(hi, at);
        return e;
    };
    for (std::size_t i = 1; i < blocks[1].size(); ++i) {
        const std::size_t at = block_lines[1][i];
        const auto c = split(blocks[1][i], ',');
        if (c.size() != 7) fail(at, "expected 7 estimate fields");
        auto m = parse_method(c[0]);
        if (!m) fail(at, "unknown method '" + std::string(c[0]) + "'");
        EORatioEstimate e = parse_estimate(*m, c[1], c[2], c[3], at);
        e.numerator = number(c[4], at);
        e.denominator = number(c[5], at);
        e.ci_degenerate = count(c[6], at) != 0;
        r.estimates.push_back(e);
    }
    if (blocks.size() > 2) {
        if (blocks[2][0] != group_header) fail(block_lines[2][0], "unexpected block header");
        for (std::size_t i = 1; i < blocks[2].size(); ++i) {
            const std::size_t at = block_lines[2][i];
            const auto c = split(blocks[2][i], ',');
            if (c.size() != 13) fail(at, "expected 13 group fields");
            GroupEstimate g;
            g.group = count(c[0], at);
            g.n = count(c[1], at);
            g.n_ks = count(c[2], at);
            g.o_ks = count(c[3], at);
            g.risk_low = number(c[4], at);
            g.risk_high = number(c[5], at);
            if (!c[6].empty()) g.m0 = parse_estimate(Method::m0, c[6], c[7], c[8], at);
            if (!c[9].empty()) g.m3 = parse_estimate(Method::m3, c[9], c[10], c[11], at);
            g.note = std::string(c[12]);
            r.groups.push_back(std::move(g));
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Simulation summaries

inline void write_summary_csv(std::ostream& out, const std::vector<SimulationSummary>& rows) {
    using detail::fixed4;
    out << "lambda,target_rate,omega,n,t0,replicates,seed,unknown_rate,observed_cases";
    for (Method m : all_methods) {
        out << ',' << to_string(m) << "_mean," << to_string(m) << "_width," << to_string(m) << "_coverage";
    }
    out << ",c0_tilde,c1,true_fraction,excluded,valid\n";
    for (const SimulationSummary& s : rows) {
        const SimulationDesign& d = s.design;
        out << fixed4(d.lambda) << ',' << fixed4(d.target_rate) << ',' << (d.omega ? fixed4(*d.omega) : "none")
            << ',' << d.n << ',' << fixed4(d.t0) << ',' << d.replicates << ',' << d.seed << ','
            << fixed4(s.unknown_rate) << ',' << fixed4(s.mean_o_ks);
        for (Method m : all_methods) {
            const MethodSummary& ms = s.method(m);
            out << ',' << fixed4(ms.mean_point) << ',' << fixed4(ms.mean_width) << ',' << fixed4(ms.coverage);
        }
        out << ',' << fixed4(s.mean_c0_tilde) << ',' << fixed4(s.mean_c1) << ',' << fixed4(s.mean_true_fraction)
            << ',' << s.excluded << ',' << (s.valid ? 1 : 0) << '\n';
    }
}

/// Human-readable layouts: the per-method mean / width / coverage table
/// and the correction-term table, grouped by lambda.
inline void write_summary_tables(std::ostream& out, const std::vector<SimulationSummary>& rows) {
    char buf[256];
    out << "E/O estimates: mean, mean CI width, coverage of 1\n";
    std::snprintf(buf, sizeof buf, "%-6s %9s  %-19s  %-19s  %-19s  %-19s\n", "UKSI", "Observed", "M0", "M1", "M2",
                  "M3");
    out << buf;
    double last_lambda = -1.0;
    for (const SimulationSummary& s : rows) {
        if (s.design.lambda != last_lambda) {
            last_lambda = s.design.lambda;
            std::snprintf(buf, sizeof buf, "lambda = %g\n", last_lambda);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "%5.0f%% %9.0f", 100.0 * s.design.target_rate, s.mean_o_ks);
        out << buf;
        for (Method m : all_methods) {
            const MethodSummary& ms = s.method(m);
            std::snprintf(buf, sizeof buf, "  %5.3f %5.3f %5.3f", ms.mean_point, ms.mean_width, ms.coverage);
            out << buf;
        }
        out << '\n';
    }
    out << "\nCorrection terms: mean C0~ = F_ks/K_n, mean C1 = R2/R1\n";
    std::snprintf(buf, sizeof buf, "%-6s %8s %8s\n", "UKSI", "C0~", "C1");
    out << buf;
    last_lambda = -1.0;
    for (const SimulationSummary& s : rows) {
        if (s.design.lambda != last_lambda) {
            last_lambda = s.design.lambda;
            std::snprintf(buf, sizeof buf, "lambda = %g\n", last_lambda);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "%5.0f%% %8.3f %8.3f\n", 100.0 * s.design.target_rate, s.mean_c0_tilde,
                      s.mean_c1);
        out << buf;
    }
}

}  // namespace eocal::io
