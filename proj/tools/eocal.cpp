// eocal: E/O calibration of t0-year risk models on right-censored cohorts.
//
//   eocal evaluate cohort.csv --t0 10 --model uniform:100 [--methods m0,m3]
//                  [--groups deciles] [--format csv|json] [--out report.csv]
//   eocal simulate --paper-grid [--seed 1] [--replicates 1000] [--format csv|table]
//   eocal simulate --grid designs.txt
//   eocal km cohort.csv --t0 10
//
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eocal/eocal.hpp"

namespace {

constexpr int exit_validation = 1;
constexpr int exit_io = 2;

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw eocal::Error(eocal::ErrorKind::io, "cannot open '" + path + "' for reading");
    }
    return in;
}

/// Writes to `path`, or to stdout when the path is empty or "-".
void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text) || !out.flush()) {
        throw eocal::Error(eocal::ErrorKind::io, "cannot write '" + path + "'");
    }
}

std::vector<eocal::Method> parse_methods(const std::string& spec) {
    std::vector<eocal::Method> out;
    std::stringstream ss(spec);
    for (std::string tok; std::getline(ss, tok, ',');) {
        auto m = eocal::parse_method(tok);
        if (!m) {
            throw eocal::Error(eocal::ErrorKind::validation, "unknown method '" + tok + "' (use m0,m1,m2,m3)");
        }
        if (std::find(out.begin(), out.end(), *m) == out.end()) {
            out.push_back(*m);
        }
    }
    if (out.empty()) {
        throw eocal::Error(eocal::ErrorKind::validation, "no methods selected");
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct EvaluateOptions {
    std::string cohort_path;
    double t0 = 0.0;
    std::string model = "uniform:100";
    std::string methods;
    std::string groups;
    std::string format = "csv";
    std::string out;
};

int run_evaluate(const EvaluateOptions& opt) {
    auto in = open_input(opt.cohort_path);
    eocal::io::CohortData data = eocal::io::read_cohort_csv(in);
    const std::size_t n = data.subjects.size();
    const eocal::Cohort cohort(std::move(data.subjects), opt.t0);

    const bool grouped = !opt.groups.empty();
    if (grouped && opt.groups != "deciles") {
        throw eocal::Error(eocal::ErrorKind::validation, "unsupported grouping '" + opt.groups + "' (use deciles)");
    }
    const std::vector<eocal::Method> methods =
        parse_methods(!opt.methods.empty() ? opt.methods : (grouped ? "m0,m3" : "m0,m1,m2,m3"));

    auto run = [&](const auto& risk) {
        eocal::CalibrationReport report = eocal::evaluate(cohort, risk);
        std::erase_if(report.estimates, [&](const eocal::EORatioEstimate& e) {
            return std::find(methods.begin(), methods.end(), e.method) == methods.end();
        });
        if (grouped) {
            report.groups = eocal::evaluate_grouped(cohort, risk, methods);
        }
        return report;
    };

    eocal::CalibrationReport report;
    if (opt.model.rfind("uniform:", 0) == 0) {
        auto lambda = eocal::io::detail::to_double(std::string_view(opt.model).substr(8));
        if (!lambda || !(*lambda > 0.0)) {
            throw eocal::Error(eocal::ErrorKind::validation, "bad uniform model '" + opt.model + "'");
        }
        report = run(eocal::bind_uniform(*lambda));
    } else if (opt.model == "rcm" || opt.model.rfind("rcm:", 0) == 0) {
        if (!data.covariates) {
            throw eocal::Error(eocal::ErrorKind::validation,
                               "model rcm needs the age, age_menarche, ... covariate columns");
        }
        eocal::RCMModel model;
        if (opt.model.size() > 4) {
            auto coef_in = open_input(opt.model.substr(4));
            model.coefficients = eocal::parse_rcm_coefficients(coef_in);
        }
        const std::vector<eocal::RCMCovariates>& cov = *data.covariates;
        report = run(eocal::bind_model(model, std::span<const eocal::RCMCovariates>(cov.data(), n)));
    } else {
        throw eocal::Error(eocal::ErrorKind::validation,
                           "unknown model '" + opt.model + "' (use uniform:<lambda>, rcm or rcm:<file>)");
    }

    std::ostringstream text;
    if (opt.format == "json") {
        eocal::io::write_report_json(text, report);
    } else {
        eocal::io::write_report_csv(text, report);
    }
    emit(opt.out, text.str());
    return 0;
}

struct SimulateOptions {
    bool builtin_grid = false;
    std::string grid_path;
    std::uint64_t seed = 1;
    std::optional<std::size_t> replicates;
    unsigned threads = 0;
    std::string format = "csv";
    std::string out;
};

int run_simulate(const SimulateOptions& opt) {
    std::vector<eocal::SimulationDesign> designs;
    if (opt.builtin_grid) {
        designs = eocal::reference_grid_designs(opt.seed, opt.replicates.value_or(1000));
    } else {
        auto in = open_input(opt.grid_path);
        designs = eocal::parse_design_grid(in);
        if (opt.replicates) {
            for (auto& d : designs) {
                d.replicates = *opt.replicates;
            }
        }
    }
    const std::vector<eocal::SimulationSummary> rows = eocal::run_grid(designs, opt.threads);
    std::ostringstream text;
    if (opt.format == "table") {
        eocal::io::write_summary_tables(text, rows);
    } else {
        eocal::io::write_summary_csv(text, rows);
    }
    emit(opt.out, text.str());
    return 0;
}

struct KmOptions {
    std::string cohort_path;
    double t0 = 0.0;
    std::string format = "csv";
    std::string out;
};

int run_km(const KmOptions& opt) {
    auto in = open_input(opt.cohort_path);
    eocal::io::CohortData data = eocal::io::read_cohort_csv(in);
    const eocal::Cohort cohort(std::move(data.subjects), opt.t0);
    const eocal::KMEstimate km = eocal::kaplan_meier(cohort, opt.t0);
    const double se = std::sqrt(km.greenwood_var);

    std::ostringstream text;
    if (opt.format == "json") {
        nlohmann::json j = {{"t0", km.horizon},
                            {"incidence", km.incidence},
                            {"survival", km.survival},
                            {"greenwood_var", km.greenwood_var},
                            {"greenwood_se", se},
                            {"greenwood_degenerate", km.greenwood_degenerate}};
        text << j.dump(2) << '\n';
    } else {
        using eocal::io::detail::fixed4;
        text << "t0,incidence,survival,greenwood_se,greenwood_degenerate\n"
             << fixed4(km.horizon) << ',' << fixed4(km.incidence) << ',' << fixed4(km.survival) << ','
             << fixed4(se) << ',' << (km.greenwood_degenerate ? 1 : 0) << '\n';
    }
    emit(opt.out, text.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"E/O calibration of t0-year disease risk models on right-censored cohorts"};
    app.require_subcommand(1);
    const std::vector<std::string> formats{"csv", "json"};

    EvaluateOptions ev;
    auto* evaluate = app.add_subcommand("evaluate", "E/O ratios M0-M3 with confidence intervals");
    evaluate->add_option("cohort", ev.cohort_path, "cohort CSV (columns z, delta, optional RCM covariates)")
        ->required();
    evaluate->add_option("--t0", ev.t0, "horizon in years")->required()->check(CLI::PositiveNumber);
    evaluate->add_option("--model", ev.model, "uniform:<lambda> | rcm | rcm:<coefficient file>")
        ->capture_default_str();
    evaluate->add_option("--methods", ev.methods, "comma-separated subset of m0,m1,m2,m3");
    evaluate->add_option("--groups", ev.groups, "adjusted calibration by risk groups (deciles)");
    evaluate->add_option("--format", ev.format, "csv or json")->check(CLI::IsMember(formats))->capture_default_str();
    evaluate->add_option("--out", ev.out, "output path (default stdout)");

    SimulateOptions sim;
    std::size_t replicates = 0;
    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo comparison of the four estimators");
    auto* builtin = simulate->add_flag("--paper-grid", sim.builtin_grid, "built-in 12-design grid");
    auto* grid = simulate->add_option("--grid", sim.grid_path, "design file: lambda,target_rate,n,t0,replicates,seed");
    builtin->excludes(grid);
    simulate->add_option("--seed", sim.seed, "base seed for --paper-grid")->capture_default_str();
    auto* reps = simulate->add_option("--replicates", replicates, "override replicate count")
                     ->check(CLI::PositiveNumber);
    simulate->add_option("--threads", sim.threads, "worker threads (0 = all cores)")->capture_default_str();
    simulate->add_option("--format", sim.format, "csv or table")
        ->check(CLI::IsMember({"csv", "table"}))
        ->capture_default_str();
    simulate->add_option("--out", sim.out, "output path (default stdout)");

    KmOptions kmo;
    auto* km = app.add_subcommand("km", "Kaplan-Meier incidence and Greenwood s.e. at a horizon");
    km->add_option("cohort", kmo.cohort_path, "cohort CSV")->required();
    km->add_option("--t0", kmo.t0, "horizon in years")->required()->check(CLI::PositiveNumber);
    km->add_option("--format", kmo.format, "csv or json")->check(CLI::IsMember(formats))->capture_default_str();
    km->add_option("--out", kmo.out, "output path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_validation;
    }

    try {
        if (evaluate->parsed()) {
            return run_evaluate(ev);
        }
        if (simulate->parsed()) {
            if (!sim.builtin_grid && sim.grid_path.empty()) {
                throw eocal::Error(eocal::ErrorKind::validation, "simulate needs --paper-grid or --grid <file>");
            }
            if (reps->count() > 0) {
                sim.replicates = replicates;
            }
            return run_simulate(sim);
        }
        return run_km(kmo);
    } catch (const eocal::Error& e) {
        std::cerr << "eocal: " << eocal::to_string(e.kind()) << ": " << e.what() << '\n';
        return e.kind() == eocal::ErrorKind::io ? exit_io : exit_validation;
    } catch (const std::exception& e) {
        std::cerr << "eocal: " << e.what() << '\n';
        return exit_validation;
    }
}
