#pragma once

// Monte-Carlo study of the four E/O estimators: Y ~ U(0, lambda) event
// times, optional C ~ U(0, omega) censoring, a well calibrated uniform risk
// model, and per-design means, interval widths and coverage of the value 1.

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <istream>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "eocal/calibration.hpp"
#include "eocal/error.hpp"
#include "eocal/survival.hpp"

namespace eocal {

struct SimulationDesign {
    double lambda = 100.0;
    std::optional<double> omega;  // none: no censoring
    double target_rate = 0.0;     // requested unknown-status rate, for labelling
    std::size_t n = 20000;
    double t0 = 10.0;
    std::size_t replicates = 1000;
    std::uint64_t seed = 1;
};

inline void validate(const SimulationDesign& d) {
    if (!(d.t0 > 0.0) || !(d.lambda > d.t0)) {
        throw Error(ErrorKind::validation, "design requires 0 < t0 < lambda");
    }
    if (d.omega && !(*d.omega > 0.0)) {
        throw Error(ErrorKind::validation, "design requires omega > 0");
    }
    if (d.n == 0 || d.replicates == 0) {
        throw Error(ErrorKind::validation, "design requires n >= 1 and replicates >= 1");
    }
}

/// Censoring bound giving the requested unknown-status rate. With both
/// variables uniform and omega > t0,
///   P(C < min(Y, t0)) = (t0 - t0^2 / (2 lambda)) / omega.
inline double solve_omega(double lambda, double t0, double target_rate) {
    if (!(t0 > 0.0) || !(lambda > t0)) {
        throw Error(ErrorKind::validation, "solve_omega requires 0 < t0 < lambda");
    }
    const double mass = t0 - t0 * t0 / (2.0 * lambda);
    const double limit = mass / t0;  // = 1 - t0 / (2 lambda)
    if (!(target_rate > 0.0) || !(target_rate < limit)) {
        throw Error(ErrorKind::validation, "unknown-status rate must lie in (0, " + std::to_string(limit) +
                                               ") for lambda = " + std::to_string(lambda));
    }
    return mass / target_rate;
}

/// P(Y <= t0, Y <= C): the expected fraction of observed cases by t0.
inline double expected_case_fraction(double lambda, std::optional<double> omega, double t0) {
    if (!omega) {
        return t0 / lambda;
    }
    const double w = *omega;
    if (w >= t0) {
        return (t0 - t0 * t0 / (2.0 * w)) / lambda;
    }
    return (w / 2.0) / lambda;
}

/// Design with omega solved from the target rate (0 means uncensored).
inline SimulationDesign make_design(double lambda, double target_rate, std::size_t n, double t0,
                                    std::size_t replicates, std::uint64_t seed) {
    SimulationDesign d;
    d.lambda = lambda;
    d.target_rate = target_rate;
    d.n = n;
    d.t0 = t0;
    d.replicates = replicates;
    d.seed = seed;
    if (target_rate < 0.0) {
        throw Error(ErrorKind::validation, "unknown-status rate must be nonnegative");
    }
    if (target_rate > 0.0) {
        d.omega = solve_omega(lambda, t0, target_rate);
    }
    validate(d);
    return d;
}

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent stream for one replicate. It depends only on (seed, index),
/// so results do not depend on which thread runs the replicate.
inline std::mt19937_64 replicate_stream(std::uint64_t seed, std::uint64_t index) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
}

/// Uniform on the open interval (0, 1) with 53 random bits.
inline double open_unit(std::mt19937_64& rng) {
    return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

struct ReplicateResult {
    std::optional<CalibrationReport> report;  // empty for a degenerate replicate
    std::size_t true_cases = 0;               // #{Y_i <= t0}, known only in simulation
    std::size_t n_uks = 0;
    std::string failure;
};

inline std::vector<Subject> draw_cohort(const SimulationDesign& d, std::mt19937_64& rng,
                                        std::size_t* true_cases = nullptr) {
    std::vector<Subject> subjects(d.n);
    std::size_t cases = 0;
    for (Subject& s : subjects) {
        const double y = d.lambda * open_unit(rng);
        cases += y <= d.t0 ? 1 : 0;
        if (d.omega) {
            const double c = *d.omega * open_unit(rng);
            s.z = std::min(y, c);
            s.delta = y <= c ? 1 : 0;
        } else {
            s.z = y;
            s.delta = 1;
        }
    }
    if (true_cases != nullptr) {
        *true_cases = cases;
    }
    return subjects;
}

inline ReplicateResult run_replicate(const SimulationDesign& d, std::uint64_t index) {
    std::mt19937_64 rng = replicate_stream(d.seed, index);
    ReplicateResult out;
    std::vector<Subject> subjects = draw_cohort(d, rng, &out.true_cases);
    for (const Subject& s : subjects) {
        out.n_uks += is_known_status(s, d.t0) ? 0 : 1;
    }
    try {
        const Cohort cohort(std::move(subjects), d.t0);
        out.report = evaluate(cohort, bind_uniform(d.lambda));
    } catch (const Error& err) {
        if (err.kind() != ErrorKind::no_events && err.kind() != ErrorKind::out_of_range) {
            throw;
        }
        out.failure = err.what();
    }
    return out;
}

struct MethodSummary {
    double mean_point = 0.0;
    double mean_width = 0.0;
    double coverage = 0.0;  // fraction of intervals containing 1
};

struct SimulationSummary {
    SimulationDesign design;
    std::array<MethodSummary, 4> methods{};  // indexed by Method
    double mean_o_ks = 0.0;
    double mean_c0_tilde = 0.0;
    double mean_c1 = 0.0;
    double unknown_rate = 0.0;         // mean n_uks / n over all replicates
    double mean_true_fraction = 0.0;   // mean #{Y <= t0} / n
    double true_fraction_se = 0.0;     // Monte-Carlo s.e. of the above
    std::size_t used = 0;
    std::size_t excluded = 0;
    bool valid = true;  // false when more than 1% of replicates were degenerate

    const MethodSummary& method(Method m) const { return methods[static_cast<std::size_t>(m)]; }
};

/// Runs all replicates on `threads` workers (0: hardware concurrency) and
/// reduces them in replicate order, so the summary is bit-identical for
/// any thread count.
inline SimulationSummary run_design(const SimulationDesign& d, unsigned threads = 0) {
    validate(d);
    std::vector<ReplicateResult> results(d.replicates);
    if (threads == 0) {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, d.replicates));

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    auto work = [&] {
        try {
            for (std::size_t i = next++; i < d.replicates; i = next++) {
                results[i] = run_replicate(d, i);
            }
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) {
                error = std::current_exception();
            }
            next = d.replicates;
        }
    };
    if (threads <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back(work);
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }

    SimulationSummary s;
    s.design = d;
    double true_sum = 0.0;
    double true_sq = 0.0;
    const auto n = static_cast<double>(d.n);
    for (const ReplicateResult& r : results) {
        const double frac = static_cast<double>(r.true_cases) / n;
        true_sum += frac;
        true_sq += frac * frac;
        s.unknown_rate += static_cast<double>(r.n_uks) / n;
        if (!r.report) {
            ++s.excluded;
            continue;
        }
        ++s.used;
        const CalibrationReport& rep = *r.report;
        for (const EORatioEstimate& e : rep.estimates) {
            MethodSummary& m = s.methods[static_cast<std::size_t>(e.method)];
            m.mean_point += e.point;
            m.mean_width += e.width();
            m.coverage += e.covers(1.0) ? 1.0 : 0.0;
        }
        s.mean_o_ks += static_cast<double>(rep.observed.o_ks);
        s.mean_c0_tilde += rep.c0_tilde;
        s.mean_c1 += rep.c1;
    }

    const auto reps = static_cast<double>(d.replicates);
    s.unknown_rate /= reps;
    s.mean_true_fraction = true_sum / reps;
    if (d.replicates > 1) {
        const double var = (true_sq - reps * s.mean_true_fraction * s.mean_true_fraction) / (reps - 1.0);
        s.true_fraction_se = std::sqrt(std::max(var, 0.0) / reps);
    }
    if (s.used > 0) {
        const auto used = static_cast<double>(s.used);
        for (MethodSummary& m : s.methods) {
            m.mean_point /= used;
            m.mean_width /= used;
            m.coverage /= used;
        }
        s.mean_o_ks /= used;
        s.mean_c0_tilde /= used;
        s.mean_c1 /= used;
    }
    s.valid = s.used > 0 && static_cast<double>(s.excluded) <= 0.01 * reps;
    return s;
}

inline constexpr std::array<double, 3> grid_lambdas{100.0, 200.0, 400.0};
inline constexpr std::array<double, 4> grid_rates{0.0, 0.05, 0.10, 0.20};

/// The 3 x 4 grid: lambda in {100, 200, 400} by unknown-status rate in
/// {0, 5%, 10%, 20%}, t0 = 10.
inline std::vector<SimulationDesign> reference_grid_designs(std::uint64_t seed = 1, std::size_t replicates = 1000,
                                                        std::size_t n = 20000) {
    std::vector<SimulationDesign> out;
    std::uint64_t k = 0;
    for (double lambda : grid_lambdas) {
        for (double rate : grid_rates) {
            out.push_back(make_design(lambda, rate, n, 10.0, replicates, splitmix64(seed + k++)));
        }
    }
    return out;
}

inline std::vector<SimulationSummary> run_grid(const std::vector<SimulationDesign>& designs, unsigned threads = 0) {
    std::vector<SimulationSummary> out;
    out.reserve(designs.size());
    for (const SimulationDesign& d : designs) {
        out.push_back(run_design(d, threads));
    }
    return out;
}

inline std::vector<SimulationSummary> run_reference_grid(std::uint64_t seed = 1, std::size_t replicates = 1000,
                                                     unsigned threads = 0) {
    return run_grid(reference_grid_designs(seed, replicates), threads);
}

/// Design grid text: one design per line,
///   lambda, target_rate, n, t0, replicates, seed
/// separated by commas and/or whitespace. `#` starts a comment.
inline std::vector<SimulationDesign> parse_design_grid(std::istream& in) {
    std::vector<SimulationDesign> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream fields(line);
        std::vector<std::string> tok;
        for (std::string t; fields >> t;) {
            tok.push_back(t);
        }
        if (tok.empty()) {
            continue;
        }
        auto fail = [&](const std::string& msg) {
            throw Error(ErrorKind::parse, "grid line " + std::to_string(line_no) + ": " + msg);
        };
        if (tok.size() != 6) {
            fail("expected 6 fields (lambda, target_rate, n, t0, replicates, seed), got " +
                 std::to_string(tok.size()));
        }
        auto real = [&](const std::string& s, const char* name) {
            double v = 0.0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
                fail(std::string("bad ") + name + " '" + s + "'");
            }
            return v;
        };
        auto count = [&](const std::string& s, const char* name) {
            std::uint64_t v = 0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || p != s.data() + s.size()) {
                fail(std::string("bad ") + name + " '" + s + "'");
            }
            return v;
        };
        try {
            out.push_back(make_design(real(tok[0], "lambda"), real(tok[1], "target_rate"), count(tok[2], "n"),
                                      real(tok[3], "t0"), count(tok[4], "replicates"), count(tok[5], "seed")));
        } catch (const Error& err) {
            if (err.kind() == ErrorKind::parse) {
                throw;
            }
            fail(err.what());
        }
    }
    if (out.empty()) {
        throw Error(ErrorKind::parse, "grid file contains no designs");
    }
    return out;
}

}  // namespace eocal
