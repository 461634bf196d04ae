#pragma once

// Expected/observed (E/O) calibration ratios under right censoring.
//
//   M0  E over known-status subjects / cases among them
//   M1  sum e_i(min(t0, z_i)) / cases
//   M2  known-status e_i(t0) plus unknown-status e_i(z_i), over cases
//   M3  E over everyone / (n * Kaplan-Meier incidence at t0)
//
// M0 and M1 are biased whenever subjects drop out before t0. M2 and M3
// are the corrected estimators; only M3 is known to be asymptotically
// unbiased. M0-M2 carry the Poisson log-scale interval, M3 the delta-method
// interval built on the Greenwood variance.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "eocal/error.hpp"
#include "eocal/risk_models.hpp"
#include "eocal/survival.hpp"

namespace eocal {

enum class Method { m0, m1, m2, m3 };

inline constexpr std::array<Method, 4> all_methods{Method::m0, Method::m1, Method::m2, Method::m3};

inline constexpr double z_975 = 1.96;

inline std::string_view to_string(Method m) {
    switch (m) {
    case Method::m0: return "m0";
    case Method::m1: return "m1";
    case Method::m2: return "m2";
    case Method::m3: return "m3";
    }
    return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
    for (Method m : all_methods) {
        if (s == to_string(m)) {
            return m;
        }
    }
    return std::nullopt;
}

/// e_i(t) for subject i. Models are bound to per-subject covariates with
/// bind_model; the uniform model needs no covariates.
template <class F>
concept SubjectRisk = std::invocable<const F&, std::size_t, double> &&
                      std::convertible_to<std::invoke_result_t<const F&, std::size_t, double>, double>;

template <class Model, class Covariates>
    requires RiskModel<Model, Covariates>
auto bind_model(const Model& model, std::span<const Covariates> covariates) {
    return [&model, covariates](std::size_t i, double t) { return model.risk(covariates[i], t); };
}

inline auto bind_uniform(double lambda) {
    return [lambda](std::size_t, double t) { return uniform_risk(lambda, t); };
}

struct ExpectedSums {
    double e_full = 0.0;  // sum e_i(t0)
    double e_ks = 0.0;    // known-status part of e_full
    double e_uks = 0.0;   // unknown-status part of e_full
    double e_m1 = 0.0;    // sum e_i(min(t0, z_i))
    double e_m2 = 0.0;    // sum_ks e_i(t0) + sum_uks e_i(z_i)
};

/// Observed counts. The true O over the full sample is unobservable and
/// has no field here.
struct ObservedCounts {
    std::size_t o_ks = 0;  // cases by t0, all of them known-status
    std::size_t o_m1 = 0;  // O_1 = o_ks since unknown-status subjects contribute no case
    double o_hat = 0.0;    // n * K_n(t0)
};

struct ConfidenceInterval {
    double low = 0.0;
    double high = 0.0;
    bool degenerate = false;
};

struct EORatioEstimate {
    Method method = Method::m0;
    double point = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double numerator = 0.0;
    double denominator = 0.0;
    bool ci_degenerate = false;

    double width() const noexcept { return ci_high - ci_low; }
    bool covers(double value) const noexcept { return ci_low <= value && value <= ci_high; }
};

namespace detail {

template <class F>
double checked_risk(const F& risk, std::size_t i, double t) {
    double e = 0.0;
    try {
        e = static_cast<double>(risk(i, t));
    } catch (const Error& err) {
        throw Error(err.kind(), "subject " + std::to_string(i) + ": " + err.what());
    }
    if (!(e >= 0.0 && e <= 1.0)) {
        throw Error(ErrorKind::validation,
                    "subject " + std::to_string(i) + ": risk " + std::to_string(e) + " outside [0, 1]");
    }
    return e;
}

}  // namespace detail

template <SubjectRisk F>
ExpectedSums expected_sums(const Cohort& cohort, const StatusPartition& partition, const F& risk) {
    const double t0 = cohort.t0();
    ExpectedSums s;
    for (std::size_t i : partition.known) {
        const Subject& subj = cohort[i];
        const double at_t0 = detail::checked_risk(risk, i, t0);
        s.e_ks += at_t0;
        s.e_m2 += at_t0;
        s.e_m1 += subj.z < t0 ? detail::checked_risk(risk, i, subj.z) : at_t0;
    }
    for (std::size_t i : partition.unknown) {
        const Subject& subj = cohort[i];
        const double at_t0 = detail::checked_risk(risk, i, t0);
        const double at_z = detail::checked_risk(risk, i, subj.z);
        s.e_uks += at_t0;
        s.e_m1 += at_z;
        s.e_m2 += at_z;
    }
    s.e_full = s.e_ks + s.e_uks;
    return s;
}

inline ObservedCounts observed_counts(const Cohort& cohort, const StatusPartition& partition,
                                      const KMEstimate& km) {
    ObservedCounts o;
    for (std::size_t i : partition.known) {
        o.o_ks += is_case_by(cohort[i], cohort.t0()) ? 1 : 0;
    }
    o.o_m1 = o.o_ks;
    o.o_hat = static_cast<double>(cohort.size()) * km.incidence;
    return o;
}

/// point * exp(+-1.96 / sqrt(O)).
inline ConfidenceInterval ci_poisson(double point, std::size_t o_ks) {
    if (o_ks == 0) {
        throw Error(ErrorKind::no_events, "Poisson interval undefined with zero observed cases");
    }
    const double half = z_975 / std::sqrt(static_cast<double>(o_ks));
    return {point * std::exp(-half), point * std::exp(half), false};
}

/// point * exp(+-1.96 sigma / K) with sigma^2 the Greenwood variance. A
/// degenerate Greenwood sum collapses the interval onto the point and is
/// flagged.
inline ConfidenceInterval ci_delta_km(double point, const KMEstimate& km) {
    if (!(km.incidence > 0.0)) {
        throw Error(ErrorKind::no_events, "delta-method interval undefined: Kaplan-Meier incidence is zero");
    }
    if (km.greenwood_degenerate) {
        return {point, point, true};
    }
    const double half = z_975 * std::sqrt(km.greenwood_var) / km.incidence;
    return {point * std::exp(-half), point * std::exp(half), false};
}

namespace detail {

inline EORatioEstimate poisson_ratio(Method method, double expected, std::size_t o_ks) {
    if (o_ks == 0) {
        throw Error(ErrorKind::no_events,
                    std::string("estimator ") + std::string(to_string(method)) + ": no observed cases by t0");
    }
    const double point = expected / static_cast<double>(o_ks);
    const ConfidenceInterval ci = ci_poisson(point, o_ks);
    return {method, point, ci.low, ci.high, expected, static_cast<double>(o_ks), false};
}

}  // namespace detail

inline EORatioEstimate estimate_m0(double e_ks, std::size_t o_ks) {
    return detail::poisson_ratio(Method::m0, e_ks, o_ks);
}

inline EORatioEstimate estimate_m1(double e_m1, std::size_t o_ks) {
    return detail::poisson_ratio(Method::m1, e_m1, o_ks);
}

inline EORatioEstimate estimate_m2(double e_m2, std::size_t o_ks) {
    return detail::poisson_ratio(Method::m2, e_m2, o_ks);
}

inline EORatioEstimate estimate_m3(double e_full, const KMEstimate& km, std::size_t n) {
    if (!(km.incidence > 0.0)) {
        throw Error(ErrorKind::no_events, "estimator m3: Kaplan-Meier incidence at t0 is zero");
    }
    const double o_hat = static_cast<double>(n) * km.incidence;
    const double point = e_full / o_hat;
    const ConfidenceInterval ci = ci_delta_km(point, km);
    return {Method::m3, point, ci.low, ci.high, e_full, o_hat, ci.degenerate};
}

/// F_ks(t0) / K_n(t0); approximates R3 / R0 when censoring is independent
/// of the covariates.
inline double correction_c0_tilde(double f_ks, double km_incidence) {
    if (!(km_incidence > 0.0)) {
        throw Error(ErrorKind::no_events, "C0 undefined: Kaplan-Meier incidence at t0 is zero");
    }
    return f_ks / km_incidence;
}

/// R2 / R1 >= 1.
inline double correction_c1(const EORatioEstimate& r2, const EORatioEstimate& r1) {
    if (!(r1.point > 0.0)) {
        throw Error(ErrorKind::validation, "C1 undefined: R1 is not positive");
    }
    return r2.point / r1.point;
}

/// Per-group M0/M3 estimates when calibration is adjusted for deciles of
/// predicted t0-year risk. A group whose estimator is undefined keeps an
/// empty optional and a note.
struct GroupEstimate {
    std::size_t group = 0;
    std::size_t n = 0;
    std::size_t n_ks = 0;
    std::size_t o_ks = 0;
    double risk_low = 0.0;
    double risk_high = 0.0;
    std::optional<EORatioEstimate> m0;
    std::optional<EORatioEstimate> m3;
    std::string note;
};

struct CalibrationReport {
    double t0 = 0.0;
    std::size_t n = 0;
    std::size_t n_ks = 0;
    std::size_t n_uks = 0;
    ExpectedSums sums;
    ObservedCounts observed;
    double km_incidence = 0.0;
    double km_greenwood_var = 0.0;
    bool km_degenerate = false;
    double f_ks = 0.0;
    double c0_tilde = 0.0;
    double c1 = 0.0;
    std::vector<EORatioEstimate> estimates;  // in Method order
    std::vector<GroupEstimate> groups;

    const EORatioEstimate* find(Method m) const {
        auto it = std::find_if(estimates.begin(), estimates.end(),
                               [m](const EORatioEstimate& e) { return e.method == m; });
        return it == estimates.end() ? nullptr : &*it;
    }

    const EORatioEstimate& estimate(Method m) const {
        if (const auto* e = find(m)) {
            return *e;
        }
        throw Error(ErrorKind::validation, "report has no estimate for " + std::string(to_string(m)));
    }
};

/// All four estimators, both correction terms and the partition counts.
template <SubjectRisk F>
CalibrationReport evaluate(const Cohort& cohort, const F& risk) {
    const StatusPartition partition = classify_subjects(cohort);
    const KMEstimate km = kaplan_meier(cohort, cohort.t0());

    CalibrationReport r;
    r.t0 = cohort.t0();
    r.n = cohort.size();
    r.n_ks = partition.n_ks();
    r.n_uks = partition.n_uks();
    r.sums = expected_sums(cohort, partition, risk);
    r.observed = observed_counts(cohort, partition, km);
    r.km_incidence = km.incidence;
    r.km_greenwood_var = km.greenwood_var;
    r.km_degenerate = km.greenwood_degenerate;
    r.f_ks = empirical_cdf_known(partition, cohort);

    if (r.observed.o_ks == 0) {
        throw Error(ErrorKind::no_events, "no cases observed by t0 = " + std::to_string(r.t0) +
                                              "; every E/O ratio is undefined");
    }
    r.estimates = {
        estimate_m0(r.sums.e_ks, r.observed.o_ks),
        estimate_m1(r.sums.e_m1, r.observed.o_ks),
        estimate_m2(r.sums.e_m2, r.observed.o_ks),
        estimate_m3(r.sums.e_full, km, r.n),
    };
    r.c0_tilde = correction_c0_tilde(r.f_ks, r.km_incidence);
    r.c1 = correction_c1(r.estimates[2], r.estimates[1]);
    return r;
}

/// Calibration adjusted for quantile groups of predicted t0-year risk.
/// Only M0 and M3 are allowed: M1 and M2 mix t0-year and z_i-year risks,
/// which makes the risk quantiles meaningless.
template <SubjectRisk F>
std::vector<GroupEstimate> evaluate_grouped(const Cohort& cohort, const F& risk, std::span<const Method> methods,
                                            std::size_t group_count = 10) {
    for (Method m : methods) {
        if (m == Method::m1 || m == Method::m2) {
            throw Error(ErrorKind::validation, "grouped calibration supports m0 and m3 only; got " +
                                                   std::string(to_string(m)));
        }
    }
    if (group_count == 0) {
        throw Error(ErrorKind::validation, "group count must be positive");
    }
    const bool want_m0 = std::find(methods.begin(), methods.end(), Method::m0) != methods.end();
    const bool want_m3 = std::find(methods.begin(), methods.end(), Method::m3) != methods.end();

    const std::size_t n = cohort.size();
    std::vector<double> at_t0(n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        at_t0[i] = detail::checked_risk(risk, i, cohort.t0());
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return at_t0[a] < at_t0[b]; });

    std::vector<std::vector<std::size_t>> members(group_count);
    for (std::size_t rank = 0; rank < n; ++rank) {
        members[rank * group_count / n].push_back(order[rank]);
    }

    std::vector<GroupEstimate> out;
    for (std::size_t g = 0; g < group_count; ++g) {
        if (members[g].empty()) {
            continue;
        }
        GroupEstimate ge;
        ge.group = g + 1;
        ge.n = members[g].size();
        ge.risk_low = at_t0[members[g].front()];
        ge.risk_high = at_t0[members[g].back()];
        std::vector<Subject> subjects;
        subjects.reserve(ge.n);
        double e_full = 0.0;
        double e_ks = 0.0;
        for (std::size_t i : members[g]) {
            const Subject& s = cohort[i];
            subjects.push_back(s);
            e_full += at_t0[i];
            if (is_known_status(s, cohort.t0())) {
                ++ge.n_ks;
                e_ks += at_t0[i];
                ge.o_ks += is_case_by(s, cohort.t0()) ? 1 : 0;
            }
        }
        try {
            if (want_m0) {
                ge.m0 = estimate_m0(e_ks, ge.o_ks);
            }
            if (want_m3) {
                const Cohort sub(std::move(subjects), cohort.t0());
                ge.m3 = estimate_m3(e_full, kaplan_meier(sub, sub.t0()), sub.size());
            }
        } catch (const Error& err) {
            ge.note = err.what();
        }
        out.push_back(std::move(ge));
    }
    return out;
}

}  // namespace eocal
