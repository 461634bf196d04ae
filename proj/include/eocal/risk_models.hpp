#pragma once

// Risk models e_i(t): the uniform toy model P(Y <= t) = t / lambda and the
// first Rosner-Colditz reproductive-factor model, projected to t-year risk
// by summing yearly incidence rates.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eocal/error.hpp"

namespace eocal {

/// A model maps (covariates, horizon in years) to a risk in [0, 1] that is
/// zero at t = 0 and nondecreasing in t.
template <class Model, class Covariates>
concept RiskModel = requires(const Model& m, const Covariates& c, double t) {
    { m.risk(c, t) } -> std::convertible_to<double>;
};

inline double uniform_risk(double lambda, double t) {
    if (!(lambda > 0.0)) {
        throw Error(ErrorKind::validation, "uniform model: lambda must be positive");
    }
    if (!(t >= 0.0)) {
        throw Error(ErrorKind::validation, "uniform model: horizon must be nonnegative");
    }
    return std::min(t / lambda, 1.0);
}

/// Y ~ U(0, lambda); the same risk for every subject, so covariates are ignored.
struct UniformModel {
    double lambda = 100.0;

    template <class Covariates>
    double risk(const Covariates&, double t) const {
        return uniform_risk(lambda, t);
    }
};

/// Reproductive history at baseline. Ages in years.
struct RCMCovariates {
    double age = 0.0;           // current (baseline) age a
    double age_menarche = 0.0;  // a0
    bool menopausal = false;    // m at baseline
    std::optional<double> age_menopause;  // a_m; may lie in the future
    std::vector<double> birth_ages;       // a_1 <= ... <= a_s

    std::size_t parity() const noexcept { return birth_ages.size(); }
};

struct RCMCoefficients {
    double alpha = -9.687;
    double beta0 = 0.048;     // age at menarche
    double beta1 = 0.081;     // min(age, age at menopause) - age at menarche
    double beta2 = 0.050;     // age - age at menopause, menopausal women
    double beta3 = 0.013;     // age at first birth - age at menarche
    double beta4 = -0.0036;   // birth index
    double beta5 = -0.00020;  // birth index x (age - age at menopause), menopausal women

    // Standard errors of the published fit. Informational only.
    std::array<double, 7> standard_errors{0.265, 0.016, 0.004, 0.005, 0.004, 0.0009, 0.00012};

    friend bool operator==(const RCMCoefficients&, const RCMCoefficients&) = default;
};

inline void validate(const RCMCovariates& cov) {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::validation, "RCM covariates: " + msg); };
    if (!std::isfinite(cov.age) || !std::isfinite(cov.age_menarche) || cov.age_menarche <= 0.0) {
        fail("ages must be positive and finite");
    }
    if (cov.age < cov.age_menarche) {
        fail("current age precedes age at menarche");
    }
    if (cov.menopausal && !cov.age_menopause) {
        fail("menopausal subject without an age at menopause");
    }
    if (cov.age_menopause) {
        if (!(*cov.age_menopause > cov.age_menarche)) {
            fail("age at menopause must exceed age at menarche");
        }
        if (cov.menopausal && cov.age < *cov.age_menopause) {
            fail("menopausal subject younger than the age at menopause");
        }
        if (!cov.menopausal && cov.age >= *cov.age_menopause) {
            fail("premenopausal subject older than the age at menopause");
        }
    }
    for (std::size_t i = 0; i < cov.birth_ages.size(); ++i) {
        if (!(cov.birth_ages[i] >= cov.age_menarche) || !std::isfinite(cov.birth_ages[i])) {
            fail("birth before menarche");
        }
        if (i > 0 && cov.birth_ages[i] < cov.birth_ages[i - 1]) {
            fail("birth ages must be nondecreasing");
        }
    }
    if (!cov.birth_ages.empty() && !(cov.birth_ages.front() > cov.age_menarche)) {
        fail("age at first birth must exceed age at menarche");
    }
}

/// a* = min(a, a_m); a_m only caps once it is reached.
inline double capped_age(const RCMCovariates& cov, double age) {
    return cov.age_menopause ? std::min(age, *cov.age_menopause) : age;
}

inline bool menopausal_at(const RCMCovariates& cov, double age) {
    return cov.menopausal || (cov.age_menopause && age >= *cov.age_menopause);
}

/// b = sum_i (a* - a_i) 1{a_i <= a*}.
inline double birth_index(const RCMCovariates& cov, double age) {
    const double a_star = capped_age(cov, age);
    double b = 0.0;
    for (double ai : cov.birth_ages) {
        if (ai <= a_star) {
            b += a_star - ai;
        }
    }
    return b;
}

/// log I_a at an arbitrary age, with a*, b and m recomputed at that age.
inline double rcm_log_incidence_at(const RCMCovariates& cov, const RCMCoefficients& coef, double age) {
    const double a0 = cov.age_menarche;
    const double a_star = capped_age(cov, age);
    const double b = birth_index(cov, age);
    const bool m = menopausal_at(cov, age);
    if (m && !cov.age_menopause) {
        throw Error(ErrorKind::validation, "RCM covariates: menopausal subject without an age at menopause");
    }
    const double since_menopause = m ? age - *cov.age_menopause : 0.0;

    double log_rate = coef.alpha + coef.beta0 * a0 + coef.beta1 * (a_star - a0);
    log_rate += coef.beta2 * since_menopause;
    if (cov.parity() >= 1) {
        log_rate += coef.beta3 * (cov.birth_ages.front() - a0);
    }
    log_rate += coef.beta4 * b + coef.beta5 * b * since_menopause;
    return log_rate;
}

inline double rcm_log_incidence(const RCMCovariates& cov, const RCMCoefficients& coef) {
    validate(cov);
    return rcm_log_incidence_at(cov, coef, cov.age);
}

/// 1 - exp(-(r_1 + ... + r_floor(t) + f r_{floor(t)+1})) where f is the
/// fractional part of t. rates[j] is the rate of year j + 1.
inline double risk_from_yearly_rates(std::span<const double> rates, double t) {
    if (!(t >= 0.0)) {
        throw Error(ErrorKind::validation, "risk horizon must be nonnegative");
    }
    const double whole = std::floor(t);
    const double frac = t - whole;
    const auto n_whole = static_cast<std::size_t>(whole);
    const std::size_t needed = n_whole + (frac > 0.0 ? 1 : 0);
    if (rates.size() < needed) {
        throw Error(ErrorKind::validation, "not enough yearly rates for the requested horizon");
    }
    double cumulative = 0.0;
    for (std::size_t j = 0; j < n_whole; ++j) {
        cumulative += rates[j];
    }
    if (frac > 0.0) {
        cumulative += frac * rates[n_whole];
    }
    return -std::expm1(-cumulative);
}

/// Yearly rates r_j = exp(log I) at ages baseline + j - 1, j = 1..years.
inline std::vector<double> rcm_yearly_rates(const RCMCovariates& cov, const RCMCoefficients& coef,
                                            std::size_t years) {
    validate(cov);
    std::vector<double> rates(years);
    for (std::size_t j = 0; j < years; ++j) {
        rates[j] = std::exp(rcm_log_incidence_at(cov, coef, cov.age + static_cast<double>(j)));
    }
    return rates;
}

/// t-year risk from the baseline covariates. The final partial year is
/// pro-rated linearly so the risk is continuous in t.
inline double t_year_risk(const RCMCovariates& cov, const RCMCoefficients& coef, double t) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
        throw Error(ErrorKind::validation, "risk horizon must be nonnegative and finite");
    }
    const auto years = static_cast<std::size_t>(std::ceil(t));
    const std::vector<double> rates = rcm_yearly_rates(cov, coef, years);
    return risk_from_yearly_rates(rates, t);
}

struct RCMModel {
    RCMCoefficients coefficients;

    double risk(const RCMCovariates& cov, double t) const { return t_year_risk(cov, coefficients, t); }
};

/// Reads a flat key/value coefficient file. Lines look like `beta1 = 0.081`
/// or `beta1 0.081`; `#` starts a comment. Keys not listed keep their
/// published defaults.
inline RCMCoefficients parse_rcm_coefficients(std::istream& in) {
    RCMCoefficients coef;
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw Error(ErrorKind::parse, "coefficient file line " + std::to_string(line_no) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        std::replace(line.begin(), line.end(), '=', ' ');
        std::replace(line.begin(), line.end(), ':', ' ');
        std::string_view view(line);
        auto skip_ws = [&] {
            while (!view.empty() && std::isspace(static_cast<unsigned char>(view.front()))) {
                view.remove_prefix(1);
            }
        };
        skip_ws();
        if (view.empty()) {
            continue;
        }
        std::size_t key_end = 0;
        while (key_end < view.size() && !std::isspace(static_cast<unsigned char>(view[key_end]))) {
            ++key_end;
        }
        const std::string key(view.substr(0, key_end));
        view.remove_prefix(key_end);
        skip_ws();
        while (!view.empty() && std::isspace(static_cast<unsigned char>(view.back()))) {
            view.remove_suffix(1);
        }
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(view.data(), view.data() + view.size(), value);
        if (view.empty() || ec != std::errc() || ptr != view.data() + view.size() || !std::isfinite(value)) {
            fail("expected a number after '" + key + "'");
        }
        if (key == "alpha") coef.alpha = value;
        else if (key == "beta0") coef.beta0 = value;
        else if (key == "beta1") coef.beta1 = value;
        else if (key == "beta2") coef.beta2 = value;
        else if (key == "beta3") coef.beta3 = value;
        else if (key == "beta4") coef.beta4 = value;
        else if (key == "beta5") coef.beta5 = value;
        else fail("unknown coefficient '" + key + "'");
    }
    return coef;
}

}  // namespace eocal
