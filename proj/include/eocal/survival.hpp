#pragma once

// Censoring-aware primitives: subject records, the known/unknown t0-status
// split, the product-limit (Kaplan-Meier) estimate of P(Y <= t) and its
// Greenwood variance.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eocal/error.hpp"

namespace eocal {

/// One observed follow-up record: z = min(Y, C), delta = 1{Y <= C}.
/// Predicted risks are attached by subject index (see calibration.hpp).
struct Subject {
    double z = 0.0;
    int delta = 0;
};

/// A nonempty sample of subjects evaluated at a fixed horizon t0.
///
/// Construction enforces z > 0 finite, delta in {0, 1} and t0 <= max z,
/// so every estimator downstream may assume these hold.
class Cohort {
  public:
    Cohort(std::vector<Subject> subjects, double t0) : subjects_(std::move(subjects)), t0_(t0) {
        if (subjects_.empty()) {
            throw Error(ErrorKind::validation, "cohort is empty");
        }
        if (!(t0_ > 0.0) || !std::isfinite(t0_)) {
            throw Error(ErrorKind::validation, "horizon t0 must be positive and finite");
        }
        for (std::size_t i = 0; i < subjects_.size(); ++i) {
            const Subject& s = subjects_[i];
            if (!(s.z > 0.0) || !std::isfinite(s.z)) {
                throw Error(ErrorKind::validation,
                            "subject " + std::to_string(i) + ": follow-up time must be positive and finite");
            }
            if (s.delta != 0 && s.delta != 1) {
                throw Error(ErrorKind::validation, "subject " + std::to_string(i) + ": delta must be 0 or 1");
            }
            max_z_ = std::max(max_z_, s.z);
        }
        if (t0_ > max_z_) {
            throw Error(ErrorKind::out_of_range, "horizon t0 = " + std::to_string(t0_) +
                                                     " exceeds the largest follow-up time " +
                                                     std::to_string(max_z_));
        }
    }

    std::span<const Subject> subjects() const noexcept { return subjects_; }
    const Subject& operator[](std::size_t i) const { return subjects_[i]; }
    std::size_t size() const noexcept { return subjects_.size(); }
    double t0() const noexcept { return t0_; }
    double max_z() const noexcept { return max_z_; }

  private:
    std::vector<Subject> subjects_;
    double t0_;
    double max_z_ = 0.0;
};

/// Known t0-status: case by t0 (delta = 1, z <= t0) or followed at least t0
/// (z >= t0). Unknown: censored before t0 (delta = 0, z < t0).
struct StatusPartition {
    std::vector<std::size_t> known;
    std::vector<std::size_t> unknown;

    std::size_t n_ks() const noexcept { return known.size(); }
    std::size_t n_uks() const noexcept { return unknown.size(); }
};

inline bool is_known_status(const Subject& s, double t0) noexcept {
    return (s.delta == 1 && s.z <= t0) || s.z >= t0;
}

/// Case observed by the horizon. Only known-status subjects can satisfy this.
inline bool is_case_by(const Subject& s, double t0) noexcept { return s.delta == 1 && s.z <= t0; }

inline StatusPartition classify_subjects(const Cohort& cohort) {
    StatusPartition p;
    p.known.reserve(cohort.size());
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        (is_known_status(cohort[i], cohort.t0()) ? p.known : p.unknown).push_back(i);
    }
    return p;
}

/// One distinct event time of the product-limit estimator.
struct KMStep {
    double time = 0.0;
    std::size_t at_risk = 0;
    std::size_t events = 0;

    friend bool operator==(const KMStep&, const KMStep&) = default;
};

struct GreenwoodVariance {
    double value = 0.0;
    /// Some event time had d = n (survival reached zero). The sum is then
    /// undefined; value is reported as 0, the limit of S^2 times the sum.
    bool degenerate = false;
};

/// Greenwood variance S(t)^2 * sum_{u <= t} d_u / (n_u (n_u - d_u)).
inline GreenwoodVariance greenwood_variance(std::span<const KMStep> path, double t) {
    double survival = 1.0;
    double sum = 0.0;
    GreenwoodVariance out;
    for (const KMStep& step : path) {
        if (step.time > t) {
            break;
        }
        const auto n = static_cast<double>(step.at_risk);
        const auto d = static_cast<double>(step.events);
        survival *= 1.0 - d / n;
        if (step.events >= step.at_risk) {
            out.degenerate = true;
            continue;
        }
        sum += d / (n * (n - d));
    }
    out.value = out.degenerate ? 0.0 : survival * survival * sum;
    return out;
}

/// Product-limit cumulative incidence at a horizon.
struct KMEstimate {
    double horizon = 0.0;
    double incidence = 0.0;
    double survival = 1.0;
    double greenwood_var = 0.0;
    bool greenwood_degenerate = false;
    std::vector<KMStep> at_risk_path;
};

/// Kaplan-Meier estimate of P(Y <= t). At tied times events are counted
/// before censorings, so a subject censored at u is still at risk at u.
inline KMEstimate kaplan_meier(const Cohort& cohort, double t) {
    if (!(t > 0.0) || t > cohort.max_z()) {
        throw Error(ErrorKind::out_of_range, "Kaplan-Meier horizon " + std::to_string(t) +
                                                 " is outside (0, " + std::to_string(cohort.max_z()) + "]");
    }

    // Only subjects leaving the risk set by t matter; everyone else is at
    // risk throughout [0, t].
    std::vector<std::pair<double, int>> early;
    for (const Subject& s : cohort.subjects()) {
        if (s.z <= t) {
            early.emplace_back(s.z, s.delta);
        }
    }
    std::sort(early.begin(), early.end());

    KMEstimate km;
    km.horizon = t;
    std::size_t removed = 0;
    double survival = 1.0;
    for (std::size_t i = 0; i < early.size();) {
        const double u = early[i].first;
        std::size_t events = 0;
        std::size_t j = i;
        for (; j < early.size() && early[j].first == u; ++j) {
            events += static_cast<std::size_t>(early[j].second);
        }
        if (events > 0) {
            const std::size_t at_risk = cohort.size() - removed;
            km.at_risk_path.push_back({u, at_risk, events});
            survival *= 1.0 - static_cast<double>(events) / static_cast<double>(at_risk);
        }
        removed += j - i;
        i = j;
    }

    km.survival = survival;
    km.incidence = 1.0 - survival;
    const GreenwoodVariance gv = greenwood_variance(km.at_risk_path, t);
    km.greenwood_var = gv.value;
    km.greenwood_degenerate = gv.degenerate;
    return km;
}

/// Empirical P(Y <= t0) on the known-status group: cases by t0 over n_ks.
inline double empirical_cdf_known(const StatusPartition& partition, const Cohort& cohort) {
    if (partition.n_ks() == 0) {
        throw Error(ErrorKind::validation, "empirical CDF undefined: no known-status subjects");
    }
    std::size_t cases = 0;
    for (std::size_t i : partition.known) {
        cases += is_case_by(cohort[i], cohort.t0()) ? 1 : 0;
    }
    return static_cast<double>(cases) / static_cast<double>(partition.n_ks());
}

}  // namespace eocal
