#pragma once

// EM for the two-class conditional-independence mixture over agreement patterns.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "agreement.hpp"
#include "error.hpp"
#include "match_model.hpp"

namespace linkcorr {

struct EmOptions {
    double tol = 1e-6;
    int max_iter = 1000;
};

struct EmResult {
    MatchModel model;
    bool converged = false;
    int iterations = 0;
    // Observed-data log-likelihood of the parameters entering each iteration,
    // followed by that of the returned model.
    std::vector<double> log_likelihood;
    bool monotone = true;
};

// Conventional starting point: m = 0.9, u = 0.1, prevalence = expected matches / pairs.
inline MatchModel default_em_init(int num_fields, std::size_t n_pairs, double expected_matches) {
    MatchModel init{std::vector<double>(num_fields, 0.9), std::vector<double>(num_fields, 0.1),
                    clamp_probability(expected_matches / static_cast<double>(n_pairs))};
    return init;
}

namespace detail {

struct PatternCount {
    std::uint64_t code;
    double count;
};

inline std::vector<PatternCount> tally_patterns(const AgreementMatrix& gamma) {
    std::map<std::uint64_t, double> counts;
    for (std::uint64_t c : gamma.codes()) counts[c] += 1.0;
    std::vector<PatternCount> out;
    out.reserve(counts.size());
    for (auto [c, n] : counts) out.push_back({c, n});
    return out;
}

inline double log_pattern_probability(std::uint64_t code, const std::vector<double>& p) {
    double s = 0.0;
    for (std::size_t l = 0; l < p.size(); ++l) s += ((code >> l) & 1U) ? std::log(p[l]) : std::log1p(-p[l]);
    return s;
}

} // namespace detail

inline EmResult estimate_match_model_em(const AgreementMatrix& gamma, const MatchModel& init,
                                        const EmOptions& options = {}) {
    if (!(options.tol > 0.0)) throw ValidationError("EM tolerance must be positive");
    if (options.max_iter < 1) throw ValidationError("EM needs at least one iteration");
    init.validate();
    const int L = init.num_fields();
    if (L != gamma.num_fields())
        throw ValidationError("initial model and agreement matrix disagree on the number of fields");
    for (int l = 0; l < L; ++l)
        if (!(init.m[l] > init.u[l]))
            throw ValidationError("EM initial values need m_l > u_l for every field");
    if (gamma.rows() == 0) throw ValidationError("agreement matrix is empty");

    const auto patterns = detail::tally_patterns(gamma);
    if (patterns.size() < 2) throw ValidationError("unidentifiable mixture: all agreement patterns are identical");
    const double total = static_cast<double>(gamma.rows());

    EmResult result;
    MatchModel cur = init.clamped();
    std::vector<double> posterior(patterns.size());

    // E-step; returns the observed-data log-likelihood of `cur`.
    auto expectation = [&](const MatchModel& model) {
        const double log_p = std::log(model.prevalence);
        const double log_q = std::log1p(-model.prevalence);
        double ll = 0.0;
        for (std::size_t g = 0; g < patterns.size(); ++g) {
            const double a = log_p + detail::log_pattern_probability(patterns[g].code, model.m);
            const double b = log_q + detail::log_pattern_probability(patterns[g].code, model.u);
            const double hi = std::max(a, b);
            const double log_mix = hi + std::log(std::exp(a - hi) + std::exp(b - hi));
            posterior[g] = std::exp(a - log_mix);
            ll += patterns[g].count * log_mix;
        }
        return ll;
    };

    for (int it = 0; it < options.max_iter; ++it) {
        const double ll = expectation(cur);
        result.log_likelihood.push_back(ll);

        MatchModel next{std::vector<double>(L, 0.0), std::vector<double>(L, 0.0), 0.0};
        double match_mass = 0.0;
        for (std::size_t g = 0; g < patterns.size(); ++g) {
            const double wm = patterns[g].count * posterior[g];
            const double wu = patterns[g].count * (1.0 - posterior[g]);
            match_mass += wm;
            for (int l = 0; l < L; ++l) {
                if ((patterns[g].code >> l) & 1U) {
                    next.m[l] += wm;
                    next.u[l] += wu;
                }
            }
        }
        const double nonmatch_mass = total - match_mass;
        for (int l = 0; l < L; ++l) {
            next.m[l] = match_mass > 0 ? next.m[l] / match_mass : cur.m[l];
            next.u[l] = nonmatch_mass > 0 ? next.u[l] / nonmatch_mass : cur.u[l];
        }
        next.prevalence = match_mass / total;
        next = next.clamped();

        double change = std::abs(next.prevalence - cur.prevalence);
        for (int l = 0; l < L; ++l)
            change = std::max({change, std::abs(next.m[l] - cur.m[l]), std::abs(next.u[l] - cur.u[l])});
        cur = std::move(next);
        result.iterations = it + 1;
        if (change < options.tol) {
            result.converged = true;
            break;
        }
    }
    result.log_likelihood.push_back(expectation(cur));
    for (std::size_t i = 1; i < result.log_likelihood.size(); ++i) {
        const double prev = result.log_likelihood[i - 1];
        if (result.log_likelihood[i] < prev - 1e-9 * std::max(1.0, std::abs(prev))) result.monotone = false;
    }
    result.model = std::move(cur);
    return result;
}

} // namespace linkcorr
