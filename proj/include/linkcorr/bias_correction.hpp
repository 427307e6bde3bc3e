#pragma once

// Iterated-bootstrap bias estimates and corrected estimators read off a ledger.
//
//   theta~(k) = sum_{j=0..k} (-1)^j C(k+1, j+1) mean(level j)
//   tau~(k)   = theta_hat - theta~(k)
//   delta(k)  = theta~(k) - theta~(k-1) = sum_j (-1)^j C(k, j) mean(level j)
//
// Level means are averages over all nodes of a level; with equal arities they
// equal the nested per-replicate averages.

#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "ledger.hpp"

namespace linkcorr {

struct CorrectedEstimate {
    int k = 0;
    std::vector<double> theta_tilde;
    std::vector<double> tau_tilde;
    std::vector<double> delta;
};

// Mean over the nodes of a level of (estimate - theta_hat). Zero exactly when
// every node reproduces theta_hat.
inline std::vector<double> level_deviation(const BootstrapLedger& ledger, int level) {
    const std::size_t p = ledger.dimension;
    std::vector<double> dev(p, 0.0);
    if (level == 0) return dev;
    if (level > ledger.depth()) throw ValidationError("ledger has no level " + std::to_string(level));
    const std::size_t n = ledger.count(level);
    if (n == 0) throw ValidationError("ledger level " + std::to_string(level) + " is empty");
    const auto& lv = ledger.levels[static_cast<std::size_t>(level - 1)];
    for (std::size_t node = 0; node < n; ++node)
        for (std::size_t i = 0; i < p; ++i) dev[i] += lv[node * p + i] - ledger.theta_hat[i];
    for (double& v : dev) v /= static_cast<double>(n);
    return dev;
}

inline std::vector<double> level_mean(const BootstrapLedger& ledger, int level) {
    auto mean = level_deviation(ledger, level);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += ledger.theta_hat[i];
    return mean;
}

inline std::vector<double> bias_estimate_level1(const BootstrapLedger& ledger) {
    if (ledger.depth() < 1 || ledger.replicates() == 0) throw ValidationError("ledger has no first-level replicates");
    return level_deviation(ledger, 1);
}

namespace detail {

// sum_j coeff[j] * mean(level j), accumulated as deviations from theta_hat.
inline std::vector<double> combine_levels(const BootstrapLedger& ledger, const std::vector<double>& coeff) {
    double total = 0.0;
    for (double c : coeff) total += c;
    std::vector<double> dev(ledger.dimension, 0.0);
    for (std::size_t j = 1; j < coeff.size(); ++j) {
        const auto d = level_deviation(ledger, static_cast<int>(j));
        for (std::size_t i = 0; i < dev.size(); ++i) dev[i] += coeff[j] * d[i];
    }
    std::vector<double> out(ledger.dimension);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = total * ledger.theta_hat[i] + dev[i];
    return out;
}

inline void check_order(const BootstrapLedger& ledger, int k, int min_k) {
    if (k < min_k) throw ValidationError("order must be at least " + std::to_string(min_k));
    if (k > ledger.depth())
        throw ValidationError("order " + std::to_string(k) + " exceeds ledger depth " + std::to_string(ledger.depth()));
}

} // namespace detail

inline CorrectedEstimate corrected_estimate(const BootstrapLedger& ledger, int k) {
    detail::check_order(ledger, k, 0);
    CorrectedEstimate out;
    out.k = k;
    out.theta_tilde = detail::combine_levels(ledger, corrected_coefficients(k));
    out.tau_tilde.resize(ledger.dimension);
    out.delta.resize(ledger.dimension);
    const std::vector<double> previous =
        k == 0 ? ledger.theta_hat : detail::combine_levels(ledger, corrected_coefficients(k - 1));
    for (std::size_t i = 0; i < ledger.dimension; ++i) {
        out.tau_tilde[i] = ledger.theta_hat[i] - out.theta_tilde[i];
        out.delta[i] = k == 0 ? 0.0 : out.theta_tilde[i] - previous[i];
    }
    return out;
}

// Mean of the retained per-replicate leaf terms.
inline std::vector<double> delta_k(const BootstrapLedger& ledger, int k) {
    detail::check_order(ledger, k, 1);
    const std::size_t p = ledger.dimension;
    const std::size_t B = ledger.replicates();
    const auto& terms = ledger.leaf_terms.at(static_cast<std::size_t>(k - 1));
    std::vector<double> mean(p, 0.0);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < p; ++i) mean[i] += terms[b * p + i];
    for (double& v : mean) v /= static_cast<double>(B);
    return mean;
}

// Per-replicate terms whose mean is theta~(k); B x p row-major.
inline std::vector<double> corrected_terms(const BootstrapLedger& ledger, int k) {
    detail::check_order(ledger, k, 0);
    return ledger.subtree_terms(corrected_coefficients(k));
}

} // namespace linkcorr
