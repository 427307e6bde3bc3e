#pragma once

// Nested tree of bootstrap estimates. Level 0 is the estimate on the linked
// sample itself; level j holds one p-vector per node of depth j, stored
// row-major by the node path (b, c, d, ...). Every node at level j has
// arity[j] children, so subtree means weight all leaves equally.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace linkcorr {

inline double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// Weights on the level means that give the order-k corrected estimate
// (binomial coefficients with alternating signs).
inline std::vector<double> corrected_coefficients(int k) {
    std::vector<double> c(k + 1);
    for (int j = 0; j <= k; ++j) c[j] = (j % 2 ? -1.0 : 1.0) * binomial(k + 1, j + 1);
    return c;
}

// Weights giving the change from order k-1 to order k.
inline std::vector<double> delta_coefficients(int k) {
    std::vector<double> c(k + 1);
    for (int j = 0; j <= k; ++j) c[j] = (j % 2 ? -1.0 : 1.0) * binomial(k, j);
    return c;
}

struct BootstrapLedger {
    std::size_t dimension = 0;          // p
    std::vector<std::size_t> arity;     // arity[0] = B, arity[1] = C, arity[2] = D
    std::vector<double> theta_hat;      // p
    std::vector<std::vector<double>> levels;      // levels[j-1]: count(j) * p
    std::vector<std::vector<double>> leaf_terms;  // leaf_terms[k-1]: B * p
    std::uint64_t seed = 0;
    std::size_t redraws = 0;            // replicates redrawn after estimator failure

    int depth() const noexcept { return static_cast<int>(arity.size()); }
    std::size_t replicates() const noexcept { return arity.empty() ? 0 : arity.front(); }

    std::size_t count(int level) const {
        std::size_t n = 1;
        for (int j = 0; j < level; ++j) n *= arity.at(static_cast<std::size_t>(j));
        return n;
    }

    std::span<const double> estimate(int level, std::size_t index) const {
        if (level == 0) return theta_hat;
        const auto& lv = levels.at(static_cast<std::size_t>(level - 1));
        return std::span<const double>(lv).subspan(index * dimension, dimension);
    }

    std::span<const double> leaf_term(int k, std::size_t b) const {
        return std::span<const double>(leaf_terms.at(static_cast<std::size_t>(k - 1))).subspan(b * dimension, dimension);
    }

    // Nodes of `level` below first-level replicate b.
    std::size_t nodes_per_replicate(int level) const { return level == 0 ? 1 : count(level) / arity.front(); }

    // Per-replicate sum_j coeff[j] * (mean over b's subtree at level j); level 0 is
    // theta_hat. Accumulated as deviations from theta_hat, so replicates that
    // reproduce theta_hat give exact terms.
    std::vector<double> subtree_terms(std::span<const double> coeff) const {
        const int k = static_cast<int>(coeff.size()) - 1;
        if (k > depth()) throw ValidationError("ledger depth " + std::to_string(depth()) + " is below order " + std::to_string(k));
        double total = 0.0;
        for (double c : coeff) total += c;
        const std::size_t B = replicates();
        std::vector<double> out(B * dimension, 0.0);
        for (std::size_t b = 0; b < B; ++b) {
            double* dst = out.data() + b * dimension;
            for (int j = 1; j <= k; ++j) {
                const std::size_t per = nodes_per_replicate(j);
                const double* src = levels[static_cast<std::size_t>(j - 1)].data() + b * per * dimension;
                for (std::size_t i = 0; i < dimension; ++i) {
                    double s = 0.0;
                    for (std::size_t n = 0; n < per; ++n) s += src[n * dimension + i] - theta_hat[i];
                    dst[i] += coeff[static_cast<std::size_t>(j)] * (s / static_cast<double>(per));
                }
            }
            for (std::size_t i = 0; i < dimension; ++i) dst[i] += total * theta_hat[i];
        }
        return out;
    }

    void compute_leaf_terms() {
        leaf_terms.clear();
        for (int k = 1; k <= depth(); ++k) leaf_terms.push_back(subtree_terms(delta_coefficients(k)));
    }
};

} // namespace linkcorr
