#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include "linkcorr/linkcorr.hpp"

namespace linkcorr::testing {

// Full-product agreement matrix drawn from a two-class model; labels[r] marks true matches.
struct PlantedGamma {
    AgreementMatrix gamma;
    std::vector<char> labels;
};

inline PlantedGamma simulate_gamma(std::size_t n_a, std::size_t n_b, const MatchModel& model, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const int L = model.num_fields();
    PlantedGamma out;
    std::vector<std::uint64_t> codes(n_a * n_b, 0);
    out.labels.resize(codes.size());
    for (std::size_t r = 0; r < codes.size(); ++r) {
        const bool match = unif(rng) < model.prevalence;
        out.labels[r] = match;
        const auto& p = match ? model.m : model.u;
        for (int l = 0; l < L; ++l)
            if (unif(rng) < p[static_cast<std::size_t>(l)]) codes[r] |= std::uint64_t{1} << l;
    }
    out.gamma = AgreementMatrix::full(n_a, n_b, L, std::move(codes));
    return out;
}

// Ledger with arbitrary contents; leaf terms recomputed from the levels.
inline BootstrapLedger random_ledger(std::vector<std::size_t> arity, std::size_t p, Rng& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    BootstrapLedger l;
    l.dimension = p;
    l.arity = std::move(arity);
    l.theta_hat.resize(p);
    for (auto& v : l.theta_hat) v = 5.0 * z(rng);
    for (int j = 1; j <= l.depth(); ++j) {
        std::vector<double> lv(l.count(j) * p);
        for (auto& v : lv) v = 5.0 * z(rng) + 1.0;
        l.levels.push_back(std::move(lv));
    }
    l.compute_leaf_terms();
    return l;
}

// Hormone incorrect set as the observed linked sample, with the bundled estimator.
struct HormoneSetup {
    AgreementMatrix gamma;
    std::shared_ptr<const BoundEstimator> estimator;
    std::vector<std::string> names;
};

inline HormoneSetup hormone_setup() {
    HormoneSetup s;
    s.gamma = hormone::gamma();
    s.gamma.set_partition(hormone::incorrect_links());
    s.estimator = std::make_shared<const BoundEstimator>(hormone::estimator_spec(), *hormone::source_a(),
                                                         *hormone::source_b());
    s.names = s.estimator->names();
    return s;
}

inline AmbisEngine hormone_engine(const MatchModel& model = hormone::model(),
                                  LinkStrategy strategy = LinkStrategy::Greedy) {
    const HormoneSetup s = hormone_setup();
    auto est = s.estimator;
    return AmbisEngine(s.gamma, model, [est](std::span<const LinkedPair> pairs) { return (*est)(pairs); }, strategy);
}

// One-parameter ledger where every level adds the same bias beta plus
// independent noise: theta at a node = parent + beta + N(0, sd^2). The bias is
// removed exactly at order 1, so every change beyond order 1 is zero in expectation.
inline BootstrapLedger additive_ledger(std::vector<std::size_t> arity, double theta_hat, double beta, double sd,
                                       Rng& rng) {
    std::normal_distribution<double> z(0.0, sd);
    BootstrapLedger l;
    l.dimension = 1;
    l.arity = std::move(arity);
    l.theta_hat = {theta_hat};
    std::vector<double> parent{theta_hat};
    for (int j = 1; j <= l.depth(); ++j) {
        const std::size_t a = l.arity[static_cast<std::size_t>(j - 1)];
        std::vector<double> lv(parent.size() * a);
        for (std::size_t n = 0; n < lv.size(); ++n) lv[n] = parent[n / a] + beta + z(rng);
        l.levels.push_back(lv);
        parent = std::move(lv);
    }
    l.compute_leaf_terms();
    return l;
}

// One CI test at order k where the true change is zero. The nested run plants
// between-world variance v1 and leaf-term variance v2; the tested ledger uses
// the replicate count the loop would choose.
struct NullTrial {
    bool accepted = false;
    std::size_t B = 0;
    VarianceDecomposition vd;
};

inline NullTrial null_trial(int k, std::uint64_t seed, double v1 = 1.0, double sd = 5.0, double beta = 1.0) {
    const BootstrapConfig cfg;
    Rng rng(derive_seed(seed, Stream::Simulation, {static_cast<std::uint64_t>(k)}));
    const std::size_t C = 10;
    // Leaf-term variance of the additive ledger at order k.
    const double v2 = k == 1 ? sd * sd : sd * sd * (1.0 + 1.0 / static_cast<double>(C));
    std::normal_distribution<double> world(0.0, std::sqrt(v1)), leaf(0.0, std::sqrt(v2));
    std::vector<double> nested(cfg.variance_outer * cfg.variance_inner);
    for (std::size_t h = 0; h < cfg.variance_outer; ++h) {
        const double mu = world(rng);
        for (std::size_t b = 0; b < cfg.variance_inner; ++b) nested[h * cfg.variance_inner + b] = mu + leaf(rng);
    }
    NullTrial t;
    t.vd = estimate_variance_components(nested, cfg.variance_outer, cfg.variance_inner);
    t.B = std::max(cfg.B, std::min(choose_B(t.vd, cfg.eta0), cfg.max_B));
    std::vector<std::size_t> arity{t.B};
    if (k == 2) arity.push_back(C);
    const auto ledger = additive_ledger(arity, 3.0, k == 1 ? 0.0 : beta, sd, rng);
    const auto reps = or_resample(ledger.leaf_terms[static_cast<std::size_t>(k - 1)], 1, cfg.H, rng());
    t.accepted = evaluate_order(ledger, k, 0, t.vd, reps).accepted;
    return t;
}

inline double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

inline double sd(const std::vector<double>& v) { return std::sqrt(variance(v)); }

} // namespace linkcorr::testing
