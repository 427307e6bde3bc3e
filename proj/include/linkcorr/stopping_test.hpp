#pragma once

// Decides how far to iterate the bootstrap correction, parameter by parameter.
// For order k the change delta(k) is split into a sampling component V1 and a
// Monte Carlo component V2 / B; B is sized so V2 / (B V1) <= eta0^2, and the
// order is accepted (iteration stops) when the percentile interval of the
// studentized change contains zero. The reported estimate is theta~(k-1).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bias_correction.hpp"
#include "error.hpp"
#include "ledger.hpp"
#include "resampling.hpp"
#include "rng.hpp"

namespace linkcorr {

struct VarianceDecomposition {
    double total = 0.0;        // Var(delta) estimated across outer worlds
    double v2 = 0.0;           // Monte Carlo variance of one leaf term
    double v1 = 0.0;           // sampling variance of the bias change
    std::size_t b_used = 0;    // divisor applied to v2
    double eta_sq = 0.0;       // v2 / (b_used v1)
    bool degenerate = false;   // every delta identical: change indistinguishable from zero
};

// deltas holds outer x inner values for one parameter, row-major by outer index.
inline VarianceDecomposition estimate_variance_components(std::span<const double> deltas, std::size_t outer,
                                                          std::size_t inner) {
    if (outer < 2 || inner < 2) throw ValidationError("variance components need at least 2 x 2 nested deltas");
    if (deltas.size() != outer * inner) throw ValidationError("nested delta count does not match outer x inner");

    std::vector<double> means(outer, 0.0);
    double v2 = 0.0;
    for (std::size_t h = 0; h < outer; ++h) {
        const auto row = deltas.subspan(h * inner, inner);
        double s = 0.0;
        for (double d : row) s += d;
        const double mean = s / static_cast<double>(inner);
        double ss = 0.0;
        for (double d : row) ss += (d - mean) * (d - mean);
        means[h] = mean;
        v2 += ss / static_cast<double>(inner - 1);
    }
    v2 /= static_cast<double>(outer);
    double grand = 0.0;
    for (double m : means) grand += m;
    grand /= static_cast<double>(outer);
    double total = 0.0;
    for (double m : means) total += (m - grand) * (m - grand);
    total /= static_cast<double>(outer - 1);

    VarianceDecomposition vd;
    vd.total = total;
    vd.v2 = v2;
    vd.b_used = inner;
    if (!(total > 0.0)) {
        vd.degenerate = true;
        vd.v1 = 0.0;
        return vd;
    }
    vd.v1 = total - v2 / static_cast<double>(inner);
    if (!(vd.v1 > 0.0)) {
        // Raise the divisor until v1 is positive.
        vd.b_used = static_cast<std::size_t>(std::ceil(v2 / total)) + 1;
        vd.v1 = total - v2 / static_cast<double>(vd.b_used);
    }
    vd.eta_sq = vd.v2 / (static_cast<double>(vd.b_used) * vd.v1);
    return vd;
}

// Smallest B meeting the precision target, floored at the B that keeps v1 positive.
inline std::size_t choose_B(const VarianceDecomposition& vd, double eta0) {
    if (!(eta0 > 0.0 && eta0 < 1.0)) throw ValidationError("eta0 must lie in (0, 1)");
    if (vd.degenerate || !(vd.v1 > 0.0) || !(vd.total > 0.0))
        throw ValidationError("cannot size B from a degenerate variance decomposition");
    const double b_precision = std::ceil(vd.v2 / (eta0 * eta0 * vd.v1));
    const double b_floor = std::ceil(vd.v2 / vd.total) + 1.0;
    return static_cast<std::size_t>(std::max(b_precision, b_floor));
}

// Empirical quantile: rank q * n among the order statistics (1-based), linear
// interpolation between neighbouring ranks, clamped to the sample range.
inline double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw ValidationError("percentile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size());
    if (pos <= 1.0) return values.front();
    if (pos >= static_cast<double>(values.size())) return values.back();
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    const double a = values[lo - 1];
    return frac == 0.0 ? a : a + frac * (values[lo] - a);
}

struct CITestResult {
    int k = 0;
    std::size_t parameter = 0;
    double T = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool contains_zero = false;
    std::size_t B_used = 0;
    double q_lower = 0.0;
    double q_upper = 0.0;
};

inline constexpr std::size_t kMinTestReplicates = 40;

inline CITestResult ci_test(double delta, const VarianceDecomposition& vd, std::span<const double> replicates) {
    if (replicates.size() < kMinTestReplicates)
        throw ValidationError("CI test needs at least 40 replicates, got " + std::to_string(replicates.size()));
    if (!(vd.v1 > 0.0)) throw ValidationError("CI test needs a positive sampling variance v1");
    const double scale = std::sqrt(vd.v1);
    const std::vector<double> reps(replicates.begin(), replicates.end());
    CITestResult r;
    r.T = delta / scale;
    r.q_lower = percentile(reps, 0.025);
    r.q_upper = percentile(reps, 0.975);
    r.lower = delta + r.q_lower * scale;
    r.upper = delta + r.q_upper * scale;
    r.contains_zero = r.lower <= 0.0 && 0.0 <= r.upper;
    return r;
}

// Studentized replicates for one parameter: (replicate change - observed change) / sqrt(v1).
inline std::vector<double> studentize(std::span<const double> or_means, std::size_t dimension, std::size_t parameter,
                                      double delta, double v1) {
    const double scale = std::sqrt(v1);
    const std::size_t H = or_means.size() / dimension;
    std::vector<double> t(H);
    for (std::size_t h = 0; h < H; ++h) t[h] = (or_means[h * dimension + parameter] - delta) / scale;
    return t;
}

inline std::vector<double> column(std::span<const double> rows, std::size_t dimension, std::size_t parameter) {
    std::vector<double> out(rows.size() / dimension);
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = rows[r * dimension + parameter];
    return out;
}

struct OrderTrace {
    int k = 0;
    VarianceDecomposition variance;
    std::size_t B_chosen = 0;     // B_{i,k,max} from the sizing rule
    bool B_capped = false;        // sizing rule exceeded max_B
    std::size_t B_ledger = 0;     // replicates in the ledger evaluated at this order
    double delta = 0.0;
    std::optional<CITestResult> test;
    bool accepted = false;
};

struct ParameterReport {
    std::string name;
    double biased = 0.0;
    bool accepted = false;        // false: no detectable stop by the order cap
    int k = 0;                    // first accepted order, or the cap
    std::size_t B_max = 0;
    double delta = 0.0;
    std::pair<double, double> delta_interval{0.0, 0.0};
    int corrected_order = 0;      // k - 1 when accepted, the cap otherwise
    double corrected = 0.0;
    std::pair<double, double> corrected_interval{0.0, 0.0};
    std::vector<OrderTrace> trace;
};

struct CorrectionReport {
    std::vector<ParameterReport> parameters;
    std::vector<double> theta_hat;
    std::uint64_t seed = 0;
    BootstrapConfig config;
    std::size_t redraws = 0;
    bool all_accepted = true;
    double runtime_seconds = 0.0;
};

// Order-k evaluation of one parameter from a ledger and shared OR draws.
// Uses only column `i`, so results do not depend on which other parameters are active.
struct OrderEvaluation {
    double delta = 0.0;
    std::optional<CITestResult> test;
    bool accepted = false;
    std::pair<double, double> delta_interval{0.0, 0.0};
};

inline OrderEvaluation evaluate_order(const BootstrapLedger& ledger, int k, std::size_t i,
                                      const VarianceDecomposition& vd, std::span<const double> delta_or) {
    OrderEvaluation ev;
    ev.delta = delta_k(ledger, k)[i];
    if (vd.degenerate) {
        ev.accepted = true;
        const auto reps = column(delta_or, ledger.dimension, i);
        ev.delta_interval = {percentile(reps, 0.025), percentile(reps, 0.975)};
        return ev;
    }
    const auto t = studentize(delta_or, ledger.dimension, i, ev.delta, vd.v1);
    CITestResult r = ci_test(ev.delta, vd, t);
    r.k = k;
    r.parameter = i;
    r.B_used = ledger.replicates();
    ev.accepted = r.contains_zero;
    ev.delta_interval = {r.lower, r.upper};
    ev.test = r;
    return ev;
}

inline std::uint64_t or_seed(std::uint64_t master, int k) {
    return derive_seed(master, Stream::OrResample, {static_cast<std::uint64_t>(k)});
}

inline CorrectionReport run_correction_loop(const AmbisEngine& engine, const std::vector<std::string>& names,
                                            const BootstrapConfig& cfg) {
    cfg.validate(cfg.max_order);
    const auto start = std::chrono::steady_clock::now();
    const std::size_t p = engine.dimension();
    if (names.size() != p) throw ValidationError("parameter names do not match estimator dimension");

    CorrectionReport report;
    report.theta_hat = engine.theta_hat();
    report.seed = cfg.seed;
    report.config = cfg;
    report.parameters.resize(p);
    for (std::size_t i = 0; i < p; ++i) {
        report.parameters[i].name = names[i];
        report.parameters[i].biased = engine.theta_hat()[i];
    }
    std::vector<char> active(p, 1);

    for (int k = 1; k <= cfg.max_order; ++k) {
        if (std::none_of(active.begin(), active.end(), [](char a) { return a != 0; })) break;

        const auto nested = nested_deltas(engine, k, cfg.variance_outer, cfg.variance_inner, cfg.variance_inner_c,
                                          cfg.variance_inner_d, cfg.seed, cfg.threads);
        std::vector<VarianceDecomposition> vds(p);
        std::vector<OrderTrace> traces(p);
        std::size_t B_k = cfg.B;
        for (std::size_t i = 0; i < p; ++i) {
            if (!active[i]) continue;
            const auto col = column(nested, p, i);
            vds[i] = estimate_variance_components(col, cfg.variance_outer, cfg.variance_inner);
            traces[i].k = k;
            traces[i].variance = vds[i];
            if (!vds[i].degenerate) {
                std::size_t b = choose_B(vds[i], cfg.eta0);
                if (b > cfg.max_B) {
                    b = cfg.max_B;
                    traces[i].B_capped = true;
                }
                traces[i].B_chosen = b;
                B_k = std::max(B_k, b);
            } else {
                traces[i].B_chosen = cfg.B;
            }
        }

        auto arity = cfg.arities(k);
        arity[0] = B_k;
        const BootstrapLedger ledger = generate_ambis(engine, arity, cfg.seed, cfg.threads);
        report.redraws += ledger.redraws;

        const std::uint64_t s = or_seed(cfg.seed, k);
        const auto delta_or = or_resample(ledger.leaf_terms[static_cast<std::size_t>(k - 1)], p, cfg.H, s);
        const auto prev = corrected_estimate(ledger, k - 1).theta_tilde;
        const auto prev_or = or_resample(corrected_terms(ledger, k - 1), p, cfg.H, s);
        const auto curr = corrected_estimate(ledger, k).theta_tilde;
        const auto curr_or = or_resample(corrected_terms(ledger, k), p, cfg.H, s);

        for (std::size_t i = 0; i < p; ++i) {
            if (!active[i]) continue;
            const OrderEvaluation ev = evaluate_order(ledger, k, i, vds[i], delta_or);
            OrderTrace& tr = traces[i];
            tr.B_ledger = B_k;
            tr.delta = ev.delta;
            tr.test = ev.test;
            tr.accepted = ev.accepted;

            ParameterReport& pr = report.parameters[i];
            pr.trace.push_back(tr);
            pr.k = k;
            pr.B_max = tr.B_chosen;
            pr.delta = ev.delta;
            pr.delta_interval = ev.delta_interval;
            if (ev.accepted) {
                active[i] = 0;
                pr.accepted = true;
                pr.corrected_order = k - 1;
                pr.corrected = prev[i];
                const auto reps = column(prev_or, p, i);
                pr.corrected_interval = {percentile(reps, 0.025), percentile(reps, 0.975)};
            } else {
                pr.accepted = false;
                pr.corrected_order = k;
                pr.corrected = curr[i];
                const auto reps = column(curr_or, p, i);
                pr.corrected_interval = {percentile(reps, 0.025), percentile(reps, 0.975)};
            }
        }
    }
    for (const auto& pr : report.parameters) report.all_accepted = report.all_accepted && pr.accepted;
    report.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

} // namespace linkcorr
