#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <vector>

#include "agreement.hpp"
#include "assignment.hpp"
#include "error.hpp"
#include "match_model.hpp"
#include "table.hpp"

namespace linkcorr {

struct Cutoffs {
    double w_unmatched = 0.0;  // w_U
    double w_matched = 0.0;    // w_M
};

// FS weight for every candidate pair. Codes and model are retained when the
// weights come from an agreement matrix, for model-implied error rates.
struct ScoredPairSet {
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    std::vector<PairIndex> pairs;
    std::vector<double> weights;
    std::vector<std::uint64_t> codes;
    std::optional<MatchModel> model;
    std::optional<Cutoffs> cutoffs;

    std::size_t size() const noexcept { return pairs.size(); }

    // Dense weight matrix, every (a, b) a candidate.
    static ScoredPairSet from_matrix(const std::vector<std::vector<double>>& w) {
        ScoredPairSet s;
        s.n_a = w.size();
        s.n_b = w.empty() ? 0 : w.front().size();
        for (std::size_t a = 0; a < s.n_a; ++a) {
            if (w[a].size() != s.n_b) throw ValidationError("weight matrix rows must have equal length");
            for (std::size_t b = 0; b < s.n_b; ++b) {
                if (!std::isfinite(w[a][b])) throw ValidationError("weights must be finite");
                s.pairs.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)});
                s.weights.push_back(w[a][b]);
            }
        }
        return s;
    }
};

inline ScoredPairSet score_pairs(const AgreementMatrix& gamma, const MatchModel& model) {
    model.validate();
    if (model.num_fields() != gamma.num_fields())
        throw ValidationError("model and agreement matrix disagree on the number of linking fields");
    ScoredPairSet s;
    s.n_a = gamma.n_a();
    s.n_b = gamma.n_b();
    s.pairs = gamma.pairs();
    s.codes = gamma.codes();
    s.model = model;
    const WeightTable table(model);
    s.weights.reserve(gamma.rows());
    for (std::uint64_t c : gamma.codes()) s.weights.push_back(table(c));
    return s;
}

enum class PairClass : std::uint8_t { Matched, Undetermined, NonMatched };

struct Classification {
    Cutoffs cutoffs;
    std::vector<PairClass> classes;
    // Set when no pair of cut-offs meets both error bounds; every pair is then undetermined.
    bool infeasible = false;
};

namespace detail {

// Distinct weights of all 2^L patterns (L <= 20) or of the observed patterns,
// each with its probability under the match and non-match laws.
struct WeightMass {
    double weight;
    double m_mass;
    double u_mass;
};

inline std::vector<WeightMass> weight_masses(const ScoredPairSet& s) {
    const MatchModel& model = *s.model;
    const int L = model.num_fields();
    std::vector<std::uint64_t> codes;
    if (L <= 20) {
        codes.resize(std::size_t{1} << L);
        std::iota(codes.begin(), codes.end(), std::uint64_t{0});
    } else {
        codes = s.codes;
        std::sort(codes.begin(), codes.end());
        codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
    }
    std::vector<WeightMass> masses;
    masses.reserve(codes.size());
    for (std::uint64_t c : codes)
        masses.push_back({fs_weight(c, model), pattern_probability(c, model.m), pattern_probability(c, model.u)});
    std::sort(masses.begin(), masses.end(), [](const auto& x, const auto& y) { return x.weight > y.weight; });
    return masses;
}

} // namespace detail

// Cut-offs from the model-implied error rates: w_M is the smallest observed weight
// whose upper tail carries non-match probability <= mu, w_U the largest observed
// weight whose lower tail carries match probability <= lambda.
inline Classification classify_pairs(const ScoredPairSet& scored, double mu, double lambda) {
    if (!(mu > 0.0 && mu < 1.0) || !(lambda > 0.0 && lambda < 1.0))
        throw ValidationError("error-rate tolerances must lie in (0, 1)");
    if (!scored.model || scored.codes.size() != scored.size())
        throw ValidationError("classification needs pairs scored from an agreement matrix and model");
    if (scored.size() == 0) throw ValidationError("no candidate pairs to classify");

    const auto masses = detail::weight_masses(scored);
    std::vector<double> observed = scored.weights;
    std::sort(observed.begin(), observed.end(), std::greater<>());
    observed.erase(std::unique(observed.begin(), observed.end()), observed.end());

    auto fp_rate = [&](double t) {  // P(w >= t | U)
        double s = 0.0;
        for (const auto& wm : masses)
            if (wm.weight >= t) s += wm.u_mass;
        return s;
    };
    auto fn_rate = [&](double t) {  // P(w <= t | M)
        double s = 0.0;
        for (const auto& wm : masses)
            if (wm.weight <= t) s += wm.m_mass;
        return s;
    };

    std::optional<double> w_m;
    for (double t : observed) {  // descending: the last admissible is the smallest
        if (fp_rate(t) <= mu) w_m = t;
        else break;
    }
    std::optional<double> w_u;
    for (auto it = observed.rbegin(); it != observed.rend(); ++it) {
        if (fn_rate(*it) <= lambda) w_u = *it;
        else break;
    }

    Classification out;
    constexpr double inf = std::numeric_limits<double>::infinity();
    out.cutoffs.w_matched = w_m.value_or(inf);
    out.cutoffs.w_unmatched = w_u.value_or(-inf);
    if (out.cutoffs.w_unmatched > out.cutoffs.w_matched) {
        out.infeasible = true;
        out.cutoffs = {-inf, inf};
    }
    out.classes.reserve(scored.size());
    for (double w : scored.weights) {
        if (w >= out.cutoffs.w_matched) out.classes.push_back(PairClass::Matched);
        else if (w <= out.cutoffs.w_unmatched) out.classes.push_back(PairClass::NonMatched);
        else out.classes.push_back(PairClass::Undetermined);
    }
    return out;
}

struct LinkedPair {
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    double weight = 0.0;
};

// Integrated sample: linked pairs in (a, b) order plus the two source tables.
struct LinkedDataset {
    std::vector<LinkedPair> pairs;
    std::shared_ptr<const RecordTable> records_a;
    std::shared_ptr<const RecordTable> records_b;

    std::size_t size() const noexcept { return pairs.size(); }

    std::vector<PairIndex> pair_indices() const {
        std::vector<PairIndex> out;
        out.reserve(pairs.size());
        for (const auto& p : pairs) out.push_back({p.a, p.b});
        return out;
    }

    bool is_one_to_one() const {
        std::vector<std::uint32_t> as, bs;
        for (const auto& p : pairs) {
            as.push_back(p.a);
            bs.push_back(p.b);
        }
        std::sort(as.begin(), as.end());
        std::sort(bs.begin(), bs.end());
        return std::adjacent_find(as.begin(), as.end()) == as.end() &&
               std::adjacent_find(bs.begin(), bs.end()) == bs.end();
    }
};

inline void sort_pairs(std::vector<LinkedPair>& pairs) {
    std::sort(pairs.begin(), pairs.end(), [](const LinkedPair& x, const LinkedPair& y) {
        return x.a != y.a ? x.a < y.a : x.b < y.b;
    });
}

enum class LinkStrategy { Greedy, Optimal };

// Greedy visiting order: weight descending, then a, then b ascending.
inline std::vector<std::size_t> greedy_order(const ScoredPairSet& s) {
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (s.weights[x] != s.weights[y]) return s.weights[x] > s.weights[y];
        return s.pairs[x] < s.pairs[y];
    });
    return order;
}

// Selects n_links pairs with no record used twice on either side.
inline LinkedDataset link_one_to_one(const ScoredPairSet& scored, std::size_t n_links,
                                     LinkStrategy strategy = LinkStrategy::Greedy) {
    if (n_links > std::min(scored.n_a, scored.n_b))
        throw ValidationError("n_links = " + std::to_string(n_links) + " exceeds min(n_A, n_B)");
    LinkedDataset out;
    if (strategy == LinkStrategy::Greedy) {
        std::vector<char> used_a(scored.n_a, 0), used_b(scored.n_b, 0);
        for (std::size_t idx : greedy_order(scored)) {
            if (out.pairs.size() == n_links) break;
            const auto p = scored.pairs[idx];
            if (used_a[p.a] || used_b[p.b]) continue;
            used_a[p.a] = used_b[p.b] = 1;
            out.pairs.push_back({p.a, p.b, scored.weights[idx]});
        }
        if (out.pairs.size() < n_links)
            throw ValidationError("only " + std::to_string(out.pairs.size()) +
                                  " disjoint candidate pairs available for " + std::to_string(n_links) + " links");
    } else {
        std::vector<std::vector<std::optional<double>>> w(scored.n_a, std::vector<std::optional<double>>(scored.n_b));
        for (std::size_t r = 0; r < scored.size(); ++r) w[scored.pairs[r].a][scored.pairs[r].b] = scored.weights[r];
        const auto match = max_weight_matching(w, n_links);
        for (std::size_t a = 0; a < match.size(); ++a)
            if (match[a] >= 0)
                out.pairs.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(match[a]),
                                     *w[a][static_cast<std::size_t>(match[a])]});
    }
    sort_pairs(out.pairs);
    return out;
}

// Threshold rule: pairs at or above w_M, reduced to a 1-1 set greedily.
inline LinkedDataset link_matched(const ScoredPairSet& scored, const Classification& cls) {
    ScoredPairSet matched;
    matched.n_a = scored.n_a;
    matched.n_b = scored.n_b;
    for (std::size_t r = 0; r < scored.size(); ++r) {
        if (cls.classes[r] != PairClass::Matched) continue;
        matched.pairs.push_back(scored.pairs[r]);
        matched.weights.push_back(scored.weights[r]);
    }
    LinkedDataset out;
    std::vector<char> used_a(scored.n_a, 0), used_b(scored.n_b, 0);
    for (std::size_t idx : greedy_order(matched)) {
        const auto p = matched.pairs[idx];
        if (used_a[p.a] || used_b[p.b]) continue;
        used_a[p.a] = used_b[p.b] = 1;
        out.pairs.push_back({p.a, p.b, matched.weights[idx]});
    }
    sort_pairs(out.pairs);
    return out;
}

} // namespace linkcorr
