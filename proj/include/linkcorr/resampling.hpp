#pragma once

// Parametric bootstrap of the agreement matrix and relinking into bootstrap
// integrated samples. Linked-block rows are redrawn entrywise from Bern(m_l),
// unlinked-block rows from Bern(u_l); the model is never re-estimated.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "agreement.hpp"
#include "error.hpp"
#include "ledger.hpp"
#include "linking.hpp"
#include "match_model.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace linkcorr {

struct BootstrapConfig {
    std::size_t B = 100;
    std::size_t C = 100;
    std::size_t D = 100;
    std::size_t H = 2000;
    double eta0 = 0.5;
    std::uint64_t seed = 0;

    // Nested run behind the variance components: outer worlds x inner replicates,
    // with C and D replaced by the smaller inner arities below.
    std::size_t variance_outer = 100;
    std::size_t variance_inner = 100;
    std::size_t variance_inner_c = 5;
    std::size_t variance_inner_d = 5;

    int max_order = 3;
    std::size_t max_B = 1000;
    unsigned threads = 1;

    void validate(int depth = 1) const {
        if (depth < 1 || depth > 4) throw ValidationError("bootstrap depth must be in 1..4");
        if (B < 1 || (depth >= 2 && C < 1) || (depth >= 3 && D < 1))
            throw ValidationError("B, C and D must be at least 1");
        if (H < 100) throw ValidationError("H must be at least 100");
        if (!(eta0 > 0.0 && eta0 < 1.0)) throw ValidationError("eta0 must lie in (0, 1)");
        if (variance_outer < 2 || variance_inner < 2)
            throw ValidationError("variance run needs at least 2 outer and 2 inner replicates");
        if (variance_inner_c < 1 || variance_inner_d < 1) throw ValidationError("variance inner arities must be >= 1");
        if (max_order < 1 || max_order > 3) throw ValidationError("max_order must be in 1..3");
        if (max_B < B) throw ValidationError("max_B must be at least B");
    }

    std::vector<std::size_t> arities(int depth) const {
        std::vector<std::size_t> a{B, C, D, D};
        a.resize(static_cast<std::size_t>(depth));
        return a;
    }
};

// Estimator handle: pure function of a canonical (a, b)-sorted pair list.
using PairEstimator = std::function<std::vector<double>(std::span<const LinkedPair>)>;

// Redraws every row of a partitioned agreement matrix. Deterministic in the seed.
inline AgreementMatrix resample_agreement_matrix(const AgreementMatrix& gamma, const MatchModel& model,
                                                 std::uint64_t seed);

// A relinked replicate: its linked rows (ascending) and the estimate on them.
struct Replicate {
    std::vector<std::uint32_t> rows;
    std::vector<double> theta;
};

namespace detail {

// Draws whole agreement patterns from the product Bernoulli laws. With few
// linking fields each row costs one 32-bit uniform through an alias table over
// all 2^L patterns (top L bits pick a bucket, the rest decide bucket vs alias);
// otherwise each entry costs one uniform against its Bernoulli threshold.
class PatternSampler {
public:
    static constexpr int kMaxTableFields = 8;

    explicit PatternSampler(const MatchModel& model) : L_(model.num_fields()) {
        if (L_ <= kMaxTableFields) {
            alias_m_ = alias_table(model.m);
            alias_u_ = alias_table(model.u);
        } else {
            for (int l = 0; l < L_; ++l) {
                thr_m_.push_back(bernoulli_threshold(model.m[static_cast<std::size_t>(l)]));
                thr_u_.push_back(bernoulli_threshold(model.u[static_cast<std::size_t>(l)]));
            }
        }
    }

    void draw(Rng& rng, const std::vector<char>& linked, std::vector<std::uint64_t>& codes) const {
        const bool table = !alias_m_.empty();
        const std::size_t per_row = table ? 1 : static_cast<std::size_t>(L_);
        const std::size_t n = codes.size() * per_row;
        thread_local std::vector<std::uint32_t> draws;
        draws.resize(n + 1);
        for (std::size_t i = 0; i < n; i += 2) {
            const std::uint64_t x = rng();
            draws[i] = static_cast<std::uint32_t>(x);
            draws[i + 1] = static_cast<std::uint32_t>(x >> 32);
        }
        const std::uint32_t* d = draws.data();
        if (table) {
            const int shift = 32 - L_;
            const std::uint32_t low_mask = static_cast<std::uint32_t>((std::uint64_t{1} << shift) - 1);
            for (std::size_t r = 0; r < codes.size(); ++r) {
                const Bucket* t = linked[r] ? alias_m_.data() : alias_u_.data();
                const Bucket& bk = t[d[r] >> shift];
                codes[r] = (d[r] & low_mask) < bk.keep ? bk.self : bk.alias;
            }
            return;
        }
        for (std::size_t r = 0; r < codes.size(); ++r, d += L_) {
            const std::uint64_t* thr = linked[r] ? thr_m_.data() : thr_u_.data();
            std::uint64_t code = 0;
            for (int l = 0; l < L_; ++l) code |= static_cast<std::uint64_t>(d[l] < thr[l]) << l;
            codes[r] = code;
        }
    }

private:
    struct Bucket {
        std::uint32_t keep = 0;     // out of 2^(32 - L)
        std::uint32_t self = 0;
        std::uint32_t alias = 0;
    };

    // Vose's construction with deterministic work lists.
    std::vector<Bucket> alias_table(const std::vector<double>& p) const {
        const std::size_t K = std::size_t{1} << L_;
        const double scale = static_cast<double>(std::uint64_t{1} << (32 - L_));
        std::vector<double> q(K);
        for (std::size_t c = 0; c < K; ++c) q[c] = pattern_probability(c, p) * static_cast<double>(K);
        std::vector<Bucket> t(K);
        std::vector<std::size_t> small, large;
        for (std::size_t c = 0; c < K; ++c) (q[c] < 1.0 ? small : large).push_back(c);
        while (!small.empty() && !large.empty()) {
            const std::size_t s = small.back(), g = large.back();
            small.pop_back();
            t[s] = {static_cast<std::uint32_t>(std::llround(q[s] * scale)), static_cast<std::uint32_t>(s),
                    static_cast<std::uint32_t>(g)};
            q[g] -= 1.0 - q[s];
            if (q[g] < 1.0) {
                large.pop_back();
                small.push_back(g);
            }
        }
        // Leftovers are full buckets up to round-off.
        for (std::size_t c : small) t[c] = {static_cast<std::uint32_t>(scale - 1.0) + 1u, static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c)};
        for (std::size_t c : large) t[c] = {static_cast<std::uint32_t>(scale - 1.0) + 1u, static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c)};
        return t;
    }

    int L_;
    std::vector<Bucket> alias_m_, alias_u_;
    std::vector<std::uint64_t> thr_m_, thr_u_;
};

} // namespace detail

class AmbisEngine {
public:
    AmbisEngine(const AgreementMatrix& gamma, const MatchModel& model, PairEstimator estimator,
                LinkStrategy strategy = LinkStrategy::Greedy)
        : gamma_(gamma), model_(model.clamped()), estimator_(std::move(estimator)), strategy_(strategy),
          weights_(model_), sampler_(model_) {
        model.validate();
        if (!gamma_.partitioned()) throw ValidationError("agreement matrix has no linked/unlinked partition");
        if (model_.num_fields() != gamma_.num_fields())
            throw ValidationError("model and agreement matrix disagree on the number of linking fields");
        for (std::size_t r = 0; r < gamma_.rows(); ++r)
            if (gamma_.block(r) == Block::Linked) root_rows_.push_back(static_cast<std::uint32_t>(r));
        if (root_rows_.empty()) throw ValidationError("linked block is empty");
        n_links_ = root_rows_.size();
        if (weights_.tabulated()) {
            const auto& t = weights_.table();
            std::vector<double> distinct = t;
            std::sort(distinct.begin(), distinct.end(), std::greater<>());
            distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
            rank_.resize(t.size());
            for (std::size_t c = 0; c < t.size(); ++c)
                rank_[c] = static_cast<std::uint32_t>(std::lower_bound(distinct.begin(), distinct.end(), t[c], std::greater<>()) - distinct.begin());
            num_ranks_ = distinct.size();
        }
        theta_hat_ = estimate(root_rows_);
        dimension_ = theta_hat_.size();
    }

    const AgreementMatrix& gamma() const noexcept { return gamma_; }
    const MatchModel& model() const noexcept { return model_; }
    std::size_t n_links() const noexcept { return n_links_; }
    const std::vector<std::uint32_t>& root_rows() const noexcept { return root_rows_; }
    const std::vector<double>& theta_hat() const noexcept { return theta_hat_; }
    std::size_t dimension() const noexcept { return dimension_; }

    // Fresh agreement codes given the parent's linked rows (ascending).
    void draw_codes(std::span<const std::uint32_t> parent_rows, Rng& rng, std::vector<std::uint64_t>& codes) const {
        const std::size_t R = gamma_.rows();
        codes.resize(R);
        thread_local std::vector<char> linked;
        linked.assign(R, 0);
        for (std::uint32_t r : parent_rows) linked[r] = 1;
        sampler_.draw(rng, linked, codes);
    }

    // Relinks with the original rule and link count; returns linked rows ascending.
    std::vector<std::uint32_t> relink(const std::vector<std::uint64_t>& codes) const {
        std::vector<std::uint32_t> rows;
        rows.reserve(n_links_);
        if (strategy_ == LinkStrategy::Greedy && weights_.tabulated()) {
            // Counting sort by weight rank; stable, so ties resolve by (a, b).
            thread_local std::vector<std::uint32_t> offsets, order;
            thread_local std::vector<char> used_a, used_b;
            offsets.assign(num_ranks_ + 1, 0);
            for (std::uint64_t c : codes) ++offsets[rank_[c] + 1];
            for (std::size_t k = 1; k <= num_ranks_; ++k) offsets[k] += offsets[k - 1];
            order.resize(codes.size());
            for (std::size_t r = 0; r < codes.size(); ++r) order[offsets[rank_[codes[r]]]++] = static_cast<std::uint32_t>(r);
            used_a.assign(gamma_.n_a(), 0);
            used_b.assign(gamma_.n_b(), 0);
            const auto& pairs = gamma_.pairs();
            for (std::uint32_t r : order) {
                const auto p = pairs[r];
                if (used_a[p.a] || used_b[p.b]) continue;
                used_a[p.a] = used_b[p.b] = 1;
                rows.push_back(r);
                if (rows.size() == n_links_) break;
            }
            if (rows.size() < n_links_) throw ValidationError("bootstrap relink found too few disjoint pairs");
        } else {
            ScoredPairSet s;
            s.n_a = gamma_.n_a();
            s.n_b = gamma_.n_b();
            s.pairs = gamma_.pairs();
            s.weights.reserve(codes.size());
            for (std::uint64_t c : codes) s.weights.push_back(weights_(c));
            const LinkedDataset linked = link_one_to_one(s, n_links_, strategy_);
            for (const auto& p : linked.pairs) rows.push_back(static_cast<std::uint32_t>(*gamma_.row_of({p.a, p.b})));
        }
        std::sort(rows.begin(), rows.end());
        return rows;
    }

    std::vector<double> estimate(std::span<const std::uint32_t> rows) const {
        std::vector<LinkedPair> pairs;
        pairs.reserve(rows.size());
        for (std::uint32_t r : rows) {
            const auto p = gamma_.pairs()[r];
            pairs.push_back({p.a, p.b, weights_(gamma_.codes()[r])});
        }
        return estimator_(pairs);
    }

    // One replicate below `parent_rows`. A replicate whose estimator fails is
    // redrawn with the next attempt seed, up to kMaxAttempts.
    static constexpr int kMaxAttempts = 10;

    template <typename SeedFn>
    Replicate replicate(std::span<const std::uint32_t> parent_rows, SeedFn&& seed_for_attempt,
                        std::size_t* redraws = nullptr) const {
        thread_local std::vector<std::uint64_t> codes;
        std::string last_error;
        for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
            Rng rng(seed_for_attempt(static_cast<std::uint64_t>(attempt)));
            draw_codes(parent_rows, rng, codes);
            Replicate rep;
            rep.rows = relink(codes);
            try {
                std::vector<LinkedPair> pairs;
                pairs.reserve(rep.rows.size());
                for (std::uint32_t r : rep.rows) {
                    const auto p = gamma_.pairs()[r];
                    pairs.push_back({p.a, p.b, weights_(codes[r])});
                }
                rep.theta = estimator_(pairs);
            } catch (const EstimationError& e) {
                last_error = e.what();
                if (redraws) ++*redraws;
                continue;
            }
            if (rep.theta.size() != dimension_) throw ValidationError("estimator changed its output dimension");
            return rep;
        }
        throw EstimationError("bootstrap replicate failed " + std::to_string(kMaxAttempts) +
                              " times; last error: " + last_error);
    }

private:
    AgreementMatrix gamma_;
    MatchModel model_;
    PairEstimator estimator_;
    LinkStrategy strategy_;
    WeightTable weights_;
    std::vector<std::uint32_t> rank_;
    std::size_t num_ranks_ = 0;
    detail::PatternSampler sampler_;
    std::vector<std::uint32_t> root_rows_;
    std::size_t n_links_ = 0;
    std::vector<double> theta_hat_;
    std::size_t dimension_ = 0;
};

inline AgreementMatrix resample_agreement_matrix(const AgreementMatrix& gamma, const MatchModel& model,
                                                 std::uint64_t seed) {
    if (!gamma.partitioned()) throw ValidationError("agreement matrix has no linked/unlinked partition");
    model.validate();
    if (model.num_fields() != gamma.num_fields())
        throw ValidationError("model and agreement matrix disagree on the number of linking fields");
    const detail::PatternSampler sampler(model.clamped());
    Rng rng(seed);
    std::vector<char> linked(gamma.rows(), 0);
    for (std::size_t r = 0; r < gamma.rows(); ++r) linked[r] = gamma.block(r) == Block::Linked;
    std::vector<std::uint64_t> codes(gamma.rows());
    sampler.draw(rng, linked, codes);
    return gamma.with_codes(std::move(codes));
}

namespace detail {

inline std::uint64_t ledger_seed(std::uint64_t master, std::span<const std::uint64_t> path, std::uint64_t attempt) {
    std::uint64_t s = derive_seed(master, Stream::Ledger, {static_cast<std::uint64_t>(path.size()), attempt});
    for (std::uint64_t v : path) s = mix64(s ^ mix64(v + 0x2545f4914f6cdd1dULL));
    return s;
}

// Fills the subtree below `parent` for first-level index b. `path` holds the
// indices from the root down to the parent.
inline void expand_subtree(const AmbisEngine& engine, BootstrapLedger& ledger, std::uint64_t master,
                           const std::vector<std::uint32_t>& parent, std::vector<std::uint64_t>& path,
                           std::size_t node_index, std::size_t& redraws) {
    const int level = static_cast<int>(path.size()) + 1;
    if (level > ledger.depth()) return;
    const std::size_t arity = ledger.arity[static_cast<std::size_t>(level - 1)];
    const std::size_t p = ledger.dimension;
    for (std::size_t c = 0; c < arity; ++c) {
        path.push_back(c);
        const Replicate rep = engine.replicate(
            parent, [&](std::uint64_t attempt) { return ledger_seed(master, path, attempt); }, &redraws);
        const std::size_t child = node_index * arity + c;
        std::copy(rep.theta.begin(), rep.theta.end(), ledger.levels[static_cast<std::size_t>(level - 1)].begin() + static_cast<std::ptrdiff_t>(child * p));
        expand_subtree(engine, ledger, master, rep.rows, path, child, redraws);
        path.pop_back();
    }
}

} // namespace detail

// Builds the nested bootstrap ledger with the given arities (B, C, D, ...).
// Seeds are derived from (master seed, node path), so a ledger with more
// replicates or more depth contains the smaller one as a sub-tree.
inline BootstrapLedger generate_ambis(const AmbisEngine& engine, const std::vector<std::size_t>& arity,
                                      std::uint64_t seed, unsigned threads = 1) {
    if (arity.empty() || arity.size() > 4) throw ValidationError("bootstrap depth must be in 1..4");
    for (std::size_t a : arity)
        if (a < 1) throw ValidationError("bootstrap arities must be at least 1");
    BootstrapLedger ledger;
    ledger.dimension = engine.dimension();
    ledger.arity = arity;
    ledger.theta_hat = engine.theta_hat();
    ledger.seed = seed;
    for (int j = 1; j <= ledger.depth(); ++j) ledger.levels.emplace_back(ledger.count(j) * ledger.dimension, 0.0);

    const std::size_t B = arity.front();
    std::vector<std::size_t> redraws(B, 0);
    const std::size_t p = ledger.dimension;
    parallel_for(B, threads, [&](std::size_t b) {
        std::vector<std::uint64_t> path{b};
        const Replicate rep = engine.replicate(
            engine.root_rows(), [&](std::uint64_t attempt) { return detail::ledger_seed(seed, path, attempt); },
            &redraws[b]);
        std::copy(rep.theta.begin(), rep.theta.end(), ledger.levels[0].begin() + static_cast<std::ptrdiff_t>(b * p));
        detail::expand_subtree(engine, ledger, seed, rep.rows, path, b, redraws[b]);
    });
    for (std::size_t r : redraws) ledger.redraws += r;
    ledger.compute_leaf_terms();
    return ledger;
}

inline BootstrapLedger generate_ambis(const LinkedDataset& chi, const AgreementMatrix& gamma, const MatchModel& model,
                                      int depth, const BootstrapConfig& cfg, PairEstimator estimator,
                                      LinkStrategy strategy = LinkStrategy::Greedy) {
    cfg.validate(depth);
    AgreementMatrix partitioned = gamma;
    partitioned.set_partition(chi.pair_indices());
    const AmbisEngine engine(partitioned, model, std::move(estimator), strategy);
    return generate_ambis(engine, cfg.arities(depth), cfg.seed, cfg.threads);
}

// H replicate means, each over M draws with replacement from the M terms
// (terms is M x p, row-major). Returned H x p, row-major.
inline std::vector<double> or_resample(std::span<const double> terms, std::size_t dimension, std::size_t H,
                                       std::uint64_t seed) {
    if (dimension == 0 || terms.empty() || terms.size() % dimension != 0)
        throw ValidationError("OR resampling needs a non-empty M x p term matrix");
    const std::size_t M = terms.size() / dimension;
    std::vector<double> out(H * dimension, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
        Rng rng(derive_seed(seed, Stream::OrResample, {h}));
        double* dst = out.data() + h * dimension;
        for (std::size_t draw = 0; draw < M; ++draw) {
            const double* src = terms.data() + bounded_index(rng, M) * dimension;
            for (std::size_t i = 0; i < dimension; ++i) dst[i] += src[i];
        }
        for (std::size_t i = 0; i < dimension; ++i) dst[i] /= static_cast<double>(M);
    }
    return out;
}

inline constexpr std::size_t kDefaultOrReplicates = 2000;

inline std::vector<double> or_resample(std::span<const double> terms, std::size_t dimension, std::uint64_t seed) {
    return or_resample(terms, dimension, kDefaultOrReplicates, seed);
}

// Nested deltas behind the variance components for order k: outer world h is a
// relink of the sample, and each of its `inner` replicates contributes one
// order-k leaf term computed with inner arities (C', D'). Returns
// [h][b][i] flattened as (h * inner + b) * p + i.
inline std::vector<double> nested_deltas(const AmbisEngine& engine, int k, std::size_t outer, std::size_t inner,
                                         std::size_t inner_c, std::size_t inner_d, std::uint64_t seed,
                                         unsigned threads = 1) {
    if (k < 1 || k > 3) throw ValidationError("variance run supports orders 1..3");
    const std::size_t p = engine.dimension();
    std::vector<double> out(outer * inner * p, 0.0);
    const std::uint64_t base = derive_seed(seed, Stream::Variance, {static_cast<std::uint64_t>(k)});
    const auto coeff = delta_coefficients(k);

    parallel_for(outer, threads, [&](std::size_t h) {
        std::vector<std::uint64_t> world_path{h};
        const Replicate world = engine.replicate(
            engine.root_rows(), [&](std::uint64_t a) { return detail::ledger_seed(base, world_path, a); });
        BootstrapLedger sub;
        sub.dimension = p;
        sub.theta_hat = world.theta;
        sub.arity = std::vector<std::size_t>{inner, inner_c, inner_d};
        sub.arity.resize(static_cast<std::size_t>(k));
        for (int j = 1; j <= k; ++j) sub.levels.emplace_back(sub.count(j) * p, 0.0);
        std::size_t redraws = 0;
        std::vector<std::uint64_t> path;
        const std::uint64_t world_seed = derive_seed(base, Stream::Variance, {h + 1});
        detail::expand_subtree(engine, sub, world_seed, world.rows, path, 0, redraws);
        const auto terms = sub.subtree_terms(coeff);
        std::copy(terms.begin(), terms.end(), out.begin() + static_cast<std::ptrdiff_t>(h * inner * p));
    });
    return out;
}

} // namespace linkcorr
