#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"

namespace linkcorr {

// Probabilities are kept inside [kProbabilityFloor, 1 - kProbabilityFloor] so
// every log term of the match weight is finite.
inline constexpr double kProbabilityFloor = 1e-6;

inline double clamp_probability(double p) noexcept {
    return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

// Longest agreement pattern representable as a bit code.
inline constexpr int kMaxLinkingFields = 64;

// Agreement indicators for one candidate pair, bit l set when linking field l agrees.
struct AgreementPattern {
    std::uint64_t bits = 0;
    int length = 0;

    AgreementPattern() = default;
    AgreementPattern(std::uint64_t code, int len) : bits(code), length(len) {
        if (len < 1 || len > kMaxLinkingFields)
            throw ValidationError("agreement pattern length must be in [1, 64]");
        if (len < 64 && (code >> len) != 0)
            throw ValidationError("agreement pattern has bits beyond its length");
    }
    static AgreementPattern from_bits(const std::vector<int>& values) {
        if (values.empty() || values.size() > static_cast<std::size_t>(kMaxLinkingFields))
            throw ValidationError("agreement pattern length must be in [1, 64]");
        std::uint64_t code = 0;
        for (std::size_t l = 0; l < values.size(); ++l) {
            if (values[l] != 0 && values[l] != 1)
                throw ValidationError("agreement entries must be 0 or 1");
            if (values[l]) code |= std::uint64_t{1} << l;
        }
        return AgreementPattern(code, static_cast<int>(values.size()));
    }

    bool agrees(int l) const noexcept { return (bits >> l) & 1U; }
    int agreement_count() const noexcept { return __builtin_popcountll(bits); }
};

// Two-class Fellegi-Sunter model: per-field agreement probabilities among true
// matches (m) and true non-matches (u), plus the mixture weight of the match class.
struct MatchModel {
    std::vector<double> m;
    std::vector<double> u;
    double prevalence = 0.5;

    int num_fields() const noexcept { return static_cast<int>(m.size()); }

    void validate() const {
        if (m.empty() || m.size() != u.size())
            throw ValidationError("match model needs m and u of equal, non-zero length");
        if (m.size() > static_cast<std::size_t>(kMaxLinkingFields))
            throw ValidationError("at most 64 linking fields are supported");
        for (std::size_t l = 0; l < m.size(); ++l) {
            if (!(m[l] > 0.0 && m[l] < 1.0) || !(u[l] > 0.0 && u[l] < 1.0))
                throw ValidationError("m and u probabilities must lie strictly inside (0, 1)");
        }
        if (!(prevalence > 0.0 && prevalence < 1.0))
            throw ValidationError("match prevalence must lie strictly inside (0, 1)");
    }

    // Copy with every probability pulled into the clamp band.
    MatchModel clamped() const {
        MatchModel out = *this;
        for (auto& v : out.m) v = clamp_probability(v);
        for (auto& v : out.u) v = clamp_probability(v);
        out.prevalence = clamp_probability(out.prevalence);
        return out;
    }

    // Model under which linkage is error free: m at the upper clamp, u at the lower.
    static MatchModel degenerate(int num_fields) {
        return MatchModel{std::vector<double>(num_fields, 1.0 - kProbabilityFloor),
                          std::vector<double>(num_fields, kProbabilityFloor), 0.5};
    }
};

// Contribution of field l to the match weight when it agrees / disagrees.
inline double agreement_weight(const MatchModel& model, int l) {
    return std::log(model.m[l]) - std::log(model.u[l]);
}
inline double disagreement_weight(const MatchModel& model, int l) {
    return std::log(1.0 - model.m[l]) - std::log(1.0 - model.u[l]);
}

// Log-likelihood ratio of an agreement pattern, matches vs non-matches.
inline double fs_weight(std::uint64_t code, const MatchModel& model) {
    double w = 0.0;
    const int L = model.num_fields();
    for (int l = 0; l < L; ++l) {
        const bool g = (code >> l) & 1U;
        w += g ? std::log(model.m[l]) - std::log(model.u[l])
               : std::log(1.0 - model.m[l]) - std::log(1.0 - model.u[l]);
    }
    return w;
}

inline double fs_weight(const AgreementPattern& pattern, const MatchModel& model) {
    if (pattern.length != model.num_fields())
        throw ValidationError("pattern length " + std::to_string(pattern.length) +
                              " does not match model with " + std::to_string(model.num_fields()) +
                              " linking fields");
    return fs_weight(pattern.bits, model);
}

// Probability of a pattern under the product-Bernoulli law with per-field
// success probabilities p.
inline double pattern_probability(std::uint64_t code, const std::vector<double>& p) {
    double prob = 1.0;
    for (std::size_t l = 0; l < p.size(); ++l) prob *= ((code >> l) & 1U) ? p[l] : 1.0 - p[l];
    return prob;
}

// Precomputed weights for every code when the field count is small.
class WeightTable {
public:
    static constexpr int kMaxTabulatedFields = 16;

    explicit WeightTable(const MatchModel& model) : model_(model) {
        const int L = model.num_fields();
        if (L <= kMaxTabulatedFields) {
            table_.resize(std::size_t{1} << L);
            for (std::size_t code = 0; code < table_.size(); ++code) table_[code] = fs_weight(code, model_);
        }
    }

    bool tabulated() const noexcept { return !table_.empty(); }
    const std::vector<double>& table() const noexcept { return table_; }
    double operator()(std::uint64_t code) const {
        return tabulated() ? table_[code] : fs_weight(code, model_);
    }

private:
    MatchModel model_;
    std::vector<double> table_;
};

} // namespace linkcorr
