#pragma once

// Hormone assay fixture: 27 devices, hours worn (file B) against amount of
// hormone remaining (file A). Record i of A truly matches record i of B.
// The incorrectly constituted set and the agreement matrix realization that
// produces it under greedy 1-1 linking are bundled here.

#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "../agreement.hpp"
#include "../error.hpp"
#include "../estimators.hpp"
#include "../linking.hpp"
#include "../match_model.hpp"
#include "../table.hpp"

namespace linkcorr::hormone {

inline constexpr std::size_t kRecords = 27;
inline constexpr std::size_t kLinks = 27;
inline constexpr int kFields = 4;

inline constexpr std::array<double, kRecords> kHours = {
    99, 152, 293, 155, 196, 53, 184, 171, 52, 376, 385, 402, 29, 76,
    296, 151, 177, 209, 119, 188, 115, 88, 58, 49, 150, 107, 125};

inline constexpr std::array<double, kRecords> kAmount = {
    25.8, 20.5, 14.3, 23.2, 20.6, 31.1, 20.9, 20.9, 30.4, 16.3, 11.6, 11.8, 32.5, 32.0,
    18.0, 24.1, 26.5, 25.8, 28.8, 22.0, 29.7, 28.9, 32.8, 32.5, 25.4, 31.7, 28.5};

// B record j (1-based position) is linked to A record kIncorrectA[j] in the
// incorrectly constituted set; 10 of the 27 pairs are false.
inline constexpr std::array<int, kRecords> kIncorrectA = {
    13, 2, 3, 4, 5, 6, 7, 12, 9, 10, 11, 25, 26, 23, 15, 16, 17, 22, 19, 20, 21, 8, 1, 24, 14, 18, 27};

inline constexpr std::array<double, kFields> kM = {0.81, 0.62, 0.75, 0.83};
inline constexpr std::array<double, kFields> kU = {0.17, 0.19, 0.15, 0.25};

// Reference values for the side-by-side comparison.
struct Reference {
    double true_intercept = 34.17, true_slope = -0.057;
    double biased_intercept = 31.55, biased_slope = -0.042;
    int k_intercept = 4, k_slope = 3;
    int B_intercept = 145, B_slope = 331;
    double delta_intercept = -0.50, delta_slope = -0.0014;
    double delta_lo_intercept = -2.23, delta_hi_intercept = 0.22;
    double delta_lo_slope = -0.0058, delta_hi_slope = 0.0002;
    double corrected_intercept = 33.16, corrected_slope = -0.058;
    double corrected_lo_intercept = 30.84, corrected_hi_intercept = 35.42;
    double corrected_lo_slope = -0.064, corrected_hi_slope = -0.053;
};

// Seed under which the agreement matrix realization below was generated.
inline constexpr std::uint64_t kGammaSeed = 20130501;

// One hex digit per candidate pair, row-major over (A record, B record);
// bit l of the digit is agreement on linking variable l.
inline constexpr std::string_view kGammaHex =
    "94220246049020002cc020580260540202894108c8088000022802a0b0040008c0464020408028293"
    "004f80029004400000a2120050c1500f252805000400030400a218180aafb0082810458e158120940"
    "c23140d5061100000244a200005036b625a0953202000260e000800034039232a8000088200020200"
    "2000a4002d0a1120840080c0a000112b00e20d82e5a08100208989a000a0050009111068002010410"
    "924c003900c2c4008400020081010030220002294a488009822c0880040082110008f040000800900"
    "98000c200640118d108100000508880200081008040e403001402091868001880440110c088620a58"
    "a80000107c20002800d0980851890400104099081b8824fd0984000708021800002000a0b0d209800"
    "2a0b0088008840002c18010002002090038002c09010010883808026698808200002002500481b100"
    "188840508b3528801828291010000a144800000e0840080892045088000a2a0090004400ca804028d";

inline MatchModel model() {
    MatchModel mm;
    mm.m.assign(kM.begin(), kM.end());
    mm.u.assign(kU.begin(), kU.end());
    mm.prevalence = 1.0 / static_cast<double>(kRecords);
    return mm;
}

inline std::vector<PairIndex> incorrect_links() {
    std::vector<PairIndex> out;
    for (std::size_t j = 0; j < kRecords; ++j)
        out.push_back({static_cast<std::uint32_t>(kIncorrectA[j] - 1), static_cast<std::uint32_t>(j)});
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<PairIndex> correct_links() {
    std::vector<PairIndex> out;
    for (std::uint32_t i = 0; i < kRecords; ++i) out.push_back({i, i});
    return out;
}

inline AgreementMatrix gamma_from_hex(std::string_view hex) {
    if (hex.size() != kRecords * kRecords) throw ValidationError("hormone agreement matrix has the wrong size");
    std::vector<std::uint64_t> codes;
    codes.reserve(hex.size());
    for (char c : hex) {
        if (c >= '0' && c <= '9') codes.push_back(static_cast<std::uint64_t>(c - '0'));
        else if (c >= 'a' && c <= 'f') codes.push_back(static_cast<std::uint64_t>(c - 'a' + 10));
        else throw ValidationError("bad hex digit in hormone agreement matrix");
    }
    return AgreementMatrix::full(kRecords, kRecords, kFields, std::move(codes));
}

inline AgreementMatrix gamma() { return gamma_from_hex(kGammaHex); }

inline std::shared_ptr<const RecordTable> source_a() {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < kRecords; ++i) rows.push_back({std::to_string(i + 1), format_double(kAmount[i])});
    return std::make_shared<const RecordTable>(std::vector<std::string>{"id", "amount"}, std::move(rows));
}

inline std::shared_ptr<const RecordTable> source_b() {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < kRecords; ++i) rows.push_back({std::to_string(i + 1), format_double(kHours[i])});
    return std::make_shared<const RecordTable>(std::vector<std::string>{"id", "hrs"}, std::move(rows));
}

inline EstimatorSpec estimator_spec() {
    EstimatorSpec spec;
    spec.kind = EstimatorKind::Ols;
    spec.response = "amount";
    spec.covariates = {"hrs"};
    return spec;
}

inline LinkedDataset dataset(const std::vector<PairIndex>& links) {
    LinkedDataset d;
    d.records_a = source_a();
    d.records_b = source_b();
    const AgreementMatrix g = gamma();
    const WeightTable w(model());
    for (const auto& p : links) {
        const auto r = g.row_of(p);
        d.pairs.push_back({p.a, p.b, r ? w(g.codes()[*r]) : 0.0});
    }
    sort_pairs(d.pairs);
    return d;
}

inline LinkedDataset correct_set() { return dataset(correct_links()); }
inline LinkedDataset incorrect_set() { return dataset(incorrect_links()); }

} // namespace linkcorr::hormone
