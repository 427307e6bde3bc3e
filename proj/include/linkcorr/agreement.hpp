#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "match_model.hpp"
#include "table.hpp"

namespace linkcorr {

enum class Block : std::uint8_t { Unassigned, Linked, Unlinked };

// Zero-based record indices of a candidate pair (a in source A, b in source B).
struct PairIndex {
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    friend auto operator<=>(const PairIndex&, const PairIndex&) = default;
};

enum class ComparatorKind { ExactString, NormalizedString, ExactNumeric };

struct LinkingField {
    std::string field_a;
    std::string field_b;
    ComparatorKind kind = ComparatorKind::ExactString;
};

// Candidate-pair agreement patterns, one row per pair in (a, b) lexicographic order.
// Without blocking the rows cover the full n_A x n_B product.
class AgreementMatrix {
public:
    AgreementMatrix() = default;

    AgreementMatrix(std::size_t n_a, std::size_t n_b, int num_fields,
                    std::vector<PairIndex> pairs, std::vector<std::uint64_t> codes)
        : n_a_(n_a), n_b_(n_b), num_fields_(num_fields), pairs_(std::move(pairs)),
          codes_(std::move(codes)), blocks_(pairs_.size(), Block::Unassigned) {
        if (num_fields < 1 || num_fields > kMaxLinkingFields)
            throw ValidationError("number of linking fields must be in [1, 64]");
        if (pairs_.size() != codes_.size())
            throw ValidationError("agreement matrix needs one code per candidate pair");
        for (std::size_t r = 0; r < pairs_.size(); ++r) {
            if (pairs_[r].a >= n_a || pairs_[r].b >= n_b)
                throw ValidationError("candidate pair index out of range");
            if (r && !(pairs_[r - 1] < pairs_[r]))
                throw ValidationError("candidate pairs must be unique and sorted by (a, b)");
            if (num_fields < 64 && (codes_[r] >> num_fields) != 0)
                throw ValidationError("agreement code has bits beyond the field count");
        }
    }

    // Full Cartesian product with codes in row-major (a, b) order.
    static AgreementMatrix full(std::size_t n_a, std::size_t n_b, int num_fields,
                                std::vector<std::uint64_t> codes) {
        std::vector<PairIndex> pairs;
        pairs.reserve(n_a * n_b);
        for (std::size_t a = 0; a < n_a; ++a)
            for (std::size_t b = 0; b < n_b; ++b)
                pairs.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)});
        return AgreementMatrix(n_a, n_b, num_fields, std::move(pairs), std::move(codes));
    }

    std::size_t n_a() const noexcept { return n_a_; }
    std::size_t n_b() const noexcept { return n_b_; }
    int num_fields() const noexcept { return num_fields_; }
    std::size_t rows() const noexcept { return pairs_.size(); }
    bool is_full_product() const noexcept { return pairs_.size() == n_a_ * n_b_; }

    const std::vector<PairIndex>& pairs() const noexcept { return pairs_; }
    const std::vector<std::uint64_t>& codes() const noexcept { return codes_; }
    const std::vector<Block>& blocks() const noexcept { return blocks_; }

    PairIndex pair(std::size_t r) const { return pairs_.at(r); }
    std::uint64_t code(std::size_t r) const { return codes_.at(r); }
    AgreementPattern pattern(std::size_t r) const { return AgreementPattern(codes_.at(r), num_fields_); }
    Block block(std::size_t r) const { return blocks_.at(r); }

    std::optional<std::size_t> row_of(PairIndex p) const {
        if (is_full_product()) {
            if (p.a >= n_a_ || p.b >= n_b_) return std::nullopt;
            return std::size_t{p.a} * n_b_ + p.b;
        }
        auto it = std::lower_bound(pairs_.begin(), pairs_.end(), p);
        if (it == pairs_.end() || *it != p) return std::nullopt;
        return static_cast<std::size_t>(it - pairs_.begin());
    }

    bool partitioned() const noexcept {
        return !blocks_.empty() && blocks_.front() != Block::Unassigned;
    }

    // Marks the given pairs as the linked block and every other row as unlinked.
    void set_partition(const std::vector<PairIndex>& linked) {
        std::vector<Block> blocks(pairs_.size(), Block::Unlinked);
        for (const auto& p : linked) {
            auto r = row_of(p);
            if (!r)
                throw ValidationError("linked pair (" + std::to_string(p.a + 1) + ", " +
                                      std::to_string(p.b + 1) + ") is not a candidate pair");
            if (blocks[*r] == Block::Linked) throw ValidationError("linked pair listed twice");
            blocks[*r] = Block::Linked;
        }
        blocks_ = std::move(blocks);
    }

    std::vector<std::size_t> linked_rows() const {
        std::vector<std::size_t> out;
        for (std::size_t r = 0; r < blocks_.size(); ++r)
            if (blocks_[r] == Block::Linked) out.push_back(r);
        return out;
    }

    void clear_partition() { std::fill(blocks_.begin(), blocks_.end(), Block::Unassigned); }

    // Replaces the codes while keeping pairs and partition; used by resampling.
    AgreementMatrix with_codes(std::vector<std::uint64_t> codes) const {
        AgreementMatrix out = *this;
        if (codes.size() != codes_.size()) throw ValidationError("code count mismatch");
        out.codes_ = std::move(codes);
        return out;
    }

private:
    std::size_t n_a_ = 0;
    std::size_t n_b_ = 0;
    int num_fields_ = 0;
    std::vector<PairIndex> pairs_;
    std::vector<std::uint64_t> codes_;
    std::vector<Block> blocks_;
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline bool is_missing(std::string_view raw) {
    const std::string t = trim(raw);
    return t.empty() || t == "NA" || t == "NaN" || t == "null";
}

// Lower-case ASCII, drop punctuation, collapse whitespace runs.
inline std::string normalize(std::string_view raw) {
    std::string out;
    bool pending_space = false;
    for (unsigned char ch : raw) {
        if (std::isspace(ch)) {
            pending_space = !out.empty();
        } else if (std::isalnum(ch) || ch >= 0x80) {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(ch)));
        }
    }
    return out;
}

} // namespace detail

inline ComparatorKind parse_comparator(std::string_view name) {
    if (name == "exact" || name == "exact_string") return ComparatorKind::ExactString;
    if (name == "normalized" || name == "normalized_string") return ComparatorKind::NormalizedString;
    if (name == "numeric" || name == "exact_numeric") return ComparatorKind::ExactNumeric;
    throw ValidationError("unknown comparator '" + std::string(name) + "'");
}

inline std::string_view comparator_name(ComparatorKind kind) {
    switch (kind) {
    case ComparatorKind::ExactString: return "exact";
    case ComparatorKind::NormalizedString: return "normalized";
    case ComparatorKind::ExactNumeric: return "numeric";
    }
    return "exact";
}

struct BlockingKey {
    std::string field_a;
    std::string field_b;
};

// Compares every candidate pair on each linking field. Missing linking values are rejected.
inline AgreementMatrix build_agreement_matrix(const RecordTable& source_a, const RecordTable& source_b,
                                              const std::vector<LinkingField>& fields,
                                              const std::optional<BlockingKey>& blocking = std::nullopt) {
    if (source_a.empty() || source_b.empty()) throw ValidationError("both sources must be non-empty");
    if (fields.empty() || fields.size() > static_cast<std::size_t>(kMaxLinkingFields))
        throw ValidationError("between 1 and 64 linking fields are required");

    const int L = static_cast<int>(fields.size());
    // Per field, a canonical key per record; agreement is key equality.
    std::vector<std::vector<std::string>> keys_a(L), keys_b(L);
    auto canonical = [](const RecordTable& t, std::size_t col, ComparatorKind kind, char side,
                        const std::string& field) {
        std::vector<std::string> keys;
        keys.reserve(t.size());
        for (std::size_t r = 0; r < t.size(); ++r) {
            const std::string& raw = t.cell(r, col);
            if (detail::is_missing(raw))
                throw ValidationError(std::string("missing linking value for field '") + field +
                                      "' in source " + side + " record " + std::to_string(r + 1));
            switch (kind) {
            case ComparatorKind::ExactString: keys.push_back(raw); break;
            case ComparatorKind::NormalizedString: keys.push_back(detail::normalize(raw)); break;
            case ComparatorKind::ExactNumeric: {
                auto v = parse_double(raw);
                if (!v)
                    throw ValidationError("field '" + field + "' in source " + side + " record " +
                                          std::to_string(r + 1) + " is not numeric");
                keys.push_back(format_double(*v == 0.0 ? 0.0 : *v));
                break;
            }
            }
        }
        return keys;
    };
    for (int l = 0; l < L; ++l) {
        const auto& f = fields[l];
        const auto ca = source_a.column_index(f.field_a);
        const auto cb = source_b.column_index(f.field_b);
        if (!ca) throw ValidationError("linking field '" + f.field_a + "' not found in source A");
        if (!cb) throw ValidationError("linking field '" + f.field_b + "' not found in source B");
        keys_a[l] = canonical(source_a, *ca, f.kind, 'A', f.field_a);
        keys_b[l] = canonical(source_b, *cb, f.kind, 'B', f.field_b);
    }

    std::optional<std::size_t> block_a, block_b;
    if (blocking) {
        block_a = source_a.require_column(blocking->field_a);
        block_b = source_b.require_column(blocking->field_b);
    }

    std::vector<PairIndex> pairs;
    std::vector<std::uint64_t> codes;
    if (!blocking) {
        pairs.reserve(source_a.size() * source_b.size());
        codes.reserve(source_a.size() * source_b.size());
    }
    for (std::size_t a = 0; a < source_a.size(); ++a) {
        for (std::size_t b = 0; b < source_b.size(); ++b) {
            if (blocking && source_a.cell(a, *block_a) != source_b.cell(b, *block_b)) continue;
            std::uint64_t code = 0;
            for (int l = 0; l < L; ++l)
                if (keys_a[l][a] == keys_b[l][b]) code |= std::uint64_t{1} << l;
            pairs.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)});
            codes.push_back(code);
        }
    }
    return AgreementMatrix(source_a.size(), source_b.size(), L, std::move(pairs), std::move(codes));
}

// Agreement matrix stored as CSV: index_a, index_b (1-based), then one 0/1 column per field.
inline AgreementMatrix agreement_matrix_from_table(const RecordTable& t, std::size_t n_a, std::size_t n_b) {
    if (t.columns().size() < 3)
        throw ValidationError("agreement matrix CSV needs index_a, index_b and at least one field");
    const int L = static_cast<int>(t.columns().size()) - 2;
    std::vector<std::pair<PairIndex, std::uint64_t>> rows;
    rows.reserve(t.size());
    for (std::size_t r = 0; r < t.size(); ++r) {
        auto ia = parse_double(t.cell(r, 0));
        auto ib = parse_double(t.cell(r, 1));
        if (!ia || !ib || *ia < 1 || *ib < 1 || *ia > static_cast<double>(n_a) || *ib > static_cast<double>(n_b))
            throw ValidationError("agreement matrix row " + std::to_string(r + 1) + " has an invalid pair index");
        std::uint64_t code = 0;
        for (int l = 0; l < L; ++l) {
            const std::string v = detail::trim(t.cell(r, 2 + l));
            if (v == "1") code |= std::uint64_t{1} << l;
            else if (v != "0")
                throw ValidationError("agreement matrix row " + std::to_string(r + 1) + " has a non-binary entry");
        }
        rows.push_back({{static_cast<std::uint32_t>(*ia - 1), static_cast<std::uint32_t>(*ib - 1)}, code});
    }
    std::sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    std::vector<PairIndex> pairs;
    std::vector<std::uint64_t> codes;
    for (auto& [p, c] : rows) {
        pairs.push_back(p);
        codes.push_back(c);
    }
    return AgreementMatrix(n_a, n_b, L, std::move(pairs), std::move(codes));
}

} // namespace linkcorr
