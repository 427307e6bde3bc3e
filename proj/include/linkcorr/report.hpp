#pragma once

// Serialization of correction reports, bootstrap ledgers and linked datasets.
// JSON keys keep insertion order and doubles print in shortest round-trip
// form, so equal inputs give byte-equal documents.

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "ledger.hpp"
#include "linking.hpp"
#include "stopping_test.hpp"
#include "table.hpp"

namespace linkcorr {

namespace detail {

// Non-finite values have no JSON literal; they are written as strings.
inline Json number(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

inline Json interval(const std::pair<double, double>& iv) { return Json::array({number(iv.first), number(iv.second)}); }

} // namespace detail

inline Json to_json(const VarianceDecomposition& vd) {
    return Json{{"total", detail::number(vd.total)}, {"v1", detail::number(vd.v1)},
                {"v2", detail::number(vd.v2)},       {"b_used", vd.b_used},
                {"eta_sq", detail::number(vd.eta_sq)}, {"degenerate", vd.degenerate}};
}

inline Json to_json(const OrderTrace& t) {
    Json j{{"k", t.k},
           {"variance", to_json(t.variance)},
           {"B_chosen", t.B_chosen},
           {"B_capped", t.B_capped},
           {"B_ledger", t.B_ledger},
           {"delta", detail::number(t.delta)}};
    if (t.test) {
        j["T"] = detail::number(t.test->T);
        j["quantiles"] = detail::interval({t.test->q_lower, t.test->q_upper});
        j["ci"] = detail::interval({t.test->lower, t.test->upper});
        j["contains_zero"] = t.test->contains_zero;
    }
    j["accepted"] = t.accepted;
    return j;
}

inline std::string stop_status(const ParameterReport& p, int cap) {
    return p.accepted ? "accepted" : "no detectable stop by k=" + std::to_string(cap);
}

// Mirrors the rows of the usual results table, one object per parameter.
inline Json to_json(const CorrectionReport& r, const Json& config, bool include_runtime = false) {
    Json params = Json::array();
    for (const auto& p : r.parameters) {
        Json trace = Json::array();
        for (const auto& t : p.trace) trace.push_back(to_json(t));
        params.push_back(Json{{"name", p.name},
                              {"biased_estimate", detail::number(p.biased)},
                              {"k", p.k},
                              {"status", stop_status(p, r.config.max_order)},
                              {"B_max", p.B_max},
                              {"delta", detail::number(p.delta)},
                              {"delta_interval", detail::interval(p.delta_interval)},
                              {"corrected_order", p.corrected_order},
                              {"corrected_estimate", detail::number(p.corrected)},
                              {"corrected_interval", detail::interval(p.corrected_interval)},
                              {"trace", trace}});
    }
    Json j{{"seed", r.seed},
           {"config", config},
           {"parameters", params},
           {"redrawn_replicates", r.redraws},
           {"all_accepted", r.all_accepted}};
    if (include_runtime) j["runtime_seconds"] = r.runtime_seconds;
    return j;
}

inline Json to_json(const BootstrapLedger& l) {
    Json levels = Json::array();
    for (const auto& lv : l.levels) {
        Json a = Json::array();
        for (double v : lv) a.push_back(detail::number(v));
        levels.push_back(a);
    }
    Json leaves = Json::array();
    for (const auto& lt : l.leaf_terms) {
        Json a = Json::array();
        for (double v : lt) a.push_back(detail::number(v));
        leaves.push_back(a);
    }
    Json counts = Json::array();
    for (int j = 1; j <= l.depth(); ++j) counts.push_back(l.count(j));
    return Json{{"dimension", l.dimension}, {"arity", l.arity},   {"counts", counts},
                {"seed", l.seed},           {"redraws", l.redraws}, {"theta_hat", l.theta_hat},
                {"levels", levels},         {"leaf_terms", leaves}};
}

inline BootstrapLedger ledger_from_json(const Json& j) {
    BootstrapLedger l;
    try {
        l.dimension = j.at("dimension").get<std::size_t>();
        l.arity = j.at("arity").get<std::vector<std::size_t>>();
        l.seed = j.at("seed").get<std::uint64_t>();
        l.redraws = j.at("redraws").get<std::size_t>();
        l.theta_hat = j.at("theta_hat").get<std::vector<double>>();
        l.levels = j.at("levels").get<std::vector<std::vector<double>>>();
        l.leaf_terms = j.at("leaf_terms").get<std::vector<std::vector<double>>>();
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("ledger: ") + e.what());
    }
    if (l.theta_hat.size() != l.dimension || l.levels.size() != l.arity.size())
        throw ValidationError("ledger: inconsistent shape");
    for (int k = 1; k <= l.depth(); ++k)
        if (l.levels[static_cast<std::size_t>(k - 1)].size() != l.count(k) * l.dimension)
            throw ValidationError("ledger: level " + std::to_string(k) + " has the wrong size");
    return l;
}

// Linked pairs as CSV: 1-based indices, weight, then every source column
// prefixed with its source.
inline void write_linked_csv(std::ostream& out, const LinkedDataset& d) {
    std::vector<std::string> header{"index_a", "index_b", "weight"};
    if (d.records_a)
        for (const auto& c : d.records_a->columns()) header.push_back("A." + c);
    if (d.records_b)
        for (const auto& c : d.records_b->columns()) header.push_back("B." + c);
    std::vector<std::vector<std::string>> rows;
    rows.reserve(d.pairs.size());
    for (const auto& p : d.pairs) {
        std::vector<std::string> row{std::to_string(p.a + 1), std::to_string(p.b + 1), format_double(p.weight)};
        if (d.records_a) row.insert(row.end(), d.records_a->row(p.a).begin(), d.records_a->row(p.a).end());
        if (d.records_b) row.insert(row.end(), d.records_b->row(p.b).begin(), d.records_b->row(p.b).end());
        rows.push_back(std::move(row));
    }
    write_csv(out, header, rows);
}

// Reads the pairs back; analysis columns are left to the source tables.
inline std::vector<LinkedPair> read_linked_pairs(const RecordTable& t) {
    const std::size_t ca = t.require_column("index_a");
    const std::size_t cb = t.require_column("index_b");
    const auto cw = t.column_index("weight");
    std::vector<LinkedPair> out;
    for (std::size_t r = 0; r < t.size(); ++r) {
        const auto a = parse_double(t.cell(r, ca));
        const auto b = parse_double(t.cell(r, cb));
        if (!a || !b || *a < 1 || *b < 1) throw ValidationError("linked row " + std::to_string(r + 1) + " has a bad index");
        double w = 0.0;
        if (cw) {
            const auto v = parse_double(t.cell(r, *cw));
            if (!v) throw ValidationError("linked row " + std::to_string(r + 1) + " has a bad weight");
            w = *v;
        }
        out.push_back({static_cast<std::uint32_t>(*a - 1), static_cast<std::uint32_t>(*b - 1), w});
    }
    return out;
}

// Plain-text mirror of the report.
inline void print_report_table(std::ostream& out, const CorrectionReport& r) {
    auto cell = [&](const std::string& s) { out << std::left << std::setw(28) << s; };
    auto fmt = [](double v) {
        std::ostringstream s;
        s << std::setprecision(5) << v;
        return s.str();
    };
    auto fmt_iv = [&](const std::pair<double, double>& iv) { return "(" + fmt(iv.first) + ", " + fmt(iv.second) + ")"; };
    cell("");
    for (const auto& p : r.parameters) cell(p.name);
    out << '\n';
    auto row = [&](const std::string& label, auto&& f) {
        cell(label);
        for (const auto& p : r.parameters) cell(f(p));
        out << '\n';
    };
    row("biased estimate", [&](const ParameterReport& p) { return fmt(p.biased); });
    row("k", [&](const ParameterReport& p) { return std::to_string(p.k) + (p.accepted ? "" : " (cap)"); });
    row("B_max", [&](const ParameterReport& p) { return std::to_string(p.B_max); });
    row("delta", [&](const ParameterReport& p) { return fmt(p.delta); });
    row("delta 95% interval", [&](const ParameterReport& p) { return fmt_iv(p.delta_interval); });
    row("corrected estimate", [&](const ParameterReport& p) {
        return fmt(p.corrected) + " [k=" + std::to_string(p.corrected_order) + "]";
    });
    row("corrected 95% interval", [&](const ParameterReport& p) { return fmt_iv(p.corrected_interval); });
}

} // namespace linkcorr
