#pragma once

// Run configuration: a JSON document naming the sources, the comparison,
// the match model (given or estimated), the linking rule, the estimator and
// the bootstrap settings. Relative paths resolve against the config file.
//
//   {
//     "source_a": "a.csv", "source_b": "b.csv",
//     "linking_fields": [{"field_a": "name", "field_b": "name", "comparator": "normalized"}],
//     "model": {"m": [0.9], "u": [0.1], "prevalence": 0.01},
//     "linking_rule": {"n_links": 27, "strategy": "greedy"},
//     "estimator": {"kind": "ols", "response": "y", "covariates": ["x"]},
//     "bootstrap": {"B": 100, "C": 100, "D": 100, "seed": 1},
//     "output": "report.json"
//   }
//
// "agreement_matrix" (CSV: index_a, index_b, one 0/1 column per field) may
// replace "linking_fields"; "em" may replace "model".

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agreement.hpp"
#include "em.hpp"
#include "error.hpp"
#include "estimators.hpp"
#include "linking.hpp"
#include "match_model.hpp"
#include "resampling.hpp"

namespace linkcorr {

using Json = nlohmann::ordered_json;

struct EmRequest {
    std::optional<MatchModel> init;
    std::optional<double> expected_matches;
    EmOptions options;
};

struct LinkingRule {
    std::optional<std::size_t> n_links;
    LinkStrategy strategy = LinkStrategy::Greedy;
    std::optional<double> mu;
    std::optional<double> lambda;
};

struct RunConfig {
    std::filesystem::path base_dir;
    std::optional<std::string> fixture;
    std::string source_a;
    std::string source_b;
    std::vector<LinkingField> linking_fields;
    std::optional<std::string> agreement_matrix;
    std::optional<BlockingKey> blocking;
    std::optional<MatchModel> model;
    std::optional<EmRequest> em;
    LinkingRule rule;
    EstimatorSpec estimator;
    BootstrapConfig bootstrap;
    bool seed_given = false;
    std::optional<std::string> output;

    std::string resolve(const std::string& path) const {
        const std::filesystem::path p(path);
        return p.is_absolute() || base_dir.empty() ? path : (base_dir / p).string();
    }

    void validate() const {
        if (model.has_value() == em.has_value())
            throw ValidationError("config needs exactly one of \"model\" and \"em\"");
        if (!fixture) {
            if (source_a.empty() || source_b.empty()) throw ValidationError("config needs source_a and source_b");
            if (linking_fields.empty() == !agreement_matrix.has_value())
                throw ValidationError("config needs exactly one of \"linking_fields\" and \"agreement_matrix\"");
        }
        if (model) model->validate();
        if (rule.n_links.has_value() == (rule.mu.has_value() || rule.lambda.has_value()))
            throw ValidationError("linking_rule needs either n_links or mu and lambda");
        if (rule.mu.has_value() != rule.lambda.has_value())
            throw ValidationError("linking_rule needs both mu and lambda");
        if (rule.n_links && *rule.n_links < 1) throw ValidationError("n_links must be at least 1");
        if (estimator.response.empty()) throw ValidationError("estimator needs a response field");
        bootstrap.validate(bootstrap.max_order);
    }
};

namespace detail {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline MatchModel model_from_json(const Json& j) {
    MatchModel m;
    m.m = j.at("m").get<std::vector<double>>();
    m.u = j.at("u").get<std::vector<double>>();
    m.prevalence = get_or(j, "prevalence", 0.5);
    return m;
}

inline void reject_unknown_keys(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ValidationError("unknown key '" + it.key() + "' in " + where);
    }
}

} // namespace detail

inline std::string strategy_name(LinkStrategy s) { return s == LinkStrategy::Greedy ? "greedy" : "optimal"; }

inline LinkStrategy parse_strategy(const std::string& s) {
    if (s == "greedy") return LinkStrategy::Greedy;
    if (s == "optimal") return LinkStrategy::Optimal;
    throw ValidationError("unknown linking strategy '" + s + "' (greedy or optimal)");
}

inline BootstrapConfig bootstrap_from_json(const Json& j, BootstrapConfig cfg = {}) {
    detail::reject_unknown_keys(j, {"B", "C", "D", "H", "eta0", "seed", "variance_outer", "variance_inner",
                                    "variance_inner_c", "variance_inner_d", "max_order", "max_B"},
                                "bootstrap");
    cfg.B = detail::get_or(j, "B", cfg.B);
    cfg.C = detail::get_or(j, "C", cfg.C);
    cfg.D = detail::get_or(j, "D", cfg.D);
    cfg.H = detail::get_or(j, "H", cfg.H);
    cfg.eta0 = detail::get_or(j, "eta0", cfg.eta0);
    cfg.seed = detail::get_or(j, "seed", cfg.seed);
    cfg.variance_outer = detail::get_or(j, "variance_outer", cfg.variance_outer);
    cfg.variance_inner = detail::get_or(j, "variance_inner", cfg.variance_inner);
    cfg.variance_inner_c = detail::get_or(j, "variance_inner_c", cfg.variance_inner_c);
    cfg.variance_inner_d = detail::get_or(j, "variance_inner_d", cfg.variance_inner_d);
    cfg.max_order = detail::get_or(j, "max_order", cfg.max_order);
    cfg.max_B = detail::get_or(j, "max_B", cfg.max_B);
    return cfg;
}

// Threads are an execution detail and deliberately absent: reports must not
// depend on them.
inline Json to_json(const BootstrapConfig& c) {
    return Json{{"B", c.B},
                {"C", c.C},
                {"D", c.D},
                {"H", c.H},
                {"eta0", c.eta0},
                {"seed", c.seed},
                {"variance_outer", c.variance_outer},
                {"variance_inner", c.variance_inner},
                {"variance_inner_c", c.variance_inner_c},
                {"variance_inner_d", c.variance_inner_d},
                {"max_order", c.max_order},
                {"max_B", c.max_B}};
}

inline Json to_json(const MatchModel& m) { return Json{{"m", m.m}, {"u", m.u}, {"prevalence", m.prevalence}}; }

inline Json to_json(const EstimatorSpec& e) {
    Json j{{"kind", e.kind == EstimatorKind::Ols ? "ols" : "logistic"},
           {"response", e.response},
           {"covariates", e.covariates}};
    if (e.weight_field) j["weight_field"] = *e.weight_field;
    return j;
}

inline EstimatorSpec estimator_from_json(const Json& j) {
    detail::reject_unknown_keys(j, {"kind", "response", "covariates", "weight_field"}, "estimator");
    EstimatorSpec e;
    const std::string kind = detail::get_or<std::string>(j, "kind", "ols");
    if (kind == "ols") e.kind = EstimatorKind::Ols;
    else if (kind == "logistic") e.kind = EstimatorKind::Logistic;
    else throw ValidationError("unknown estimator kind '" + kind + "' (ols or logistic)");
    e.response = j.at("response").get<std::string>();
    e.covariates = detail::get_or(j, "covariates", std::vector<std::string>{});
    if (j.contains("weight_field") && !j.at("weight_field").is_null())
        e.weight_field = j.at("weight_field").get<std::string>();
    return e;
}

inline RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
    detail::reject_unknown_keys(j, {"fixture", "source_a", "source_b", "linking_fields", "agreement_matrix",
                                    "blocking_key", "model", "em", "linking_rule", "estimator", "bootstrap",
                                    "output"},
                                "config");
    RunConfig c;
    try {
        c.base_dir = base_dir;
        if (j.contains("fixture")) c.fixture = j.at("fixture").get<std::string>();
        c.source_a = detail::get_or<std::string>(j, "source_a", "");
        c.source_b = detail::get_or<std::string>(j, "source_b", "");
        if (j.contains("linking_fields")) {
            for (const auto& f : j.at("linking_fields")) {
                LinkingField lf;
                if (f.is_string()) {
                    lf.field_a = lf.field_b = f.get<std::string>();
                } else {
                    detail::reject_unknown_keys(f, {"field", "field_a", "field_b", "comparator"}, "linking_fields");
                    const std::string both = detail::get_or<std::string>(f, "field", "");
                    lf.field_a = detail::get_or(f, "field_a", both);
                    lf.field_b = detail::get_or(f, "field_b", both);
                    lf.kind = parse_comparator(detail::get_or<std::string>(f, "comparator", "exact"));
                }
                if (lf.field_a.empty() || lf.field_b.empty()) throw ValidationError("linking field without a name");
                c.linking_fields.push_back(std::move(lf));
            }
        }
        if (j.contains("agreement_matrix")) c.agreement_matrix = j.at("agreement_matrix").get<std::string>();
        if (j.contains("blocking_key")) {
            const auto& b = j.at("blocking_key");
            if (b.is_string()) c.blocking = BlockingKey{b.get<std::string>(), b.get<std::string>()};
            else c.blocking = BlockingKey{b.at("field_a").get<std::string>(), b.at("field_b").get<std::string>()};
        }
        if (j.contains("model")) c.model = detail::model_from_json(j.at("model"));
        if (j.contains("em")) {
            const auto& e = j.at("em");
            detail::reject_unknown_keys(e, {"init", "expected_matches", "tol", "max_iter"}, "em");
            EmRequest req;
            if (e.contains("init")) req.init = detail::model_from_json(e.at("init"));
            if (e.contains("expected_matches")) req.expected_matches = e.at("expected_matches").get<double>();
            req.options.tol = detail::get_or(e, "tol", req.options.tol);
            req.options.max_iter = detail::get_or(e, "max_iter", req.options.max_iter);
            c.em = req;
        }
        if (j.contains("linking_rule")) {
            const auto& r = j.at("linking_rule");
            detail::reject_unknown_keys(r, {"n_links", "strategy", "mu", "lambda"}, "linking_rule");
            if (r.contains("n_links")) c.rule.n_links = r.at("n_links").get<std::size_t>();
            c.rule.strategy = parse_strategy(detail::get_or<std::string>(r, "strategy", "greedy"));
            if (r.contains("mu")) c.rule.mu = r.at("mu").get<double>();
            if (r.contains("lambda")) c.rule.lambda = r.at("lambda").get<double>();
        }
        if (j.contains("estimator")) c.estimator = estimator_from_json(j.at("estimator"));
        if (j.contains("bootstrap")) {
            c.bootstrap = bootstrap_from_json(j.at("bootstrap"));
            c.seed_given = j.at("bootstrap").contains("seed");
        }
        if (j.contains("output")) c.output = j.at("output").get<std::string>();
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config '" + path + "'");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ValidationError(path + ": " + e.what());
    }
    return run_config_from_json(j, std::filesystem::path(path).parent_path());
}

// Resolved configuration with every default filled in, as echoed in reports.
inline Json to_json(const RunConfig& c) {
    Json j;
    if (c.fixture) j["fixture"] = *c.fixture;
    if (!c.source_a.empty()) j["source_a"] = c.source_a;
    if (!c.source_b.empty()) j["source_b"] = c.source_b;
    if (!c.linking_fields.empty()) {
        Json fields = Json::array();
        for (const auto& f : c.linking_fields)
            fields.push_back({{"field_a", f.field_a}, {"field_b", f.field_b}, {"comparator", comparator_name(f.kind)}});
        j["linking_fields"] = fields;
    }
    if (c.agreement_matrix) j["agreement_matrix"] = *c.agreement_matrix;
    if (c.blocking) j["blocking_key"] = {{"field_a", c.blocking->field_a}, {"field_b", c.blocking->field_b}};
    if (c.model) j["model"] = to_json(*c.model);
    if (c.em) {
        Json e;
        if (c.em->init) e["init"] = to_json(*c.em->init);
        if (c.em->expected_matches) e["expected_matches"] = *c.em->expected_matches;
        e["tol"] = c.em->options.tol;
        e["max_iter"] = c.em->options.max_iter;
        j["em"] = e;
    }
    Json r;
    if (c.rule.n_links) r["n_links"] = *c.rule.n_links;
    r["strategy"] = strategy_name(c.rule.strategy);
    if (c.rule.mu) r["mu"] = *c.rule.mu;
    if (c.rule.lambda) r["lambda"] = *c.rule.lambda;
    j["linking_rule"] = r;
    j["estimator"] = to_json(c.estimator);
    j["bootstrap"] = to_json(c.bootstrap);
    if (c.output) j["output"] = *c.output;
    return j;
}

} // namespace linkcorr
