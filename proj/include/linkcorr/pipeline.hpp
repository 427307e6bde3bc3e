#pragma once

// End-to-end runs driven by a RunConfig: load sources, compare, obtain the
// match model, link, and correct estimates for linkage error.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "agreement.hpp"
#include "config.hpp"
#include "em.hpp"
#include "error.hpp"
#include "estimators.hpp"
#include "fixtures/hormone.hpp"
#include "linking.hpp"
#include "resampling.hpp"
#include "stopping_test.hpp"
#include "table.hpp"

namespace linkcorr {

struct Inputs {
    std::shared_ptr<const RecordTable> source_a;
    std::shared_ptr<const RecordTable> source_b;
    AgreementMatrix gamma;
};

inline RunConfig hormone_run_config() {
    RunConfig c;
    c.fixture = "hormone";
    c.model = hormone::model();
    c.rule.n_links = hormone::kLinks;
    c.estimator = hormone::estimator_spec();
    // B = C = D = 100 throughout the scenario, so the rule's B is capped there.
    c.bootstrap.max_B = 100;
    return c;
}

inline Inputs load_inputs(const RunConfig& cfg) {
    Inputs in;
    if (cfg.fixture) {
        if (*cfg.fixture != "hormone") throw ValidationError("unknown fixture '" + *cfg.fixture + "'");
        in.source_a = hormone::source_a();
        in.source_b = hormone::source_b();
        in.gamma = hormone::gamma();
        return in;
    }
    in.source_a = std::make_shared<const RecordTable>(read_csv(cfg.resolve(cfg.source_a)));
    in.source_b = std::make_shared<const RecordTable>(read_csv(cfg.resolve(cfg.source_b)));
    if (in.source_a->empty()) throw ValidationError("source A '" + cfg.source_a + "' has no records");
    if (in.source_b->empty()) throw ValidationError("source B '" + cfg.source_b + "' has no records");
    if (cfg.agreement_matrix) {
        in.gamma = agreement_matrix_from_table(read_csv(cfg.resolve(*cfg.agreement_matrix)), in.source_a->size(),
                                               in.source_b->size());
    } else {
        in.gamma = build_agreement_matrix(*in.source_a, *in.source_b, cfg.linking_fields, cfg.blocking);
    }
    return in;
}

inline EmResult run_em(const RunConfig& cfg, const AgreementMatrix& gamma) {
    if (!cfg.em) throw ValidationError("config has no \"em\" section");
    const std::size_t n_min = std::min(gamma.n_a(), gamma.n_b());
    const double expected = cfg.em->expected_matches.value_or(
        static_cast<double>(cfg.rule.n_links.value_or(n_min)));
    const MatchModel init = cfg.em->init.value_or(default_em_init(gamma.num_fields(), gamma.rows(), expected));
    return estimate_match_model_em(gamma, init, cfg.em->options);
}

inline MatchModel resolve_model(const RunConfig& cfg, const AgreementMatrix& gamma) {
    if (cfg.model) {
        if (cfg.model->num_fields() != gamma.num_fields())
            throw ValidationError("model has " + std::to_string(cfg.model->num_fields()) +
                                  " fields but the agreement matrix has " + std::to_string(gamma.num_fields()));
        return *cfg.model;
    }
    return run_em(cfg, gamma).model;
}

struct LinkOutcome {
    ScoredPairSet scored;
    LinkedDataset linked;
    std::optional<Classification> classification;
};

inline LinkOutcome link_records(const RunConfig& cfg, const Inputs& in, const MatchModel& model) {
    LinkOutcome out;
    out.scored = score_pairs(in.gamma, model);
    if (cfg.rule.n_links) {
        out.linked = link_one_to_one(out.scored, *cfg.rule.n_links, cfg.rule.strategy);
    } else {
        out.classification = classify_pairs(out.scored, *cfg.rule.mu, *cfg.rule.lambda);
        out.linked = link_matched(out.scored, *out.classification);
    }
    out.linked.records_a = in.source_a;
    out.linked.records_b = in.source_b;
    return out;
}

struct CorrectionRun {
    MatchModel model;
    LinkedDataset linked;
    std::vector<std::string> names;
    CorrectionReport report;
};

// Links, then runs the iterated bootstrap correction on the linked sample.
// Bootstrap relinks keep the linked-set size; the threshold rule is replaced
// by 1-1 linking of that many pairs.
inline CorrectionRun run_correction(const RunConfig& cfg, const Inputs& in) {
    cfg.validate();
    CorrectionRun run;
    run.model = resolve_model(cfg, in.gamma);
    const LinkOutcome lo = link_records(cfg, in, run.model);
    run.linked = lo.linked;
    if (run.linked.pairs.empty()) throw ValidationError("linking produced no pairs");

    AgreementMatrix partitioned = in.gamma;
    partitioned.set_partition(run.linked.pair_indices());
    auto bound = std::make_shared<const BoundEstimator>(cfg.estimator, *in.source_a, *in.source_b);
    run.names = bound->names();
    const AmbisEngine engine(partitioned, run.model,
                             [bound](std::span<const LinkedPair> pairs) { return (*bound)(pairs); },
                             cfg.rule.strategy);
    run.report = run_correction_loop(engine, run.names, cfg.bootstrap);
    return run;
}

} // namespace linkcorr
