// Command-line front end: link, em, correct, reproduce-hormone.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "linkcorr/linkcorr.hpp"

namespace lc = linkcorr;

namespace {

constexpr std::uint64_t kDefaultHormoneSeed = 1;

struct CommonOptions {
    std::string config;
    std::string fixture;
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    std::optional<int> depth;
    std::string out;
};

lc::RunConfig load_config(const CommonOptions& o) {
    if (!o.config.empty() && !o.fixture.empty()) throw lc::ValidationError("use either --config or --fixture, not both");
    if (!o.fixture.empty()) {
        if (o.fixture != "hormone") throw lc::ValidationError("unknown fixture '" + o.fixture + "'");
        return lc::hormone_run_config();
    }
    if (o.config.empty()) throw lc::ValidationError("--config or --fixture is required");
    return lc::load_run_config(o.config);
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw lc::ValidationError("cannot write '" + path + "'");
    f << text;
    if (!f) throw lc::ValidationError("write to '" + path + "' failed");
}

std::string dump(const lc::Json& j) { return j.dump(2) + "\n"; }

lc::Json quantiles(std::vector<double> w) {
    lc::Json q;
    if (w.empty()) return q;
    for (double p : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        std::ostringstream key;
        key << "q" << static_cast<int>(std::lround(p * 100));
        q[key.str()] = lc::percentile(w, p);
    }
    return q;
}

// Seed precedence: flag, then config, then a fresh draw that is announced.
void apply_seed(lc::RunConfig& cfg, const std::optional<std::uint64_t>& flag) {
    if (flag) {
        cfg.bootstrap.seed = *flag;
    } else if (!cfg.seed_given) {
        std::random_device rd;
        cfg.bootstrap.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        std::cerr << "seed: " << cfg.bootstrap.seed << "\n";
    }
    cfg.seed_given = true;
}

int cmd_link(const CommonOptions& o, const std::string& summary_path) {
    lc::RunConfig cfg = load_config(o);
    cfg.validate();
    const lc::Inputs in = lc::load_inputs(cfg);
    const lc::MatchModel model = lc::resolve_model(cfg, in.gamma);
    const lc::LinkOutcome lo = lc::link_records(cfg, in, model);

    std::ostringstream csv;
    lc::write_linked_csv(csv, lo.linked);
    const std::string out = !o.out.empty() ? o.out : cfg.output ? cfg.resolve(*cfg.output) : "";
    write_text(out, csv.str());

    std::vector<double> linked_w;
    for (const auto& p : lo.linked.pairs) linked_w.push_back(p.weight);
    lc::Json s{{"n_A", in.gamma.n_a()},
               {"n_B", in.gamma.n_b()},
               {"L", in.gamma.num_fields()},
               {"candidate_pairs", lo.scored.size()},
               {"linked_pairs", lo.linked.size()},
               {"model", lc::to_json(model)},
               {"candidate_weight_quantiles", quantiles(lo.scored.weights)},
               {"linked_weight_quantiles", quantiles(linked_w)}};
    if (lo.classification) {
        s["cutoffs"] = {{"w_unmatched", lc::detail::number(lo.classification->cutoffs.w_unmatched)},
                        {"w_matched", lc::detail::number(lo.classification->cutoffs.w_matched)}};
    }
    if (!summary_path.empty()) write_text(summary_path, dump(s));
    else if (out.empty() || out == "-") std::cerr << dump(s);
    else std::cout << dump(s);
    return 0;
}

int cmd_em(const CommonOptions& o) {
    lc::RunConfig cfg = load_config(o);
    if (!cfg.em) cfg.em = lc::EmRequest{};
    const lc::Inputs in = lc::load_inputs(cfg);
    const lc::EmResult r = lc::run_em(cfg, in.gamma);
    const lc::Json j{{"model", lc::to_json(r.model)},
                     {"converged", r.converged},
                     {"iterations", r.iterations},
                     {"log_likelihood", r.log_likelihood},
                     {"monotone", r.monotone}};
    write_text(o.out, dump(j));
    return 0;
}

int cmd_correct(const CommonOptions& o, std::optional<std::size_t> max_b, bool timing, bool table) {
    lc::RunConfig cfg = load_config(o);
    apply_seed(cfg, o.seed);
    if (o.depth) cfg.bootstrap.max_order = *o.depth;
    if (max_b) cfg.bootstrap.max_B = *max_b;
    cfg.bootstrap.threads = o.threads;
    const lc::Inputs in = lc::load_inputs(cfg);
    const lc::CorrectionRun run = lc::run_correction(cfg, in);
    const std::string out = !o.out.empty() ? o.out : cfg.output ? cfg.resolve(*cfg.output) : "";
    write_text(out, dump(lc::to_json(run.report, lc::to_json(cfg), timing)));
    if (table) lc::print_report_table(out.empty() || out == "-" ? std::cerr : std::cout, run.report);
    return 0;
}

struct Check {
    std::string name;
    bool pass;
};

int cmd_reproduce(const CommonOptions& o, bool timing) {
    lc::RunConfig cfg = lc::hormone_run_config();
    cfg.bootstrap.seed = o.seed.value_or(kDefaultHormoneSeed);
    cfg.seed_given = true;
    if (o.depth) cfg.bootstrap.max_order = *o.depth;
    cfg.bootstrap.threads = o.threads;
    const lc::hormone::Reference ref;

    const auto truth = lc::evaluate(cfg.estimator, lc::hormone::correct_set());
    const auto biased = lc::evaluate(cfg.estimator, lc::hormone::incorrect_set());
    const lc::CorrectionRun run = lc::run_correction(cfg, lc::load_inputs(cfg));
    const auto& pi = run.report.parameters.at(0);
    const auto& ps = run.report.parameters.at(1);

    auto fmt = [](double v, int prec) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(prec) << v;
        return s.str();
    };
    auto iv = [&](double lo, double hi, int prec) { return "(" + fmt(lo, prec) + ", " + fmt(hi, prec) + ")"; };
    auto line = [](const std::string& label, const std::string& a, const std::string& b) {
        std::cout << std::left << std::setw(26) << label << std::setw(40) << a << b << "\n";
    };

    std::cout << "Hormone data: regression of amount on hours worn (seed " << cfg.bootstrap.seed << ")\n\n";
    line("", "intercept: this run | reference", "slope: this run | reference");
    line("true estimate", fmt(truth[0], 2) + " | " + fmt(ref.true_intercept, 2),
         fmt(truth[1], 4) + " | " + fmt(ref.true_slope, 3));
    line("biased estimate", fmt(biased[0], 2) + " | " + fmt(ref.biased_intercept, 2),
         fmt(biased[1], 4) + " | " + fmt(ref.biased_slope, 3));
    line("k", std::to_string(pi.k) + (pi.accepted ? "" : "*") + " | " + std::to_string(ref.k_intercept),
         std::to_string(ps.k) + (ps.accepted ? "" : "*") + " | " + std::to_string(ref.k_slope));
    line("B", std::to_string(pi.B_max) + " | " + std::to_string(ref.B_intercept),
         std::to_string(ps.B_max) + " | " + std::to_string(ref.B_slope));
    line("delta", fmt(pi.delta, 3) + " | " + fmt(ref.delta_intercept, 2),
         fmt(ps.delta, 5) + " | " + fmt(ref.delta_slope, 4));
    line("delta 95% interval",
         iv(pi.delta_interval.first, pi.delta_interval.second, 2) + " | " +
             iv(ref.delta_lo_intercept, ref.delta_hi_intercept, 2),
         iv(ps.delta_interval.first, ps.delta_interval.second, 4) + " | " +
             iv(ref.delta_lo_slope, ref.delta_hi_slope, 4));
    line("corrected estimate", fmt(pi.corrected, 2) + " | " + fmt(ref.corrected_intercept, 2),
         fmt(ps.corrected, 4) + " | " + fmt(ref.corrected_slope, 3));
    line("corrected 95% interval",
         iv(pi.corrected_interval.first, pi.corrected_interval.second, 2) + " | " +
             iv(ref.corrected_lo_intercept, ref.corrected_hi_intercept, 2),
         iv(ps.corrected_interval.first, ps.corrected_interval.second, 4) + " | " +
             iv(ref.corrected_lo_slope, ref.corrected_hi_slope, 3));
    std::cout << "(* = no stop detected by k=" << cfg.bootstrap.max_order << ")\n\nCI-test trace\n";
    for (const auto& p : run.report.parameters) {
        for (const auto& t : p.trace) {
            std::cout << "  " << std::left << std::setw(10) << p.name << " k=" << t.k << "  B=" << t.B_chosen
                      << (t.B_capped ? " (capped)" : "") << "  delta=" << t.delta;
            if (t.test)
                std::cout << "  CI=(" << t.test->lower << ", " << t.test->upper << ")"
                          << (t.test->contains_zero ? " contains 0" : " excludes 0");
            else std::cout << "  degenerate variance, stop";
            std::cout << "\n";
        }
    }

    const std::vector<Check> checks{
        {"true row within 0.005", std::abs(truth[0] - ref.true_intercept) <= 0.005 &&
                                      std::abs(truth[1] - ref.true_slope) <= 0.005},
        {"biased row within 0.005", std::abs(biased[0] - ref.biased_intercept) <= 0.005 &&
                                        std::abs(biased[1] - ref.biased_slope) <= 0.005},
        {"corrected slope within 0.006 of -0.058", std::abs(ps.corrected - ref.corrected_slope) <= 0.006},
        {"corrected slope closer to truth than biased",
         std::abs(ps.corrected - ref.true_slope) < std::abs(ref.biased_slope - ref.true_slope)},
        {"corrected intercept inside (30.84, 35.42)",
         pi.corrected > ref.corrected_lo_intercept && pi.corrected < ref.corrected_hi_intercept},
    };
    std::cout << "\n";
    lc::Json jc = lc::Json::array();
    for (const auto& c : checks) {
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "\n";
        jc.push_back({{"check", c.name}, {"pass", c.pass}});
    }

    if (!o.out.empty()) {
        lc::Json j{{"true_estimate", truth},
                   {"biased_estimate", biased},
                   {"report", lc::to_json(run.report, lc::to_json(cfg), timing)},
                   {"checks", jc}};
        write_text(o.out, dump(j));
    }
    return 0;
}

void add_common(CLI::App* app, CommonOptions& o, bool with_config) {
    if (with_config) {
        app->add_option("--config", o.config, "Run configuration (JSON)");
        app->add_option("--fixture", o.fixture, "Bundled fixture instead of a config")->check(CLI::IsMember({"hormone"}));
    }
    app->add_option("--seed", o.seed, "Master seed (u64)");
    app->add_option("--threads", o.threads, "Worker threads")->check(CLI::Range(1u, 1024u));
    app->add_option("--depth", o.depth, "Highest correction order")->check(CLI::Range(1, 3));
    app->add_option("--out", o.out, "Output path ('-' for stdout)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Linkage-error bias correction for estimates on probabilistically linked data"};
    app.require_subcommand(1);

    CommonOptions link_o, em_o, correct_o, repro_o;
    std::string summary_path;
    auto* link = app.add_subcommand("link", "Link two sources and write the linked pairs as CSV");
    add_common(link, link_o, true);
    link->add_option("--summary", summary_path, "Write the JSON summary here");

    auto* em = app.add_subcommand("em", "Estimate the match model by EM");
    add_common(em, em_o, true);

    std::optional<std::size_t> max_b;
    bool timing = false, table = false;
    auto* correct = app.add_subcommand("correct", "Iterated bootstrap bias correction");
    add_common(correct, correct_o, true);
    correct->add_option("--max-b", max_b, "Cap on the replicate count chosen per order")->check(CLI::PositiveNumber);
    correct->add_flag("--timing", timing, "Include wall-clock runtime in the report");
    correct->add_flag("--table", table, "Also print a plain-text table");

    auto* repro = app.add_subcommand("reproduce-hormone", "Run the hormone scenario against its reference values");
    add_common(repro, repro_o, false);
    repro->add_flag("--timing", timing, "Include wall-clock runtime in the JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*link) return cmd_link(link_o, summary_path);
        if (*em) return cmd_em(em_o);
        if (*correct) return cmd_correct(correct_o, max_b, timing, table);
        if (*repro) return cmd_reproduce(repro_o, timing);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
