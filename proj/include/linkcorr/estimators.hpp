#pragma once

// Estimators evaluated on every (re)linked dataset: least squares and logistic
// regression, both with an intercept. Fields are looked up in either source;
// prefix with "A." or "B." when a name exists in both.

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "linking.hpp"
#include "table.hpp"

namespace linkcorr {

enum class EstimatorKind { Ols, Logistic };

struct EstimatorSpec {
    EstimatorKind kind = EstimatorKind::Ols;
    std::string response;
    std::vector<std::string> covariates;
    // Its logarithm enters as the final covariate.
    std::optional<std::string> weight_field;
};

inline std::vector<std::string> parameter_names(const EstimatorSpec& spec) {
    std::vector<std::string> names{"(Intercept)"};
    names.insert(names.end(), spec.covariates.begin(), spec.covariates.end());
    if (spec.weight_field) names.push_back("log(" + *spec.weight_field + ")");
    return names;
}

// Rank tolerance relative to the largest pivot of the column-pivoted QR.
inline constexpr double kRankTolerance = 1e-10;

inline Eigen::VectorXd ols_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                               const std::vector<std::string>& names = {}) {
    const Eigen::Index n = X.rows(), p = X.cols();
    if (y.size() != n) throw ValidationError("response length does not match design rows");
    if (n <= p)
        throw EstimationError("least squares needs more observations (" + std::to_string(n) +
                              ") than parameters (" + std::to_string(p) + ")");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(kRankTolerance);
    if (qr.rank() < p) {
        std::string cols;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index k = qr.rank(); k < p; ++k) {
            const auto c = static_cast<std::size_t>(perm(k));
            if (!cols.empty()) cols += ", ";
            cols += c < names.size() ? names[c] : "column " + std::to_string(c);
        }
        throw EstimationError("rank-deficient design; collinear column(s): " + cols);
    }
    return qr.solve(y);
}

struct LogisticFit {
    Eigen::VectorXd coefficients;
    int iterations = 0;
    bool converged = false;
    std::vector<double> log_likelihood;
};

inline double logistic_log_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = X * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        // log(1 + e^eta) computed stably
        const double e = eta(i);
        const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        ll += y(i) * e - softplus;
    }
    return ll;
}

// IRLS (Newton) with step halving; stops when the largest score component is
// below 1e-8 or the log-likelihood no longer changes at relative precision 1e-12.
inline LogisticFit logistic_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int max_iter = 100) {
    const Eigen::Index n = X.rows(), p = X.cols();
    if (y.size() != n) throw ValidationError("response length does not match design rows");
    for (Eigen::Index i = 0; i < n; ++i)
        if (y(i) != 0.0 && y(i) != 1.0)
            throw ValidationError("logistic regression needs a binary (0/1) response");
    if (n <= p) throw EstimationError("logistic regression needs more observations than parameters");

    LogisticFit fit;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    double ll = logistic_log_likelihood(X, y, beta);
    fit.log_likelihood.push_back(ll);
    Eigen::VectorXd prob(n), w(n);
    auto update_prob = [&] {
        const Eigen::VectorXd eta = X * beta;
        for (Eigen::Index i = 0; i < n; ++i) {
            prob(i) = 1.0 / (1.0 + std::exp(-eta(i)));
            w(i) = prob(i) * (1.0 - prob(i));
        }
    };

    for (int it = 0; it < max_iter && !fit.converged; ++it) {
        update_prob();
        const Eigen::VectorXd score = X.transpose() * (y - prob);
        if (score.cwiseAbs().maxCoeff() < 1e-8) {
            fit.converged = true;
            break;
        }
        const Eigen::MatrixXd info = X.transpose() * w.asDiagonal() * X;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(info);
        qr.setThreshold(kRankTolerance);
        if (qr.rank() < p) throw EstimationError("logistic information matrix is singular");
        const Eigen::VectorXd step = qr.solve(score);

        double t = 1.0;
        Eigen::VectorXd candidate = beta + step;
        double cand_ll = logistic_log_likelihood(X, y, candidate);
        for (int halve = 0; halve < 40 && cand_ll < ll; ++halve) {
            t *= 0.5;
            candidate = beta + t * step;
            cand_ll = logistic_log_likelihood(X, y, candidate);
        }
        if (cand_ll < ll) {
            // No ascent along the Newton direction at machine precision.
            fit.converged = true;
            break;
        }
        fit.converged = cand_ll - ll <= 1e-12 * (std::abs(ll) + 0.1);
        beta = candidate;
        ll = cand_ll;
        fit.log_likelihood.push_back(ll);
        fit.iterations = it + 1;
    }
    update_prob();
    bool separated = true;
    for (Eigen::Index i = 0; i < n && separated; ++i) separated = std::abs(y(i) - prob(i)) < 1e-6;
    if (separated || beta.cwiseAbs().maxCoeff() > 30.0)
        throw EstimationError("separation: fitted probabilities are 0 or 1 and coefficients diverge");
    fit.coefficients = beta;
    return fit;
}

inline std::vector<double> odds_ratios(std::span<const double> coefficients) {
    std::vector<double> out;
    out.reserve(coefficients.size());
    for (double c : coefficients) out.push_back(std::exp(c));
    return out;
}

// Spec bound to the two source tables; evaluates on any list of linked pairs.
class BoundEstimator {
public:
    BoundEstimator(EstimatorSpec spec, const RecordTable& source_a, const RecordTable& source_b)
        : spec_(std::move(spec)), names_(parameter_names(spec_)) {
        response_ = resolve(spec_.response, source_a, source_b);
        for (const auto& c : spec_.covariates) covariates_.push_back(resolve(c, source_a, source_b));
        if (spec_.weight_field) {
            Column wc = resolve(*spec_.weight_field, source_a, source_b);
            for (std::size_t i = 0; i < wc.values.size(); ++i) {
                if (!(wc.values[i] > 0.0))
                    throw ValidationError("weight field '" + *spec_.weight_field + "' must be positive (record " +
                                          std::to_string(i + 1) + ")");
                wc.values[i] = std::log(wc.values[i]);
            }
            covariates_.push_back(std::move(wc));
        }
        if (spec_.kind == EstimatorKind::Logistic) {
            for (double v : response_.values)
                if (v != 0.0 && v != 1.0)
                    throw ValidationError("logistic regression needs a binary (0/1) response; field '" +
                                          spec_.response + "' has value " + format_double(v));
        }
    }

    const EstimatorSpec& spec() const noexcept { return spec_; }
    const std::vector<std::string>& names() const noexcept { return names_; }
    std::size_t dimension() const noexcept { return names_.size(); }

    std::vector<double> operator()(std::span<const LinkedPair> pairs) const {
        const Eigen::Index n = static_cast<Eigen::Index>(pairs.size());
        const Eigen::Index p = static_cast<Eigen::Index>(names_.size());
        Eigen::MatrixXd X(n, p);
        Eigen::VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& pr = pairs[static_cast<std::size_t>(i)];
            X(i, 0) = 1.0;
            for (Eigen::Index c = 1; c < p; ++c) X(i, c) = covariates_[static_cast<std::size_t>(c - 1)].at(pr);
            y(i) = response_.at(pr);
        }
        Eigen::VectorXd beta = spec_.kind == EstimatorKind::Ols ? ols_fit(X, y, names_) : logistic_fit(X, y).coefficients;
        return {beta.data(), beta.data() + beta.size()};
    }

private:
    struct Column {
        bool from_a = true;
        std::vector<double> values;
        double at(const LinkedPair& p) const { return values[from_a ? p.a : p.b]; }
    };

    static Column resolve(const std::string& name, const RecordTable& a, const RecordTable& b) {
        if (name.size() > 2 && (name[0] == 'A' || name[0] == 'B') && name[1] == '.') {
            const bool from_a = name[0] == 'A';
            const std::string field = name.substr(2);
            return Column{from_a, (from_a ? a : b).numeric_column(field)};
        }
        const bool in_a = a.column_index(name).has_value();
        const bool in_b = b.column_index(name).has_value();
        if (in_a && in_b) throw ValidationError("field '" + name + "' is in both sources; qualify it as A." + name + " or B." + name);
        if (!in_a && !in_b) throw ValidationError("field '" + name + "' is in neither source");
        return Column{in_a, (in_a ? a : b).numeric_column(name)};
    }

    EstimatorSpec spec_;
    std::vector<std::string> names_;
    Column response_;
    std::vector<Column> covariates_;
};

inline std::vector<double> evaluate(const EstimatorSpec& spec, const LinkedDataset& data) {
    if (!data.records_a || !data.records_b) throw ValidationError("linked dataset carries no source records");
    const BoundEstimator est(spec, *data.records_a, *data.records_b);
    return est(data.pairs);
}

} // namespace linkcorr
