#include "pct/mode_model.hpp"

#include "pct/error.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace pct {

std::array<double, kModelTerms> ModelCoefficients::as_array() const noexcept {
    return {alpha, beta_d, beta_sqrt_d, beta_d2, gamma_h, gamma_dh, gamma_sqrtdh};
}

ModelCoefficients ModelCoefficients::from_array(const std::array<double, kModelTerms> &v) noexcept {
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
}

DesignRow design_row(double d_km, double h_pct) {
    if (!(d_km > 0.0) || !std::isfinite(d_km)) {
        throw ValidationError(fmt::format("distance must be positive, got {}", d_km));
    }
    if (!(h_pct >= 0.0) || !std::isfinite(h_pct)) {
        throw ValidationError(fmt::format("gradient must be non-negative, got {}", h_pct));
    }
    const double root = std::sqrt(d_km);
    return {1.0, d_km, root, d_km * d_km, h_pct, d_km * h_pct, root * h_pct};
}

double linear_predictor(const ModelCoefficients &coeffs, double d_km, double h_pct) {
    const auto row = design_row(d_km, h_pct);
    const auto beta = coeffs.as_array();
    double eta = 0.0;
    for (std::size_t j = 0; j < kModelTerms; ++j) {
        eta += beta[j] * row[j];
    }
    return eta;
}

double logistic(double x) noexcept {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) noexcept { return std::log(p) - std::log1p(-p); }

double predict_pcycle(const ModelCoefficients &coeffs, double d_km, double h_pct) {
    return logistic(linear_predictor(coeffs, d_km, h_pct));
}

namespace {

constexpr double kSeparationEta = 20.0;

std::string separation_message(int iteration, double max_eta) {
    return fmt::format("perfect separation suspected at iteration {}: |linear predictor| reached {:.1f}", iteration,
                       max_eta);
}

// log(1 + e^x) without overflow.
double softplus(double x) noexcept { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void check_observation(const TrainingObservation &o) {
    if (!(o.n_all >= 0.0) || !(o.n_cycle >= 0.0) || o.n_cycle > o.n_all) {
        throw ValidationError(
            fmt::format("observation needs 0 <= n_cycle <= n_all, got {} of {}", o.n_cycle, o.n_all));
    }
    // design_row checks d and h
    (void)design_row(o.d_km, o.h_pct);
}

} // namespace

double log_likelihood(const ModelCoefficients &coeffs, std::span<const TrainingObservation> observations) {
    double ll = 0.0;
    for (const auto &o : observations) {
        const double eta = linear_predictor(coeffs, o.d_km, o.h_pct);
        ll += o.n_cycle * eta - o.n_all * softplus(eta);
    }
    return ll;
}

std::array<double, kModelTerms> log_likelihood_gradient(const ModelCoefficients &coeffs,
                                                        std::span<const TrainingObservation> observations) {
    std::array<double, kModelTerms> grad{};
    for (const auto &o : observations) {
        const auto row = design_row(o.d_km, o.h_pct);
        const double p = predict_pcycle(coeffs, o.d_km, o.h_pct);
        const double resid = o.n_cycle - o.n_all * p;
        for (std::size_t j = 0; j < kModelTerms; ++j) {
            grad[j] += row[j] * resid;
        }
    }
    return grad;
}

ModelCoefficients fit_logistic(std::span<const TrainingObservation> observations, const FitOptions &options,
                               FitReport *report) {
    std::vector<TrainingObservation> data;
    data.reserve(observations.size());
    for (const auto &o : observations) {
        check_observation(o);
        if (o.d_km < options.max_distance_km && o.n_all > 0.0) {
            data.push_back(o);
        }
    }
    if (data.size() < 2) {
        throw FitError(fmt::format("need at least 2 observations with trials, got {}", data.size()));
    }
    const auto [dmin, dmax] = std::minmax_element(data.begin(), data.end(),
                                                  [](const auto &a, const auto &b) { return a.d_km < b.d_km; });
    if (dmin->d_km == dmax->d_km) {
        throw FitError("no variation in distance across observations");
    }
    double total_trials = 0.0;
    double total_successes = 0.0;
    for (const auto &o : data) {
        total_trials += o.n_all;
        total_successes += o.n_cycle;
    }
    if (total_successes == 0.0 || total_successes == total_trials) {
        throw FitError(fmt::format("perfect separation: {} of {} commuters cycle", total_successes, total_trials));
    }

    std::vector<std::size_t> active;
    for (std::size_t j = 0; j < kModelTerms; ++j) {
        if (options.active[j]) {
            active.push_back(j);
        }
    }
    if (active.empty()) {
        throw FitError("no active model terms");
    }
    const auto k = static_cast<Eigen::Index>(active.size());

    Eigen::MatrixXd x(static_cast<Eigen::Index>(data.size()), k);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto row = design_row(data[i].d_km, data[i].h_pct);
        for (Eigen::Index c = 0; c < k; ++c) {
            x(static_cast<Eigen::Index>(i), c) = row[active[static_cast<std::size_t>(c)]];
        }
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
    if (options.active[0]) {
        beta(0) = logit(total_successes / total_trials);
    }

    auto objective = [&](const Eigen::VectorXd &b) {
        const Eigen::VectorXd eta = x * b;
        double ll = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double e = eta(static_cast<Eigen::Index>(i));
            ll += data[i].n_cycle * e - data[i].n_all * softplus(e);
        }
        return ll;
    };

    double ll = objective(beta);
    int iteration = 0;
    bool converged = false;
    while (iteration < options.max_iterations) {
        ++iteration;
        const Eigen::VectorXd eta = x * beta;
        Eigen::VectorXd score = Eigen::VectorXd::Zero(k);
        Eigen::MatrixXd info = Eigen::MatrixXd::Zero(k, k);
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            const double p = logistic(eta(r));
            const double w = data[i].n_all * p * (1.0 - p);
            const auto xi = x.row(r);
            score.noalias() += xi.transpose() * (data[i].n_cycle - data[i].n_all * p);
            info.selfadjointView<Eigen::Lower>().rankUpdate(xi.transpose(), w);
        }
        info = info.selfadjointView<Eigen::Lower>();

        // Jacobi scaling: the d^2 column is orders of magnitude larger than the intercept.
        Eigen::VectorXd scale = info.diagonal();
        // Weights vanish as fitted probabilities saturate, so a singular system with
        // a large linear predictor is reported as separation.
        const double max_eta = eta.cwiseAbs().maxCoeff();
        if ((scale.array() <= 0.0).any() || !scale.allFinite()) {
            if (max_eta > kSeparationEta) {
                throw FitError(separation_message(iteration, max_eta));
            }
            throw FitError(fmt::format("singular information matrix at iteration {} (zero-variance term)",
                                       iteration));
        }
        scale = scale.cwiseSqrt().cwiseInverse();
        const Eigen::MatrixXd scaled = scale.asDiagonal() * info * scale.asDiagonal();
        Eigen::LDLT<Eigen::MatrixXd> ldlt(scaled);
        const Eigen::VectorXd pivots = ldlt.vectorD();
        if (ldlt.info() != Eigen::Success || pivots.minCoeff() <= 1e-13 * pivots.maxCoeff()) {
            if (max_eta > kSeparationEta) {
                throw FitError(separation_message(iteration, max_eta));
            }
            throw FitError(fmt::format("singular information matrix at iteration {} (collinear terms)", iteration));
        }
        Eigen::VectorXd step = scale.asDiagonal() * ldlt.solve(scale.asDiagonal() * score);

        double candidate_ll = objective(beta + step);
        for (int halving = 0; halving < 40 && !(candidate_ll >= ll - 1e-12 * std::abs(ll)); ++halving) {
            step *= 0.5;
            candidate_ll = objective(beta + step);
        }
        beta += step;
        ll = candidate_ll;
        if (step.cwiseAbs().maxCoeff() < options.tolerance) {
            converged = true;
            break;
        }
    }

    if (!converged) {
        const double max_eta = (x * beta).cwiseAbs().maxCoeff();
        if (max_eta > kSeparationEta) {
            throw FitError(separation_message(iteration, max_eta));
        }
        throw FitError(fmt::format("did not converge after {} iterations", iteration));
    }

    std::array<double, kModelTerms> full{};
    for (Eigen::Index c = 0; c < k; ++c) {
        full[active[static_cast<std::size_t>(c)]] = beta(c);
    }
    if (report) {
        report->iterations = iteration;
        report->log_likelihood = ll;
        report->observations_used = data.size();
    }
    return ModelCoefficients::from_array(full);
}

std::vector<CurvePoint> decay_curve(const ModelCoefficients &coeffs, double h_pct, std::span<const double> d_grid) {
    std::vector<CurvePoint> curve;
    curve.reserve(d_grid.size());
    for (double d : d_grid) {
        curve.push_back({d, predict_pcycle(coeffs, d, h_pct)});
    }
    return curve;
}

ModelCoefficients parse_coefficients(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error &e) {
        throw ParseError(std::string("coefficient file: ") + e.what());
    }
    if (!doc.is_object()) {
        throw ParseError("coefficient file must be a JSON object");
    }
    std::array<double, kModelTerms> values{};
    for (const auto &[key, value] : doc.items()) {
        auto it = std::find(kCoefficientNames.begin(), kCoefficientNames.end(), key);
        if (it == kCoefficientNames.end()) {
            throw ParseError(fmt::format("coefficient file: unknown key '{}'", key));
        }
        if (!value.is_number() || !std::isfinite(value.get<double>())) {
            throw ParseError(fmt::format("coefficient file: '{}' must be a finite number", key));
        }
        values[static_cast<std::size_t>(it - kCoefficientNames.begin())] = value.get<double>();
    }
    return ModelCoefficients::from_array(values);
}

ModelCoefficients read_coefficients(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open coefficient file " + path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_coefficients(buffer.str());
}

std::string serialize_coefficients(const ModelCoefficients &coeffs) {
    nlohmann::ordered_json doc;
    const auto values = coeffs.as_array();
    for (std::size_t j = 0; j < kModelTerms; ++j) {
        doc[std::string(kCoefficientNames[j])] = values[j];
    }
    return doc.dump(2) + "\n";
}

} // namespace pct
