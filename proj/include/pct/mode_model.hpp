#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pct {

inline constexpr std::size_t kModelTerms = 7;

/// Feature vector in coefficient order: (1, d, sqrt d, d^2, h, d*h, sqrt d*h).
using DesignRow = std::array<double, kModelTerms>;

/// Logit-scale coefficients of the baseline propensity model.
/// d is fast-route distance in km, h is mean route gradient in percent.
struct ModelCoefficients {
    double alpha = 0.0;
    double beta_d = 0.0;
    double beta_sqrt_d = 0.0;
    double beta_d2 = 0.0;
    double gamma_h = 0.0;
    double gamma_dh = 0.0;
    double gamma_sqrtdh = 0.0;

    std::array<double, kModelTerms> as_array() const noexcept;
    static ModelCoefficients from_array(const std::array<double, kModelTerms> &values) noexcept;

    friend bool operator==(const ModelCoefficients &, const ModelCoefficients &) = default;
};

/// Key names used in coefficient files, in design-row order.
inline constexpr std::array<std::string_view, kModelTerms> kCoefficientNames = {
    "alpha", "beta_d", "beta_sqrt_d", "beta_d2", "gamma_h", "gamma_dh", "gamma_sqrtdh"};

/// Grouped-binomial observation: n_cycle successes out of n_all commuters.
struct TrainingObservation {
    double d_km = 0.0;
    double h_pct = 0.0;
    double n_all = 0.0;
    double n_cycle = 0.0;
};

DesignRow design_row(double d_km, double h_pct);
double linear_predictor(const ModelCoefficients &coeffs, double d_km, double h_pct);
double predict_pcycle(const ModelCoefficients &coeffs, double d_km, double h_pct);

double logistic(double x) noexcept;
double logit(double p) noexcept;

struct FitOptions {
    /// Terms excluded from the fit are held at zero.
    std::array<bool, kModelTerms> active{true, true, true, true, true, true, true};
    int max_iterations = 100;
    double tolerance = 1e-8;
    /// Observations with d_km >= this are dropped before fitting.
    double max_distance_km = 30.0;
};

struct FitReport {
    int iterations = 0;
    double log_likelihood = 0.0;
    std::size_t observations_used = 0;
};

/// Maximum-likelihood fit by iteratively reweighted least squares.
/// Throws FitError on separation, a singular system, or non-convergence.
ModelCoefficients fit_logistic(std::span<const TrainingObservation> observations, const FitOptions &options = {},
                               FitReport *report = nullptr);

/// Grouped-binomial log-likelihood without the combinatorial constant.
double log_likelihood(const ModelCoefficients &coeffs, std::span<const TrainingObservation> observations);
std::array<double, kModelTerms> log_likelihood_gradient(const ModelCoefficients &coeffs,
                                                        std::span<const TrainingObservation> observations);

struct CurvePoint {
    double d_km = 0.0;
    double p = 0.0;
};

std::vector<CurvePoint> decay_curve(const ModelCoefficients &coeffs, double h_pct, std::span<const double> d_grid);

/// Coefficient files are JSON objects keyed by kCoefficientNames; missing keys are 0.
ModelCoefficients parse_coefficients(std::string_view text);
ModelCoefficients read_coefficients(const std::string &path);
std::string serialize_coefficients(const ModelCoefficients &coeffs);

} // namespace pct
