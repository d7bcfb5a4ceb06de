#pragma once

#include <utility>
#include <vector>

#include "prefagg/common.hpp"
#include "prefagg/datagen.hpp"
#include "prefagg/estimators.hpp"
#include "prefagg/metrics.hpp"
#include "prefagg/population.hpp"

namespace prefagg {

// Closed-form analysis of the two-type, single-item population: what the
// pooled cross-entropy fit converges to versus the population mean utility,
// and the alpha thresholds at which each changes sign.
struct TwoTypeAnalysis {
    double u_bar = 0.0;                  // population mean utility of item 1
    double u_naive = 0.0;                // pooled logistic fixed point
    double alpha_threshold_naive = 0.0;  // u_naive > 0 iff alpha above this
    double alpha_threshold_mean = 0.0;   // u_bar  > 0 iff alpha above this
};

TwoTypeAnalysis two_type_analysis(double alpha, double m);

// E[f(Z)] for Z ~ N(mean, variance) by 64-node Gauss-Hermite quadrature.
double expected_sigmoid_gauss(double mean, double variance);
double expected_sigmoid_deriv_gauss(double variance);

// Infinite-data direction of the pooled cross-entropy fit for X ~ N(0,
// sigma_x): normalized sum of w(beta) * beta with w(beta) the Monte Carlo
// mean of sigma'(X' beta), common X draws shared across atoms.
Vector reweighted_mean_direction(const PopulationSpec& spec, const Matrix& sigma_x, long n_mc,
                                 std::uint64_t seed);

// Same limit computed independently: full-batch gradient descent on the
// population cross-entropy over fixed Monte Carlo X draws with exact labels.
struct MleDirection {
    Vector direction;
    bool converged = false;
};
MleDirection population_mle_direction(const PopulationSpec& spec, const Matrix& sigma_x, long n_mc,
                                      const OptimConfig& cfg, std::uint64_t seed);

// Exact minimizer of the empirical 0-1 loss over a uniform angular grid on
// the circle (d = 2 datasets only). The empirical loss is piecewise constant
// with at most 2n breakpoints, so n_angles > 4n hits every piece.
Vector grid_sign_minimizer_2d(const Dataset& ds, long n_angles);

struct SignIdentityViolation {
    Vector diff;
    double prob = 0.0;          // population choice probability
    double mean_utility = 0.0;  // mean_beta' diff
};

// Checks sign(mean_beta' x) == sign(P(Y=1|x) - 1/2) over the given diffs.
// sign_identity_check requires a mean-symmetric discrete population;
// sign_identity_violations runs unguarded and reports offenders.
std::vector<SignIdentityViolation> sign_identity_violations(const PopulationSpec& spec,
                                                            const std::vector<Vector>& diffs);
bool sign_identity_check(const PopulationSpec& spec, const std::vector<Vector>& diffs);

// Excess risk along a sweep of angles from the mean direction, all within a
// fixed random 2-plane through it. Feeds the curvature-exponent check.
std::vector<std::pair<double, MonteCarloEstimate>> curvature_probe(
    const PopulationSpec& spec, const DiffDistribution& diffs, const std::vector<double>& angles,
    long n_mc, std::uint64_t seed);

// Least-squares slope of log(y) on log(x); used for rate and curvature fits.
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace prefagg
