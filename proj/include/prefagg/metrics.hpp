#pragma once

#include <vector>

#include "prefagg/common.hpp"
#include "prefagg/datagen.hpp"
#include "prefagg/population.hpp"

namespace prefagg {

// Angle in radians between two nonzero vectors; inner product clamped to
// [-1,1] before arccos.
double angle(const Vector& a, const Vector& b);

struct DisagreementReport {
    double rate = 0.0;  // fraction of evaluated pairs with opposite signs
    long n_pairs = 0;   // pairs entering the rate
    long n_ties = 0;    // pairs with an exactly zero inner product (excluded)
};

// Disagreement over an explicit list of feature differences.
DisagreementReport disagreement_rate(const Vector& mu_hat, const Vector& mu_bar,
                                     const std::vector<Vector>& diffs);

// Disagreement over the item pairs of a catalog: exhaustive for catalogs of
// up to `exhaustive_limit` items, uniformly sampled otherwise.
DisagreementReport disagreement_rate_catalog(const Vector& mu_hat, const Vector& mu_bar,
                                             const DiffDistribution& catalog,
                                             long sample_pairs = 200000, std::uint64_t seed = 0,
                                             long exhaustive_limit = 2000);

struct MonteCarloEstimate {
    double value = 0.0;
    double std_error = 0.0;
    long n = 0;
};

// Monte Carlo estimate of the population 0-1 excess risk of theta relative
// to mu_bar. Discrete populations use exact choice probabilities per draw;
// Gaussian populations use the quadrature path.
MonteCarloEstimate excess_risk_01(const Vector& theta, const Vector& mu_bar,
                                  const PopulationSpec& spec, const DiffDistribution& diffs,
                                  long n_mc, std::uint64_t seed);

struct MetricReport {
    double angle_degrees = 0.0;
    double disagreement_rate = 0.0;
    double excess_risk = 0.0;
    long n_pairs_evaluated = 0;
};

}  // namespace prefagg
