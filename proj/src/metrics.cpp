#include "prefagg/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace prefagg {

double angle(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw std::invalid_argument("angle: dimension mismatch");
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("angle: zero vector");
    const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
    return std::acos(c);
}

namespace {

inline int sgn(double t) { return t > 0.0 ? 1 : (t < 0.0 ? -1 : 0); }

void tally(const Vector& x, const Vector& a, const Vector& b, long& pairs, long& ties,
           long& disagreements) {
    const int sa = sgn(x.dot(a));
    const int sb = sgn(x.dot(b));
    if (sa == 0 || sb == 0) {
        ++ties;
        return;
    }
    ++pairs;
    if (sa != sb) ++disagreements;
}

}  // namespace

DisagreementReport disagreement_rate(const Vector& mu_hat, const Vector& mu_bar,
                                     const std::vector<Vector>& diffs) {
    if (mu_hat.norm() == 0.0 || mu_bar.norm() == 0.0)
        throw std::invalid_argument("disagreement_rate: zero direction");
    if (diffs.empty()) throw std::invalid_argument("disagreement_rate: empty diff list");
    long pairs = 0, ties = 0, dis = 0;
    for (const auto& x : diffs) tally(x, mu_hat, mu_bar, pairs, ties, dis);
    DisagreementReport r;
    r.n_pairs = pairs;
    r.n_ties = ties;
    r.rate = pairs > 0 ? static_cast<double>(dis) / static_cast<double>(pairs) : 0.0;
    return r;
}

DisagreementReport disagreement_rate_catalog(const Vector& mu_hat, const Vector& mu_bar,
                                             const DiffDistribution& catalog, long sample_pairs,
                                             std::uint64_t seed, long exhaustive_limit) {
    const auto& feats = catalog.features();
    const long m = static_cast<long>(feats.size());
    long pairs = 0, ties = 0, dis = 0;
    if (m <= exhaustive_limit) {
        for (long i = 0; i < m; ++i) {
            for (long k = i + 1; k < m; ++k) {
                tally(feats[i] - feats[k], mu_hat, mu_bar, pairs, ties, dis);
            }
        }
    } else {
        Rng rng(seed);
        for (long s = 0; s < sample_pairs; ++s) {
            const int i = rng.uniform_int(static_cast<int>(m));
            int k = rng.uniform_int(static_cast<int>(m) - 1);
            if (k >= i) ++k;
            tally(feats[i] - feats[k], mu_hat, mu_bar, pairs, ties, dis);
        }
    }
    DisagreementReport r;
    r.n_pairs = pairs;
    r.n_ties = ties;
    r.rate = pairs > 0 ? static_cast<double>(dis) / static_cast<double>(pairs) : 0.0;
    return r;
}

MonteCarloEstimate excess_risk_01(const Vector& theta, const Vector& mu_bar,
                                  const PopulationSpec& spec, const DiffDistribution& diffs,
                                  long n_mc, std::uint64_t seed) {
    if (n_mc < 1) throw std::invalid_argument("excess_risk_01: n_mc must be >= 1");
    if (theta.size() != spec.dim() || mu_bar.size() != spec.dim())
        throw std::invalid_argument("excess_risk_01: dimension mismatch");
    Rng rng(seed);
    double sum = 0.0, sumsq = 0.0;
    for (long i = 0; i < n_mc; ++i) {
        const Vector x = diffs.sample(rng);
        const double p = spec.is_discrete() ? population_choice_probability(x, spec).value
                                            : population_choice_probability_quadrature(x, spec);
        const double ch = 2.0 * p - 1.0;
        const double term = ch * (sgn(x.dot(mu_bar)) - sgn(x.dot(theta)));
        sum += term;
        sumsq += term * term;
    }
    MonteCarloEstimate e;
    e.n = n_mc;
    e.value = sum / static_cast<double>(n_mc);
    const double var = std::max(0.0, sumsq / static_cast<double>(n_mc) - e.value * e.value);
    e.std_error = std::sqrt(var / static_cast<double>(n_mc));
    return e;
}

}  // namespace prefagg
