#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "prefagg/common.hpp"

namespace prefagg {

struct MixtureComponent {
    double weight;
    Vector beta;
};

// Distribution over user utility vectors. Immutable after construction;
// all invariants are checked by the factory functions.
class PopulationSpec {
public:
    enum class Kind { FiniteMixture, Gaussian, TwoType };

    static PopulationSpec finite_mixture(std::vector<MixtureComponent> components);
    static PopulationSpec gaussian(Vector mean, Matrix covariance);
    // Two user types in one dimension: utility +1 with weight alpha and -m
    // with weight 1-alpha.
    static PopulationSpec two_type(double alpha, double m);

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }
    bool is_discrete() const { return kind_ != Kind::Gaussian; }

    // Atom view of a discrete population (TwoType is expanded; components
    // with zero weight are dropped). Throws for Gaussian populations.
    const std::vector<MixtureComponent>& atoms() const;

    const Vector& gaussian_mean() const;
    const Matrix& gaussian_covariance() const;
    // PSD square root used for sampling (eigendecomposition-based, so
    // semidefinite covariances are accepted).
    const Matrix& gaussian_transform() const;
    double two_type_alpha() const;
    double two_type_m() const;

    nlohmann::json to_json() const;
    static PopulationSpec from_json(const nlohmann::json& j);
    std::string digest() const;

private:
    PopulationSpec() = default;

    Kind kind_ = Kind::FiniteMixture;
    int dim_ = 0;
    std::vector<MixtureComponent> atoms_;  // discrete kinds
    Vector mean_;                          // Gaussian
    Matrix cov_;                           // Gaussian
    Matrix transform_;                     // Gaussian PSD sqrt
    double alpha_ = 0.0, m_ = 0.0;         // TwoType
};

Vector mean_beta(const PopulationSpec& spec);

// One draw from the population. Deterministic given the rng state.
Vector sample_user(const PopulationSpec& spec, Rng& rng);

// For discrete populations, the index of the sampled atom. sample_user on a
// discrete population consumes the identical rng stream.
int sample_user_index(const PopulationSpec& spec, Rng& rng);

// True iff the centered distribution of beta - mean is symmetric about zero.
// Gaussian populations always are; finite mixtures are decided by antipodal
// atom matching with the given tolerance (per coordinate, and on weights).
bool is_mean_symmetric(const PopulationSpec& spec, double tol);

// Replaces each beta by mean + s * (beta - mean). The mean is unchanged.
PopulationSpec scale_heterogeneity(const PopulationSpec& spec, double s);

// Named synthetic populations shipped with the harness.
// "fig1-analogue": asymmetric two-atom population (weights 0.75/0.25, d=5)
//   whose low-utility majority drags the cross-entropy fit off the mean
//   direction while the sign objective stays anchored.
// "scale-analogue": symmetric four-atom population with two heterogeneity
//   scales, used by the scale sweep.
// "correlated-pair": symmetric two-atom d=2 population whose centered atoms
//   have correlated parallel and orthogonal parts, biasing the pooled
//   cross-entropy fit despite the symmetry.
// "two-type-panel": skewed variant of correlated-pair used for the panel
//   (EM) comparison.
PopulationSpec named_population(const std::string& name);

}  // namespace prefagg
