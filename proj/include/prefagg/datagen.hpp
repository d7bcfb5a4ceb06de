#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "prefagg/common.hpp"
#include "prefagg/population.hpp"

namespace prefagg {

// Distribution of the feature difference X between the two alternatives of
// a comparison. All variants are symmetric under X -> -X (the item catalog
// by the exchangeable pair swap applied during generation).
class DiffDistribution {
public:
    enum class Kind { Gaussian, UniformBall, ItemCatalog };
    enum class Pairing { WithReplacement, WithoutReplacement };

    static DiffDistribution gaussian(Matrix covariance);
    static DiffDistribution uniform_ball(double radius, int dim);
    static DiffDistribution item_catalog(std::vector<Vector> features, Pairing pairing);

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }
    Pairing pairing() const { return pairing_; }
    const std::vector<Vector>& features() const;
    const Matrix& covariance() const;
    double radius() const { return radius_; }

    // One continuous draw (Gaussian or UniformBall kinds).
    Vector sample(Rng& rng) const;

    nlohmann::json to_json() const;
    static DiffDistribution from_json(const nlohmann::json& j);
    std::string digest() const;

private:
    DiffDistribution() = default;
    Kind kind_ = Kind::Gaussian;
    int dim_ = 0;
    Matrix cov_, transform_;
    double radius_ = 0.0;
    std::vector<Vector> features_;
    Pairing pairing_ = Pairing::WithReplacement;
};

struct PreferenceRecord {
    Vector x;                                     // feature difference
    int y = 0;                                    // 1 iff the first alternative was chosen
    std::optional<int> user_id;                   // panel index, if any
    std::optional<std::pair<int, int>> item_ids;  // catalog indices, if any
};

struct PanelSpec {
    int n_users = 0;
    int pairs_per_user = 0;
};

struct Provenance {
    std::uint64_t seed = 0;
    std::string population_digest;
    std::string diff_digest;
    std::optional<PanelSpec> panel;
};

struct Dataset {
    std::vector<PreferenceRecord> records;
    int dim = 0;
    Provenance provenance;

    long n() const { return static_cast<long>(records.size()); }
};

// P(first alternative chosen) = sigma(x' beta); stable over the full range.
double choice_probability(const Vector& diff, const Vector& beta);

struct ProbEstimate {
    double value = 0.0;
    double std_error = 0.0;  // zero when the computation is exact
};

// Marginal choice probability over the user population. Exact weighted sum
// for discrete populations; Monte Carlo (n_mc draws) for Gaussian ones.
ProbEstimate population_choice_probability(const Vector& diff, const PopulationSpec& spec,
                                           long n_mc = 0, std::uint64_t seed = 0);

// Deterministic quadrature path for Gaussian populations (64-node
// Gauss-Hermite on the 1-D projected integral).
double population_choice_probability_quadrature(const Vector& diff, const PopulationSpec& spec);

Dataset generate(const PopulationSpec& spec, const DiffDistribution& diffs, long n,
                 const std::optional<PanelSpec>& panel, std::uint64_t seed);

struct PanelDraw {
    Dataset dataset;
    std::vector<Vector> user_betas;
    std::vector<int> user_atoms;  // atom index per user; empty for Gaussian populations
};

// Panel generation that additionally reports each user's sampled utility
// vector (used by clustering diagnostics). generate() with a panel delegates
// here, so both produce identical datasets for identical seeds.
PanelDraw generate_panel_with_users(const PopulationSpec& spec, const DiffDistribution& diffs,
                                    const PanelSpec& panel, std::uint64_t seed);

// JSON-lines format: one header object, then one object per record.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace prefagg
