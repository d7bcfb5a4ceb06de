#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "prefagg/common.hpp"
#include "prefagg/datagen.hpp"

namespace prefagg {

struct OptimConfig {
    double learning_rate = 0.01;
    int batch_size = 128;
    int max_epochs = 30;
    std::uint64_t seed = 0;
    std::optional<int> early_stop_patience;  // epochs without improvement
    double validation_fraction = 0.0;

    void validate() const;
    nlohmann::json to_json() const;
    static OptimConfig from_json(const nlohmann::json& j);
};

// Temperature schedule for the smoothed sign objective. Annealing steps per
// mini-batch by default; per-epoch stepping is selectable.
struct LambdaSchedule {
    double initial = 1.0;
    double maximum = 15.0;
    double growth_factor = 1.02;
    enum class StepUnit { PerBatch, PerEpoch } step_unit = StepUnit::PerBatch;

    void validate() const;
    nlohmann::json to_json() const;
    static LambdaSchedule from_json(const nlohmann::json& j);
};

struct Estimate {
    Vector beta_hat;
    Vector mu_hat;  // beta_hat normalized to unit length
    std::vector<std::pair<int, double>> loss_trace;
    bool converged = false;
    std::optional<double> final_lambda;
    double final_grad_norm = std::numeric_limits<double>::quiet_NaN();  // diagnostic

    nlohmann::json to_json() const;
};

// Mean of -[y log sigma(x't) + (1-y) log(1-sigma(x't))] over the dataset.
double cross_entropy_loss(const Vector& theta, const Dataset& ds);
Vector cross_entropy_gradient(const Vector& theta, const Dataset& ds);

// Mean of -(2y-1) * (2 sigma(lambda x't) - 1); smooth stand-in for the 0-1
// objective, exact in the lambda -> infinity limit.
double sign_surrogate_loss(const Vector& theta, const Dataset& ds, double lambda);
Vector sign_surrogate_gradient(const Vector& theta, const Dataset& ds, double lambda);

// Exact 0-1 objective, sign(0) := 0.
double sign_empirical_loss(const Vector& theta, const Dataset& ds);

// Mini-batch SGD on the cross-entropy loss from theta = 0.
Estimate fit_rlhf(const Dataset& ds, const OptimConfig& cfg);

// Annealed mini-batch SGD on the smoothed sign objective; theta kept on the
// unit sphere by per-epoch renormalization.
Estimate fit_sign(const Dataset& ds, const OptimConfig& cfg, const LambdaSchedule& sched);

struct EmResult {
    std::vector<Vector> components;   // cluster centers, length k
    std::map<int, int> assignments;   // user id -> cluster index
    Vector beta_em;                   // user-count-weighted mean of centers
    Vector beta_em_unweighted;        // plain mean of centers (diagnostic)
    int iterations = 0;
};

// Hard-assignment EM over panel data: E-step assigns each user to the
// center minimizing that user's summed cross-entropy, M-step refits each
// cluster with fit_rlhf. Stops when assignments repeat or after 50 rounds.
EmResult fit_em(const Dataset& ds, int k, const OptimConfig& cfg, Rng& rng);

}  // namespace prefagg
