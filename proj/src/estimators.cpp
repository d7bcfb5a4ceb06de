#include "prefagg/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace prefagg {

using nlohmann::json;

namespace {

constexpr double kPlateauRelTol = 1e-6;

struct DataView {
    Matrix X;  // n x d
    Vector y;  // labels in {0,1}
    long n() const { return X.rows(); }
};

DataView make_view(const Dataset& ds) {
    if (ds.records.empty()) throw std::invalid_argument("estimator: empty dataset");
    DataView v;
    v.X.resize(ds.n(), ds.dim);
    v.y.resize(ds.n());
    for (long i = 0; i < ds.n(); ++i) {
        const auto& r = ds.records[i];
        if (r.x.size() != ds.dim) throw std::invalid_argument("estimator: record dimension mismatch");
        v.X.row(i) = r.x;
        v.y[i] = r.y;
    }
    return v;
}

double ce_loss(const DataView& v, const std::vector<long>& idx, const Vector& theta) {
    std::vector<double> terms(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const double z = v.X.row(idx[i]).dot(theta);
        terms[i] = softplus(z) - v.y[idx[i]] * z;
    }
    return pairwise_sum(terms) / static_cast<double>(idx.size());
}

double surrogate_loss(const DataView& v, const std::vector<long>& idx, const Vector& theta,
                      double lambda) {
    std::vector<double> terms(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const double z = v.X.row(idx[i]).dot(theta);
        terms[i] = -(2.0 * v.y[idx[i]] - 1.0) * (2.0 * stable_sigmoid(lambda * z) - 1.0);
    }
    return pairwise_sum(terms) / static_cast<double>(idx.size());
}

std::vector<long> all_indices(long n) {
    std::vector<long> idx(n);
    std::iota(idx.begin(), idx.end(), 0L);
    return idx;
}

void shuffle_indices(std::vector<long>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        std::swap(idx[i - 1], idx[rng.uniform_int(static_cast<int>(i))]);
    }
}

// Tracks the plateau criterion: relative decrease below kPlateauRelTol for
// `patience` consecutive epochs.
class PlateauDetector {
public:
    explicit PlateauDetector(std::optional<int> patience) : patience_(patience) {}

    bool feed(double loss) {
        if (!patience_) return false;
        if (has_prev_) {
            const double rel = (prev_ - loss) / std::max(1.0, std::abs(prev_));
            streak_ = rel < kPlateauRelTol ? streak_ + 1 : 0;
        }
        prev_ = loss;
        has_prev_ = true;
        return streak_ >= *patience_;
    }

private:
    std::optional<int> patience_;
    bool has_prev_ = false;
    double prev_ = 0.0;
    int streak_ = 0;
};

struct Split {
    std::vector<long> train;
    std::vector<long> val;
};

Split make_split(long n, double validation_fraction, Rng& rng) {
    Split s;
    std::vector<long> idx = all_indices(n);
    if (validation_fraction <= 0.0) {
        s.train = std::move(idx);
        return s;
    }
    shuffle_indices(idx, rng);
    const long n_val = std::min<long>(n - 1, static_cast<long>(validation_fraction * n));
    s.val.assign(idx.begin(), idx.begin() + n_val);
    s.train.assign(idx.begin() + n_val, idx.end());
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    return s;
}

}  // namespace

void OptimConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("optimizer: learning_rate must be positive");
    if (batch_size < 1) throw std::invalid_argument("optimizer: batch_size must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("optimizer: max_epochs must be >= 1");
    if (validation_fraction < 0.0 || validation_fraction >= 1.0)
        throw std::invalid_argument("optimizer: validation_fraction must lie in [0,1)");
    if (early_stop_patience) {
        if (*early_stop_patience < 1)
            throw std::invalid_argument("optimizer: early_stop_patience must be >= 1");
        if (validation_fraction <= 0.0)
            throw std::invalid_argument(
                "optimizer: early_stop_patience requires validation_fraction > 0");
    }
}

json OptimConfig::to_json() const {
    json j = {{"learning_rate", learning_rate}, {"batch_size", batch_size},
              {"max_epochs", max_epochs},       {"seed", seed},
              {"validation_fraction", validation_fraction}};
    j["early_stop_patience"] = early_stop_patience ? json(*early_stop_patience) : json(nullptr);
    return j;
}

OptimConfig OptimConfig::from_json(const json& j) {
    OptimConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "learning_rate") c.learning_rate = value.get<double>();
        else if (key == "batch_size") c.batch_size = value.get<int>();
        else if (key == "max_epochs") c.max_epochs = value.get<int>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "validation_fraction") c.validation_fraction = value.get<double>();
        else if (key == "early_stop_patience") {
            if (!value.is_null()) c.early_stop_patience = value.get<int>();
        } else throw std::invalid_argument("optimizer config: unknown key '" + key + "'");
    }
    c.validate();
    return c;
}

void LambdaSchedule::validate() const {
    if (!(initial > 0.0)) throw std::invalid_argument("lambda schedule: initial must be positive");
    if (!(maximum >= initial))
        throw std::invalid_argument("lambda schedule: maximum must be >= initial");
    if (!(growth_factor > 1.0))
        throw std::invalid_argument("lambda schedule: growth_factor must exceed 1");
}

json LambdaSchedule::to_json() const {
    return {{"initial", initial},
            {"maximum", maximum},
            {"growth_factor", growth_factor},
            {"step_unit", step_unit == StepUnit::PerBatch ? "per_batch" : "per_epoch"}};
}

LambdaSchedule LambdaSchedule::from_json(const json& j) {
    LambdaSchedule s;
    for (const auto& [key, value] : j.items()) {
        if (key == "initial") s.initial = value.get<double>();
        else if (key == "maximum") s.maximum = value.get<double>();
        else if (key == "growth_factor") s.growth_factor = value.get<double>();
        else if (key == "step_unit") {
            const std::string u = value.get<std::string>();
            if (u == "per_batch") s.step_unit = StepUnit::PerBatch;
            else if (u == "per_epoch") s.step_unit = StepUnit::PerEpoch;
            else throw std::invalid_argument("lambda schedule: unknown step_unit '" + u + "'");
        } else throw std::invalid_argument("lambda schedule: unknown key '" + key + "'");
    }
    s.validate();
    return s;
}

json Estimate::to_json() const {
    json j;
    j["beta_hat"] = json::array();
    for (int i = 0; i < beta_hat.size(); ++i) j["beta_hat"].push_back(beta_hat[i]);
    j["mu_hat"] = json::array();
    for (int i = 0; i < mu_hat.size(); ++i) j["mu_hat"].push_back(mu_hat[i]);
    j["loss_trace"] = json::array();
    for (const auto& [e, l] : loss_trace) j["loss_trace"].push_back({e, l});
    j["converged"] = converged;
    j["final_lambda"] = final_lambda ? json(*final_lambda) : json(nullptr);
    return j;
}

double cross_entropy_loss(const Vector& theta, const Dataset& ds) {
    const DataView v = make_view(ds);
    if (theta.size() != v.X.cols()) throw std::invalid_argument("cross_entropy_loss: dimension mismatch");
    return ce_loss(v, all_indices(v.n()), theta);
}

Vector cross_entropy_gradient(const Vector& theta, const Dataset& ds) {
    const DataView v = make_view(ds);
    if (theta.size() != v.X.cols())
        throw std::invalid_argument("cross_entropy_gradient: dimension mismatch");
    Vector g = Vector::Zero(theta.size());
    for (long i = 0; i < v.n(); ++i) {
        g += (stable_sigmoid(v.X.row(i).dot(theta)) - v.y[i]) * v.X.row(i).transpose();
    }
    return g / static_cast<double>(v.n());
}

double sign_surrogate_loss(const Vector& theta, const Dataset& ds, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("sign_surrogate_loss: lambda must be positive");
    const DataView v = make_view(ds);
    if (theta.size() != v.X.cols())
        throw std::invalid_argument("sign_surrogate_loss: dimension mismatch");
    return surrogate_loss(v, all_indices(v.n()), theta, lambda);
}

Vector sign_surrogate_gradient(const Vector& theta, const Dataset& ds, double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("sign_surrogate_gradient: lambda must be positive");
    const DataView v = make_view(ds);
    if (theta.size() != v.X.cols())
        throw std::invalid_argument("sign_surrogate_gradient: dimension mismatch");
    Vector g = Vector::Zero(theta.size());
    for (long i = 0; i < v.n(); ++i) {
        const double z = v.X.row(i).dot(theta);
        g += -(2.0 * v.y[i] - 1.0) * 2.0 * lambda * sigmoid_deriv(lambda * z) *
             v.X.row(i).transpose();
    }
    return g / static_cast<double>(v.n());
}

double sign_empirical_loss(const Vector& theta, const Dataset& ds) {
    const DataView v = make_view(ds);
    if (theta.size() != v.X.cols())
        throw std::invalid_argument("sign_empirical_loss: dimension mismatch");
    std::vector<double> terms(v.n());
    for (long i = 0; i < v.n(); ++i) {
        const double z = v.X.row(i).dot(theta);
        const double s = z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0);
        terms[i] = -(2.0 * v.y[i] - 1.0) * s;
    }
    return pairwise_sum(terms) / static_cast<double>(v.n());
}

Estimate fit_rlhf(const Dataset& ds, const OptimConfig& cfg) {
    cfg.validate();
    const DataView v = make_view(ds);
    const int d = static_cast<int>(v.X.cols());
    Rng rng(cfg.seed);
    Split split = make_split(v.n(), cfg.validation_fraction, rng);

    Vector theta = Vector::Zero(d);
    Estimate est;
    est.loss_trace.push_back({0, ce_loss(v, split.train, theta)});
    PlateauDetector train_plateau(cfg.early_stop_patience);
    PlateauDetector val_plateau(cfg.early_stop_patience);
    train_plateau.feed(est.loss_trace.back().second);
    if (!split.val.empty()) val_plateau.feed(ce_loss(v, split.val, theta));

    std::vector<long> order = split.train;
    Vector grad = Vector::Zero(d);
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_indices(order, rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            grad.setZero();
            for (std::size_t i = start; i < stop; ++i) {
                const long r = order[i];
                grad += (stable_sigmoid(v.X.row(r).dot(theta)) - v.y[r]) * v.X.row(r).transpose();
            }
            theta -= (cfg.learning_rate / static_cast<double>(stop - start)) * grad;
        }
        est.loss_trace.push_back({epoch, ce_loss(v, split.train, theta)});
        const bool train_flat = train_plateau.feed(est.loss_trace.back().second);
        const bool val_flat = !split.val.empty() && val_plateau.feed(ce_loss(v, split.val, theta));
        if (train_flat || val_flat) {
            est.converged = true;
            break;
        }
    }
    est.beta_hat = theta;
    est.mu_hat = theta.norm() > 0.0 ? Vector(theta / theta.norm()) : theta;
    // Full-data gradient norm as a terminal diagnostic.
    Vector g = Vector::Zero(d);
    for (long i = 0; i < v.n(); ++i)
        g += (stable_sigmoid(v.X.row(i).dot(theta)) - v.y[i]) * v.X.row(i).transpose();
    est.final_grad_norm = (g / static_cast<double>(v.n())).norm();
    return est;
}

Estimate fit_sign(const Dataset& ds, const OptimConfig& cfg, const LambdaSchedule& sched) {
    cfg.validate();
    sched.validate();
    const DataView v = make_view(ds);
    const int d = static_cast<int>(v.X.cols());
    Rng rng(cfg.seed);
    Split split = make_split(v.n(), cfg.validation_fraction, rng);

    // Warm start from the label-weighted mean of the feature differences;
    // this statistic points toward the mean direction in expectation.
    Vector theta = Vector::Zero(d);
    for (long r : split.train) theta += (2.0 * v.y[r] - 1.0) * v.X.row(r).transpose();
    theta /= static_cast<double>(split.train.size());
    if (theta.norm() > 1e-12) {
        theta /= theta.norm();
    } else {
        theta = rng.normal_vector(d);
        theta /= theta.norm();
    }

    double lambda = sched.initial;
    Estimate est;
    est.loss_trace.push_back({0, surrogate_loss(v, split.train, theta, lambda)});
    PlateauDetector train_plateau(cfg.early_stop_patience);
    PlateauDetector val_plateau(cfg.early_stop_patience);

    std::vector<long> order = split.train;
    Vector grad = Vector::Zero(d);
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_indices(order, rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            grad.setZero();
            for (std::size_t i = start; i < stop; ++i) {
                const long r = order[i];
                const double z = v.X.row(r).dot(theta);
                grad += -(2.0 * v.y[r] - 1.0) * 2.0 * lambda * sigmoid_deriv(lambda * z) *
                        v.X.row(r).transpose();
            }
            theta -= (cfg.learning_rate / static_cast<double>(stop - start)) * grad;
            if (sched.step_unit == LambdaSchedule::StepUnit::PerBatch)
                lambda = std::min(sched.maximum, lambda * sched.growth_factor);
        }
        if (sched.step_unit == LambdaSchedule::StepUnit::PerEpoch)
            lambda = std::min(sched.maximum, lambda * sched.growth_factor);
        const double nrm = theta.norm();
        if (nrm > 0.0) theta /= nrm;
        est.loss_trace.push_back({epoch, surrogate_loss(v, split.train, theta, lambda)});
        // The surrogate objective drifts while lambda grows; plateau
        // detection is armed only once the schedule saturates.
        if (lambda >= sched.maximum) {
            const bool train_flat = train_plateau.feed(est.loss_trace.back().second);
            const bool val_flat =
                !split.val.empty() && val_plateau.feed(surrogate_loss(v, split.val, theta, lambda));
            if (train_flat || val_flat) {
                est.converged = true;
                break;
            }
        }
    }
    est.beta_hat = theta;
    est.mu_hat = theta.norm() > 0.0 ? Vector(theta / theta.norm()) : theta;
    est.final_lambda = lambda;
    Vector g = Vector::Zero(d);
    for (long i = 0; i < v.n(); ++i) {
        const double z = v.X.row(i).dot(theta);
        g += -(2.0 * v.y[i] - 1.0) * 2.0 * lambda * sigmoid_deriv(lambda * z) *
             v.X.row(i).transpose();
    }
    est.final_grad_norm = (g / static_cast<double>(v.n())).norm();
    return est;
}

EmResult fit_em(const Dataset& ds, int k, const OptimConfig& cfg, Rng& rng) {
    cfg.validate();
    if (k < 1) throw std::invalid_argument("fit_em: k must be >= 1");
    // Group record indices by user, keyed in user-id order.
    std::map<int, std::vector<long>> by_user;
    for (long i = 0; i < ds.n(); ++i) {
        if (!ds.records[i].user_id) throw std::invalid_argument("fit_em: records must carry user ids");
        by_user[*ds.records[i].user_id].push_back(i);
    }
    const int n_users = static_cast<int>(by_user.size());
    if (k > n_users) throw std::invalid_argument("fit_em: k exceeds the number of users");

    const DataView v = make_view(ds);
    const int d = static_cast<int>(v.X.cols());

    const Estimate pooled = fit_rlhf(ds, cfg);
    std::vector<Vector> centers(k);
    for (int c = 0; c < k; ++c) {
        centers[c] = pooled.beta_hat + rng.normal_vector(d) / std::sqrt(static_cast<double>(d));
    }

    // Dense user index per record, so cluster datasets keep original record
    // order (a single cluster then refits on the byte-identical dataset).
    std::map<int, int> dense;
    for (const auto& [uid, recs] : by_user) dense.emplace(uid, static_cast<int>(dense.size()));
    std::vector<int> record_user(ds.n());
    for (long i = 0; i < ds.n(); ++i) record_user[i] = dense.at(*ds.records[i].user_id);

    auto cluster_dataset = [&](const std::vector<int>& assign, int c) {
        Dataset sub;
        sub.dim = ds.dim;
        sub.provenance = ds.provenance;
        for (long i = 0; i < ds.n(); ++i) {
            if (assign[record_user[i]] == c) sub.records.push_back(ds.records[i]);
        }
        return sub;
    };

    std::vector<int> assign(n_users, 0), prev;
    int iterations = 0;
    constexpr int kMaxRounds = 50;
    for (int round = 0; round < kMaxRounds; ++round) {
        iterations = round + 1;
        // E-step: pick the center with minimal summed cross-entropy per user.
        int u = 0;
        for (const auto& [uid, recs] : by_user) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (int c = 0; c < k; ++c) {
                double loss = 0.0;
                for (long r : recs) {
                    const double z = v.X.row(r).dot(centers[c]);
                    loss += softplus(z) - v.y[r] * z;
                }
                if (loss < best) {
                    best = loss;
                    best_c = c;
                }
            }
            assign[u++] = best_c;
        }
        if (!prev.empty() && assign == prev) break;
        prev = assign;
        // M-step: refit each non-empty cluster from scratch.
        for (int c = 0; c < k; ++c) {
            Dataset sub = cluster_dataset(assign, c);
            if (!sub.records.empty()) centers[c] = fit_rlhf(sub, cfg).beta_hat;
        }
    }

    EmResult out;
    out.components = centers;
    out.iterations = iterations;
    Vector weighted = Vector::Zero(d), unweighted = Vector::Zero(d);
    int u = 0;
    for (const auto& [uid, recs] : by_user) {
        out.assignments[uid] = assign[u];
        weighted += centers[assign[u]];
        ++u;
    }
    for (int c = 0; c < k; ++c) unweighted += centers[c];
    out.beta_em = weighted / static_cast<double>(n_users);
    out.beta_em_unweighted = unweighted / static_cast<double>(k);
    return out;
}

}  // namespace prefagg
