#include "prefagg/oracles.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace prefagg {

TwoTypeAnalysis two_type_analysis(double alpha, double m) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("two_type_analysis: alpha must lie strictly inside (0,1)");
    if (!(m > 0.0)) throw std::invalid_argument("two_type_analysis: m must be positive");
    TwoTypeAnalysis a;
    a.u_bar = alpha - (1.0 - alpha) * m;
    const double p = alpha * stable_sigmoid(1.0) + (1.0 - alpha) * stable_sigmoid(-m);
    a.u_naive = logit(p);
    a.alpha_threshold_naive =
        (stable_sigmoid(m) - 0.5) / (stable_sigmoid(1.0) + stable_sigmoid(m) - 1.0);
    a.alpha_threshold_mean = m / (1.0 + m);
    return a;
}

namespace {

// 64-node Gauss-Hermite rule via the Golub-Welsch eigenproblem.
struct HermiteRule {
    Vector nodes;
    Vector weights;
    HermiteRule() {
        constexpr int n = 64;
        Matrix J = Matrix::Zero(n, n);
        for (int i = 1; i < n; ++i) {
            const double b = std::sqrt(i / 2.0);
            J(i, i - 1) = b;
            J(i - 1, i) = b;
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(J);
        nodes = es.eigenvalues();
        weights.resize(n);
        for (int i = 0; i < n; ++i) {
            const double v0 = es.eigenvectors()(0, i);
            weights[i] = std::sqrt(M_PI) * v0 * v0;
        }
    }
};

const HermiteRule& hermite64() {
    static const HermiteRule rule;
    return rule;
}

double gauss_expectation(double mean, double variance, double (*f)(double)) {
    if (variance < 0.0) throw std::invalid_argument("gauss expectation: negative variance");
    if (variance == 0.0) return f(mean);
    const auto& rule = hermite64();
    const double s = std::sqrt(2.0 * variance);
    double acc = 0.0;
    for (int i = 0; i < rule.nodes.size(); ++i) {
        acc += rule.weights[i] * f(mean + s * rule.nodes[i]);
    }
    return acc / std::sqrt(M_PI);
}

Matrix psd_sqrt(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw std::invalid_argument("sigma_x must be positive semidefinite");
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

inline int sgn(double t) { return t > 0.0 ? 1 : (t < 0.0 ? -1 : 0); }

}  // namespace

double expected_sigmoid_gauss(double mean, double variance) {
    return gauss_expectation(mean, variance, +[](double z) { return stable_sigmoid(z); });
}

double expected_sigmoid_deriv_gauss(double variance) {
    return gauss_expectation(0.0, variance, +[](double z) { return sigmoid_deriv(z); });
}

Vector reweighted_mean_direction(const PopulationSpec& spec, const Matrix& sigma_x, long n_mc,
                                 std::uint64_t seed) {
    if (!spec.is_discrete())
        throw std::invalid_argument("reweighted_mean_direction: requires a discrete population");
    if (n_mc < 1) throw std::invalid_argument("reweighted_mean_direction: n_mc must be >= 1");
    const int d = spec.dim();
    if (sigma_x.rows() != d) throw std::invalid_argument("reweighted_mean_direction: sigma_x dim");
    const Matrix transform = psd_sqrt(sigma_x);
    const auto& atoms = spec.atoms();
    // Common random numbers: the same X draws weight every atom.
    Rng rng(seed);
    std::vector<double> w(atoms.size(), 0.0);
    Vector x(d);
    for (long i = 0; i < n_mc; ++i) {
        x = transform * rng.normal_vector(d);
        for (std::size_t k = 0; k < atoms.size(); ++k) {
            w[k] += sigmoid_deriv(x.dot(atoms[k].beta));
        }
    }
    Vector dir = Vector::Zero(d);
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        dir += atoms[k].weight * (w[k] / static_cast<double>(n_mc)) * atoms[k].beta;
    }
    const double nrm = dir.norm();
    if (nrm == 0.0) throw std::runtime_error("reweighted_mean_direction: weighted sum is zero");
    return dir / nrm;
}

MleDirection population_mle_direction(const PopulationSpec& spec, const Matrix& sigma_x, long n_mc,
                                      const OptimConfig& cfg, std::uint64_t seed) {
    if (!spec.is_discrete())
        throw std::invalid_argument("population_mle_direction: requires a discrete population");
    if (n_mc < 1) throw std::invalid_argument("population_mle_direction: n_mc must be >= 1");
    cfg.validate();
    const int d = spec.dim();
    const Matrix transform = psd_sqrt(sigma_x);
    Matrix X(n_mc, d);
    {
        Rng rng(seed);
        Vector x(d);
        for (long i = 0; i < n_mc; ++i) X.row(i) = transform * rng.normal_vector(d);
    }
    // Exact conditional label means over the atoms.
    Vector p(n_mc);
    p.setZero();
    for (const auto& c : spec.atoms()) {
        for (long i = 0; i < n_mc; ++i) p[i] += c.weight * stable_sigmoid(X.row(i).dot(c.beta));
    }
    // Full-batch gradient descent on the population cross-entropy.
    Vector theta = Vector::Zero(d);
    Vector resid(n_mc);
    bool converged = false;
    for (int it = 0; it < cfg.max_epochs; ++it) {
        for (long i = 0; i < n_mc; ++i) resid[i] = stable_sigmoid(X.row(i).dot(theta)) - p[i];
        const Vector grad = X.transpose() * resid / static_cast<double>(n_mc);
        if (grad.norm() < 1e-10) {
            converged = true;
            break;
        }
        theta -= cfg.learning_rate * grad;
    }
    const double nrm = theta.norm();
    if (nrm == 0.0) throw std::runtime_error("population_mle_direction: zero fit");
    return {Vector(theta / nrm), converged};
}

Vector grid_sign_minimizer_2d(const Dataset& ds, long n_angles) {
    if (ds.dim != 2) throw std::invalid_argument("grid_sign_minimizer_2d: requires d = 2");
    if (n_angles < 4) throw std::invalid_argument("grid_sign_minimizer_2d: n_angles must be >= 4");
    const long n = ds.n();
    if (n < 1) throw std::invalid_argument("grid_sign_minimizer_2d: empty dataset");
    if (n_angles <= 4 * n) {
        std::fprintf(stderr,
                     "grid_sign_minimizer_2d: n_angles=%ld <= 4n=%ld, grid may miss loss pieces\n",
                     n_angles, 4 * n);
    }
    std::vector<double> x1(n), x2(n), s(n);
    for (long i = 0; i < n; ++i) {
        x1[i] = ds.records[i].x[0];
        x2[i] = ds.records[i].x[1];
        s[i] = 2.0 * ds.records[i].y - 1.0;
    }
    double best_loss = std::numeric_limits<double>::infinity();
    double best_psi = 0.0;
    for (long a = 0; a < n_angles; ++a) {
        const double psi = 2.0 * M_PI * static_cast<double>(a) / static_cast<double>(n_angles);
        const double c = std::cos(psi), sn = std::sin(psi);
        double acc = 0.0;
        for (long i = 0; i < n; ++i) {
            const double z = c * x1[i] + sn * x2[i];
            acc -= s[i] * (z > 0.0 ? 1.0 : (z < 0.0 ? -1.0 : 0.0));
        }
        const double loss = acc / static_cast<double>(n);
        if (loss < best_loss) {
            best_loss = loss;
            best_psi = psi;
        }
    }
    Vector out(2);
    out[0] = std::cos(best_psi);
    out[1] = std::sin(best_psi);
    return out;
}

std::vector<SignIdentityViolation> sign_identity_violations(const PopulationSpec& spec,
                                                            const std::vector<Vector>& diffs) {
    if (!spec.is_discrete())
        throw std::invalid_argument("sign_identity: requires a discrete population");
    const Vector mean = mean_beta(spec);
    std::vector<SignIdentityViolation> out;
    for (const auto& x : diffs) {
        const double p = population_choice_probability(x, spec).value;
        const double t = mean.dot(x);
        const bool prob_tie = std::abs(p - 0.5) <= 1e-12;
        const bool mean_tie = std::abs(t) <= 1e-9;
        const int prob_sign = prob_tie ? 0 : sgn(p - 0.5);
        const int mean_sign = mean_tie ? 0 : sgn(t);
        if (prob_sign != mean_sign) out.push_back({x, p, t});
    }
    return out;
}

bool sign_identity_check(const PopulationSpec& spec, const std::vector<Vector>& diffs) {
    if (!is_mean_symmetric(spec, 1e-9))
        throw std::invalid_argument("sign_identity_check: population must be mean-symmetric");
    return sign_identity_violations(spec, diffs).empty();
}

std::vector<std::pair<double, MonteCarloEstimate>> curvature_probe(
    const PopulationSpec& spec, const DiffDistribution& diffs, const std::vector<double>& angles,
    long n_mc, std::uint64_t seed) {
    for (double a : angles) {
        if (!(a >= 0.0 && a <= M_PI / 4.0 + 1e-12))
            throw std::invalid_argument("curvature_probe: angles must lie in [0, pi/4]");
    }
    const Vector mean = mean_beta(spec);
    const double nrm = mean.norm();
    if (nrm == 0.0) throw std::invalid_argument("curvature_probe: population mean is zero");
    const Vector mu = mean / nrm;
    const int d = spec.dim();
    // Fixed random in-plane direction orthogonal to mu.
    Rng rng(mix_seed(seed, {0x9d1ce}));
    Vector v;
    for (;;) {
        v = rng.normal_vector(d);
        v -= v.dot(mu) * mu;
        if (v.norm() > 1e-9) {
            v /= v.norm();
            break;
        }
    }
    std::vector<std::pair<double, MonteCarloEstimate>> out;
    out.reserve(angles.size());
    for (double a : angles) {
        const Vector theta = std::cos(a) * mu + std::sin(a) * v;
        // Common seed across angles: shared draws make the sweep monotone
        // up to per-draw noise rather than independent noise per angle.
        out.push_back({a, excess_risk_01(theta, mu, spec, diffs, n_mc, mix_seed(seed, {7}))});
    }
    return out;
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("log_log_slope: need at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0 && y[i] > 0.0))
            throw std::invalid_argument("log_log_slope: values must be positive");
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("log_log_slope: degenerate abscissae");
    return (n * sxy - sx * sy) / denom;
}

}  // namespace prefagg
