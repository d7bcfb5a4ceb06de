#include "prefagg/population.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace prefagg {

using nlohmann::json;

namespace {

void check_finite(const Vector& v, const char* what) {
    if (!v.allFinite()) throw std::invalid_argument(std::string(what) + ": entries must be finite");
    if (v.size() < 1) throw std::invalid_argument(std::string(what) + ": dimension must be >= 1");
}

json vector_to_json(const Vector& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Vector vector_from_json(const json& a) {
    if (!a.is_array() || a.empty()) throw std::invalid_argument("expected non-empty number array");
    Vector v(static_cast<int>(a.size()));
    for (int i = 0; i < v.size(); ++i) v[i] = a.at(i).get<double>();
    return v;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) rows.push_back(vector_to_json(m.row(i)));
    return rows;
}

Matrix matrix_from_json(const json& a) {
    if (!a.is_array() || a.empty()) throw std::invalid_argument("expected matrix as array of rows");
    const int n = static_cast<int>(a.size());
    Matrix m;
    for (int i = 0; i < n; ++i) {
        Vector row = vector_from_json(a.at(i));
        if (i == 0) m.resize(n, row.size());
        if (row.size() != m.cols()) throw std::invalid_argument("ragged matrix rows");
        m.row(i) = row;
    }
    return m;
}

// Symmetric PSD check; returns the eigen-based square root for sampling.
Matrix psd_transform(const Matrix& cov) {
    if (cov.rows() != cov.cols()) throw std::invalid_argument("covariance must be square");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, cov.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    const Vector& ev = es.eigenvalues();
    if (ev.minCoeff() < -1e-10)
        throw std::invalid_argument("covariance must be positive semidefinite (min eigenvalue < -1e-10)");
    Vector sqrt_ev = ev.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * sqrt_ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

PopulationSpec PopulationSpec::finite_mixture(std::vector<MixtureComponent> components) {
    if (components.empty()) throw std::invalid_argument("finite_mixture: needs at least one component");
    double total = 0.0;
    const int d = static_cast<int>(components.front().beta.size());
    for (const auto& c : components) {
        if (!(c.weight > 0.0)) throw std::invalid_argument("finite_mixture: weights must be strictly positive");
        check_finite(c.beta, "finite_mixture component");
        if (c.beta.size() != d) throw std::invalid_argument("finite_mixture: components must share dimension");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("finite_mixture: weights must sum to 1");
    PopulationSpec s;
    s.kind_ = Kind::FiniteMixture;
    s.dim_ = d;
    s.atoms_ = std::move(components);
    return s;
}

PopulationSpec PopulationSpec::gaussian(Vector mean, Matrix covariance) {
    check_finite(mean, "gaussian mean");
    if (covariance.rows() != mean.size())
        throw std::invalid_argument("gaussian: covariance dimension must match mean");
    PopulationSpec s;
    s.kind_ = Kind::Gaussian;
    s.dim_ = static_cast<int>(mean.size());
    s.transform_ = psd_transform(covariance);
    s.mean_ = std::move(mean);
    s.cov_ = std::move(covariance);
    return s;
}

PopulationSpec PopulationSpec::two_type(double alpha, double m) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("two_type: alpha must lie in [0,1]");
    if (!(m > 0.0)) throw std::invalid_argument("two_type: m must be positive");
    PopulationSpec s;
    s.kind_ = Kind::TwoType;
    s.dim_ = 1;
    s.alpha_ = alpha;
    s.m_ = m;
    Vector plus(1), minus(1);
    plus[0] = 1.0;
    minus[0] = -m;
    if (alpha > 0.0) s.atoms_.push_back({alpha, plus});
    if (alpha < 1.0) s.atoms_.push_back({1.0 - alpha, minus});
    return s;
}

const std::vector<MixtureComponent>& PopulationSpec::atoms() const {
    if (!is_discrete()) throw std::logic_error("atoms(): population is not discrete");
    return atoms_;
}

const Vector& PopulationSpec::gaussian_mean() const {
    if (kind_ != Kind::Gaussian) throw std::logic_error("gaussian_mean(): not a Gaussian population");
    return mean_;
}

const Matrix& PopulationSpec::gaussian_covariance() const {
    if (kind_ != Kind::Gaussian) throw std::logic_error("gaussian_covariance(): not a Gaussian population");
    return cov_;
}

const Matrix& PopulationSpec::gaussian_transform() const {
    if (kind_ != Kind::Gaussian) throw std::logic_error("gaussian_transform(): not a Gaussian population");
    return transform_;
}

double PopulationSpec::two_type_alpha() const {
    if (kind_ != Kind::TwoType) throw std::logic_error("two_type_alpha(): not a TwoType population");
    return alpha_;
}

double PopulationSpec::two_type_m() const {
    if (kind_ != Kind::TwoType) throw std::logic_error("two_type_m(): not a TwoType population");
    return m_;
}

json PopulationSpec::to_json() const {
    json j;
    switch (kind_) {
        case Kind::FiniteMixture: {
            j["type"] = "finite_mixture";
            json comps = json::array();
            for (const auto& c : atoms_) {
                comps.push_back({{"weight", c.weight}, {"beta", vector_to_json(c.beta)}});
            }
            j["components"] = comps;
            break;
        }
        case Kind::Gaussian:
            j["type"] = "gaussian";
            j["mean"] = vector_to_json(mean_);
            j["covariance"] = matrix_to_json(cov_);
            break;
        case Kind::TwoType:
            j["type"] = "two_type";
            j["alpha"] = alpha_;
            j["m"] = m_;
            break;
    }
    return j;
}

PopulationSpec PopulationSpec::from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "finite_mixture") {
        std::vector<MixtureComponent> comps;
        for (const auto& c : j.at("components")) {
            comps.push_back({c.at("weight").get<double>(), vector_from_json(c.at("beta"))});
        }
        return finite_mixture(std::move(comps));
    }
    if (type == "gaussian") {
        return gaussian(vector_from_json(j.at("mean")), matrix_from_json(j.at("covariance")));
    }
    if (type == "two_type") {
        return two_type(j.at("alpha").get<double>(), j.at("m").get<double>());
    }
    if (type == "named") {
        return named_population(j.at("name").get<std::string>());
    }
    throw std::invalid_argument("unknown population type: " + type);
}

std::string PopulationSpec::digest() const { return hex64(fnv1a64(to_json().dump())); }

Vector mean_beta(const PopulationSpec& spec) {
    if (spec.kind() == PopulationSpec::Kind::Gaussian) return spec.gaussian_mean();
    Vector m = Vector::Zero(spec.dim());
    for (const auto& c : spec.atoms()) m += c.weight * c.beta;
    return m;
}

int sample_user_index(const PopulationSpec& spec, Rng& rng) {
    const auto& atoms = spec.atoms();
    if (atoms.size() == 1) return 0;
    double u = rng.uniform();
    for (std::size_t k = 0; k + 1 < atoms.size(); ++k) {
        if (u < atoms[k].weight) return static_cast<int>(k);
        u -= atoms[k].weight;
    }
    return static_cast<int>(atoms.size()) - 1;
}

Vector sample_user(const PopulationSpec& spec, Rng& rng) {
    if (spec.kind() == PopulationSpec::Kind::Gaussian) {
        return spec.gaussian_mean() + spec.gaussian_transform() * rng.normal_vector(spec.dim());
    }
    return spec.atoms()[sample_user_index(spec, rng)].beta;
}

bool is_mean_symmetric(const PopulationSpec& spec, double tol) {
    if (spec.kind() == PopulationSpec::Kind::Gaussian) return true;
    if (spec.kind() == PopulationSpec::Kind::TwoType) {
        // Centered atoms are always antipodal; symmetry reduces to equal weights.
        return std::abs(spec.two_type_alpha() - 0.5) <= tol;
    }
    const auto& atoms = spec.atoms();
    const Vector mean = mean_beta(spec);
    const int n = static_cast<int>(atoms.size());
    std::vector<bool> used(n, false);
    for (int i = 0; i < n; ++i) {
        if (used[i]) continue;
        const Vector eps_i = atoms[i].beta - mean;
        if (eps_i.cwiseAbs().maxCoeff() <= tol) {
            used[i] = true;  // atom at the mean matches itself
            continue;
        }
        bool matched = false;
        for (int k = 0; k < n; ++k) {
            if (used[k] || k == i) continue;
            if (std::abs(atoms[k].weight - atoms[i].weight) > tol) continue;
            if ((atoms[k].beta - mean + eps_i).cwiseAbs().maxCoeff() > tol) continue;
            used[i] = used[k] = true;
            matched = true;
            break;
        }
        if (!matched) return false;
    }
    return true;
}

PopulationSpec scale_heterogeneity(const PopulationSpec& spec, double s) {
    if (!(s > 0.0)) throw std::invalid_argument("scale_heterogeneity: scale must be positive");
    if (s == 1.0) return spec;
    if (spec.kind() == PopulationSpec::Kind::Gaussian) {
        return PopulationSpec::gaussian(spec.gaussian_mean(), s * s * spec.gaussian_covariance());
    }
    const Vector mean = mean_beta(spec);
    std::vector<MixtureComponent> comps;
    comps.reserve(spec.atoms().size());
    for (const auto& c : spec.atoms()) {
        comps.push_back({c.weight, mean + s * (c.beta - mean)});
    }
    return PopulationSpec::finite_mixture(std::move(comps));
}

namespace {

Vector make_vec(std::initializer_list<double> vals) {
    Vector v(static_cast<int>(vals.size()));
    int i = 0;
    for (double x : vals) v[i++] = x;
    return v;
}

}  // namespace

PopulationSpec named_population(const std::string& name) {
    if (name == "fig1-analogue") {
        // Majority of nearly indifferent users plus a confident minority whose
        // utilities are roughly aligned with the population mean (2,0,...).
        // The cross-entropy fit discounts the minority and follows the
        // majority's offset; the sign objective does not.
        return PopulationSpec::finite_mixture({
            {0.75, make_vec({-0.3, 0.2, 0.0, 0.0, 0.0})},
            {0.25, make_vec({8.9, -0.6, 0.0, 0.0, 0.0})},
        });
    }
    if (name == "scale-analogue") {
        // Symmetric four-atom population around (1,0,...) with two
        // heterogeneity scales along the correlated direction (1,-1).
        return PopulationSpec::finite_mixture({
            {0.25, make_vec({1.9, -0.9, 0.0, 0.0, 0.0})},
            {0.25, make_vec({0.1, 0.9, 0.0, 0.0, 0.0})},
            {0.25, make_vec({1.15, -0.15, 0.0, 0.0, 0.0})},
            {0.25, make_vec({0.85, 0.15, 0.0, 0.0, 0.0})},
        });
    }
    if (name == "correlated-pair") {
        // Symmetric two-atom population, mean (1,0): centered atoms
        // +-(1,-1) have correlated parallel and orthogonal parts.
        return PopulationSpec::finite_mixture({
            {0.5, make_vec({2.0, -1.0})},
            {0.5, make_vec({0.0, 1.0})},
        });
    }
    if (name == "correlated-pair-5d") {
        return PopulationSpec::finite_mixture({
            {0.5, make_vec({2.0, -1.0, 0.0, 0.0, 0.0})},
            {0.5, make_vec({0.0, 1.0, 0.0, 0.0, 0.0})},
        });
    }
    if (name == "two-type-panel") {
        // Panel benchmark: two well-separated user types whose pooled
        // cross-entropy fit is biased; mean direction is (1,0,...).
        return PopulationSpec::finite_mixture({
            {0.5, make_vec({2.0, -1.0, 0.0, 0.0, 0.0})},
            {0.5, make_vec({0.0, 1.0, 0.0, 0.0, 0.0})},
        });
    }
    throw std::invalid_argument("unknown named population: " + name);
}

}  // namespace prefagg
