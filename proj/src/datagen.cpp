#include "prefagg/datagen.hpp"

#include <fstream>
#include <set>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "prefagg/oracles.hpp"

namespace prefagg {

using nlohmann::json;

namespace {

json vec_json(const Vector& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Vector vec_from(const json& a) {
    Vector v(static_cast<int>(a.size()));
    for (int i = 0; i < v.size(); ++i) v[i] = a.at(i).get<double>();
    return v;
}

Matrix psd_transform_for_diffs(const Matrix& cov) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw std::invalid_argument("diff covariance must be positive semidefinite");
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

}  // namespace

DiffDistribution DiffDistribution::gaussian(Matrix covariance) {
    if (covariance.rows() != covariance.cols() || covariance.rows() < 1)
        throw std::invalid_argument("gaussian diff: covariance must be square, dim >= 1");
    if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() >
        1e-9 * std::max(1.0, covariance.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("gaussian diff: covariance must be symmetric");
    DiffDistribution d;
    d.kind_ = Kind::Gaussian;
    d.dim_ = static_cast<int>(covariance.rows());
    d.transform_ = psd_transform_for_diffs(covariance);
    d.cov_ = std::move(covariance);
    return d;
}

DiffDistribution DiffDistribution::uniform_ball(double radius, int dim) {
    if (!(radius > 0.0)) throw std::invalid_argument("uniform_ball: radius must be positive");
    if (dim < 1) throw std::invalid_argument("uniform_ball: dim must be >= 1");
    DiffDistribution d;
    d.kind_ = Kind::UniformBall;
    d.dim_ = dim;
    d.radius_ = radius;
    return d;
}

DiffDistribution DiffDistribution::item_catalog(std::vector<Vector> features, Pairing pairing) {
    if (features.size() < 2) throw std::invalid_argument("item_catalog: needs at least two items");
    const int dim = static_cast<int>(features.front().size());
    for (const auto& f : features) {
        if (f.size() != dim) throw std::invalid_argument("item_catalog: features must share dimension");
        if (!f.allFinite()) throw std::invalid_argument("item_catalog: features must be finite");
    }
    DiffDistribution d;
    d.kind_ = Kind::ItemCatalog;
    d.dim_ = dim;
    d.features_ = std::move(features);
    d.pairing_ = pairing;
    return d;
}

const std::vector<Vector>& DiffDistribution::features() const {
    if (kind_ != Kind::ItemCatalog) throw std::logic_error("features(): not an item catalog");
    return features_;
}

const Matrix& DiffDistribution::covariance() const {
    if (kind_ != Kind::Gaussian) throw std::logic_error("covariance(): not a Gaussian diff distribution");
    return cov_;
}

Vector DiffDistribution::sample(Rng& rng) const {
    switch (kind_) {
        case Kind::Gaussian:
            return transform_ * rng.normal_vector(dim_);
        case Kind::UniformBall: {
            Vector dir = rng.normal_vector(dim_);
            const double norm = dir.norm();
            if (norm == 0.0) return Vector::Zero(dim_);
            const double r = radius_ * std::pow(rng.uniform(), 1.0 / dim_);
            return (r / norm) * dir;
        }
        case Kind::ItemCatalog:
            throw std::logic_error("sample(): catalog pairs are drawn during generation");
    }
    throw std::logic_error("unreachable");
}

json DiffDistribution::to_json() const {
    json j;
    switch (kind_) {
        case Kind::Gaussian: {
            j["type"] = "gaussian_diff";
            json rows = json::array();
            for (int i = 0; i < cov_.rows(); ++i) rows.push_back(vec_json(cov_.row(i)));
            j["covariance"] = rows;
            break;
        }
        case Kind::UniformBall:
            j["type"] = "uniform_ball";
            j["radius"] = radius_;
            j["dim"] = dim_;
            break;
        case Kind::ItemCatalog: {
            j["type"] = "item_catalog";
            json feats = json::array();
            for (const auto& f : features_) feats.push_back(vec_json(f));
            j["features"] = feats;
            j["pairing"] = pairing_ == Pairing::WithReplacement ? "with_replacement" : "without_replacement";
            break;
        }
    }
    return j;
}

DiffDistribution DiffDistribution::from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "gaussian_diff") {
        const auto& rows = j.at("covariance");
        const int n = static_cast<int>(rows.size());
        Matrix cov(n, n);
        for (int i = 0; i < n; ++i) cov.row(i) = vec_from(rows.at(i));
        return gaussian(cov);
    }
    if (type == "uniform_ball") {
        return uniform_ball(j.at("radius").get<double>(), j.at("dim").get<int>());
    }
    if (type == "item_catalog") {
        std::vector<Vector> feats;
        for (const auto& f : j.at("features")) feats.push_back(vec_from(f));
        const std::string p = j.at("pairing").get<std::string>();
        if (p != "with_replacement" && p != "without_replacement")
            throw std::invalid_argument("item_catalog: unknown pairing " + p);
        return item_catalog(std::move(feats), p == "with_replacement" ? Pairing::WithReplacement
                                                                      : Pairing::WithoutReplacement);
    }
    throw std::invalid_argument("unknown diff distribution type: " + type);
}

std::string DiffDistribution::digest() const { return hex64(fnv1a64(to_json().dump())); }

double choice_probability(const Vector& diff, const Vector& beta) {
    if (diff.size() != beta.size())
        throw std::invalid_argument("choice_probability: dimension mismatch");
    return stable_sigmoid(diff.dot(beta));
}

ProbEstimate population_choice_probability(const Vector& diff, const PopulationSpec& spec,
                                           long n_mc, std::uint64_t seed) {
    if (diff.size() != spec.dim())
        throw std::invalid_argument("population_choice_probability: dimension mismatch");
    if (spec.is_discrete()) {
        double p = 0.0;
        for (const auto& c : spec.atoms()) p += c.weight * stable_sigmoid(diff.dot(c.beta));
        return {p, 0.0};
    }
    if (n_mc < 1)
        throw std::invalid_argument(
            "population_choice_probability: Gaussian population requires a Monte Carlo sample count");
    Rng rng(seed);
    double sum = 0.0, sumsq = 0.0;
    for (long i = 0; i < n_mc; ++i) {
        const double p = stable_sigmoid(diff.dot(sample_user(spec, rng)));
        sum += p;
        sumsq += p * p;
    }
    const double mean = sum / static_cast<double>(n_mc);
    const double var = std::max(0.0, sumsq / static_cast<double>(n_mc) - mean * mean);
    return {mean, std::sqrt(var / static_cast<double>(n_mc))};
}

double population_choice_probability_quadrature(const Vector& diff, const PopulationSpec& spec) {
    if (spec.is_discrete()) return population_choice_probability(diff, spec).value;
    const double m = diff.dot(spec.gaussian_mean());
    const double v = diff.dot(spec.gaussian_covariance() * diff);
    return expected_sigmoid_gauss(m, std::max(v, 0.0));
}

namespace {

struct CatalogPairState {
    // used unordered pairs of the current user (without-replacement pairing)
    std::set<std::pair<int, int>> used;
};

PreferenceRecord draw_record(const PopulationSpec& /*spec*/, const DiffDistribution& diffs,
                             const Vector& beta, Rng& rng, CatalogPairState* pair_state) {
    PreferenceRecord rec;
    if (diffs.kind() == DiffDistribution::Kind::ItemCatalog) {
        const auto& feats = diffs.features();
        const int m = static_cast<int>(feats.size());
        int i = 0, k = 0;
        for (int attempt = 0;; ++attempt) {
            i = rng.uniform_int(m);
            k = rng.uniform_int(m - 1);
            if (k >= i) ++k;  // two distinct indices, uniform over ordered pairs
            if (pair_state == nullptr) break;
            auto key = std::minmax(i, k);
            if (pair_state->used.insert({key.first, key.second}).second) break;
            if (attempt > 64 * m * m)
                throw std::runtime_error("item_catalog: user exhausted distinct pairs");
        }
        rec.x = feats[i] - feats[k];
        rec.item_ids = {i, k};
        // Exchangeable swap: order of the pair carries no information.
        if (rng.uniform() < 0.5) {
            rec.x = -rec.x;
            rec.item_ids = {k, i};
        }
    } else {
        rec.x = diffs.sample(rng);
    }
    rec.y = rng.uniform() < choice_probability(rec.x, beta) ? 1 : 0;
    return rec;
}

}  // namespace

PanelDraw generate_panel_with_users(const PopulationSpec& spec, const DiffDistribution& diffs,
                                    const PanelSpec& panel, std::uint64_t seed) {
    if (panel.n_users < 1 || panel.pairs_per_user < 1)
        throw std::invalid_argument("panel: n_users and pairs_per_user must be positive");
    if (spec.dim() != diffs.dim())
        throw std::invalid_argument("generate: population and diff dimensions differ");
    const bool without_replacement = diffs.kind() == DiffDistribution::Kind::ItemCatalog &&
                                     diffs.pairing() == DiffDistribution::Pairing::WithoutReplacement;
    PanelDraw out;
    out.dataset.dim = spec.dim();
    out.dataset.provenance = {seed, spec.digest(), diffs.digest(), panel};
    out.dataset.records.reserve(static_cast<std::size_t>(panel.n_users) * panel.pairs_per_user);
    Rng rng(seed);
    for (int u = 0; u < panel.n_users; ++u) {
        Vector beta;
        if (spec.is_discrete()) {
            const int atom = sample_user_index(spec, rng);
            out.user_atoms.push_back(atom);
            beta = spec.atoms()[atom].beta;
        } else {
            beta = sample_user(spec, rng);
        }
        out.user_betas.push_back(beta);
        CatalogPairState pair_state;
        for (int p = 0; p < panel.pairs_per_user; ++p) {
            PreferenceRecord rec =
                draw_record(spec, diffs, beta, rng, without_replacement ? &pair_state : nullptr);
            rec.user_id = u;
            out.dataset.records.push_back(std::move(rec));
        }
    }
    return out;
}

Dataset generate(const PopulationSpec& spec, const DiffDistribution& diffs, long n,
                 const std::optional<PanelSpec>& panel, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate: n must be positive");
    if (spec.dim() != diffs.dim())
        throw std::invalid_argument("generate: population and diff dimensions differ");
    if (panel.has_value()) {
        if (static_cast<long>(panel->n_users) * panel->pairs_per_user != n)
            throw std::invalid_argument("generate: n must equal n_users * pairs_per_user");
        return generate_panel_with_users(spec, diffs, *panel, seed).dataset;
    }
    Dataset ds;
    ds.dim = spec.dim();
    ds.provenance = {seed, spec.digest(), diffs.digest(), std::nullopt};
    ds.records.reserve(static_cast<std::size_t>(n));
    Rng rng(seed);
    for (long i = 0; i < n; ++i) {
        const Vector beta = sample_user(spec, rng);
        ds.records.push_back(draw_record(spec, diffs, beta, rng, nullptr));
    }
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + path.string());
    json header = {{"dim", ds.dim},
                   {"n", ds.n()},
                   {"seed", ds.provenance.seed},
                   {"population_digest", ds.provenance.population_digest},
                   {"diff_digest", ds.provenance.diff_digest}};
    if (ds.provenance.panel) {
        header["panel"] = {{"n_users", ds.provenance.panel->n_users},
                           {"pairs_per_user", ds.provenance.panel->pairs_per_user}};
    } else {
        header["panel"] = nullptr;
    }
    out << header.dump() << "\n";
    for (const auto& r : ds.records) {
        json line = {{"x", vec_json(r.x)}, {"y", r.y}};
        line["user"] = r.user_id ? json(*r.user_id) : json(nullptr);
        line["items"] = r.item_ids ? json({r.item_ids->first, r.item_ids->second}) : json(nullptr);
        out << line.dump() << "\n";
    }
    if (!out) throw std::runtime_error("save_dataset: write failed for " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_dataset: cannot open " + path.string());
    std::string line;
    long line_no = 0;
    auto parse_line = [&](const std::string& text) {
        try {
            return json::parse(text);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("load_dataset: parse error at line " + std::to_string(line_no) +
                                     ": " + e.what());
        }
    };
    if (!std::getline(in, line)) throw std::runtime_error("load_dataset: empty file");
    ++line_no;
    const json header = parse_line(line);
    Dataset ds;
    ds.dim = header.at("dim").get<int>();
    ds.provenance.seed = header.at("seed").get<std::uint64_t>();
    ds.provenance.population_digest = header.at("population_digest").get<std::string>();
    ds.provenance.diff_digest = header.at("diff_digest").get<std::string>();
    if (!header.at("panel").is_null()) {
        ds.provenance.panel = PanelSpec{header["panel"].at("n_users").get<int>(),
                                        header["panel"].at("pairs_per_user").get<int>()};
    }
    const long n_expected = header.at("n").get<long>();
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = parse_line(line);
        PreferenceRecord rec;
        rec.x = vec_from(j.at("x"));
        if (rec.x.size() != ds.dim)
            throw std::runtime_error("load_dataset: record dimension differs from header at line " +
                                     std::to_string(line_no));
        rec.y = j.at("y").get<int>();
        if (rec.y != 0 && rec.y != 1)
            throw std::runtime_error("load_dataset: label must be 0 or 1 at line " +
                                     std::to_string(line_no));
        if (!j.at("user").is_null()) rec.user_id = j["user"].get<int>();
        if (!j.at("items").is_null())
            rec.item_ids = {j["items"].at(0).get<int>(), j["items"].at(1).get<int>()};
        ds.records.push_back(std::move(rec));
    }
    if (ds.records.empty()) throw std::runtime_error("load_dataset: dataset has zero records");
    if (ds.n() != n_expected)
        throw std::runtime_error("load_dataset: header n=" + std::to_string(n_expected) +
                                 " but file has " + std::to_string(ds.n()) + " records");
    return ds;
}

}  // namespace prefagg
