#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "prefagg/harness.hpp"
#include "prefagg/metrics.hpp"
#include "prefagg/oracles.hpp"

namespace prefagg {

using nlohmann::json;

namespace {

Vector vec2(double a, double b) {
    Vector v(2);
    v[0] = a;
    v[1] = b;
    return v;
}

// Five mean-symmetric discrete populations exercised by the sign identity
// check; the first is the correlated-pair instance.
std::vector<PopulationSpec> symmetric_population_set() {
    std::vector<PopulationSpec> pops;
    pops.push_back(named_population("correlated-pair"));
    pops.push_back(PopulationSpec::finite_mixture({{0.5, vec2(3.0, 0.5)}, {0.5, vec2(-1.0, -0.5)}}));
    pops.push_back(PopulationSpec::finite_mixture(
        {{0.25, vec2(1.0, 2.0)}, {0.25, vec2(1.0, -2.0)}, {0.25, vec2(3.0, 1.0)}, {0.25, vec2(-1.0, -1.0)}}));
    pops.push_back(PopulationSpec::two_type(0.5, 1.0));
    {
        Vector b0(3), e(3);
        b0 << 0.5, 1.0, -0.5;
        e << 2.0, -1.0, 3.0;
        pops.push_back(PopulationSpec::finite_mixture({{0.3, b0 + e},
                                                       {0.3, b0 - e},
                                                       {0.2, b0 + 0.5 * e},
                                                       {0.2, b0 - 0.5 * e}}));
    }
    return pops;
}

std::vector<Vector> random_diffs(int d, long count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vector> out;
    out.reserve(count);
    for (long i = 0; i < count; ++i) out.push_back(rng.normal_vector(d));
    return out;
}

}  // namespace

json run_oracle_suite(const ExperimentConfig& cfg) {
    json checks = json::array();
    bool all_pass = true;
    auto add = [&](const std::string& name, bool pass, json evidence) {
        checks.push_back({{"name", name}, {"pass", pass}, {"evidence", std::move(evidence)}});
        all_pass = all_pass && pass;
    };

    // 1. Two-type closed form over the full disagreement region grid.
    {
        const auto a = two_type_analysis(0.7, 3.0);
        bool pass = std::abs(a.u_bar + 0.2) < 1e-15 && a.u_naive > 0.0;
        int grid_bad = 0;
        for (int i = 0; i < 20; ++i) {
            const double m = 3.0 + (100.0 - 3.0) * i / 19.0;
            for (int j = 0; j < 20; ++j) {
                const double alpha = 0.7 + (1.0 - 1.0 / m - 0.7) * j / 19.0;
                const auto g = two_type_analysis(alpha, m);
                if (!(g.u_naive > 0.0 && g.u_bar < 0.0)) ++grid_bad;
            }
        }
        pass = pass && grid_bad == 0;
        add("two_type_region", pass,
            {{"u_bar_at_0.7_3", a.u_bar}, {"u_naive_at_0.7_3", a.u_naive}, {"grid_violations", grid_bad}});
    }

    // 2. Sign identity on symmetric populations.
    {
        long violations = 0;
        for (const auto& pop : symmetric_population_set()) {
            const auto diffs =
                random_diffs(pop.dim(), 1000, mix_seed(cfg.base_seed, {fnv1a64("identity")}));
            violations += static_cast<long>(sign_identity_violations(pop, diffs).size());
        }
        add("sign_identity_symmetric", violations == 0, {{"violations", violations}});
    }

    // 3. Reweighting identity: the two infinite-data routes agree.
    {
        double worst = 0.0;
        OptimConfig oc;
        oc.learning_rate = 2.0;
        oc.max_epochs = 400;
        for (int p = 0; p < 5; ++p) {
            Rng rng(mix_seed(cfg.base_seed, {fnv1a64("prop1"), static_cast<std::uint64_t>(p)}));
            std::vector<MixtureComponent> comps;
            double total = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double w = 0.2 + rng.uniform();
                comps.push_back({w, 2.0 * rng.normal_vector(3)});
                total += w;
            }
            for (auto& c : comps) c.weight /= total;
            const auto pop = PopulationSpec::finite_mixture(comps);
            const Matrix sigma = Matrix::Identity(3, 3);
            for (int s = 0; s < 3; ++s) {
                const std::uint64_t seed = mix_seed(cfg.base_seed, {fnv1a64("prop1-mc"),
                                                                    static_cast<std::uint64_t>(p),
                                                                    static_cast<std::uint64_t>(s)});
                const Vector a = reweighted_mean_direction(pop, sigma, 1000000, seed);
                const auto b = population_mle_direction(pop, sigma, 1000000, oc, seed + 1);
                worst = std::max(worst, rad2deg(angle(a, b.direction)));
            }
        }
        add("reweighting_identity", worst < 2.0, {{"worst_angle_degrees", worst}});
    }

    // 4. Symmetric counterexample: pooled fit biased, quadrature magnitude.
    {
        const auto pop = named_population("correlated-pair");
        const Matrix sigma = Matrix::Identity(2, 2);
        OptimConfig oc;
        oc.learning_rate = 2.0;
        oc.max_epochs = 400;
        const auto mle = population_mle_direction(pop, sigma, 1000000, oc,
                                                  mix_seed(cfg.base_seed, {fnv1a64("cx")}));
        const Vector e1 = vec2(1.0, 0.0);
        const double bias_deg = rad2deg(angle(mle.direction, e1));
        const double quad_gap =
            expected_sigmoid_deriv_gauss(5.0) - expected_sigmoid_deriv_gauss(1.0);
        add("symmetric_counterexample", bias_deg > 1.0 && std::abs(quad_gap) > 1e-3,
            {{"mle_angle_degrees", bias_deg}, {"weight_gap", quad_gap}});
    }

    // 5. Curvature probe: local exponent of the excess risk near the mean.
    {
        const auto pop = named_population("correlated-pair");
        const auto diffs = DiffDistribution::gaussian(Matrix::Identity(2, 2));
        const std::vector<double> angles = {0.05, 0.1, 0.2, 0.4, 0.7};
        const auto sweep = curvature_probe(pop, diffs, angles, 2000000,
                                           mix_seed(cfg.base_seed, {fnv1a64("curvature")}));
        std::vector<double> xs, ys;
        json pts = json::array();
        for (const auto& [a, est] : sweep) {
            pts.push_back({{"angle", a}, {"excess", est.value}, {"std_error", est.std_error}});
            if (est.value > 0.0) {
                xs.push_back(a);
                ys.push_back(est.value);
            }
        }
        const double p = log_log_slope(xs, ys);
        add("curvature_exponent", p > 1.5 && p < 2.5, {{"exponent", p}, {"points", pts}});
    }

    json report;
    report["checks"] = checks;
    report["all_pass"] = all_pass;
    report["code_version"] = kVersion;
    std::filesystem::create_directories(cfg.output_dir);
    std::ofstream out(cfg.output_dir / "oracle_report.json");
    if (out) out << report.dump(2) << "\n";
    return report;
}

}  // namespace prefagg
