#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "prefagg/harness.hpp"
#include "prefagg/metrics.hpp"
#include "prefagg/oracles.hpp"

namespace {

using namespace prefagg;

struct CommonArgs {
    std::string config_path;
    std::string output_dir;
    int workers = 0;
};

ExperimentConfig load_config(const CommonArgs& args, ExperimentKind expected) {
    ExperimentConfig cfg = ExperimentConfig::load(args.config_path);
    if (cfg.experiment != expected) {
        throw std::invalid_argument("config experiment is '" + to_string(cfg.experiment) +
                                    "' but the subcommand expects '" + to_string(expected) + "'");
    }
    if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
    return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--output", args.output_dir, "output directory (overrides config)");
    cmd->add_option("--workers", args.workers, "parallel replicate workers");
}

void print_summary(const std::vector<RunRecord>& rows, const std::filesystem::path& out_dir) {
    std::map<std::string, std::pair<double, long>> mean_angle;
    for (const auto& r : rows) {
        if (!std::isfinite(r.angle_degrees)) continue;
        std::string name = r.estimator + (r.k ? " (K=" + std::to_string(*r.k) + ")" : "");
        auto& acc = mean_angle[name];
        acc.first += r.angle_degrees;
        acc.second += 1;
    }
    std::printf("wrote %zu rows to %s\n", rows.size(), (out_dir / "results.csv").c_str());
    for (const auto& [name, acc] : mean_angle) {
        std::printf("  %-12s mean angle %.2f deg over %ld fits\n", name.c_str(),
                    acc.first / acc.second, acc.second);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Preference aggregation estimators: sign vs cross-entropy reward fitting"};
    app.require_subcommand(1);

    CommonArgs compare_args, rate_args, scale_args, em_args, oracle_args, gen_args;
    std::string plot_csv, plot_out;
    std::string gen_out;

    auto* compare = app.add_subcommand("compare", "RLHF vs Sign over sample sizes");
    add_common(compare, compare_args);
    auto* rate = app.add_subcommand("rate", "Sign estimator convergence-rate sweep");
    add_common(rate, rate_args);
    auto* scale = app.add_subcommand("scale", "heterogeneity scale sweep");
    add_common(scale, scale_args);
    auto* em = app.add_subcommand("em", "pooled estimators vs panel EM");
    add_common(em, em_args);
    auto* oracles_cmd = app.add_subcommand("oracles", "analytic oracle suite");
    add_common(oracles_cmd, oracle_args);
    auto* plot = app.add_subcommand("plot", "render charts from a results CSV");
    plot->add_option("--results", plot_csv, "results.csv path")->required();
    plot->add_option("--output", plot_out, "output directory")->required();
    auto* gen = app.add_subcommand("gen-data", "generate and save a dataset");
    add_common(gen, gen_args);
    gen->add_option("--out", gen_out, "dataset output path (JSON lines)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*compare) {
            auto cfg = load_config(compare_args, ExperimentKind::EstimatorComparison);
            print_summary(run_estimator_comparison(cfg, compare_args.workers), cfg.output_dir);
        } else if (*rate) {
            auto cfg = load_config(rate_args, ExperimentKind::RateSweep);
            const auto res = run_rate_sweep(cfg, rate_args.workers);
            print_summary(res.records, cfg.output_dir);
            std::printf("fitted log-log slope %.4f, bootstrap 95%% CI [%.4f, %.4f]\n", res.slope,
                        res.ci_low, res.ci_high);
        } else if (*scale) {
            auto cfg = load_config(scale_args, ExperimentKind::ScaleSweep);
            print_summary(run_scale_sweep(cfg, scale_args.workers), cfg.output_dir);
        } else if (*em) {
            auto cfg = load_config(em_args, ExperimentKind::EmComparison);
            print_summary(run_em_comparison(cfg, em_args.workers), cfg.output_dir);
        } else if (*oracles_cmd) {
            auto cfg = load_config(oracle_args, ExperimentKind::OracleSuite);
            const auto report = run_oracle_suite(cfg);
            std::cout << report.dump(2) << "\n";
            if (!report.at("all_pass").get<bool>()) return 2;
        } else if (*plot) {
            const auto files = emit_plots(plot_csv, plot_out);
            for (const auto& f : files) std::printf("wrote %s\n", f.c_str());
        } else if (*gen) {
            ExperimentConfig cfg = ExperimentConfig::load(gen_args.config_path);
            if (cfg.sample_sizes.size() != 1)
                throw std::invalid_argument("gen-data: config must list exactly one sample size");
            const Dataset ds = generate(cfg.population, cfg.diffs, cfg.sample_sizes.front(),
                                        cfg.panel, cfg.base_seed);
            save_dataset(ds, gen_out);
            std::printf("wrote %ld records to %s\n", ds.n(), gen_out.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
