#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "prefagg/datagen.hpp"
#include "prefagg/estimators.hpp"
#include "prefagg/population.hpp"

namespace prefagg {

enum class ExperimentKind {
    EstimatorComparison,
    RateSweep,
    ScaleSweep,
    EmComparison,
    OracleSuite,
};

std::string to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string& s);

// Declarative description of a sweep. Parsed strictly: unknown keys are
// errors. Per-estimator optimizer overrides fall back to `optimizer`.
struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::EstimatorComparison;
    PopulationSpec population = named_population("fig1-analogue");
    DiffDistribution diffs = DiffDistribution::uniform_ball(1.0, 5);
    std::vector<long> sample_sizes;
    std::vector<double> scales;
    std::vector<int> em_k;
    int replicates = 1;
    std::uint64_t base_seed = 0;
    OptimConfig optimizer;
    std::optional<OptimConfig> rlhf_optimizer;
    std::optional<OptimConfig> sign_optimizer;
    LambdaSchedule lambda_schedule;
    std::optional<PanelSpec> panel;
    long eval_diffs = 10000;  // diffs sampled for the disagreement metric
    std::filesystem::path output_dir = ".";

    const OptimConfig& rlhf_cfg() const { return rlhf_optimizer ? *rlhf_optimizer : optimizer; }
    const OptimConfig& sign_cfg() const { return sign_optimizer ? *sign_optimizer : optimizer; }

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& path);
};

struct RunRecord {
    std::string experiment;
    std::string estimator;
    long n = 0;
    double scale = 1.0;
    std::optional<int> k;
    int replicate = 0;
    std::uint64_t seed = 0;
    double angle_degrees = std::numeric_limits<double>::quiet_NaN();
    double disagreement_rate = std::numeric_limits<double>::quiet_NaN();
    double wall_time_s = 0.0;
    bool converged = false;
};

// results.csv schema, RFC 4180, one header row.
extern const char* const kCsvHeader;

void write_results_csv(const std::vector<RunRecord>& rows, const std::filesystem::path& path);
std::vector<RunRecord> read_results_csv(const std::filesystem::path& path);

// Config snapshot (config + version + base seed) written next to results.
void write_config_snapshot(const ExperimentConfig& cfg, const std::filesystem::path& dir);

// Number of parallel replicate workers: explicit argument if > 0, else the
// PREFAGG_WORKERS environment variable, else the hardware concurrency.
int resolve_worker_count(int requested);

std::vector<RunRecord> run_estimator_comparison(const ExperimentConfig& cfg, int workers = 0);

struct RateSweepResult {
    std::vector<RunRecord> records;
    double slope = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};
RateSweepResult run_rate_sweep(const ExperimentConfig& cfg, int workers = 0);

std::vector<RunRecord> run_scale_sweep(const ExperimentConfig& cfg, int workers = 0);
std::vector<RunRecord> run_em_comparison(const ExperimentConfig& cfg, int workers = 0);

// Executes the analytic oracle checks and returns a pass/fail report.
nlohmann::json run_oracle_suite(const ExperimentConfig& cfg);

// Renders line charts (angle and disagreement against the sweep variable)
// from a results CSV; returns the written files. SVG output, no display
// server involved.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& results_csv,
                                              const std::filesystem::path& out_dir);

}  // namespace prefagg
