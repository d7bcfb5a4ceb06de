#include "prefagg/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "prefagg/metrics.hpp"
#include "prefagg/oracles.hpp"

namespace prefagg {

using nlohmann::json;

const char* const kCsvHeader =
    "experiment,estimator,n,scale,k,replicate,seed,angle_degrees,disagreement_rate,wall_time_s,"
    "converged";

std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::EstimatorComparison: return "estimator_comparison";
        case ExperimentKind::RateSweep: return "rate_sweep";
        case ExperimentKind::ScaleSweep: return "scale_sweep";
        case ExperimentKind::EmComparison: return "em_comparison";
        case ExperimentKind::OracleSuite: return "oracle_suite";
    }
    throw std::logic_error("unreachable");
}

ExperimentKind experiment_kind_from_string(const std::string& s) {
    if (s == "estimator_comparison") return ExperimentKind::EstimatorComparison;
    if (s == "rate_sweep") return ExperimentKind::RateSweep;
    if (s == "scale_sweep") return ExperimentKind::ScaleSweep;
    if (s == "em_comparison") return ExperimentKind::EmComparison;
    if (s == "oracle_suite") return ExperimentKind::OracleSuite;
    throw std::invalid_argument("unknown experiment: " + s);
}

json ExperimentConfig::to_json() const {
    json j;
    j["version"] = 1;
    j["experiment"] = to_string(experiment);
    j["population"] = population.to_json();
    j["diffs"] = diffs.to_json();
    j["sample_sizes"] = sample_sizes;
    j["scales"] = scales;
    j["em_k"] = em_k;
    j["replicates"] = replicates;
    j["base_seed"] = base_seed;
    j["optimizer"] = optimizer.to_json();
    j["rlhf_optimizer"] = rlhf_optimizer ? rlhf_optimizer->to_json() : json(nullptr);
    j["sign_optimizer"] = sign_optimizer ? sign_optimizer->to_json() : json(nullptr);
    j["lambda_schedule"] = lambda_schedule.to_json();
    j["panel"] = panel ? json({{"n_users", panel->n_users}, {"pairs_per_user", panel->pairs_per_user}})
                       : json(nullptr);
    j["eval_diffs"] = eval_diffs;
    j["output_dir"] = output_dir.string();
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    bool saw_version = false;
    for (const auto& [key, value] : j.items()) {
        if (key == "version") {
            if (value.get<int>() != 1) throw std::invalid_argument("config: unsupported version");
            saw_version = true;
        } else if (key == "experiment") c.experiment = experiment_kind_from_string(value.get<std::string>());
        else if (key == "population") c.population = PopulationSpec::from_json(value);
        else if (key == "diffs") c.diffs = DiffDistribution::from_json(value);
        else if (key == "sample_sizes") c.sample_sizes = value.get<std::vector<long>>();
        else if (key == "scales") c.scales = value.get<std::vector<double>>();
        else if (key == "em_k") c.em_k = value.get<std::vector<int>>();
        else if (key == "replicates") c.replicates = value.get<int>();
        else if (key == "base_seed") c.base_seed = value.get<std::uint64_t>();
        else if (key == "optimizer") c.optimizer = OptimConfig::from_json(value);
        else if (key == "rlhf_optimizer") {
            if (!value.is_null()) c.rlhf_optimizer = OptimConfig::from_json(value);
        } else if (key == "sign_optimizer") {
            if (!value.is_null()) c.sign_optimizer = OptimConfig::from_json(value);
        } else if (key == "lambda_schedule") c.lambda_schedule = LambdaSchedule::from_json(value);
        else if (key == "panel") {
            if (!value.is_null())
                c.panel = PanelSpec{value.at("n_users").get<int>(),
                                    value.at("pairs_per_user").get<int>()};
        } else if (key == "eval_diffs") c.eval_diffs = value.get<long>();
        else if (key == "output_dir") c.output_dir = value.get<std::string>();
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    if (!saw_version) throw std::invalid_argument("config: missing version field");
    if (c.replicates < 1) throw std::invalid_argument("config: replicates must be >= 1");
    if (c.population.dim() != c.diffs.dim())
        throw std::invalid_argument("config: population and diff dimensions differ");
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config: parse error in " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    out += '"';
    return out;
}

bool row_less(const RunRecord& a, const RunRecord& b) {
    const auto key = [](const RunRecord& r) {
        return std::tuple(r.experiment, r.n, r.scale, r.k.value_or(-1), r.estimator, r.replicate);
    };
    return key(a) < key(b);
}

}  // namespace

void write_results_csv(const std::vector<RunRecord>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_results_csv: cannot open " + path.string());
    out << kCsvHeader << "\n";
    for (const auto& r : rows) {
        out << csv_field(r.experiment) << ',' << csv_field(r.estimator) << ',' << r.n << ','
            << format_double(r.scale) << ',' << (r.k ? std::to_string(*r.k) : std::string()) << ','
            << r.replicate << ',' << r.seed << ',' << format_double(r.angle_degrees) << ','
            << format_double(r.disagreement_rate) << ',' << format_double(r.wall_time_s) << ','
            << (r.converged ? "true" : "false") << "\n";
    }
    if (!out) throw std::runtime_error("write_results_csv: write failed");
}

std::vector<RunRecord> read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_results_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("read_results_csv: empty file");
    if (line != kCsvHeader)
        throw std::runtime_error("read_results_csv: unexpected header row: " + line);
    std::vector<RunRecord> rows;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string field;
        bool quoted = false;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || (line[i] == ',' && !quoted)) {
                fields.push_back(field);
                field.clear();
            } else if (line[i] == '"') {
                if (quoted && i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = !quoted;
                }
            } else {
                field += line[i];
            }
        }
        if (fields.size() != 11)
            throw std::runtime_error("read_results_csv: row " + std::to_string(line_no) + " has " +
                                     std::to_string(fields.size()) + " fields, expected 11");
        try {
            RunRecord r;
            r.experiment = fields[0];
            r.estimator = fields[1];
            r.n = std::stol(fields[2]);
            r.scale = std::stod(fields[3]);
            if (!fields[4].empty()) r.k = std::stoi(fields[4]);
            r.replicate = std::stoi(fields[5]);
            r.seed = std::stoull(fields[6]);
            r.angle_degrees = std::stod(fields[7]);
            r.disagreement_rate = std::stod(fields[8]);
            r.wall_time_s = std::stod(fields[9]);
            r.converged = fields[10] == "true";
            rows.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw std::runtime_error("read_results_csv: row " + std::to_string(line_no) +
                                     " malformed: " + e.what());
        }
    }
    return rows;
}

void write_config_snapshot(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json snap;
    snap["config"] = cfg.to_json();
    snap["code_version"] = kVersion;
    snap["base_seed"] = cfg.base_seed;
    std::ofstream out(dir / "config_snapshot.json");
    if (!out) throw std::runtime_error("cannot write config snapshot in " + dir.string());
    out << snap.dump(2) << "\n";
}

int resolve_worker_count(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("PREFAGG_WORKERS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace {

// Deterministic evaluation diffs for the disagreement metric, shared by all
// estimators at a sweep point.
std::vector<Vector> draw_eval_diffs(const ExperimentConfig& cfg, std::uint64_t salt) {
    Rng rng(mix_seed(cfg.base_seed, {0xE7A1u, salt}));
    std::vector<Vector> diffs;
    diffs.reserve(cfg.eval_diffs);
    if (cfg.diffs.kind() == DiffDistribution::Kind::ItemCatalog) {
        const auto& feats = cfg.diffs.features();
        const int m = static_cast<int>(feats.size());
        for (long i = 0; i < cfg.eval_diffs; ++i) {
            const int a = rng.uniform_int(m);
            int b = rng.uniform_int(m - 1);
            if (b >= a) ++b;
            diffs.push_back(feats[a] - feats[b]);
        }
    } else {
        for (long i = 0; i < cfg.eval_diffs; ++i) diffs.push_back(cfg.diffs.sample(rng));
    }
    return diffs;
}

struct TaskResult {
    std::vector<RunRecord> rows;
};

// Runs `tasks` indices over a small thread pool; merge order is by task
// index, so worker count never changes the output.
std::vector<RunRecord> run_parallel(long n_tasks, int workers,
                                    const std::function<std::vector<RunRecord>(long)>& task) {
    std::vector<std::vector<RunRecord>> results(n_tasks);
    std::atomic<long> next{0};
    auto worker = [&]() {
        for (;;) {
            const long t = next.fetch_add(1);
            if (t >= n_tasks) return;
            results[t] = task(t);
        }
    };
    const int n_threads = static_cast<int>(std::max<long>(1, std::min<long>(workers, n_tasks)));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    std::vector<RunRecord> merged;
    for (auto& r : results) {
        merged.insert(merged.end(), std::make_move_iterator(r.begin()),
                      std::make_move_iterator(r.end()));
    }
    std::sort(merged.begin(), merged.end(), row_less);
    return merged;
}

double elapsed_s(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RunRecord score_estimate(const ExperimentConfig& cfg, const std::string& name, const Estimate& est,
                         const Vector& mu_bar, const std::vector<Vector>& eval_diffs,
                         RunRecord base, double wall_time) {
    base.estimator = name;
    base.angle_degrees = rad2deg(angle(est.mu_hat, mu_bar));
    base.disagreement_rate = disagreement_rate(est.mu_hat, mu_bar, eval_diffs).rate;
    base.wall_time_s = wall_time;
    base.converged = est.converged;
    return base;
}

std::vector<RunRecord> comparison_rows_for(const ExperimentConfig& cfg,
                                           const PopulationSpec& population, double scale, long n,
                                           int replicate, const std::vector<Vector>& eval_diffs) {
    const std::uint64_t seed =
        mix_seed(cfg.base_seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(replicate)});
    RunRecord base;
    base.experiment = to_string(cfg.experiment);
    base.n = n;
    base.scale = scale;
    base.replicate = replicate;
    base.seed = seed;
    const Vector mean = mean_beta(population);
    const Vector mu_bar = mean / mean.norm();
    std::vector<RunRecord> rows;
    Dataset ds;
    try {
        ds = generate(population, cfg.diffs, n, cfg.panel, seed);
    } catch (const std::exception&) {
        // Generation failure poisons both estimator rows for this replicate.
        for (const char* name : {"rlhf", "sign"}) {
            RunRecord r = base;
            r.estimator = name;
            rows.push_back(r);
        }
        return rows;
    }
    for (const char* name : {"rlhf", "sign"}) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            OptimConfig oc = std::string(name) == "rlhf" ? cfg.rlhf_cfg() : cfg.sign_cfg();
            oc.seed = mix_seed(seed, {fnv1a64(name)});
            const Estimate est = std::string(name) == "rlhf"
                                     ? fit_rlhf(ds, oc)
                                     : fit_sign(ds, oc, cfg.lambda_schedule);
            rows.push_back(score_estimate(cfg, name, est, mu_bar, eval_diffs, base, elapsed_s(t0)));
        } catch (const std::exception&) {
            RunRecord r = base;
            r.estimator = name;
            r.wall_time_s = elapsed_s(t0);
            rows.push_back(r);
        }
    }
    return rows;
}

void persist(const ExperimentConfig& cfg, const std::vector<RunRecord>& rows) {
    std::filesystem::create_directories(cfg.output_dir);
    write_config_snapshot(cfg, cfg.output_dir);
    write_results_csv(rows, cfg.output_dir / "results.csv");
}

}  // namespace

std::vector<RunRecord> run_estimator_comparison(const ExperimentConfig& cfg, int workers) {
    if (cfg.sample_sizes.empty())
        throw std::invalid_argument("estimator_comparison: sample_sizes must be nonempty");
    const int w = resolve_worker_count(workers);
    const long n_tasks = static_cast<long>(cfg.sample_sizes.size()) * cfg.replicates;
    const std::vector<Vector> eval_diffs = draw_eval_diffs(cfg, 0);
    auto rows = run_parallel(n_tasks, w, [&](long t) {
        const long n = cfg.sample_sizes[t / cfg.replicates];
        const int rep = static_cast<int>(t % cfg.replicates);
        return comparison_rows_for(cfg, cfg.population, 1.0, n, rep, eval_diffs);
    });
    persist(cfg, rows);
    return rows;
}

RateSweepResult run_rate_sweep(const ExperimentConfig& cfg, int workers) {
    if (cfg.sample_sizes.size() < 3)
        throw std::invalid_argument("rate_sweep: needs at least three sample sizes");
    {
        const auto [lo, hi] = std::minmax_element(cfg.sample_sizes.begin(), cfg.sample_sizes.end());
        if (static_cast<double>(*hi) / static_cast<double>(*lo) < 100.0)
            throw std::invalid_argument("rate_sweep: sample sizes must span at least two decades");
    }
    if (!is_mean_symmetric(cfg.population, 1e-9) &&
        cfg.population.kind() == PopulationSpec::Kind::FiniteMixture)
        throw std::invalid_argument("rate_sweep: population must be mean-symmetric");

    const int w = resolve_worker_count(workers);
    const long n_tasks = static_cast<long>(cfg.sample_sizes.size()) * cfg.replicates;
    const std::vector<Vector> eval_diffs = draw_eval_diffs(cfg, 0);
    const Vector mean = mean_beta(cfg.population);
    const Vector mu_bar = mean / mean.norm();

    auto rows = run_parallel(n_tasks, w, [&](long t) -> std::vector<RunRecord> {
        const long n = cfg.sample_sizes[t / cfg.replicates];
        const int rep = static_cast<int>(t % cfg.replicates);
        const std::uint64_t seed = mix_seed(
            cfg.base_seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep)});
        RunRecord base;
        base.experiment = to_string(cfg.experiment);
        base.n = n;
        base.replicate = rep;
        base.seed = seed;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const Dataset ds = generate(cfg.population, cfg.diffs, n, cfg.panel, seed);
            OptimConfig oc = cfg.sign_cfg();
            oc.seed = mix_seed(seed, {fnv1a64("sign")});
            const Estimate est = fit_sign(ds, oc, cfg.lambda_schedule);
            return {score_estimate(cfg, "sign", est, mu_bar, eval_diffs, base, elapsed_s(t0))};
        } catch (const std::exception&) {
            base.estimator = "sign";
            base.wall_time_s = elapsed_s(t0);
            return {base};
        }
    });

    // Slope of log(mean angle) against log(n).
    RateSweepResult out;
    out.records = rows;
    std::map<long, std::vector<double>> by_n;
    for (const auto& r : rows) {
        if (std::isfinite(r.angle_degrees)) by_n[r.n].push_back(r.angle_degrees);
    }
    if (by_n.size() < 3) throw std::runtime_error("rate_sweep: too few successful sweep points");
    std::vector<double> ns, means;
    for (const auto& [n, angles] : by_n) {
        ns.push_back(static_cast<double>(n));
        means.push_back(pairwise_sum(angles) / static_cast<double>(angles.size()));
    }
    out.slope = log_log_slope(ns, means);

    // Bootstrap over replicates (resampled per sweep point), 1000 resamples.
    Rng rng(mix_seed(cfg.base_seed, {fnv1a64("bootstrap")}));
    std::vector<double> slopes;
    slopes.reserve(1000);
    for (int b = 0; b < 1000; ++b) {
        std::vector<double> bm;
        bm.reserve(ns.size());
        bool ok = true;
        for (const auto& [n, angles] : by_n) {
            double acc = 0.0;
            for (std::size_t i = 0; i < angles.size(); ++i)
                acc += angles[rng.uniform_int(static_cast<int>(angles.size()))];
            const double mean_b = acc / static_cast<double>(angles.size());
            if (!(mean_b > 0.0)) ok = false;
            bm.push_back(mean_b);
        }
        if (ok) slopes.push_back(log_log_slope(ns, bm));
    }
    std::sort(slopes.begin(), slopes.end());
    out.ci_low = slopes[static_cast<std::size_t>(0.025 * (slopes.size() - 1))];
    out.ci_high = slopes[static_cast<std::size_t>(0.975 * (slopes.size() - 1))];

    persist(cfg, rows);
    json summary = {{"slope", out.slope}, {"ci_low", out.ci_low}, {"ci_high", out.ci_high}};
    std::ofstream sf(cfg.output_dir / "rate_summary.json");
    sf << summary.dump(2) << "\n";
    return out;
}

std::vector<RunRecord> run_scale_sweep(const ExperimentConfig& cfg, int workers) {
    if (cfg.scales.empty()) throw std::invalid_argument("scale_sweep: scales must be nonempty");
    if (cfg.sample_sizes.size() != 1)
        throw std::invalid_argument("scale_sweep: exactly one sample size expected");
    const long n = cfg.sample_sizes.front();
    const int w = resolve_worker_count(workers);
    const long n_tasks = static_cast<long>(cfg.scales.size()) * cfg.replicates;
    const std::vector<Vector> eval_diffs = draw_eval_diffs(cfg, 0);
    auto rows = run_parallel(n_tasks, w, [&](long t) {
        const double s = cfg.scales[t / cfg.replicates];
        const int rep = static_cast<int>(t % cfg.replicates);
        const PopulationSpec scaled = scale_heterogeneity(cfg.population, s);
        // Seeds depend on (n, replicate) only, so scale 1 reproduces the
        // plain comparison rows exactly.
        return comparison_rows_for(cfg, scaled, s, n, rep, eval_diffs);
    });
    persist(cfg, rows);

    // Per-scale summary with the relative disagreement improvement.
    std::map<double, std::array<std::pair<double, long>, 2>> agg;
    for (const auto& r : rows) {
        if (!std::isfinite(r.disagreement_rate)) continue;
        const int slot = r.estimator == "rlhf" ? 0 : 1;
        auto& a = agg[r.scale][slot];
        a.first += r.disagreement_rate;
        a.second += 1;
    }
    json per_scale = json::array();
    for (const auto& [s, slots] : agg) {
        const double rl = slots[0].second ? slots[0].first / slots[0].second : 0.0;
        const double si = slots[1].second ? slots[1].first / slots[1].second : 0.0;
        per_scale.push_back({{"scale", s},
                             {"rlhf_disagreement", rl},
                             {"sign_disagreement", si},
                             {"relative_improvement", rl > 0.0 ? (rl - si) / rl : 0.0}});
    }
    std::ofstream sf(cfg.output_dir / "scale_summary.json");
    sf << per_scale.dump(2) << "\n";
    return rows;
}

std::vector<RunRecord> run_em_comparison(const ExperimentConfig& cfg, int workers) {
    if (!cfg.panel) throw std::invalid_argument("em_comparison: panel spec required");
    if (cfg.em_k.empty()) throw std::invalid_argument("em_comparison: em_k must be nonempty");
    const long n = static_cast<long>(cfg.panel->n_users) * cfg.panel->pairs_per_user;
    const int w = resolve_worker_count(workers);
    const std::vector<Vector> eval_diffs = draw_eval_diffs(cfg, 0);
    const Vector mean = mean_beta(cfg.population);
    const Vector mu_bar = mean / mean.norm();

    auto rows = run_parallel(cfg.replicates, w, [&](long t) {
        const int rep = static_cast<int>(t);
        const std::uint64_t seed = mix_seed(
            cfg.base_seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep)});
        RunRecord base;
        base.experiment = to_string(cfg.experiment);
        base.n = n;
        base.replicate = rep;
        base.seed = seed;
        std::vector<RunRecord> out;
        const Dataset ds = generate(cfg.population, cfg.diffs, n, cfg.panel, seed);
        {
            const auto t0 = std::chrono::steady_clock::now();
            OptimConfig oc = cfg.rlhf_cfg();
            oc.seed = mix_seed(seed, {fnv1a64("rlhf")});
            out.push_back(score_estimate(cfg, "rlhf", fit_rlhf(ds, oc), mu_bar, eval_diffs, base,
                                         elapsed_s(t0)));
        }
        {
            const auto t0 = std::chrono::steady_clock::now();
            OptimConfig oc = cfg.sign_cfg();
            oc.seed = mix_seed(seed, {fnv1a64("sign")});
            out.push_back(score_estimate(cfg, "sign", fit_sign(ds, oc, cfg.lambda_schedule), mu_bar,
                                         eval_diffs, base, elapsed_s(t0)));
        }
        for (int k : cfg.em_k) {
            const auto t0 = std::chrono::steady_clock::now();
            RunRecord r = base;
            r.estimator = "em";
            r.k = k;
            try {
                OptimConfig oc = cfg.rlhf_cfg();
                oc.seed = mix_seed(seed, {fnv1a64("em"), static_cast<std::uint64_t>(k)});
                Rng rng(mix_seed(seed, {fnv1a64("em-init"), static_cast<std::uint64_t>(k)}));
                const EmResult em = fit_em(ds, k, oc, rng);
                r.angle_degrees = rad2deg(angle(em.beta_em, mu_bar));
                r.disagreement_rate =
                    disagreement_rate(em.beta_em, mu_bar, eval_diffs).rate;
                r.converged = em.iterations < 50;
            } catch (const std::exception&) {
                // failure row keeps NaN metrics
            }
            r.wall_time_s = elapsed_s(t0);
            out.push_back(r);
        }
        return out;
    });
    persist(cfg, rows);
    return rows;
}

}  // namespace prefagg
