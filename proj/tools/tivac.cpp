// Command-line front end: fit | predict | band | simulate | benchmark.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tivac/tivac.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct SharedOptions {
    std::uint64_t seed = 1;
    int threads = 1;
    std::string out_dir = ".";
    int grid_points = 200;
    int knots = 10;
    int order = 4;
    std::string lambda_grid;
    int folds = 10;
    bool quiet = false;
};

void add_shared(CLI::App* cmd, SharedOptions& opts) {
    cmd->add_option("--seed", opts.seed, "RNG seed (all output is deterministic per seed)");
    cmd->add_option("--threads", opts.threads, "worker threads (results identical for any count)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--out-dir", opts.out_dir, "output directory");
    cmd->add_option("--grid-points", opts.grid_points, "evaluation grid resolution")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--knots", opts.knots, "interior knot count")->check(CLI::NonNegativeNumber);
    cmd->add_option("--order", opts.order, "spline order (4 = cubic)");
    cmd->add_option("--lambda-grid", opts.lambda_grid,
                    "comma-separated smoothing-parameter grid (default 1e-2..1e6, 9 points)");
    cmd->add_option("--folds", opts.folds, "cross-validation folds");
    cmd->add_flag("--quiet", opts.quiet, "suppress the resolved-config log line");
}

std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    for (const auto& field : tivac::split_line(text)) {
        double value;
        if (!tivac::try_parse_double(field, value)) {
            tivac::fail("bad_" + what, "cannot parse " + what + " entry '" + field + "'");
        }
        out.push_back(value);
    }
    return out;
}

tivac::FitConfig make_fit_config(const SharedOptions& opts) {
    tivac::FitConfig cfg;
    cfg.interior_knots = opts.knots;
    cfg.spline_order = opts.order;
    if (!opts.lambda_grid.empty()) cfg.lambda_grid = parse_double_list(opts.lambda_grid, "lambda");
    cfg.cv_folds = opts.folds;
    cfg.seed = opts.seed;
    cfg.grid_points = opts.grid_points;
    cfg.threads = opts.threads;
    return cfg;
}

ordered_json fit_config_json(const tivac::FitConfig& cfg) {
    return ordered_json{{"interior_knots", cfg.interior_knots},
                        {"spline_order", cfg.spline_order},
                        {"lambda_grid", cfg.lambda_grid},
                        {"cv_folds", cfg.cv_folds},
                        {"newton",
                         {{"max_iter", cfg.newton.max_iter},
                          {"grad_tol", cfg.newton.grad_tol},
                          {"min_step", cfg.newton.min_step}}},
                        {"seed", cfg.seed},
                        {"grid_points", cfg.grid_points},
                        {"threads", cfg.threads}};
}

void write_sidecar(const std::string& out_dir, const std::string& command,
                   const ordered_json& config, const std::vector<std::string>& outputs,
                   double wall_seconds) {
    ordered_json j;
    j["tool"] = "tivac";
    j["version"] = tivac::kVersion;
    j["command"] = command;
    j["config"] = config;
    j["outputs"] = outputs;
    j["wall_seconds"] = wall_seconds;
    tivac::write_text_file(out_dir + "/" + command + "_run.json", j.dump(2) + "\n");
}

void log_config(const SharedOptions& opts, const std::string& command, const ordered_json& cfg) {
    if (opts.quiet) return;
    std::cerr << "tivac " << command << " config: " << cfg.dump() << "\n";
}

std::string out_path(const SharedOptions& opts, const std::string& name) {
    fs::create_directories(opts.out_dir);
    return opts.out_dir + "/" + name;
}

// --- fit ---------------------------------------------------------------------

int cmd_fit(const std::string& outcomes, const std::string& covariates, bool allow_dup,
            const SharedOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    const auto cfg = make_fit_config(opts);
    ordered_json cfg_json = fit_config_json(cfg);
    cfg_json["outcomes"] = outcomes;
    cfg_json["covariates"] = covariates;
    cfg_json["allow_duplicate_times"] = allow_dup;
    log_config(opts, "fit", cfg_json);

    const auto data = tivac::load_csv(outcomes, covariates, allow_dup);
    const auto model = tivac::fit(data, cfg);

    const std::string model_path = out_path(opts, "model.json");
    tivac::save_model(model, model_path);

    const auto grid = tivac::default_grid(model, opts.grid_points);
    std::string csv = "t";
    for (const auto& name : model.covariate_names) csv += ",beta_" + name;
    csv += '\n';
    std::vector<Eigen::VectorXd> curves;
    for (int k = 0; k < model.p(); ++k) curves.push_back(tivac::coefficient_curve(model, k, grid));
    for (std::size_t i = 0; i < grid.size(); ++i) {
        csv += tivac::format_double(grid[i]);
        for (const auto& curve : curves) {
            csv += ',';
            csv += tivac::format_double(curve[static_cast<Eigen::Index>(i)]);
        }
        csv += '\n';
    }
    const std::string coef_path = out_path(opts, "coefficients.csv");
    tivac::write_text_file(coef_path, csv);

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_sidecar(opts.out_dir, "fit", cfg_json, {"model.json", "coefficients.csv"}, wall);
    return 0;
}

// --- predict -------------------------------------------------------------------

int cmd_predict(const std::string& model_path, const std::string& x_text,
                const std::string& x_grid_text, const SharedOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    const auto model = tivac::load_model(model_path);
    const int p = model.p();

    Eigen::VectorXd base = Eigen::VectorXd::Zero(p);
    if (!x_text.empty()) {
        const auto values = parse_double_list(x_text, "x");
        if (static_cast<int>(values.size()) != p) {
            tivac::fail("bad_x", "--x needs " + std::to_string(p) + " values, got " +
                                     std::to_string(values.size()));
        }
        for (int k = 0; k < p; ++k) base[k] = values[static_cast<std::size_t>(k)];
    }

    // covariate grid for heatmap-style output: k:lo:hi:count with k 1-based
    std::vector<Eigen::VectorXd> x_rows;
    if (!x_grid_text.empty()) {
        const auto parts = tivac::split_line(x_grid_text, ':');
        double lo = 0.0, hi = 0.0;
        int index = 0, count = 0;
        bool ok = parts.size() == 4;
        if (ok) {
            try {
                index = std::stoi(parts[0]);
                count = std::stoi(parts[3]);
            } catch (const std::exception&) {
                ok = false;
            }
            ok = ok && tivac::try_parse_double(parts[1], lo) && tivac::try_parse_double(parts[2], hi);
        }
        if (!ok || index < 1 || index > p || count < 1) {
            tivac::fail("bad_x_grid", "--x-grid expects k:lo:hi:count with 1 <= k <= p");
        }
        for (double v : tivac::linspace(lo, hi, count)) {
            Eigen::VectorXd x = base;
            x[index - 1] = v;
            x_rows.push_back(std::move(x));
        }
    } else {
        x_rows.push_back(base);
    }

    const auto grid = tivac::linspace(model.t_min(), model.t_max(), opts.grid_points);

    ordered_json cfg_json{{"model", model_path},
                          {"x", x_text},
                          {"x_grid", x_grid_text},
                          {"grid_points", opts.grid_points},
                          {"seed", opts.seed}};
    log_config(opts, "predict", cfg_json);

    std::string csv = "t";
    for (const auto& name : model.covariate_names) csv += "," + name;
    csv += ",rho\n";
    for (const auto& x : x_rows) {
        const Eigen::VectorXd rho = tivac::correlation_surface(model, x, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            csv += tivac::format_double(grid[i]);
            for (int k = 0; k < p; ++k) {
                csv += ',';
                csv += tivac::format_double(x[k]);
            }
            csv += ',';
            csv += tivac::format_double(rho[static_cast<Eigen::Index>(i)]);
            csv += '\n';
        }
    }
    tivac::write_text_file(out_path(opts, "surface.csv"), csv);

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_sidecar(opts.out_dir, "predict", cfg_json, {"surface.csv"}, wall);
    return 0;
}

// --- band ----------------------------------------------------------------------

int cmd_band(const std::string& model_path, const std::string& outcomes,
             const std::string& covariates, int outer, int inner, double alpha,
             const SharedOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    if (!(alpha > 0.0 && alpha < 1.0)) {
        tivac::fail("bad_alpha", "alpha must lie strictly inside (0, 1)");
    }
    const auto model = tivac::load_model(model_path);
    const auto data = tivac::load_csv(outcomes, covariates);

    tivac::BandConfig config;
    config.outer_replicates = outer;
    config.inner_replicates = inner;
    config.alpha = alpha;
    config.grid = tivac::linspace(model.t_min(), model.t_max(), opts.grid_points);
    config.seed = opts.seed;
    config.threads = opts.threads;

    ordered_json cfg_json{{"model", model_path},
                          {"outcomes", outcomes},
                          {"covariates", covariates},
                          {"outer_replicates", outer},
                          {"inner_replicates", inner},
                          {"alpha", alpha},
                          {"grid_points", opts.grid_points},
                          {"seed", opts.seed},
                          {"threads", opts.threads}};
    log_config(opts, "band", cfg_json);

    const auto bands = tivac::bootstrap_scb(data, model, config);
    std::vector<std::string> outputs;
    for (const auto& band : bands) {
        const std::string stem = "band_" + std::to_string(band.covariate + 1);
        tivac::write_text_file(out_path(opts, stem + ".csv"), tivac::band_to_csv(band));
        const auto sidecar = tivac::band_sidecar(
            band, config, model.covariate_names[static_cast<std::size_t>(band.covariate)]);
        tivac::write_text_file(out_path(opts, stem + ".json"), sidecar.dump(2) + "\n");
        outputs.push_back(stem + ".csv");
        outputs.push_back(stem + ".json");
    }

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_sidecar(opts.out_dir, "band", cfg_json, outputs, wall);
    return 0;
}

// --- simulate / benchmark --------------------------------------------------------

tivac::ScenarioSpec parse_scenario(const ordered_json& j, std::optional<std::uint64_t> cli_seed) {
    tivac::ScenarioSpec spec;
    if (j.contains("covariate_kind")) {
        const auto kind = j.at("covariate_kind").get<std::string>();
        if (kind == "binary") {
            spec.covariate_kind = tivac::CovariateKind::binary;
        } else if (kind == "continuous") {
            spec.covariate_kind = tivac::CovariateKind::continuous;
        } else {
            tivac::fail("bad_scenario", "unknown covariate_kind '" + kind + "'");
        }
    }
    if (j.contains("shape")) {
        const auto& shape = j.at("shape");
        if (shape.is_string()) {
            spec.beta0_shape = spec.beta1_shape = tivac::parse_shape(shape.get<std::string>());
        } else {
            spec.beta0_shape = tivac::parse_shape(shape.at("beta0").get<std::string>());
            spec.beta1_shape = tivac::parse_shape(shape.at("beta1").get<std::string>());
        }
    }
    if (j.contains("time_design")) {
        const auto& design = j.at("time_design");
        if (design.is_string()) {
            spec.time_design = tivac::parse_time_design(design.get<std::string>());
        } else {
            spec.time_design = tivac::TimeDesign::custom(design.at("min_m").get<int>(),
                                                         design.at("max_m").get<int>());
        }
    }
    if (j.contains("n")) spec.n = j.at("n").get<int>();
    if (j.contains("t_max")) spec.t_max = j.at("t_max").get<int>();
    if (j.contains("sigma1_sq")) spec.sigma1_sq = j.at("sigma1_sq").get<double>();
    if (j.contains("sigma2_sq")) spec.sigma2_sq = j.at("sigma2_sq").get<double>();
    if (j.contains("noise_sd")) spec.noise_sd = j.at("noise_sd").get<double>();
    if (j.contains("replications")) spec.replications = j.at("replications").get<int>();
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    if (cli_seed.has_value()) spec.seed = *cli_seed;  // CLI flag > config file > default
    tivac::validate_scenario(spec);
    return spec;
}

ordered_json scenario_json(const tivac::ScenarioSpec& spec) {
    ordered_json j;
    j["covariate_kind"] = tivac::to_string(spec.covariate_kind);
    j["shape"] = {{"beta0", tivac::to_string(spec.beta0_shape)},
                  {"beta1", tivac::to_string(spec.beta1_shape)}};
    j["time_design"] = {{"label", spec.time_design.label},
                        {"min_m", spec.time_design.min_m},
                        {"max_m", spec.time_design.max_m}};
    j["n"] = spec.n;
    j["t_max"] = spec.t_max;
    j["sigma1_sq"] = spec.sigma1_sq;
    j["sigma2_sq"] = spec.sigma2_sq;
    j["noise_sd"] = spec.noise_sd;
    j["replications"] = spec.replications;
    j["seed"] = spec.seed;
    return j;
}

ordered_json parse_config_file(const std::string& path) {
    try {
        return ordered_json::parse(tivac::read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        tivac::fail("bad_config", path + ": " + e.what());
    }
}

int cmd_simulate(const std::string& config_path, int replication, bool seed_given,
                 const SharedOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    const auto file = parse_config_file(config_path);
    const auto spec = parse_scenario(
        file, seed_given ? std::optional<std::uint64_t>(opts.seed) : std::nullopt);

    ordered_json cfg_json = scenario_json(spec);
    cfg_json["replication"] = replication;
    log_config(opts, "simulate", cfg_json);

    const auto generated = tivac::generate(spec, replication);
    fs::create_directories(opts.out_dir);
    tivac::save_csv(generated.data, opts.out_dir + "/outcomes.csv",
                    opts.out_dir + "/covariates.csv");

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_sidecar(opts.out_dir, "simulate", cfg_json, {"outcomes.csv", "covariates.csv"}, wall);
    return 0;
}

int cmd_benchmark(const std::string& config_path, bool seed_given, const SharedOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    const auto file = parse_config_file(config_path);
    if (!file.contains("scenarios") || !file.at("scenarios").is_array()) {
        tivac::fail("bad_config", config_path + ": expected a 'scenarios' array");
    }
    std::vector<tivac::ScenarioSpec> scenarios;
    for (const auto& s : file.at("scenarios")) {
        scenarios.push_back(parse_scenario(
            s, seed_given ? std::optional<std::uint64_t>(opts.seed) : std::nullopt));
    }
    std::vector<std::string> methods = {"tivac", "empirical"};
    if (file.contains("methods")) methods = file.at("methods").get<std::vector<std::string>>();

    const auto fit_cfg = make_fit_config(opts);
    ordered_json cfg_json;
    cfg_json["scenarios"] = ordered_json::array();
    for (const auto& s : scenarios) cfg_json["scenarios"].push_back(scenario_json(s));
    cfg_json["methods"] = methods;
    cfg_json["fit"] = fit_config_json(fit_cfg);
    log_config(opts, "benchmark", cfg_json);

    const auto report = tivac::run_benchmark(scenarios, methods, fit_cfg, opts.threads);
    tivac::write_text_file(out_path(opts, "benchmark.csv"), tivac::report_to_csv(report));
    tivac::write_text_file(out_path(opts, "benchmark_aggregate.csv"),
                           tivac::aggregate_to_csv(tivac::aggregate_report(report)));

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_sidecar(opts.out_dir, "benchmark", cfg_json,
                  {"benchmark.csv", "benchmark_aggregate.csv"}, wall);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TiVAC: time-varying, covariate-dependent correlation for bivariate "
                 "longitudinal outcomes"};
    app.require_subcommand(1);

    SharedOptions fit_opts, predict_opts, band_opts, sim_opts, bench_opts;

    auto* fit_cmd = app.add_subcommand("fit", "estimate the model from CSV data");
    std::string fit_outcomes, fit_covariates;
    bool allow_dup = false;
    fit_cmd->add_option("outcomes", fit_outcomes, "long-format outcome CSV")->required();
    fit_cmd->add_option("covariates", fit_covariates, "per-subject covariate CSV")->required();
    fit_cmd->add_flag("--allow-duplicate-times", allow_dup,
                      "keep duplicate (subject, time) rows instead of rejecting them");
    add_shared(fit_cmd, fit_opts);

    auto* predict_cmd = app.add_subcommand("predict", "correlation surface from a fitted model");
    std::string predict_model, predict_x, predict_x_grid;
    predict_cmd->add_option("model", predict_model, "model.json from `tivac fit`")->required();
    predict_cmd->add_option("--x", predict_x, "comma-separated covariate vector");
    predict_cmd->add_option("--x-grid", predict_x_grid,
                            "k:lo:hi:count sweep of covariate k (heatmap output)");
    add_shared(predict_cmd, predict_opts);

    auto* band_cmd = app.add_subcommand("band", "bootstrap simultaneous confidence bands");
    std::string band_model, band_outcomes, band_covariates;
    int band_B = 200, band_M = 50;
    double band_alpha = 0.05;
    band_cmd->add_option("model", band_model, "model.json from `tivac fit`")->required();
    band_cmd->add_option("outcomes", band_outcomes, "outcome CSV the model was fit on")->required();
    band_cmd->add_option("covariates", band_covariates, "covariate CSV")->required();
    band_cmd->add_option("--B", band_B, "outer bootstrap replicates");
    band_cmd->add_option("--M", band_M, "inner bootstrap replicates");
    band_cmd->add_option("--alpha", band_alpha, "band level (0.05 = 95% bands)");
    add_shared(band_cmd, band_opts);

    auto* sim_cmd = app.add_subcommand("simulate", "draw a synthetic dataset from a scenario");
    std::string sim_config;
    int sim_replication = 0;
    sim_cmd->add_option("config", sim_config, "scenario JSON file")->required();
    sim_cmd->add_option("--replication", sim_replication, "replication index");
    add_shared(sim_cmd, sim_opts);

    auto* bench_cmd = app.add_subcommand("benchmark", "run the scenario benchmark protocol");
    std::string bench_config;
    bench_cmd->add_option("config", bench_config, "benchmark JSON file (scenarios + methods)")
        ->required();
    add_shared(bench_cmd, bench_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "ERROR cli_usage: " << e.what() << std::endl;
        return 1;
    }

    try {
        if (app.got_subcommand(fit_cmd)) {
            return cmd_fit(fit_outcomes, fit_covariates, allow_dup, fit_opts);
        }
        if (app.got_subcommand(predict_cmd)) {
            return cmd_predict(predict_model, predict_x, predict_x_grid, predict_opts);
        }
        if (app.got_subcommand(band_cmd)) {
            return cmd_band(band_model, band_outcomes, band_covariates, band_B, band_M,
                            band_alpha, band_opts);
        }
        if (app.got_subcommand(sim_cmd)) {
            return cmd_simulate(sim_config, sim_replication,
                                sim_cmd->count("--seed") > 0, sim_opts);
        }
        if (app.got_subcommand(bench_cmd)) {
            return cmd_benchmark(bench_config, bench_cmd->count("--seed") > 0, bench_opts);
        }
        std::cerr << "ERROR cli_usage: no subcommand given" << std::endl;
        return 1;
    } catch (const tivac::Error& e) {
        std::cerr << "ERROR " << e.code() << ": " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "ERROR internal: " << e.what() << std::endl;
        return 2;
    }
}
