#pragma once

#include <json.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tivac/dataset.hpp"
#include "tivac/error.hpp"
#include "tivac/fisher.hpp"
#include "tivac/io.hpp"
#include "tivac/likelihood.hpp"
#include "tivac/parallel.hpp"
#include "tivac/rng.hpp"
#include "tivac/splines.hpp"
#include "tivac/version.hpp"

namespace tivac {

inline std::vector<double> default_lambda_grid() {
    std::vector<double> grid(9);
    for (int i = 0; i < 9; ++i) grid[static_cast<std::size_t>(i)] = std::pow(10.0, -2 + i);
    return grid;
}

struct FitConfig {
    int interior_knots = 10;
    int spline_order = 4;
    std::vector<double> lambda_grid = default_lambda_grid();
    int cv_folds = 10;
    NewtonControls newton;
    std::uint64_t seed = 1;
    int grid_points = 200;  // default evaluation grid resolution
    int threads = 1;
};

struct CvRecord {
    std::vector<double> lambdas;
    double heldout = -std::numeric_limits<double>::infinity();
    std::vector<double> fold_heldout;
    int diverged_folds = 0;
};

struct CvResult {
    std::vector<double> lambdas_hat;
    std::vector<CvRecord> table;
};

struct FittedModel {
    ThetaVector theta_hat;
    std::vector<double> lambdas_hat;
    SplineSpec spec;
    VarianceEstimates variances;
    NewtonReport report;
    std::vector<CvRecord> cv_table;
    std::uint64_t seed = 0;
    std::vector<std::string> covariate_names;

    int p() const { return static_cast<int>(covariate_names.size()); }
    double t_min() const { return spec.t_min(); }
    double t_max() const { return spec.t_max(); }
};

namespace detail {

inline constexpr std::uint64_t kFoldSalt = 0x666f6c6473ULL;  // "folds"

// Seeded permutation split into cv_folds contiguous blocks; whole subjects
// stay together.
inline std::vector<std::vector<int>> make_folds(int n, int folds, std::uint64_t seed) {
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    RngStream stream(seed, kFoldSalt);
    stream.shuffle(perm);
    std::vector<std::vector<int>> out(static_cast<std::size_t>(folds));
    for (int f = 0; f < folds; ++f) {
        const int lo = static_cast<int>(static_cast<long long>(f) * n / folds);
        const int hi = static_cast<int>(static_cast<long long>(f + 1) * n / folds);
        out[static_cast<std::size_t>(f)].assign(perm.begin() + lo, perm.begin() + hi);
    }
    return out;
}

struct CvWorkspace {
    std::vector<LikelihoodProblem> train;
    std::vector<LikelihoodProblem> held;
};

inline CvWorkspace make_cv_workspace(const LikelihoodProblem& master, int folds,
                                     std::uint64_t seed) {
    const int n = master.n_subjects();
    auto fold_members = make_folds(n, folds, seed);
    CvWorkspace ws;
    ws.train.reserve(static_cast<std::size_t>(folds));
    ws.held.reserve(static_cast<std::size_t>(folds));
    for (int f = 0; f < folds; ++f) {
        std::vector<bool> in_fold(static_cast<std::size_t>(n), false);
        for (int i : fold_members[static_cast<std::size_t>(f)]) {
            in_fold[static_cast<std::size_t>(i)] = true;
        }
        std::vector<int> train_idx, held_idx;
        for (int i = 0; i < n; ++i) {
            (in_fold[static_cast<std::size_t>(i)] ? held_idx : train_idx).push_back(i);
        }
        ws.train.push_back(master.subproblem(train_idx));
        ws.held.push_back(master.subproblem(held_idx));
    }
    return ws;
}

}  // namespace detail

// Coordinate-wise smoothing-parameter search: every lambda_k starts at the
// grid median, then each coordinate in turn scans the full grid holding the
// others fixed, keeping the value that maximizes the summed held-out
// (unpenalized) log-likelihood.  Ties go to the larger lambda.  At most two
// full cycles, stopping early when a cycle changes nothing.
inline CvResult cross_validate_problem(const LikelihoodProblem& master,
                                       const PenaltyMatrix& penalty, const FitConfig& config) {
    const int p = master.p();
    if (config.lambda_grid.empty()) fail("bad_lambda_grid", "lambda grid must be nonempty");
    std::vector<double> grid = config.lambda_grid;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    for (double lambda : grid) {
        if (!(lambda > 0.0) || !std::isfinite(lambda)) {
            fail("bad_lambda_grid", "lambda grid values must be strictly positive");
        }
    }
    const int g = static_cast<int>(grid.size());
    if (g == 1) {
        return CvResult{std::vector<double>(static_cast<std::size_t>(p), grid[0]), {}};
    }
    const int folds = config.cv_folds;
    if (folds < 2 || folds > master.n_subjects()) {
        fail("bad_folds", "cv_folds must lie in [2, n]; got " + std::to_string(folds) +
                              " with n = " + std::to_string(master.n_subjects()));
    }

    auto ws = detail::make_cv_workspace(master, folds, config.seed);
    const ThetaVector theta0 = ThetaVector::Zero(master.dim());

    CvResult result;
    std::map<std::vector<int>, std::size_t> seen;  // grid-index combo -> table row

    auto evaluate_batch = [&](const std::vector<std::vector<int>>& combos) {
        std::vector<std::vector<int>> todo;
        for (const auto& combo : combos) {
            if (!seen.count(combo)) todo.push_back(combo);
        }
        if (todo.empty()) return;
        const int tasks = static_cast<int>(todo.size()) * folds;
        std::vector<std::vector<double>> fold_scores(
            todo.size(), std::vector<double>(static_cast<std::size_t>(folds), 0.0));
        parallel_for(tasks, config.threads, [&](int task) {
            const std::size_t c = static_cast<std::size_t>(task) / static_cast<std::size_t>(folds);
            const int f = task % folds;
            std::vector<double> lambdas(static_cast<std::size_t>(p));
            for (int k = 0; k < p; ++k) {
                lambdas[static_cast<std::size_t>(k)] =
                    grid[static_cast<std::size_t>(todo[c][static_cast<std::size_t>(k)])];
            }
            auto [theta, report] = newton_raphson(ws.train[static_cast<std::size_t>(f)], penalty,
                                                  lambdas, theta0, config.newton);
            fold_scores[c][static_cast<std::size_t>(f)] =
                report.converged ? loglik(ws.held[static_cast<std::size_t>(f)], theta)
                                 : -std::numeric_limits<double>::infinity();
        });
        for (std::size_t c = 0; c < todo.size(); ++c) {
            CvRecord record;
            record.lambdas.resize(static_cast<std::size_t>(p));
            for (int k = 0; k < p; ++k) {
                record.lambdas[static_cast<std::size_t>(k)] =
                    grid[static_cast<std::size_t>(todo[c][static_cast<std::size_t>(k)])];
            }
            record.fold_heldout = fold_scores[c];
            record.heldout = 0.0;
            for (double s : record.fold_heldout) {
                record.heldout += s;
                if (std::isinf(s)) ++record.diverged_folds;
            }
            seen.emplace(todo[c], result.table.size());
            result.table.push_back(std::move(record));
        }
    };

    std::vector<int> current(static_cast<std::size_t>(p), g / 2);  // grid median
    for (int cycle = 0; cycle < 2; ++cycle) {
        bool changed = false;
        for (int k = 0; k < p; ++k) {
            std::vector<std::vector<int>> combos;
            combos.reserve(static_cast<std::size_t>(g));
            for (int j = 0; j < g; ++j) {
                auto combo = current;
                combo[static_cast<std::size_t>(k)] = j;
                combos.push_back(std::move(combo));
            }
            evaluate_batch(combos);

            // a fold whose training fit diverged for every candidate is fatal
            for (int f = 0; f < folds; ++f) {
                bool any_ok = false;
                for (const auto& combo : combos) {
                    const auto& rec = result.table[seen.at(combo)];
                    if (std::isfinite(rec.fold_heldout[static_cast<std::size_t>(f)])) {
                        any_ok = true;
                        break;
                    }
                }
                if (!any_ok) {
                    fail("cv_fold_failed", "fold " + std::to_string(f + 1) +
                                               " failed to converge for every lambda candidate");
                }
            }

            int best_j = current[static_cast<std::size_t>(k)];
            double best_score = result.table[seen.at(combos[static_cast<std::size_t>(best_j)])].heldout;
            for (int j = 0; j < g; ++j) {
                const double score = result.table[seen.at(combos[static_cast<std::size_t>(j)])].heldout;
                if (score > best_score || (score == best_score && j > best_j)) {
                    best_j = j;
                    best_score = score;
                }
            }
            if (best_j != current[static_cast<std::size_t>(k)]) {
                current[static_cast<std::size_t>(k)] = best_j;
                changed = true;
            }
        }
        if (!changed) break;
    }

    result.lambdas_hat.resize(static_cast<std::size_t>(p));
    for (int k = 0; k < p; ++k) {
        result.lambdas_hat[static_cast<std::size_t>(k)] =
            grid[static_cast<std::size_t>(current[static_cast<std::size_t>(k)])];
    }
    return result;
}

inline CvResult cross_validate(const LongitudinalDataset& data, const FitConfig& config) {
    const auto variances = estimate_variances(data);
    const auto spec =
        make_spec(data.t_min, data.t_max, config.interior_knots, config.spline_order);
    const auto penalty = difference_penalty(spec.q(), 2);
    const auto master = LikelihoodProblem::build(data, spec, variances);
    return cross_validate_problem(master, penalty, config);
}

// Full pipeline: pooled variance estimates, cross-validated smoothing
// parameters, final Newton-Raphson fit on all data.
inline FittedModel fit(const LongitudinalDataset& data, const FitConfig& config) {
    const auto variances = estimate_variances(data);
    const auto spec =
        make_spec(data.t_min, data.t_max, config.interior_knots, config.spline_order);
    const auto penalty = difference_penalty(spec.q(), 2);
    const auto master = LikelihoodProblem::build(data, spec, variances);

    auto cv = cross_validate_problem(master, penalty, config);

    auto [theta, report] = newton_raphson(master, penalty, cv.lambdas_hat,
                                          ThetaVector::Zero(master.dim()), config.newton);
    if (!report.converged) {
        fail("fit_diverged", "final fit did not converge after " +
                                 std::to_string(report.iterations) + " iterations (|grad| = " +
                                 format_double(report.final_gradient_norm) + ")");
    }

    FittedModel model;
    model.theta_hat = std::move(theta);
    model.lambdas_hat = std::move(cv.lambdas_hat);
    model.spec = spec;
    model.variances = variances;
    model.report = std::move(report);
    model.cv_table = std::move(cv.table);
    model.seed = config.seed;
    model.covariate_names = data.covariate_names;
    return model;
}

inline std::vector<double> default_grid(const FittedModel& model, int points) {
    return linspace(model.t_min(), model.t_max(), points);
}

// beta_k(t) on a time grid
inline Eigen::VectorXd coefficient_curve(const FittedModel& model, int k,
                                         std::span<const double> grid) {
    if (k < 0 || k >= model.p()) fail("bad_covariate_index", "covariate index out of range");
    const Eigen::MatrixXd basis = basis_matrix(model.spec, grid);
    return basis * theta_block(model.theta_hat, model.spec.q(), k);
}

// rho(t) = rho_of_eta{ sum_k x_k beta_k(t) } for a fixed covariate vector
inline Eigen::VectorXd correlation_surface(const FittedModel& model, const Eigen::VectorXd& x,
                                           std::span<const double> grid) {
    if (x.size() != model.p()) {
        fail("bad_covariate_vector", "expected " + std::to_string(model.p()) +
                                         " covariate values, got " + std::to_string(x.size()));
    }
    const Eigen::MatrixXd basis = basis_matrix(model.spec, grid);
    const Eigen::Map<const Eigen::MatrixXd> coeff(model.theta_hat.data(), model.spec.q(),
                                                  model.p());
    const Eigen::VectorXd eta = basis * (coeff * x);
    Eigen::VectorXd rho(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) rho[i] = rho_of_eta(eta[i]);
    return rho;
}

// --- JSON serialization -----------------------------------------------------

namespace detail {

inline nlohmann::ordered_json score_to_json(double value) {
    if (std::isfinite(value)) return value;
    return value > 0 ? "inf" : "-inf";
}

inline double score_from_json(const nlohmann::ordered_json& j) {
    if (j.is_string()) {
        return j.get<std::string>() == "-inf" ? -std::numeric_limits<double>::infinity()
                                              : std::numeric_limits<double>::infinity();
    }
    return j.get<double>();
}

}  // namespace detail

inline nlohmann::ordered_json model_to_json(const FittedModel& model) {
    nlohmann::ordered_json j;
    j["tool"] = "tivac";
    j["version"] = kVersion;
    j["spec"] = {{"order", model.spec.order},
                 {"interior_knot_count", model.spec.interior_knot_count},
                 {"knots", model.spec.knots}};
    j["covariate_names"] = model.covariate_names;
    j["theta"] = std::vector<double>(model.theta_hat.data(),
                                     model.theta_hat.data() + model.theta_hat.size());
    j["lambdas"] = model.lambdas_hat;
    j["variances"] = {{"sigma1_sq", model.variances.sigma1_sq},
                      {"sigma2_sq", model.variances.sigma2_sq}};
    j["seed"] = model.seed;
    j["report"] = {{"converged", model.report.converged},
                   {"iterations", model.report.iterations},
                   {"final_gradient_norm", model.report.final_gradient_norm},
                   {"final_penalized_loglik", model.report.final_penalized_loglik},
                   {"step_halvings", model.report.step_halvings},
                   {"hessian_ridge_used", model.report.hessian_ridge_used}};
    nlohmann::ordered_json table = nlohmann::ordered_json::array();
    for (const auto& rec : model.cv_table) {
        nlohmann::ordered_json row;
        row["lambdas"] = rec.lambdas;
        row["heldout"] = detail::score_to_json(rec.heldout);
        nlohmann::ordered_json fold_scores = nlohmann::ordered_json::array();
        for (double s : rec.fold_heldout) fold_scores.push_back(detail::score_to_json(s));
        row["fold_heldout"] = fold_scores;
        row["diverged_folds"] = rec.diverged_folds;
        table.push_back(std::move(row));
    }
    j["cv_table"] = std::move(table);
    return j;
}

inline FittedModel model_from_json(const nlohmann::ordered_json& j) {
    FittedModel model;
    model.spec.order = j.at("spec").at("order").get<int>();
    model.spec.interior_knot_count = j.at("spec").at("interior_knot_count").get<int>();
    model.spec.knots = j.at("spec").at("knots").get<std::vector<double>>();
    validate_spec(model.spec);
    model.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
    const auto theta = j.at("theta").get<std::vector<double>>();
    if (theta.size() != static_cast<std::size_t>(model.spec.q()) * model.covariate_names.size()) {
        fail("bad_model_file", "theta length does not match q * p");
    }
    model.theta_hat = Eigen::Map<const Eigen::VectorXd>(theta.data(),
                                                        static_cast<Eigen::Index>(theta.size()));
    model.lambdas_hat = j.at("lambdas").get<std::vector<double>>();
    model.variances.sigma1_sq = j.at("variances").at("sigma1_sq").get<double>();
    model.variances.sigma2_sq = j.at("variances").at("sigma2_sq").get<double>();
    model.seed = j.at("seed").get<std::uint64_t>();
    const auto& rep = j.at("report");
    model.report.converged = rep.at("converged").get<bool>();
    model.report.iterations = rep.at("iterations").get<int>();
    model.report.final_gradient_norm = rep.at("final_gradient_norm").get<double>();
    model.report.final_penalized_loglik = rep.at("final_penalized_loglik").get<double>();
    model.report.step_halvings = rep.at("step_halvings").get<int>();
    model.report.hessian_ridge_used = rep.at("hessian_ridge_used").get<double>();
    for (const auto& row : j.at("cv_table")) {
        CvRecord rec;
        rec.lambdas = row.at("lambdas").get<std::vector<double>>();
        rec.heldout = detail::score_from_json(row.at("heldout"));
        for (const auto& s : row.at("fold_heldout")) {
            rec.fold_heldout.push_back(detail::score_from_json(s));
        }
        rec.diverged_folds = row.at("diverged_folds").get<int>();
        model.cv_table.push_back(std::move(rec));
    }
    return model;
}

inline void save_model(const FittedModel& model, const std::string& path) {
    write_text_file(path, model_to_json(model).dump(2) + "\n");
}

inline FittedModel load_model(const std::string& path) {
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        fail("bad_model_file", path + ": " + e.what());
    }
    try {
        return model_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        fail("bad_model_file", path + ": " + e.what());
    }
}

}  // namespace tivac
