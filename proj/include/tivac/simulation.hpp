#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "tivac/dataset.hpp"
#include "tivac/error.hpp"
#include "tivac/fisher.hpp"
#include "tivac/io.hpp"
#include "tivac/model.hpp"
#include "tivac/parallel.hpp"
#include "tivac/rng.hpp"
#include "tivac/stats.hpp"

namespace tivac {

enum class CovariateKind { binary, continuous };
enum class ShapeKind { linear, seasonal, logistic };

inline std::string to_string(CovariateKind kind) {
    return kind == CovariateKind::binary ? "binary" : "continuous";
}

inline std::string to_string(ShapeKind shape) {
    switch (shape) {
        case ShapeKind::linear: return "linear";
        case ShapeKind::seasonal: return "seasonal";
        default: return "logistic";
    }
}

inline ShapeKind parse_shape(const std::string& name) {
    if (name == "linear") return ShapeKind::linear;
    if (name == "seasonal") return ShapeKind::seasonal;
    if (name == "logistic") return ShapeKind::logistic;
    fail("bad_shape", "unknown coefficient shape '" + name +
                          "' (expected linear, seasonal, or logistic)");
}

// Observation-count regimes: each subject draws m_i in [min_m, max_m] and
// then m_i distinct integer times from {1, ..., t_max}.
struct TimeDesign {
    int min_m = 3;
    int max_m = 40;
    std::string label = "T_Moderate";

    static TimeDesign t_low() { return {3, 10, "T_Low"}; }
    static TimeDesign t_moderate() { return {3, 40, "T_Moderate"}; }
    static TimeDesign t_high() { return {40, 40, "T_High"}; }
    static TimeDesign custom(int min_m, int max_m) {
        if (min_m < 1 || max_m < min_m) fail("bad_time_design", "need 1 <= min_m <= max_m");
        return {min_m, max_m,
                "custom[" + std::to_string(min_m) + "," + std::to_string(max_m) + "]"};
    }
};

inline TimeDesign parse_time_design(const std::string& name) {
    if (name == "T_Low") return TimeDesign::t_low();
    if (name == "T_Moderate") return TimeDesign::t_moderate();
    if (name == "T_High") return TimeDesign::t_high();
    fail("bad_time_design", "unknown time design '" + name + "'");
}

struct ScenarioSpec {
    CovariateKind covariate_kind = CovariateKind::binary;
    ShapeKind beta0_shape = ShapeKind::linear;
    ShapeKind beta1_shape = ShapeKind::linear;
    TimeDesign time_design = TimeDesign::t_moderate();
    int n = 300;
    int t_max = 500;
    double sigma1_sq = 1.0;
    double sigma2_sq = 4.0;
    double noise_sd = 0.0;  // SD of the latent eta noise
    int replications = 50;
    std::uint64_t seed = 1;
};

inline void validate_scenario(const ScenarioSpec& spec) {
    if (spec.n < 2) fail("bad_scenario", "scenario needs n >= 2");
    if (spec.t_max < 2) fail("bad_scenario", "scenario needs t_max >= 2");
    if (!(spec.noise_sd >= 0.0)) fail("bad_scenario", "noise_sd must be >= 0");
    if (!(spec.sigma1_sq > 0.0 && spec.sigma2_sq > 0.0)) {
        fail("bad_scenario", "marginal variances must be positive");
    }
    if (spec.replications < 0) fail("bad_scenario", "replications must be >= 0");
}

enum class CoefficientRole { beta0, beta1 };

// Fixed trajectory patterns on normalized time u = t / t_max.
inline double coefficient_function(ShapeKind shape, CoefficientRole role, double u) {
    const bool intercept = role == CoefficientRole::beta0;
    switch (shape) {
        case ShapeKind::linear:
            return intercept ? -0.5 + 1.5 * u : 1.0 - 0.8 * u;
        case ShapeKind::seasonal:
            return intercept ? 0.6 * std::sin(2.0 * std::numbers::pi * u)
                             : 0.8 * std::cos(2.0 * std::numbers::pi * u);
        default:  // logistic
            return intercept ? -0.8 + 1.6 / (1.0 + std::exp(-10.0 * (u - 0.5)))
                             : 1.2 / (1.0 + std::exp(-10.0 * (u - 0.4))) - 0.4;
    }
}

// True latent-correlation generator, eta(t, x) = beta0(t) + beta1(t) * x.
struct TrueEta {
    std::function<double(double)> beta0;
    std::function<double(double)> beta1;

    double eta(double t, double x) const { return beta0(t) + beta1(t) * x; }
    double rho(double t, double x) const { return rho_of_eta(eta(t, x)); }
};

inline TrueEta scenario_truth(const ScenarioSpec& spec) {
    const double t_max = static_cast<double>(spec.t_max);
    const ShapeKind s0 = spec.beta0_shape;
    const ShapeKind s1 = spec.beta1_shape;
    return TrueEta{
        [s0, t_max](double t) {
            return coefficient_function(s0, CoefficientRole::beta0, t / t_max);
        },
        [s1, t_max](double t) {
            return coefficient_function(s1, CoefficientRole::beta1, t / t_max);
        }};
}

struct GeneratedDataset {
    LongitudinalDataset data;
    TrueEta truth;
    ScenarioSpec spec;
};

namespace detail {

inline constexpr std::uint64_t kSimSalt = 0x73696d75ULL;  // "simu"

inline std::string subject_id(int index) {
    std::string num = std::to_string(index + 1);
    while (num.size() < 4) num.insert(num.begin(), '0');
    return "s" + num;
}

}  // namespace detail

// Draws one dataset under an arbitrary truth; deterministic per
// (spec.seed, replication_index).  The generated covariate matrix carries an
// explicit all-ones intercept column followed by the scenario covariate, so
// it feeds the fit pipeline directly.
inline GeneratedDataset generate_with_truth(const ScenarioSpec& spec, const TrueEta& truth,
                                            int replication_index) {
    validate_scenario(spec);
    RngStream stream(spec.seed, detail::kSimSalt,
                     static_cast<std::uint64_t>(replication_index));
    const double s1 = std::sqrt(spec.sigma1_sq);
    const double s2 = std::sqrt(spec.sigma2_sq);

    GeneratedDataset out;
    out.truth = truth;
    out.spec = spec;
    auto& data = out.data;
    data.covariate_names = {"intercept", "x"};
    data.covariates.resize(spec.n, 2);
    data.subjects.reserve(static_cast<std::size_t>(spec.n));
    for (int i = 0; i < spec.n; ++i) {
        const int span = spec.time_design.max_m - spec.time_design.min_m;
        const int m = spec.time_design.min_m +
                      (span == 0 ? 0
                                 : static_cast<int>(stream.uniform_int(
                                       static_cast<std::uint64_t>(span + 1))));
        if (m > spec.t_max) {
            fail("bad_scenario", "cannot draw " + std::to_string(m) +
                                     " distinct times from {1.." + std::to_string(spec.t_max) +
                                     "}");
        }
        const double x = spec.covariate_kind == CovariateKind::binary
                             ? (i < spec.n / 2 ? 0.0 : 1.0)
                             : stream.uniform();
        data.covariates(i, 0) = 1.0;
        data.covariates(i, 1) = x;

        SubjectRecord subject;
        subject.id = detail::subject_id(i);
        const auto times = stream.sample_without_replacement(1, spec.t_max, m);
        subject.times.reserve(times.size());
        subject.y1.reserve(times.size());
        subject.y2.reserve(times.size());
        for (int t_int : times) {
            const double t = static_cast<double>(t_int);
            double eta = truth.eta(t, x);
            if (spec.noise_sd > 0.0) eta += stream.normal(0.0, spec.noise_sd);
            const double rho = rho_of_eta(eta);
            const double z1 = stream.normal();
            const double z2 = stream.normal();
            subject.times.push_back(t);
            subject.y1.push_back(s1 * z1);
            subject.y2.push_back(s2 * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2));
        }
        data.subjects.push_back(std::move(subject));
    }
    validate_dataset(data);
    return out;
}

inline GeneratedDataset generate(const ScenarioSpec& spec, int replication_index) {
    return generate_with_truth(spec, scenario_truth(spec), replication_index);
}

// --- local-linear (tricube) smoother, the LOESS stand-in --------------------

namespace detail {

// Weighted local-linear prediction at x0 from the k nearest points.
inline double local_linear_at(const std::vector<double>& xs, const std::vector<double>& ys,
                              double x0, int k) {
    const int n = static_cast<int>(xs.size());
    k = std::clamp(k, 2, n);
    std::vector<double> dist(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) dist[static_cast<std::size_t>(i)] = std::abs(xs[static_cast<std::size_t>(i)] - x0);
    std::vector<double> sorted = dist;
    std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end());
    const double h = sorted[static_cast<std::size_t>(k - 1)];

    if (h == 0.0) {  // all selected points sit exactly at x0
        double sum = 0.0;
        int count = 0;
        for (int i = 0; i < n; ++i) {
            if (dist[static_cast<std::size_t>(i)] == 0.0) {
                sum += ys[static_cast<std::size_t>(i)];
                ++count;
            }
        }
        return sum / static_cast<double>(count);
    }

    double sw = 0.0, swx = 0.0, swxx = 0.0, swy = 0.0, swxy = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = dist[static_cast<std::size_t>(i)] / h;
        if (d >= 1.0) continue;
        const double c = 1.0 - d * d * d;
        const double w = c * c * c;
        const double dx = xs[static_cast<std::size_t>(i)] - x0;
        sw += w;
        swx += w * dx;
        swxx += w * dx * dx;
        swy += w * ys[static_cast<std::size_t>(i)];
        swxy += w * dx * ys[static_cast<std::size_t>(i)];
    }
    const double det = sw * swxx - swx * swx;
    if (!(sw > 0.0)) {  // everything at the cutoff; fall back to the plain mean of the k nearest
        double sum = 0.0;
        int count = 0;
        for (int i = 0; i < n; ++i) {
            if (dist[static_cast<std::size_t>(i)] <= h) {
                sum += ys[static_cast<std::size_t>(i)];
                ++count;
            }
        }
        return sum / static_cast<double>(count);
    }
    if (det <= 1e-12 * sw * swxx || swxx == 0.0) return swy / sw;  // degenerate spread
    // intercept of the weighted least-squares line centered at x0
    return (swxx * swy - swx * swxy) / det;
}

}  // namespace detail

// Tricube-weighted local-linear regression with a span giving the fraction
// of points in each neighborhood.
inline std::vector<double> local_linear_smooth(const std::vector<double>& xs,
                                               const std::vector<double>& ys, double span,
                                               const std::vector<double>& eval_points) {
    if (xs.size() != ys.size() || xs.empty()) fail("bad_smoother_input", "need matching x/y");
    if (!(span > 0.0 && span <= 1.0)) fail("bad_span", "span must lie in (0, 1]");
    std::vector<double> out;
    out.reserve(eval_points.size());
    if (xs.size() == 1) {
        out.assign(eval_points.size(), ys[0]);
        return out;
    }
    const int k = static_cast<int>(std::ceil(span * static_cast<double>(xs.size())));
    for (double x0 : eval_points) out.push_back(detail::local_linear_at(xs, ys, x0, k));
    return out;
}

// Span selection by 5-fold cross-validation (round-robin folds over the
// time-sorted points); ties prefer the larger (smoother) span.
inline double select_span_cv(const std::vector<double>& xs, const std::vector<double>& ys,
                             const std::vector<double>& spans) {
    const int n = static_cast<int>(xs.size());
    const int folds = std::min(5, n);
    if (folds < 2) return spans.back();
    double best_span = spans.front();
    double best_sse = std::numeric_limits<double>::infinity();
    for (double span : spans) {
        double sse = 0.0;
        for (int f = 0; f < folds; ++f) {
            std::vector<double> train_x, train_y, held_x, held_y;
            for (int i = 0; i < n; ++i) {
                if (i % folds == f) {
                    held_x.push_back(xs[static_cast<std::size_t>(i)]);
                    held_y.push_back(ys[static_cast<std::size_t>(i)]);
                } else {
                    train_x.push_back(xs[static_cast<std::size_t>(i)]);
                    train_y.push_back(ys[static_cast<std::size_t>(i)]);
                }
            }
            const auto pred = local_linear_smooth(train_x, train_y, span, held_x);
            for (std::size_t i = 0; i < held_x.size(); ++i) {
                const double e = pred[i] - held_y[i];
                sse += e * e;
            }
        }
        if (sse <= best_sse) {  // spans scanned ascending, so ties pick the larger
            best_sse = sse;
            best_span = span;
        }
    }
    return best_span;
}

// --- Empirical baseline ------------------------------------------------------

struct EmpiricalCurve {
    double group_value = std::numeric_limits<double>::quiet_NaN();  // NaN = pooled
    std::vector<double> grid;
    std::vector<double> rho;
    double span = 1.0;
    int raw_points = 0;
};

// Pointwise Pearson correlations at each observed time (>= 3 pairs in-group),
// smoothed over time with the span-selected local-linear smoother and clipped
// to [-1, 1].  Grouping covariates must be binary.
inline std::vector<EmpiricalCurve> empirical_baseline(const LongitudinalDataset& data,
                                                      std::optional<int> group_by,
                                                      const std::vector<double>& grid) {
    std::map<double, std::vector<int>> groups;
    if (group_by.has_value()) {
        const int col = *group_by;
        if (col < 0 || col >= data.p()) fail("bad_group_column", "group column out of range");
        for (int i = 0; i < data.n(); ++i) groups[data.covariates(i, col)].push_back(i);
        if (groups.size() > 2) {
            fail("empirical_nonbinary",
                 "the empirical baseline needs a binary grouping covariate; column '" +
                     data.covariate_names[static_cast<std::size_t>(col)] + "' has " +
                     std::to_string(groups.size()) + " distinct values");
        }
    } else {
        auto& all = groups[std::numeric_limits<double>::quiet_NaN()];
        for (int i = 0; i < data.n(); ++i) all.push_back(i);
    }

    const std::vector<double> spans = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<EmpiricalCurve> out;
    for (const auto& [value, members] : groups) {
        // pool pairs per exact time point
        std::map<double, std::pair<std::vector<double>, std::vector<double>>> per_time;
        for (int i : members) {
            const auto& s = data.subjects[static_cast<std::size_t>(i)];
            for (std::size_t j = 0; j < s.size(); ++j) {
                auto& bucket = per_time[s.times[j]];
                bucket.first.push_back(s.y1[j]);
                bucket.second.push_back(s.y2[j]);
            }
        }
        std::vector<double> times, corrs;
        for (const auto& [t, pairs] : per_time) {
            if (pairs.first.size() < 3) continue;
            const double r = pearson(pairs.first, pairs.second);
            if (!std::isfinite(r)) continue;
            times.push_back(t);
            corrs.push_back(r);
        }
        if (times.empty()) {
            fail("empirical_insufficient_pairs",
                 "group " + format_double(value) +
                     " has no time point with >= 3 outcome pairs");
        }
        EmpiricalCurve curve;
        curve.group_value = value;
        curve.grid = grid;
        curve.raw_points = static_cast<int>(times.size());
        curve.span = select_span_cv(times, corrs, spans);
        curve.rho = local_linear_smooth(times, corrs, curve.span, grid);
        for (double& r : curve.rho) r = std::clamp(r, -1.0, 1.0);
        out.push_back(std::move(curve));
    }
    return out;
}

// --- RMSE protocol -----------------------------------------------------------

inline double rmse(std::span<const double> estimate, std::span<const double> truth) {
    if (estimate.size() != truth.size() || estimate.empty()) {
        fail("bad_rmse_input", "estimate and truth grids must match and be nonempty");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        const double e = estimate[i] - truth[i];
        sum += e * e;
    }
    return std::sqrt(sum / static_cast<double>(estimate.size()));
}

// --- benchmark harness -------------------------------------------------------

struct BenchmarkRow {
    int scenario = 0;  // 1-based index into the scenario list
    std::string shape;
    std::string covariate_kind;
    std::string time_design;
    double noise_sd = 0.0;
    std::string method;
    std::string group;  // "0" / "1" for binary, "all" for continuous
    int replication = 0;
    double rmse = std::numeric_limits<double>::quiet_NaN();  // NaN = method failed
    double seconds = 0.0;
};

struct BenchmarkAggregate {
    int scenario = 0;
    std::string shape;
    std::string covariate_kind;
    std::string time_design;
    double noise_sd = 0.0;
    std::string method;
    std::string group;
    double mean_rmse = std::numeric_limits<double>::quiet_NaN();
    double sd_rmse = std::numeric_limits<double>::quiet_NaN();
    int replications_ok = 0;
};

struct BenchmarkReport {
    std::vector<BenchmarkRow> rows;
};

inline std::string shape_label(const ScenarioSpec& spec) {
    if (spec.beta0_shape == spec.beta1_shape) return to_string(spec.beta0_shape);
    return to_string(spec.beta0_shape) + "+" + to_string(spec.beta1_shape);
}

inline const std::vector<std::string>& known_benchmark_methods() {
    static const std::vector<std::string> methods = {"tivac", "empirical", "covreg",
                                                     "cocoa-reml", "cocoa-mle", "cocoa-gee2"};
    return methods;
}

namespace detail {

inline constexpr std::uint64_t kBenchFitSalt = 0x62656e63ULL;  // "benc"

// x-grid of 100 values on [0, 1] for the continuous-covariate protocol
inline std::vector<double> continuous_x_grid() { return linspace(0.0, 1.0, 100); }

// Per-method estimates evaluated against the truth; one (group, rmse) pair
// per binary group or a single pooled value for continuous covariates.
inline std::vector<std::pair<std::string, double>> score_method(
    const std::string& method, const GeneratedDataset& sim, const FitConfig& fit_template,
    int replication) {
    const auto& spec = sim.spec;
    const auto& data = sim.data;
    const std::vector<double> tgrid = linspace(data.t_min, data.t_max, fit_template.grid_points);

    auto truth_curve = [&](double x) {
        std::vector<double> rho(tgrid.size());
        for (std::size_t i = 0; i < tgrid.size(); ++i) rho[i] = sim.truth.rho(tgrid[i], x);
        return rho;
    };

    if (method == "tivac") {
        FitConfig cfg = fit_template;
        std::uint64_t mix = spec.seed;
        detail::splitmix64_next(mix);
        cfg.seed = mix ^ (kBenchFitSalt + static_cast<std::uint64_t>(replication));
        const FittedModel model = fit(data, cfg);
        if (spec.covariate_kind == CovariateKind::binary) {
            std::vector<std::pair<std::string, double>> out;
            for (double x : {0.0, 1.0}) {
                Eigen::Vector2d covs(1.0, x);
                const Eigen::VectorXd est = correlation_surface(model, covs, tgrid);
                const std::vector<double> est_v(est.data(), est.data() + est.size());
                out.emplace_back(x == 0.0 ? "0" : "1", rmse(est_v, truth_curve(x)));
            }
            return out;
        }
        std::vector<double> est_all, truth_all;
        for (double x : continuous_x_grid()) {
            Eigen::Vector2d covs(1.0, x);
            const Eigen::VectorXd est = correlation_surface(model, covs, tgrid);
            est_all.insert(est_all.end(), est.data(), est.data() + est.size());
            const auto truth = truth_curve(x);
            truth_all.insert(truth_all.end(), truth.begin(), truth.end());
        }
        return {{"all", rmse(est_all, truth_all)}};
    }

    if (method == "empirical") {
        if (spec.covariate_kind != CovariateKind::binary) {
            fail("empirical_nonbinary", "the empirical baseline cannot handle continuous covariates");
        }
        const auto curves = empirical_baseline(data, 1, tgrid);
        std::vector<std::pair<std::string, double>> out;
        for (const auto& curve : curves) {
            const std::string group = curve.group_value == 0.0 ? "0" : "1";
            out.emplace_back(group, rmse(curve.rho, truth_curve(curve.group_value)));
        }
        return out;
    }

    // adapter seam for external comparators; not bundled here
    fail("method_unavailable", "method '" + method + "' has no bundled implementation");
}

}  // namespace detail

// Generate -> fit -> score over every scenario x replication x method.
// Method failures are recorded as missing (NaN) rows, not fatal errors.
inline BenchmarkReport run_benchmark(const std::vector<ScenarioSpec>& scenarios,
                                     const std::vector<std::string>& methods,
                                     const FitConfig& fit_template, int threads = 1) {
    for (const auto& method : methods) {
        const auto& known = known_benchmark_methods();
        if (std::find(known.begin(), known.end(), method) == known.end()) {
            fail("bad_method", "unknown benchmark method '" + method + "'");
        }
    }
    for (const auto& spec : scenarios) validate_scenario(spec);

    struct Task {
        int scenario_index;
        int replication;
    };
    std::vector<Task> tasks;
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
        for (int r = 0; r < scenarios[s].replications; ++r) {
            tasks.push_back({static_cast<int>(s), r});
        }
    }

    std::vector<std::vector<BenchmarkRow>> slots(tasks.size());
    parallel_for(static_cast<int>(tasks.size()), threads, [&](int task_index) {
        const auto& task = tasks[static_cast<std::size_t>(task_index)];
        const auto& spec = scenarios[static_cast<std::size_t>(task.scenario_index)];
        const auto sim = generate(spec, task.replication);
        auto& rows = slots[static_cast<std::size_t>(task_index)];
        for (const auto& method : methods) {
            BenchmarkRow base;
            base.scenario = task.scenario_index + 1;
            base.shape = shape_label(spec);
            base.covariate_kind = to_string(spec.covariate_kind);
            base.time_design = spec.time_design.label;
            base.noise_sd = spec.noise_sd;
            base.method = method;
            base.replication = task.replication;
            const auto start = std::chrono::steady_clock::now();
            try {
                auto scores = detail::score_method(method, sim, fit_template, task.replication);
                const double secs = std::chrono::duration<double>(
                                        std::chrono::steady_clock::now() - start)
                                        .count();
                for (const auto& [group, value] : scores) {
                    BenchmarkRow row = base;
                    row.group = group;
                    row.rmse = value;
                    row.seconds = secs;
                    rows.push_back(std::move(row));
                }
            } catch (const Error&) {
                const double secs = std::chrono::duration<double>(
                                        std::chrono::steady_clock::now() - start)
                                        .count();
                BenchmarkRow row = base;
                row.group = spec.covariate_kind == CovariateKind::binary ? "0" : "all";
                row.seconds = secs;
                rows.push_back(row);
                if (spec.covariate_kind == CovariateKind::binary) {
                    row.group = "1";
                    rows.push_back(row);
                }
            }
        }
    });

    BenchmarkReport report;
    for (auto& rows : slots) {
        for (auto& row : rows) report.rows.push_back(std::move(row));
    }
    return report;
}

inline std::vector<BenchmarkAggregate> aggregate_report(const BenchmarkReport& report) {
    std::vector<BenchmarkAggregate> out;
    std::map<std::tuple<int, std::string, std::string>, std::size_t> index;  // (scenario, method, group)
    std::map<std::tuple<int, std::string, std::string>, std::vector<double>> values;
    for (const auto& row : report.rows) {
        const auto key = std::make_tuple(row.scenario, row.method, row.group);
        if (!index.count(key)) {
            BenchmarkAggregate agg;
            agg.scenario = row.scenario;
            agg.shape = row.shape;
            agg.covariate_kind = row.covariate_kind;
            agg.time_design = row.time_design;
            agg.noise_sd = row.noise_sd;
            agg.method = row.method;
            agg.group = row.group;
            index.emplace(key, out.size());
            out.push_back(std::move(agg));
        }
        if (std::isfinite(row.rmse)) values[key].push_back(row.rmse);
    }
    for (auto& [key, pos] : index) {
        auto& agg = out[pos];
        const auto& vals = values[key];
        agg.replications_ok = static_cast<int>(vals.size());
        if (!vals.empty()) agg.mean_rmse = mean(vals);
        if (vals.size() >= 2) agg.sd_rmse = sample_sd(vals);
    }
    return out;
}

inline std::string report_to_csv(const BenchmarkReport& report) {
    std::string out =
        "scenario,shape,covariate_kind,time_design,noise_sd,method,group,replication,rmse,seconds\n";
    for (const auto& row : report.rows) {
        out += std::to_string(row.scenario) + ',' + row.shape + ',' + row.covariate_kind + ',' +
               row.time_design + ',' + format_double(row.noise_sd) + ',' + row.method + ',' +
               row.group + ',' + std::to_string(row.replication) + ',' + format_double(row.rmse) +
               ',' + format_double(row.seconds) + '\n';
    }
    return out;
}

inline std::string aggregate_to_csv(const std::vector<BenchmarkAggregate>& aggregates) {
    std::string out =
        "scenario,shape,covariate_kind,time_design,noise_sd,method,group,mean_rmse,sd_rmse,"
        "replications_ok\n";
    for (const auto& agg : aggregates) {
        out += std::to_string(agg.scenario) + ',' + agg.shape + ',' + agg.covariate_kind + ',' +
               agg.time_design + ',' + format_double(agg.noise_sd) + ',' + agg.method + ',' +
               agg.group + ',' + format_double(agg.mean_rmse) + ',' + format_double(agg.sd_rmse) +
               ',' + std::to_string(agg.replications_ok) + '\n';
    }
    return out;
}

inline BenchmarkReport report_from_csv(const std::string& text) {
    BenchmarkReport report;
    std::size_t pos = 0;
    bool header = true;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        if (trim(line).empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        const auto fields = split_line(line);
        if (fields.size() != 10) fail("csv_parse", "benchmark row needs 10 fields");
        BenchmarkRow row;
        row.scenario = std::stoi(fields[0]);
        row.shape = fields[1];
        row.covariate_kind = fields[2];
        row.time_design = fields[3];
        if (!try_parse_double(fields[4], row.noise_sd)) fail("csv_parse", "bad noise_sd");
        row.method = fields[5];
        row.group = fields[6];
        row.replication = std::stoi(fields[7]);
        if (fields[8] == "nan") {
            row.rmse = std::numeric_limits<double>::quiet_NaN();
        } else if (!try_parse_double(fields[8], row.rmse)) {
            fail("csv_parse", "bad rmse");
        }
        if (!try_parse_double(fields[9], row.seconds)) fail("csv_parse", "bad seconds");
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace tivac
