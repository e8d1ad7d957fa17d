#pragma once

#include <json.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "tivac/error.hpp"
#include "tivac/io.hpp"
#include "tivac/likelihood.hpp"
#include "tivac/model.hpp"
#include "tivac/parallel.hpp"
#include "tivac/rng.hpp"

namespace tivac {

struct BandConfig {
    int outer_replicates = 200;  // B
    int inner_replicates = 50;   // M
    double alpha = 0.05;
    std::vector<double> grid;  // defaults to the model grid when empty
    std::uint64_t seed = 1;
    int threads = 1;
};

// Simultaneous confidence band for one coefficient curve.
struct BandResult {
    int covariate = 0;  // 0-based index
    std::vector<double> grid;
    Eigen::VectorXd estimate;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    double critical_value = 0.0;
    Eigen::VectorXd overall_sd;  // bootstrap SD of the curve per grid point
    int dropped_replicates = 0;
};

namespace detail {

inline constexpr std::uint64_t kBootstrapSalt = 0x62616e64ULL;  // "band"

// empirical quantile as the ceil((1 - alpha) * (count + 1))-th order statistic
inline double upper_order_statistic(std::vector<double> values, double alpha) {
    std::sort(values.begin(), values.end());
    const auto count = static_cast<double>(values.size());
    auto rank = static_cast<std::size_t>(std::ceil((1.0 - alpha) * (count + 1.0)));
    rank = std::min(std::max<std::size_t>(rank, 1), values.size());
    return values[rank - 1];
}

// column-wise sample SD (denominator rows-1) of a replicate x grid matrix
inline Eigen::VectorXd columnwise_sd(const Eigen::MatrixXd& curves) {
    const Eigen::Index rows = curves.rows();
    const Eigen::VectorXd mean = curves.colwise().mean();
    Eigen::VectorXd sd(curves.cols());
    for (Eigen::Index t = 0; t < curves.cols(); ++t) {
        sd[t] = (curves.col(t).array() - mean[t]).square().sum() / static_cast<double>(rows - 1);
        sd[t] = std::sqrt(sd[t]);
    }
    return sd;
}

}  // namespace detail

// Nested-bootstrap simultaneous confidence bands.  Outer replicates resample
// subjects with replacement and refit the spline coefficients (smoothing
// parameters and variances stay frozen at the original-fit values); inner
// replicates resample each outer sample to studentize the max deviation.
// Replicate RNG streams are keyed on (seed, b, m), so execution order and
// thread count never change the result.
inline std::vector<BandResult> bootstrap_scb(const LongitudinalDataset& data,
                                             const FittedModel& model, const BandConfig& config) {
    if (config.outer_replicates < 50) fail("bad_band_config", "need at least 50 outer replicates");
    if (config.inner_replicates < 10) fail("bad_band_config", "need at least 10 inner replicates");
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) {
        fail("bad_alpha", "alpha must lie strictly inside (0, 1)");
    }
    const std::vector<double> grid =
        config.grid.empty() ? linspace(model.t_min(), model.t_max(), 200) : config.grid;

    const auto penalty = difference_penalty(model.spec.q(), 2);
    const auto master = LikelihoodProblem::build(data, model.spec, model.variances);
    const int n = master.n_subjects();
    const int p = master.p();
    const int q = master.q();
    const int B = config.outer_replicates;
    const int M = config.inner_replicates;
    const auto T = static_cast<Eigen::Index>(grid.size());

    const Eigen::MatrixXd grid_basis = basis_matrix(model.spec, grid);  // T x q
    NewtonControls controls;  // library defaults; replicates start from theta_hat

    auto resample_indices = [n](RngStream& stream) {
        std::vector<int> idx(static_cast<std::size_t>(n));
        for (auto& i : idx) i = static_cast<int>(stream.uniform_int(static_cast<std::uint64_t>(n)));
        return idx;
    };

    struct OuterResult {
        bool converged = false;
        Eigen::MatrixXd curves;    // p x T
        Eigen::MatrixXd inner_sd;  // p x T, sample SD over inner replicates
    };
    std::vector<OuterResult> outer(static_cast<std::size_t>(B));

    parallel_for(B, config.threads, [&](int b0) {
        const int b = b0 + 1;
        auto& slot = outer[static_cast<std::size_t>(b0)];
        RngStream outer_stream(config.seed, detail::kBootstrapSalt, static_cast<std::uint64_t>(b),
                               0);
        const auto outer_idx = resample_indices(outer_stream);
        const auto outer_problem = master.subproblem(outer_idx);
        auto [theta_b, report_b] =
            newton_raphson(outer_problem, penalty, model.lambdas_hat, model.theta_hat, controls);
        if (!report_b.converged) return;

        Eigen::MatrixXd inner_curves(M, T);
        slot.curves.resize(p, T);
        slot.inner_sd.resize(p, T);
        const Eigen::Map<const Eigen::MatrixXd> coeff_b(theta_b.data(), q, p);
        Eigen::MatrixXd grid_beta_b = grid_basis * coeff_b;  // T x p

        std::vector<Eigen::MatrixXd> inner_beta;  // converged inner curves, T x p each
        inner_beta.reserve(static_cast<std::size_t>(M));
        for (int m = 1; m <= M; ++m) {
            RngStream inner_stream(config.seed, detail::kBootstrapSalt,
                                   static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(m));
            std::vector<int> inner_idx(static_cast<std::size_t>(n));
            for (auto& i : inner_idx) {
                i = outer_idx[static_cast<std::size_t>(
                    inner_stream.uniform_int(static_cast<std::uint64_t>(n)))];
            }
            const auto inner_problem = master.subproblem(inner_idx);
            auto [theta_bm, report_bm] = newton_raphson(inner_problem, penalty, model.lambdas_hat,
                                                        model.theta_hat, controls);
            if (!report_bm.converged) continue;
            const Eigen::Map<const Eigen::MatrixXd> coeff_bm(theta_bm.data(), q, p);
            inner_beta.push_back(grid_basis * coeff_bm);
        }
        if (inner_beta.size() < 2) return;  // cannot studentize this replicate

        for (int k = 0; k < p; ++k) {
            slot.curves.row(k) = grid_beta_b.col(k).transpose();
            Eigen::MatrixXd stacked(static_cast<Eigen::Index>(inner_beta.size()), T);
            for (std::size_t m = 0; m < inner_beta.size(); ++m) {
                stacked.row(static_cast<Eigen::Index>(m)) = inner_beta[m].col(k).transpose();
            }
            slot.inner_sd.row(k) = detail::columnwise_sd(stacked).transpose();
        }
        slot.converged = true;
    });

    int failed = 0;
    for (const auto& slot : outer) {
        if (!slot.converged) ++failed;
    }
    if (failed * 5 > B) {
        fail("bootstrap_failed", std::to_string(failed) + " of " + std::to_string(B) +
                                     " outer replicates failed to converge (limit is 20%)");
    }

    constexpr double kSdGuard = 1e-10;  // inner SD below this excludes the grid point
    std::vector<BandResult> bands;
    bands.reserve(static_cast<std::size_t>(p));
    for (int k = 0; k < p; ++k) {
        BandResult band;
        band.covariate = k;
        band.grid = grid;
        band.estimate = grid_basis * theta_block(model.theta_hat, q, k);

        std::vector<double> t_stats;
        t_stats.reserve(static_cast<std::size_t>(B));
        std::vector<const Eigen::MatrixXd*> surviving_curves;
        for (const auto& slot : outer) {
            if (!slot.converged) continue;
            surviving_curves.push_back(&slot.curves);
            double t_max = -1.0;
            for (Eigen::Index t = 0; t < T; ++t) {
                const double sd = slot.inner_sd(k, t);
                if (sd < kSdGuard) continue;
                t_max = std::max(t_max, std::abs(slot.curves(k, t) - band.estimate[t]) / sd);
            }
            if (t_max >= 0.0) t_stats.push_back(t_max);
        }
        band.dropped_replicates = B - static_cast<int>(t_stats.size());
        if (t_stats.empty()) {
            fail("bootstrap_failed", "no usable outer replicates for covariate " +
                                         std::to_string(k + 1));
        }
        band.critical_value = detail::upper_order_statistic(t_stats, config.alpha);

        Eigen::MatrixXd curves_k(static_cast<Eigen::Index>(surviving_curves.size()), T);
        for (std::size_t b = 0; b < surviving_curves.size(); ++b) {
            curves_k.row(static_cast<Eigen::Index>(b)) = surviving_curves[b]->row(k);
        }
        band.overall_sd = detail::columnwise_sd(curves_k);
        band.lower = band.estimate - band.critical_value * band.overall_sd;
        band.upper = band.estimate + band.critical_value * band.overall_sd;
        bands.push_back(std::move(band));
    }
    return bands;
}

// Maximal grid sub-intervals where the band excludes zero.
inline std::vector<std::pair<double, double>> significant_intervals(const BandResult& band) {
    std::vector<std::pair<double, double>> out;
    const auto T = static_cast<Eigen::Index>(band.grid.size());
    Eigen::Index start = -1;
    for (Eigen::Index t = 0; t <= T; ++t) {
        const bool significant = t < T && (band.lower[t] > 0.0 || band.upper[t] < 0.0);
        if (significant && start < 0) start = t;
        if (!significant && start >= 0) {
            out.emplace_back(band.grid[static_cast<std::size_t>(start)],
                             band.grid[static_cast<std::size_t>(t - 1)]);
            start = -1;
        }
    }
    return out;
}

inline std::string band_to_csv(const BandResult& band) {
    std::string out = "t,estimate,lower,upper\n";
    for (std::size_t t = 0; t < band.grid.size(); ++t) {
        const auto i = static_cast<Eigen::Index>(t);
        out += format_double(band.grid[t]);
        out += ',';
        out += format_double(band.estimate[i]);
        out += ',';
        out += format_double(band.lower[i]);
        out += ',';
        out += format_double(band.upper[i]);
        out += '\n';
    }
    return out;
}

inline nlohmann::ordered_json band_sidecar(const BandResult& band, const BandConfig& config,
                                           const std::string& covariate_name) {
    nlohmann::ordered_json j;
    j["covariate"] = band.covariate + 1;
    j["covariate_name"] = covariate_name;
    j["critical_value"] = band.critical_value;
    j["outer_replicates"] = config.outer_replicates;
    j["inner_replicates"] = config.inner_replicates;
    j["alpha"] = config.alpha;
    j["dropped_replicates"] = band.dropped_replicates;
    nlohmann::ordered_json intervals = nlohmann::ordered_json::array();
    for (const auto& [lo, hi] : significant_intervals(band)) {
        intervals.push_back({lo, hi});
    }
    j["significant_intervals"] = std::move(intervals);
    return j;
}

}  // namespace tivac
