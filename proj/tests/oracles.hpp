// Independent oracles for the test suites.  Everything here recomputes
// expected values from first principles (finite differences, explicit 2x2
// densities, brute-force search) without touching the library's analytic
// paths.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "tivac/likelihood.hpp"
#include "tivac/rng.hpp"
#include "tivac/splines.hpp"

namespace oracle {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// central finite differences with per-coordinate scale adjustment
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h0 = 1e-5) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = h0 * std::max(1.0, std::abs(x[i]));
        Eigen::VectorXd hi = x, lo = x;
        hi[i] += h;
        lo[i] -= h;
        g[i] = (f(hi) - f(lo)) / (2.0 * h);
    }
    return g;
}

inline Eigen::MatrixXd fd_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& g, const Eigen::VectorXd& x,
    double h0 = 1e-5) {
    Eigen::MatrixXd jac(x.size(), x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = h0 * std::max(1.0, std::abs(x[i]));
        Eigen::VectorXd hi = x, lo = x;
        hi[i] += h;
        lo[i] -= h;
        jac.col(i) = (g(hi) - g(lo)) / (2.0 * h);
    }
    return jac;
}

// Bernstein polynomial of degree n: the clamped B-spline basis with no
// interior knots on [0, 1]
inline double bernstein(int n, int i, double u) {
    double binom = 1.0;
    for (int j = 1; j <= i; ++j) binom *= static_cast<double>(n - j + 1) / static_cast<double>(j);
    return binom * std::pow(u, i) * std::pow(1.0 - u, n - i);
}

// log density of a centered bivariate normal assembled the slow way:
// explicit determinant and inverse of the 2x2 covariance
inline double direct_bivariate_loglik(double rho, double y1, double y2, double s1sq,
                                      double s2sq) {
    const double cov = rho * std::sqrt(s1sq * s2sq);
    const double det = s1sq * s2sq - cov * cov;
    const double inv11 = s2sq / det;
    const double inv22 = s1sq / det;
    const double inv12 = -cov / det;
    const double quad = y1 * y1 * inv11 + 2.0 * y1 * y2 * inv12 + y2 * y2 * inv22;
    return -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * quad;
}

// brute-force nested-loop eta = sum_k sum_l X_k b_l theta_{k,l}
inline double nested_loop_eta(const Eigen::VectorXd& x, const Eigen::VectorXd& basis_row,
                              const Eigen::VectorXd& theta) {
    const auto q = basis_row.size();
    double eta = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        for (Eigen::Index l = 0; l < q; ++l) {
            eta += x[k] * basis_row[l] * theta[k * q + l];
        }
    }
    return eta;
}

// exhaustive 1-parameter search: maximize the exact likelihood of shared-eta
// outcome pairs over eta in [-5, 5] with the given step
inline double grid_search_eta(const std::vector<double>& y1, const std::vector<double>& y2,
                              double s1sq, double s2sq, double step = 1e-4) {
    double best_eta = 0.0;
    double best = -std::numeric_limits<double>::infinity();
    const long long steps = std::llround(10.0 / step);
    for (long long i = 0; i <= steps; ++i) {
        const double eta = -5.0 + static_cast<double>(i) * step;
        const double rho = std::tanh(0.5 * eta);
        double total = 0.0;
        for (std::size_t j = 0; j < y1.size(); ++j) {
            total += direct_bivariate_loglik(rho, y1[j], y2[j], s1sq, s2sq);
        }
        if (total > best) {
            best = total;
            best_eta = eta;
        }
    }
    return best_eta;
}

// Random likelihood instance used by the derivative-agreement suites:
// n in [3, 10] subjects with 1-5 observations each, q in [3, 6], p in {1, 2},
// theta uniform in [-1, 1].
struct RandomInstance {
    tivac::LikelihoodProblem problem;
    tivac::PenaltyMatrix penalty;
    std::vector<double> lambdas;
    Eigen::VectorXd theta;
};

inline RandomInstance make_random_instance(std::uint64_t seed) {
    tivac::RngStream stream(seed, 0x6f7261636cULL);  // "oracl"
    const int n = 3 + static_cast<int>(stream.uniform_int(8));
    const int p = 1 + static_cast<int>(stream.uniform_int(2));
    // q = interior + order in [3, 6]
    const int order = 2 + static_cast<int>(stream.uniform_int(3));
    const int interior = std::max(0, 3 - order) + static_cast<int>(stream.uniform_int(
                                                      static_cast<std::uint64_t>(7 - order - std::max(0, 3 - order))));
    const auto spec = tivac::make_spec(0.0, 10.0, interior, order);
    const int q = spec.q();

    std::vector<Eigen::VectorXd> rows;
    std::vector<int> subject_of_obs;
    Eigen::MatrixXd x(n, p);
    std::vector<double> u_vals, v_vals;
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < p; ++k) x(i, k) = stream.uniform(-1.0, 1.0);
        const int m = 1 + static_cast<int>(stream.uniform_int(5));
        for (int j = 0; j < m; ++j) {
            rows.push_back(tivac::eval_basis(spec, stream.uniform(0.0, 10.0)));
            subject_of_obs.push_back(i);
            u_vals.push_back(stream.normal(0.0, 1.2));
            v_vals.push_back(stream.normal(0.0, 1.2));
        }
    }
    Eigen::MatrixXd basis(static_cast<Eigen::Index>(rows.size()), q);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        basis.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    }
    Eigen::Map<const Eigen::VectorXd> u(u_vals.data(), static_cast<Eigen::Index>(u_vals.size()));
    Eigen::Map<const Eigen::VectorXd> v(v_vals.data(), static_cast<Eigen::Index>(v_vals.size()));

    RandomInstance inst;
    inst.problem = tivac::LikelihoodProblem::from_rows(std::move(basis), std::move(subject_of_obs),
                                                       std::move(x), u, v,
                                                       -std::log(2.0 * std::numbers::pi));
    inst.penalty = tivac::difference_penalty(q, 2);
    inst.lambdas.resize(static_cast<std::size_t>(p));
    for (auto& l : inst.lambdas) l = stream.uniform(0.0, 10.0);
    inst.theta.resize(static_cast<Eigen::Index>(q) * p);
    for (Eigen::Index i = 0; i < inst.theta.size(); ++i) inst.theta[i] = stream.uniform(-1.0, 1.0);
    return inst;
}

}  // namespace oracle
