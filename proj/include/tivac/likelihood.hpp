#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "tivac/dataset.hpp"
#include "tivac/error.hpp"
#include "tivac/fisher.hpp"
#include "tivac/splines.hpp"

namespace tivac {

// Spline coefficients stacked per covariate: theta = (theta_1', ..., theta_p')',
// block k of length q holding the coefficients of beta_k(t).
using ThetaVector = Eigen::VectorXd;

inline Eigen::VectorXd theta_block(const ThetaVector& theta, int q, int k) {
    return theta.segment(static_cast<Eigen::Index>(k) * q, q);
}

struct VarianceEstimates {
    double sigma1_sq = 1.0;
    double sigma2_sq = 1.0;
};

// Pooled moment estimates (denominator N) of the constant marginal variances.
inline VarianceEstimates estimate_variances(const LongitudinalDataset& data) {
    std::vector<double> pooled1, pooled2;
    pooled1.reserve(data.total_observations());
    pooled2.reserve(data.total_observations());
    for (const auto& s : data.subjects) {
        pooled1.insert(pooled1.end(), s.y1.begin(), s.y1.end());
        pooled2.insert(pooled2.end(), s.y2.begin(), s.y2.end());
    }
    if (pooled1.size() < 2) {
        fail("too_few_observations", "variance estimation needs at least 2 pooled observations");
    }
    VarianceEstimates est;
    est.sigma1_sq = population_variance(pooled1);
    est.sigma2_sq = population_variance(pooled2);
    if (!(est.sigma1_sq > 0.0)) fail("zero_variance", "outcome y1 has zero pooled variance");
    if (!(est.sigma2_sq > 0.0)) fail("zero_variance", "outcome y2 has zero pooled variance");
    return est;
}

// Flattened observation table for the bivariate-normal likelihood.
//
// With standardized outcomes u = y1/sigma1, v = y2/sigma2 and
// rho = tanh(eta/2), the per-observation log density reduces to
//
//   l(eta) = C + log cosh(eta/2) - (a + b) - a e^eta - b e^{-eta},
//   a = (u - v)^2 / 8,   b = (u + v)^2 / 8,
//   C = -log(2 pi) - log(sigma1^2 sigma2^2) / 2,
//
// so value, gradient and Hessian in eta cost two exponentials per
// observation and stay finite-signed for extreme eta (no inf - inf).
//
//   l'(eta)  = tanh(eta/2)/2       - a e^eta + b e^{-eta}
//   l''(eta) = (1 - rho^2)/4       - a e^eta - b e^{-eta}
//
// The design row for observation j of subject i is A_ij = X_i (x) b(t_ij)
// (entry k*q + l equals X_ik * b_l); it is never materialized, the Kronecker
// structure is used directly.
class LikelihoodProblem {
public:
    Eigen::MatrixXd basis;       // n_obs x q, row per observation
    Eigen::MatrixXd covariates;  // n x p
    std::vector<int> obs_start;  // size n+1; subject i owns rows [obs_start[i], obs_start[i+1])
    std::vector<int> obs_subject;
    Eigen::VectorXd a_coef;  // (u - v)^2 / 8
    Eigen::VectorXd b_coef;  // (u + v)^2 / 8
    double per_obs_const = 0.0;

    int q() const { return static_cast<int>(basis.cols()); }
    int p() const { return static_cast<int>(covariates.cols()); }
    int n_subjects() const { return static_cast<int>(covariates.rows()); }
    int n_obs() const { return static_cast<int>(basis.rows()); }
    int dim() const { return q() * p(); }

    static LikelihoodProblem build(const LongitudinalDataset& data, const SplineSpec& spec,
                                   const VarianceEstimates& variances) {
        LikelihoodProblem pr;
        const int n = data.n();
        const int n_obs = static_cast<int>(data.total_observations());
        pr.basis.resize(n_obs, spec.q());
        pr.covariates = data.covariates;
        pr.obs_start.assign(static_cast<std::size_t>(n) + 1, 0);
        pr.obs_subject.resize(static_cast<std::size_t>(n_obs));
        pr.a_coef.resize(n_obs);
        pr.b_coef.resize(n_obs);
        const double s1 = std::sqrt(variances.sigma1_sq);
        const double s2 = std::sqrt(variances.sigma2_sq);
        pr.per_obs_const = -std::log(2.0 * std::numbers::pi) -
                           0.5 * std::log(variances.sigma1_sq * variances.sigma2_sq);
        int row = 0;
        for (int i = 0; i < n; ++i) {
            pr.obs_start[static_cast<std::size_t>(i)] = row;
            const auto& s = data.subjects[static_cast<std::size_t>(i)];
            for (std::size_t j = 0; j < s.size(); ++j) {
                pr.basis.row(row) = eval_basis(spec, s.times[j]).transpose();
                const double u = s.y1[j] / s1;
                const double v = s.y2[j] / s2;
                pr.a_coef[row] = (u - v) * (u - v) / 8.0;
                pr.b_coef[row] = (u + v) * (u + v) / 8.0;
                pr.obs_subject[static_cast<std::size_t>(row)] = i;
                ++row;
            }
        }
        pr.obs_start[static_cast<std::size_t>(n)] = row;
        return pr;
    }

    // Raw table for custom designs (tests, degenerate bases).  Observations
    // must be grouped by subject in ascending subject order.
    static LikelihoodProblem from_rows(Eigen::MatrixXd basis_rows, std::vector<int> subject_of_obs,
                                       Eigen::MatrixXd covariate_matrix, const Eigen::VectorXd& u,
                                       const Eigen::VectorXd& v, double per_obs_const) {
        LikelihoodProblem pr;
        pr.basis = std::move(basis_rows);
        pr.covariates = std::move(covariate_matrix);
        pr.obs_subject = std::move(subject_of_obs);
        const int n = pr.n_subjects();
        const int n_obs = pr.n_obs();
        if (static_cast<int>(pr.obs_subject.size()) != n_obs) {
            fail("bad_problem", "subject index count does not match basis rows");
        }
        pr.obs_start.assign(static_cast<std::size_t>(n) + 1, 0);
        int current = -1;
        for (int j = 0; j < n_obs; ++j) {
            const int subj = pr.obs_subject[static_cast<std::size_t>(j)];
            if (subj < current || subj >= n) {
                fail("bad_problem", "observations must be grouped by ascending subject");
            }
            while (current < subj) pr.obs_start[static_cast<std::size_t>(++current)] = j;
        }
        while (current < n) pr.obs_start[static_cast<std::size_t>(++current)] = n_obs;
        pr.a_coef = ((u - v).array().square() / 8.0).matrix();
        pr.b_coef = ((u + v).array().square() / 8.0).matrix();
        pr.per_obs_const = per_obs_const;
        return pr;
    }

    // New problem from subject indices (duplicates allowed) -- the bootstrap
    // resampling primitive and the cross-validation fold splitter.
    LikelihoodProblem subproblem(const std::vector<int>& subject_indices) const {
        LikelihoodProblem pr;
        const int n_new = static_cast<int>(subject_indices.size());
        int total = 0;
        for (int idx : subject_indices) {
            total += obs_start[static_cast<std::size_t>(idx) + 1] -
                     obs_start[static_cast<std::size_t>(idx)];
        }
        pr.basis.resize(total, q());
        pr.covariates.resize(n_new, p());
        pr.obs_start.assign(static_cast<std::size_t>(n_new) + 1, 0);
        pr.obs_subject.resize(static_cast<std::size_t>(total));
        pr.a_coef.resize(total);
        pr.b_coef.resize(total);
        pr.per_obs_const = per_obs_const;
        int row = 0;
        for (int i = 0; i < n_new; ++i) {
            const int src = subject_indices[static_cast<std::size_t>(i)];
            pr.obs_start[static_cast<std::size_t>(i)] = row;
            pr.covariates.row(i) = covariates.row(src);
            const int lo = obs_start[static_cast<std::size_t>(src)];
            const int hi = obs_start[static_cast<std::size_t>(src) + 1];
            for (int j = lo; j < hi; ++j) {
                pr.basis.row(row) = basis.row(j);
                pr.a_coef[row] = a_coef[j];
                pr.b_coef[row] = b_coef[j];
                pr.obs_subject[static_cast<std::size_t>(row)] = i;
                ++row;
            }
        }
        pr.obs_start[static_cast<std::size_t>(n_new)] = row;
        return pr;
    }
};

// Full design row A_ij (length q*p); mainly for tests and diagnostics.
inline Eigen::VectorXd design_row(const LikelihoodProblem& pr, int obs) {
    Eigen::VectorXd row(pr.dim());
    const int i = pr.obs_subject[static_cast<std::size_t>(obs)];
    for (int k = 0; k < pr.p(); ++k) {
        row.segment(static_cast<Eigen::Index>(k) * pr.q(), pr.q()) =
            pr.covariates(i, k) * pr.basis.row(obs).transpose();
    }
    return row;
}

// eta_ij = A_ij' theta for every observation
inline Eigen::VectorXd eta_values(const LikelihoodProblem& pr, const ThetaVector& theta) {
    const Eigen::Map<const Eigen::MatrixXd> coeff(theta.data(), pr.q(), pr.p());
    const Eigen::MatrixXd beta_obs = pr.basis * coeff;  // n_obs x p
    Eigen::VectorXd eta(pr.n_obs());
    for (int i = 0; i < pr.n_subjects(); ++i) {
        const int lo = pr.obs_start[static_cast<std::size_t>(i)];
        const int len = pr.obs_start[static_cast<std::size_t>(i) + 1] - lo;
        if (len == 0) continue;
        eta.segment(lo, len) = beta_obs.middleRows(lo, len) * pr.covariates.row(i).transpose();
    }
    return eta;
}

inline double eta_at(const LikelihoodProblem& pr, const ThetaVector& theta, int obs) {
    const Eigen::Map<const Eigen::MatrixXd> coeff(theta.data(), pr.q(), pr.p());
    const int i = pr.obs_subject[static_cast<std::size_t>(obs)];
    return pr.covariates.row(i) * (coeff.transpose() * pr.basis.row(obs).transpose());
}

namespace detail {

// log cosh(eta/2) without overflow
inline double log_cosh_half(double eta) {
    const double h = std::abs(eta) * 0.5;
    return h + std::log1p(std::exp(-2.0 * h)) - std::numbers::ln2;
}

}  // namespace detail

inline double loglik(const LikelihoodProblem& pr, const ThetaVector& theta) {
    const Eigen::VectorXd eta = eta_values(pr, theta);
    double total = static_cast<double>(pr.n_obs()) * pr.per_obs_const;
    for (int j = 0; j < pr.n_obs(); ++j) {
        const double a = pr.a_coef[j];
        const double b = pr.b_coef[j];
        double value = detail::log_cosh_half(eta[j]) - (a + b);
        // guard a == 0 (or b == 0) against 0 * inf when exp overflows
        if (a != 0.0) value -= a * std::exp(eta[j]);
        if (b != 0.0) value -= b * std::exp(-eta[j]);
        total += value;
    }
    return total;
}

// 0.5 * sum_k lambda_k theta_k' P theta_k
inline double penalty_value(const PenaltyMatrix& penalty, const std::vector<double>& lambdas,
                            const ThetaVector& theta, int q, int p) {
    double total = 0.0;
    for (int k = 0; k < p; ++k) {
        const Eigen::VectorXd block = theta.segment(static_cast<Eigen::Index>(k) * q, q);
        total += lambdas[static_cast<std::size_t>(k)] * block.dot(penalty.matrix * block);
    }
    return 0.5 * total;
}

inline double penalized_loglik(const LikelihoodProblem& pr, const PenaltyMatrix& penalty,
                               const std::vector<double>& lambdas, const ThetaVector& theta) {
    return loglik(pr, theta) - penalty_value(penalty, lambdas, theta, pr.q(), pr.p());
}

inline Eigen::VectorXd gradient(const LikelihoodProblem& pr, const PenaltyMatrix& penalty,
                                const std::vector<double>& lambdas, const ThetaVector& theta) {
    const int q = pr.q();
    const int p = pr.p();
    const Eigen::VectorXd eta = eta_values(pr, theta);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(pr.dim());
    Eigen::VectorXd w(q);
    for (int i = 0; i < pr.n_subjects(); ++i) {
        const int lo = pr.obs_start[static_cast<std::size_t>(i)];
        const int hi = pr.obs_start[static_cast<std::size_t>(i) + 1];
        if (lo == hi) continue;
        w.setZero();
        for (int j = lo; j < hi; ++j) {
            const double a = pr.a_coef[j];
            const double b = pr.b_coef[j];
            double dl = 0.5 * std::tanh(0.5 * eta[j]);
            if (a != 0.0) dl -= a * std::exp(eta[j]);
            if (b != 0.0) dl += b * std::exp(-eta[j]);
            w += dl * pr.basis.row(j).transpose();
        }
        for (int k = 0; k < p; ++k) {
            grad.segment(static_cast<Eigen::Index>(k) * q, q) += pr.covariates(i, k) * w;
        }
    }
    for (int k = 0; k < p; ++k) {
        grad.segment(static_cast<Eigen::Index>(k) * q, q) -=
            lambdas[static_cast<std::size_t>(k)] *
            (penalty.matrix * theta.segment(static_cast<Eigen::Index>(k) * q, q));
    }
    return grad;
}

inline Eigen::MatrixXd hessian(const LikelihoodProblem& pr, const PenaltyMatrix& penalty,
                               const std::vector<double>& lambdas, const ThetaVector& theta) {
    const int q = pr.q();
    const int p = pr.p();
    const Eigen::VectorXd eta = eta_values(pr, theta);
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(pr.dim(), pr.dim());
    Eigen::MatrixXd s_i(q, q);
    for (int i = 0; i < pr.n_subjects(); ++i) {
        const int lo = pr.obs_start[static_cast<std::size_t>(i)];
        const int hi = pr.obs_start[static_cast<std::size_t>(i) + 1];
        if (lo == hi) continue;
        s_i.setZero();
        for (int j = lo; j < hi; ++j) {
            const double a = pr.a_coef[j];
            const double b = pr.b_coef[j];
            const double rho = std::tanh(0.5 * eta[j]);
            double d2l = 0.25 * (1.0 - rho * rho);
            if (a != 0.0) d2l -= a * std::exp(eta[j]);
            if (b != 0.0) d2l -= b * std::exp(-eta[j]);
            s_i.selfadjointView<Eigen::Lower>().rankUpdate(pr.basis.row(j).transpose(), d2l);
        }
        s_i.triangularView<Eigen::Upper>() = s_i.transpose();
        // H += (X_i X_i') (x) S_i
        for (int k = 0; k < p; ++k) {
            for (int l = 0; l <= k; ++l) {
                hess.block(static_cast<Eigen::Index>(k) * q, static_cast<Eigen::Index>(l) * q, q,
                           q) += pr.covariates(i, k) * pr.covariates(i, l) * s_i;
            }
        }
    }
    for (int k = 0; k < p; ++k) {
        hess.block(static_cast<Eigen::Index>(k) * q, static_cast<Eigen::Index>(k) * q, q, q) -=
            lambdas[static_cast<std::size_t>(k)] * penalty.matrix;
    }
    // mirror the lower block triangle
    for (int k = 0; k < p; ++k) {
        for (int l = k + 1; l < p; ++l) {
            hess.block(static_cast<Eigen::Index>(k) * q, static_cast<Eigen::Index>(l) * q, q, q) =
                hess.block(static_cast<Eigen::Index>(l) * q, static_cast<Eigen::Index>(k) * q, q, q)
                    .transpose();
        }
    }
    return hess;
}

struct NewtonControls {
    int max_iter = 100;
    double grad_tol = 1e-6;  // max-norm of the gradient
    double min_step = 1e-10;
};

struct NewtonReport {
    bool converged = false;
    int iterations = 0;
    double final_gradient_norm = std::numeric_limits<double>::quiet_NaN();
    double final_penalized_loglik = std::numeric_limits<double>::quiet_NaN();
    int step_halvings = 0;
    double hessian_ridge_used = 0.0;
    std::vector<double> objective_path;  // accepted objective values, init first
};

// Ascent Newton-Raphson on the penalized log-likelihood with step-halving
// line search.  When -H is not positive definite a ridge tau*I is added,
// tau doubling from 1e-8 until the solve succeeds and the direction points
// uphill.
inline std::pair<ThetaVector, NewtonReport> newton_raphson(const LikelihoodProblem& pr,
                                                           const PenaltyMatrix& penalty,
                                                           const std::vector<double>& lambdas,
                                                           const ThetaVector& init,
                                                           const NewtonControls& controls = {}) {
    if (static_cast<int>(lambdas.size()) != pr.p()) {
        fail("bad_lambdas", "need one smoothing parameter per covariate");
    }
    ThetaVector theta = init;
    NewtonReport report;
    double f = penalized_loglik(pr, penalty, lambdas, theta);
    if (!std::isfinite(f)) {
        fail("newton_bad_init", "penalized log-likelihood is not finite at the initial point");
    }
    report.objective_path.push_back(f);

    Eigen::VectorXd grad = gradient(pr, penalty, lambdas, theta);
    double grad_norm = grad.lpNorm<Eigen::Infinity>();
    for (int iter = 0; iter < controls.max_iter; ++iter) {
        if (grad_norm <= controls.grad_tol) {
            report.converged = true;
            break;
        }
        const Eigen::MatrixXd neg_hess = -hessian(pr, penalty, lambdas, theta);
        Eigen::VectorXd direction;
        double tau = 0.0;
        Eigen::LLT<Eigen::MatrixXd> llt;
        while (true) {
            Eigen::MatrixXd shifted = neg_hess;
            if (tau > 0.0) shifted.diagonal().array() += tau;
            llt.compute(shifted);
            if (llt.info() == Eigen::Success) {
                direction = llt.solve(grad);
                if (direction.allFinite() && grad.dot(direction) > 0.0) break;
            }
            tau = tau == 0.0 ? 1e-8 : tau * 2.0;
            if (tau > 1e12) {
                fail("newton_singular", "Newton system singular beyond the maximum ridge");
            }
        }
        report.hessian_ridge_used = std::max(report.hessian_ridge_used, tau);

        // Once the model-predicted gain of the full Newton step falls below
        // the objective's floating-point resolution, a strict-increase test
        // is noise; accept the step as long as it does not measurably hurt
        // (the gradient check above still decides convergence).
        const double f_resolution = 1e-12 * (1.0 + std::abs(f));
        const bool polish = 0.5 * grad.dot(direction) <= f_resolution;

        double step = 1.0;
        bool improved = false;
        while (step >= controls.min_step) {
            const ThetaVector trial = theta + step * direction;
            const double f_trial = penalized_loglik(pr, penalty, lambdas, trial);
            const bool accept = std::isfinite(f_trial) &&
                                (f_trial > f || (polish && f_trial >= f - 4.0 * f_resolution));
            if (accept) {
                theta = trial;
                f = f_trial;
                improved = true;
                break;
            }
            step *= 0.5;
            ++report.step_halvings;
        }
        if (!improved) break;  // stalled; converged stays false unless the gradient is small
        ++report.iterations;
        report.objective_path.push_back(f);
        grad = gradient(pr, penalty, lambdas, theta);
        grad_norm = grad.lpNorm<Eigen::Infinity>();
    }
    if (!report.converged) report.converged = grad_norm <= controls.grad_tol;
    report.final_gradient_norm = grad_norm;
    report.final_penalized_loglik = f;
    return {std::move(theta), report};
}

// --- convenience wrappers on (data, spec, variances) ---

inline double loglik(const ThetaVector& theta, const LongitudinalDataset& data,
                     const SplineSpec& spec, const VarianceEstimates& variances) {
    return loglik(LikelihoodProblem::build(data, spec, variances), theta);
}

inline double penalized_loglik(const ThetaVector& theta, const std::vector<double>& lambdas,
                               const LongitudinalDataset& data, const SplineSpec& spec,
                               const VarianceEstimates& variances, const PenaltyMatrix& penalty) {
    return penalized_loglik(LikelihoodProblem::build(data, spec, variances), penalty, lambdas,
                            theta);
}

}  // namespace tivac
