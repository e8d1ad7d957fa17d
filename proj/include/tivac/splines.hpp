#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tivac/error.hpp"

namespace tivac {

// Clamped B-spline basis on [t_min, t_max]: boundary knots repeated `order`
// times, interior knots equally spaced.  Basis dimension q = interior + order.
struct SplineSpec {
    int order = 4;  // 4 = cubic
    int interior_knot_count = 0;
    std::vector<double> knots;  // size interior_knot_count + 2 * order

    int q() const { return interior_knot_count + order; }
    double t_min() const { return knots.front(); }
    double t_max() const { return knots.back(); }
};

inline void validate_spec(const SplineSpec& spec) {
    if (spec.order < 2) fail("bad_order", "spline order must be >= 2");
    if (spec.interior_knot_count < 0) fail("bad_knots", "interior knot count must be >= 0");
    if (spec.q() < 3) {
        fail("bad_spec", "basis dimension q = " + std::to_string(spec.q()) +
                             " is below the minimum of 3");
    }
    const std::size_t expected =
        static_cast<std::size_t>(spec.interior_knot_count + 2 * spec.order);
    if (spec.knots.size() != expected) {
        fail("bad_knots", "knot vector has " + std::to_string(spec.knots.size()) +
                              " entries, expected " + std::to_string(expected));
    }
    const int m = spec.order;
    const double lo = spec.knots.front();
    const double hi = spec.knots.back();
    if (!(lo < hi)) fail("bad_time_range", "t_min must be strictly below t_max");
    for (int i = 0; i < m; ++i) {
        if (spec.knots[static_cast<std::size_t>(i)] != lo ||
            spec.knots[spec.knots.size() - 1 - static_cast<std::size_t>(i)] != hi) {
            fail("bad_knots", "boundary knots must repeat `order` times");
        }
    }
    double prev = lo;
    for (int i = 0; i < spec.interior_knot_count; ++i) {
        const double k = spec.knots[static_cast<std::size_t>(m + i)];
        if (!(k > prev && k < hi)) {
            fail("bad_knots", "interior knots must be strictly increasing inside the range");
        }
        prev = k;
    }
}

inline SplineSpec make_spec(double t_min, double t_max, int interior_knot_count, int order) {
    if (!(t_min < t_max)) fail("bad_time_range", "t_min must be strictly below t_max");
    SplineSpec spec;
    spec.order = order;
    spec.interior_knot_count = interior_knot_count;
    spec.knots.reserve(static_cast<std::size_t>(interior_knot_count + 2 * order));
    for (int i = 0; i < order; ++i) spec.knots.push_back(t_min);
    for (int i = 1; i <= interior_knot_count; ++i) {
        spec.knots.push_back(t_min + (t_max - t_min) * static_cast<double>(i) /
                                         static_cast<double>(interior_knot_count + 1));
    }
    for (int i = 0; i < order; ++i) spec.knots.push_back(t_max);
    validate_spec(spec);
    return spec;
}

namespace detail {

// knot span index s with knots[s] <= t < knots[s+1]; t == t_max maps to the
// last nonempty span (right-closed convention)
inline int find_span(const SplineSpec& spec, double t) {
    const auto& U = spec.knots;
    const int q = spec.q();
    const int degree = spec.order - 1;
    if (t >= U[static_cast<std::size_t>(q)]) return q - 1;
    int lo = degree, hi = q;
    int mid = (lo + hi) / 2;
    while (t < U[static_cast<std::size_t>(mid)] || t >= U[static_cast<std::size_t>(mid + 1)]) {
        if (t < U[static_cast<std::size_t>(mid)]) {
            hi = mid;
        } else {
            lo = mid;
        }
        mid = (lo + hi) / 2;
    }
    return mid;
}

// Cox-de Boor triangular scheme: writes the `order` nonzero basis values
// N_{span-degree}, ..., N_{span} into out
inline void basis_funs(const SplineSpec& spec, int span, double t, double* out) {
    const auto& U = spec.knots;
    const int degree = spec.order - 1;
    std::vector<double> left(static_cast<std::size_t>(degree + 1));
    std::vector<double> right(static_cast<std::size_t>(degree + 1));
    out[0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
        left[static_cast<std::size_t>(j)] = t - U[static_cast<std::size_t>(span + 1 - j)];
        right[static_cast<std::size_t>(j)] = U[static_cast<std::size_t>(span + j)] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double denom =
                right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)];
            const double temp = out[r] / denom;
            out[r] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
            saved = left[static_cast<std::size_t>(j - r)] * temp;
        }
        out[j] = saved;
    }
}

}  // namespace detail

inline Eigen::VectorXd eval_basis(const SplineSpec& spec, double t) {
    if (t < spec.t_min() || t > spec.t_max()) {
        fail("time_out_of_range",
             "time " + std::to_string(t) + " lies outside the spline range [" +
                 std::to_string(spec.t_min()) + ", " + std::to_string(spec.t_max()) + "]");
    }
    const int span = detail::find_span(spec, t);
    std::vector<double> vals(static_cast<std::size_t>(spec.order));
    detail::basis_funs(spec, span, t, vals.data());
    Eigen::VectorXd out = Eigen::VectorXd::Zero(spec.q());
    const int first = span - (spec.order - 1);
    for (int j = 0; j < spec.order; ++j) out[first + j] = vals[static_cast<std::size_t>(j)];
    return out;
}

inline Eigen::MatrixXd basis_matrix(const SplineSpec& spec, std::span<const double> times) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(times.size()), spec.q());
    for (std::size_t j = 0; j < times.size(); ++j) {
        out.row(static_cast<Eigen::Index>(j)) = eval_basis(spec, times[j]).transpose();
    }
    return out;
}

// Quadratic difference penalty D^T D on adjacent spline coefficients.
struct PenaltyMatrix {
    Eigen::MatrixXd matrix;  // q x q, symmetric PSD, rank q - difference_order
    int difference_order = 2;
};

inline PenaltyMatrix difference_penalty(int q, int difference_order = 2) {
    if (difference_order < 1 || difference_order > 3) {
        fail("bad_difference_order", "difference order must be 1, 2, or 3");
    }
    if (q <= difference_order) {
        fail("bad_spec", "difference penalty needs q > difference order");
    }
    // rows hold signed binomial coefficients, e.g. (1, -2, 1) for order 2
    std::vector<double> coef(static_cast<std::size_t>(difference_order + 1));
    coef[0] = 1.0;
    for (int j = 1; j <= difference_order; ++j) {
        coef[static_cast<std::size_t>(j)] =
            -coef[static_cast<std::size_t>(j - 1)] *
            static_cast<double>(difference_order - j + 1) / static_cast<double>(j);
    }
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(q - difference_order, q);
    for (int r = 0; r < q - difference_order; ++r) {
        for (int j = 0; j <= difference_order; ++j) D(r, r + j) = coef[static_cast<std::size_t>(j)];
    }
    PenaltyMatrix penalty;
    penalty.matrix = D.transpose() * D;
    penalty.difference_order = difference_order;
    return penalty;
}

}  // namespace tivac
