#pragma once

// Analytic gradient and Hessian of the single-neuron log-likelihood, plus a
// central-difference checker.
//
// All reductions are plain Eigen products evaluated single-threaded, so the
// summation order is fixed by the design's row order.

#include "spikeglm/likelihood.hpp"

#include <algorithm>
#include <cmath>

namespace spikeglm {

template <typename Scalar>
struct Gradient {
    Vector<Scalar> d_k;
    Vector<Scalar> d_h;
    Scalar d_mu = Scalar(0);
    bool clamped = false;  ///< some bin hit the predictor clamp

    Vector<Scalar> flatten() const
    {
        Vector<Scalar> v(d_k.size() + d_h.size() + 1);
        v << d_k, d_h, d_mu;
        return v;
    }

    Scalar max_norm() const { return flatten().cwiseAbs().maxCoeff(); }
};

/// Symmetric, block layout [k | h | mu].
template <typename Scalar>
using Hessian = Matrix<Scalar>;

namespace detail {

/// [X | Y | 1]
template <typename Scalar>
Matrix<Scalar> full_regressors(const Design<Scalar>& d)
{
    const Index nx = d.stimulus_lags.cols();
    const Index ny = d.history_lags.cols();
    Matrix<Scalar> z(d.rows(), nx + ny + 1);
    z.leftCols(nx) = d.stimulus_lags;
    z.middleCols(nx, ny) = d.history_lags;
    z.col(nx + ny).setOnes();
    return z;
}

/// y_t - delta * rate_t
template <typename Scalar>
Vector<Scalar> score_residual(const RateVector<Scalar>& r, const CountVector& observed,
                              Scalar delta)
{
    return observed.cast<Scalar>() - delta * r.rate;
}

/// -delta * Z^T diag(rate) Z, mirrored to exact symmetry.
template <typename Scalar, typename Regressors>
Matrix<Scalar> weighted_gram(const Eigen::MatrixBase<Regressors>& z, const Vector<Scalar>& rate,
                             Scalar delta)
{
    Matrix<Scalar> h = -(z.transpose() * ((delta * rate).asDiagonal() * z));
    return (h + h.transpose()) / Scalar(2);
}

}  // namespace detail

template <typename Scalar>
Gradient<Scalar> gradient(const GlmParams<Scalar>& params, const Design<Scalar>& design)
{
    detail::require_rows(design);
    const RateVector<Scalar> r = intensities(params, design);
    const Vector<Scalar> res = detail::score_residual(r, design.observed, design.delta);
    return {design.stimulus_lags.transpose() * res, design.history_lags.transpose() * res,
            res.sum(), r.clamped > 0};
}

template <typename Scalar>
Hessian<Scalar> hessian(const GlmParams<Scalar>& params, const Design<Scalar>& design)
{
    detail::require_rows(design);
    const RateVector<Scalar> r = intensities(params, design);
    return detail::weighted_gram(detail::full_regressors(design), r.rate, design.delta);
}

template <typename Scalar>
struct GradientCheck {
    Vector<Scalar> analytic;
    Vector<Scalar> numeric;
    /// |analytic - numeric| / max(|analytic|, |numeric|, 1) per coordinate.
    Vector<Scalar> relative_error;
    Scalar max_relative_error = Scalar(0);
    /// Coordinates whose regressor touches a clamped bin; derivatives there
    /// are not those of a smooth function.
    Eigen::Array<bool, Eigen::Dynamic, 1> unreliable;
    bool any_unreliable = false;
};

template <typename Scalar>
Scalar relative_error(Scalar a, Scalar b)
{
    using std::abs;
    using std::max;
    return abs(a - b) / max({abs(a), abs(b), Scalar(1)});
}

/// Central differences of a scalar function of a flat vector.
template <typename Scalar, typename Fn>
Vector<Scalar> central_difference(Fn&& f, const Vector<Scalar>& theta, Scalar step)
{
    Vector<Scalar> g(theta.size());
    for (Index j = 0; j < theta.size(); ++j) {
        Vector<Scalar> up = theta, down = theta;
        up(j) += step;
        down(j) -= step;
        g(j) = (f(up) - f(down)) / (Scalar(2) * step);
    }
    return g;
}

template <typename Scalar>
GradientCheck<Scalar> check_gradient_fd(const GlmParams<Scalar>& params,
                                        const Design<Scalar>& design, Scalar step)
{
    detail::require_rows(design);
    if (!(step >= Scalar(1e-8) && step <= Scalar(1e-2)))
        throw InvalidData("finite-difference step must lie in [1e-8, 1e-2]");

    const Index nk = params.k.size();
    const Index nh = params.h.size();
    GradientCheck<Scalar> out;
    const Gradient<Scalar> g = gradient(params, design);
    out.analytic = g.flatten();
    out.numeric = central_difference<Scalar>(
        [&](const Vector<Scalar>& theta) {
            return log_likelihood(GlmParams<Scalar>::unflatten(theta, nk, nh), design);
        },
        params.flatten(), step);

    out.relative_error.resize(out.analytic.size());
    for (Index j = 0; j < out.analytic.size(); ++j)
        out.relative_error(j) = relative_error(out.analytic(j), out.numeric(j));
    out.max_relative_error = out.relative_error.maxCoeff();

    // Flag coordinates with nonzero regressors in bins that are clamped at
    // theta or at either probe point.
    out.unreliable = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(out.analytic.size(), false);
    const Vector<Scalar> eta = linear_predictor(params, design);
    const Matrix<Scalar> z = detail::full_regressors(design);
    for (Index r = 0; r < design.rows(); ++r) {
        const Scalar reach = step * z.row(r).cwiseAbs().sum();
        if (std::abs(eta(r)) + reach < Scalar(kPredictorClamp))
            continue;
        for (Index j = 0; j < z.cols(); ++j)
            out.unreliable(j) = out.unreliable(j) || z(r, j) != Scalar(0);
    }
    out.any_unreliable = out.unreliable.any();
    return out;
}

}  // namespace spikeglm
