#pragma once

// Space-time separable receptive fields: the stimulus filter over
// (location, lag) is the rank-1 matrix K = s t^T, K(i, l) = s_i * t_l, so the
// predictor is s^T X t + h.y + mu for the (locations x tau_k) lag block X.

#include "spikeglm/optimizer.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>

namespace spikeglm {

/// The spatial filter is zero; the rank-1 factorization has no direction.
class DegenerateFilter : public Error {
public:
    using Error::Error;
};

template <typename Scalar>
struct SeparableParams {
    Vector<Scalar> s_filter;  ///< one weight per location
    Vector<Scalar> t_filter;  ///< one weight per lag, oldest first
    Vector<Scalar> h;
    Scalar mu = Scalar(0);

    /// K as a (locations x tau_k) matrix.
    Matrix<Scalar> filter() const { return s_filter * t_filter.transpose(); }

    Index size() const { return s_filter.size() + t_filter.size() + h.size() + 1; }

    Vector<Scalar> flatten() const
    {
        Vector<Scalar> v(size());
        v << s_filter, t_filter, h, mu;
        return v;
    }

    static SeparableParams unflatten(const Vector<Scalar>& v, Index ns, Index nt, Index nh)
    {
        if (v.size() != ns + nt + nh + 1)
            throw DimensionMismatch("flattened separable parameter vector has wrong length");
        return {v.head(ns), v.segment(ns, nt), v.segment(ns + nt, nh), v(ns + nt + nh)};
    }
};

template <typename Scalar>
struct SpatioTemporalRow {
    Matrix<Scalar> X_block;  ///< (locations x tau_k)
    Vector<Scalar> y;
    int observed = 0;
    Index bin_index = 0;
};

template <typename Scalar>
SpatioTemporalRow<Scalar> spatiotemporal_row(const Design<Scalar>& design, Index r)
{
    return {design.stimulus_block(r), design.history_lags.row(r).transpose(), design.observed(r),
            design.bin_index(r)};
}

/// Unconstrained (full-rank) parameters with k holding the rows of K in the
/// design's location-major layout.
template <typename Scalar>
GlmParams<Scalar> full_params(const SeparableParams<Scalar>& p)
{
    const Index ns = p.s_filter.size();
    const Index nt = p.t_filter.size();
    Vector<Scalar> k(ns * nt);
    for (Index i = 0; i < ns; ++i)
        k.segment(i * nt, nt) = p.s_filter(i) * p.t_filter;
    return {k, p.h, p.mu};
}

namespace detail {

template <typename Scalar>
void check_separable_dims(const SeparableParams<Scalar>& p, const Design<Scalar>& d)
{
    if (p.s_filter.size() != d.num_locations || p.t_filter.size() != d.tau_k
        || p.h.size() != d.history_lags.cols())
        throw DimensionMismatch("separable parameters do not match the design ("
                                + std::to_string(d.num_locations) + " locations, "
                                + std::to_string(d.tau_k) + " lags)");
}

/// Column i is X_i t for every row: the regressor seen by s.
template <typename Scalar>
Matrix<Scalar> spatial_regressors(const Design<Scalar>& d, const Vector<Scalar>& t_filter)
{
    Matrix<Scalar> a(d.rows(), d.num_locations);
    for (Index i = 0; i < d.num_locations; ++i)
        a.col(i) = d.stimulus_lags.middleCols(i * d.tau_k, d.tau_k) * t_filter;
    return a;
}

/// Row r is (s^T X_r): the regressor seen by t.
template <typename Scalar>
Matrix<Scalar> temporal_regressors(const Design<Scalar>& d, const Vector<Scalar>& s_filter)
{
    Matrix<Scalar> b = Matrix<Scalar>::Zero(d.rows(), d.tau_k);
    for (Index i = 0; i < d.num_locations; ++i)
        b += s_filter(i) * d.stimulus_lags.middleCols(i * d.tau_k, d.tau_k);
    return b;
}

template <typename Scalar>
RateVector<Scalar> separable_rates(const SeparableParams<Scalar>& p, const Design<Scalar>& d)
{
    check_separable_dims(p, d);
    Vector<Scalar> eta = spatial_regressors(d, p.t_filter) * p.s_filter + d.history_lags * p.h;
    eta.array() += p.mu;
    return rates_from_predictor<Scalar>(std::move(eta));
}

}  // namespace detail

/// exp(s^T X t + h.y + mu) for one row.
template <typename Scalar>
Intensity<Scalar> separable_intensity(const SeparableParams<Scalar>& params,
                                      const SpatioTemporalRow<Scalar>& row)
{
    using std::exp;
    if (row.X_block.rows() != params.s_filter.size() || row.X_block.cols() != params.t_filter.size()
        || row.y.size() != params.h.size())
        throw DimensionMismatch("separable parameters do not match the row");
    bool clamped = false;
    const Scalar eta = clamp_predictor(
        Scalar(params.s_filter.dot(row.X_block * params.t_filter)) + params.h.dot(row.y) + params.mu,
        clamped);
    return {exp(eta), clamped};
}

template <typename Scalar>
Scalar separable_log_likelihood(const SeparableParams<Scalar>& params, const Design<Scalar>& design)
{
    detail::require_rows(design);
    return detail::poisson_loglik(detail::separable_rates(params, design), design.observed,
                                  design.delta);
}

template <typename Scalar>
struct SeparableGradient {
    Vector<Scalar> d_s;
    Vector<Scalar> d_t;
    Vector<Scalar> d_h;
    Scalar d_mu = Scalar(0);
    bool clamped = false;

    Vector<Scalar> flatten() const
    {
        Vector<Scalar> v(d_s.size() + d_t.size() + d_h.size() + 1);
        v << d_s, d_t, d_h, d_mu;
        return v;
    }

    Scalar max_norm() const { return flatten().cwiseAbs().maxCoeff(); }
};

/// Single-neuron gradient formulas with regressor X t for s and s^T X for t.
template <typename Scalar>
SeparableGradient<Scalar> separable_gradients(const SeparableParams<Scalar>& params,
                                              const Design<Scalar>& design)
{
    detail::require_rows(design);
    const RateVector<Scalar> r = detail::separable_rates(params, design);
    const Vector<Scalar> res = detail::score_residual(r, design.observed, design.delta);
    return {detail::spatial_regressors(design, params.t_filter).transpose() * res,
            detail::temporal_regressors(design, params.s_filter).transpose() * res,
            design.history_lags.transpose() * res, res.sum(), r.clamped > 0};
}

/// Mixed second derivative d2L/(ds dt), a (locations x tau_k) matrix:
///   sum_t (y_t - delta lambda_t) X_t  -  delta sum_t lambda_t (X_t t)(s^T X_t).
/// The first term is what makes the joint surface non-concave.
template <typename Scalar>
Matrix<Scalar> cross_hessian_st(const SeparableParams<Scalar>& params, const Design<Scalar>& design)
{
    detail::require_rows(design);
    const RateVector<Scalar> r = detail::separable_rates(params, design);
    const Vector<Scalar> res = detail::score_residual(r, design.observed, design.delta);
    const Vector<Scalar> weighted = design.stimulus_lags.transpose() * res;

    Matrix<Scalar> out(design.num_locations, design.tau_k);
    for (Index i = 0; i < design.num_locations; ++i)
        out.row(i) = weighted.segment(i * design.tau_k, design.tau_k).transpose();

    const Matrix<Scalar> a = detail::spatial_regressors(design, params.t_filter);
    const Matrix<Scalar> b = detail::temporal_regressors(design, params.s_filter);
    out -= a.transpose() * ((design.delta * r.rate).asDiagonal() * b);
    return out;
}

/// Joint Hessian over [s | t | h | mu]. Diagnostic only: it is indefinite in
/// general, so fitting uses the concave per-block subproblems instead.
template <typename Scalar>
Matrix<Scalar> separable_hessian(const SeparableParams<Scalar>& params, const Design<Scalar>& design)
{
    detail::require_rows(design);
    const RateVector<Scalar> r = detail::separable_rates(params, design);
    const Index ns = params.s_filter.size();
    const Index nt = params.t_filter.size();
    const Index nh = params.h.size();

    Matrix<Scalar> z(design.rows(), ns + nt + nh + 1);
    z.leftCols(ns) = detail::spatial_regressors(design, params.t_filter);
    z.middleCols(ns, nt) = detail::temporal_regressors(design, params.s_filter);
    z.middleCols(ns + nt, nh) = design.history_lags;
    z.col(ns + nt + nh).setOnes();

    Matrix<Scalar> h = detail::weighted_gram(z, r.rate, design.delta);
    // Only the s-t block carries the extra residual-weighted term.
    const Vector<Scalar> res = detail::score_residual(r, design.observed, design.delta);
    const Vector<Scalar> weighted = design.stimulus_lags.transpose() * res;
    for (Index i = 0; i < ns; ++i) {
        for (Index l = 0; l < nt; ++l) {
            h(i, ns + l) += weighted(i * nt + l);
            h(ns + l, i) = h(i, ns + l);
        }
    }
    return h;
}

/// Resolves the (alpha s, t / alpha) degeneracy: returns (sigma s/|s|,
/// sigma |s| t) with sigma making the first nonzero spatial weight positive.
template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> canonicalize(const Vector<Scalar>& s_filter,
                                                       const Vector<Scalar>& t_filter)
{
    using std::abs;
    const Scalar norm = s_filter.norm();
    if (!(norm > Scalar(0)))
        throw DegenerateFilter("spatial filter is zero; cannot canonicalize");
    Index first = 0;
    while (s_filter(first) == Scalar(0))
        ++first;
    const Scalar sign = s_filter(first) > Scalar(0) ? Scalar(1) : Scalar(-1);
    if (sign > Scalar(0) && abs(norm - Scalar(1)) <= Scalar(4) * std::numeric_limits<Scalar>::epsilon())
        return {s_filter, t_filter};
    return {(sign / norm) * s_filter, (sign * norm) * t_filter};
}

template <typename Scalar>
SeparableParams<Scalar> canonicalize(const SeparableParams<Scalar>& p)
{
    auto [s, t] = canonicalize(p.s_filter, p.t_filter);
    return {std::move(s), std::move(t), p.h, p.mu};
}

// ---------------------------------------------------------------------------
// Fitting

struct SeparableFitOptions {
    FitOptions fit{.max_iters = 500};  ///< max_iters counts alternating sweeps
    int starts = 3;                     ///< start 0 is unperturbed
    double perturbation = 0.1;          ///< relative scale of start perturbations
    std::uint64_t seed = 0;
    int power_iters = 50;
    double power_tol = 1e-10;
};

/// Rank-1 factorization of the spike-triggered average lag block (mean over
/// spike bins minus mean over all bins) by power iteration; h = 0 and mu at
/// the bias-only estimate.
SeparableParams<double> initialize_separable(const Design<double>& design,
                                             const SeparableFitOptions& options = {});

/// Alternating block ascent from `start`: a Newton step on (s, h, mu) with t
/// frozen, then on (t, h, mu) with s frozen, until the joint gradient
/// max-norm falls below tolerance. The result is not canonicalized.
FitResult<SeparableParams<double>> fit_separable_from(const Design<double>& design,
                                                      const SeparableParams<double>& start,
                                                      const FitOptions& options);

/// Multi-start alternating fit; keeps the best final log-likelihood (lowest
/// start index on ties) and reports canonical parameters.
FitResult<SeparableParams<double>> fit_separable(const Design<double>& design,
                                                 const SeparableFitOptions& options = {});

}  // namespace spikeglm
