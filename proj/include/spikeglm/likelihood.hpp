#pragma once

// Poisson bin probabilities, the exponential-link conditional intensity and the
// spike-train log-likelihood.

#include "spikeglm/core.hpp"

#include <cmath>
#include <string>

namespace spikeglm {

/// Linear predictors are clamped to +/- this value before exponentiation.
inline constexpr double kPredictorClamp = 500.0;

/// Stimulus filter k, post-spike filter h and bias mu. The flattened layout
/// used by derivatives and the optimizer is [k | h | mu].
template <typename Scalar>
struct GlmParams {
    Vector<Scalar> k;
    Vector<Scalar> h;
    Scalar mu = Scalar(0);

    static GlmParams zeros(Index nk, Index nh)
    {
        return {Vector<Scalar>::Zero(nk), Vector<Scalar>::Zero(nh), Scalar(0)};
    }

    Index size() const { return k.size() + h.size() + 1; }

    Vector<Scalar> flatten() const
    {
        Vector<Scalar> v(size());
        v << k, h, mu;
        return v;
    }

    static GlmParams unflatten(const Vector<Scalar>& v, Index nk, Index nh)
    {
        if (v.size() != nk + nh + 1)
            throw DimensionMismatch("flattened parameter vector has wrong length");
        return {v.head(nk), v.segment(nk, nh), v(nk + nh)};
    }

    bool all_finite() const { return k.allFinite() && h.allFinite() && std::isfinite(mu); }

    friend bool operator==(const GlmParams& a, const GlmParams& b)
    {
        return a.k == b.k && a.h == b.h && a.mu == b.mu;
    }
};

template <typename Scalar>
struct Intensity {
    Scalar rate;
    bool clamped = false;
};

/// Per-row intensities over a design together with the clamp count.
template <typename Scalar>
struct RateVector {
    Vector<Scalar> predictor;  ///< clamped linear predictor, log of `rate`
    Vector<Scalar> rate;
    Index clamped = 0;
};

template <typename Scalar>
Scalar clamp_predictor(Scalar eta, bool& clamped)
{
    const Scalar bound(kPredictorClamp);
    if (eta > bound) {
        clamped = true;
        return bound;
    }
    if (eta < -bound) {
        clamped = true;
        return -bound;
    }
    return eta;
}

/// P(y | rate) for one bin of width delta: (rate*delta)^y / y! * exp(-rate*delta).
template <typename Scalar>
Scalar bin_probability(int y, Scalar rate, Scalar delta)
{
    using std::exp;
    using std::lgamma;
    using std::log;
    if (y < 0)
        throw InvalidData("spike count must be nonnegative");
    const Scalar mean = rate * delta;
    if (y == 0)
        return exp(-mean);
    return exp(Scalar(y) * log(mean) - mean - lgamma(Scalar(y) + Scalar(1)));
}

namespace detail {

template <typename Scalar>
void check_dims(const GlmParams<Scalar>& p, Index nx, Index ny)
{
    if (p.k.size() != nx || p.h.size() != ny)
        throw DimensionMismatch("parameters (k: " + std::to_string(p.k.size()) + ", h: "
                                + std::to_string(p.h.size()) + ") do not match regressors (x: "
                                + std::to_string(nx) + ", y: " + std::to_string(ny) + ")");
}

template <typename Scalar>
void require_rows(const Design<Scalar>& d)
{
    if (d.empty())
        throw InsufficientData("design has no usable bins after burn-in");
}

/// Turns raw predictors into clamped predictors and rates.
template <typename Scalar>
RateVector<Scalar> rates_from_predictor(Vector<Scalar> eta)
{
    using std::exp;
    RateVector<Scalar> out;
    for (Index r = 0; r < eta.size(); ++r) {
        bool clamped = false;
        eta(r) = clamp_predictor(eta(r), clamped);
        out.clamped += clamped ? 1 : 0;
    }
    out.rate = eta.array().exp().matrix();
    out.predictor = std::move(eta);
    return out;
}

/// sum_t y_t * eta_t - delta * sum_t rate_t.
template <typename Scalar>
Scalar poisson_loglik(const RateVector<Scalar>& r, const CountVector& observed, Scalar delta)
{
    Scalar spike_term(0);
    for (Index t = 0; t < observed.size(); ++t) {
        if (observed(t) > 0)
            spike_term += Scalar(observed(t)) * r.predictor(t);
    }
    return spike_term - delta * r.rate.sum();
}

}  // namespace detail

/// exp(k.x + h.y + mu) for a single row.
template <typename Scalar>
Intensity<Scalar> conditional_intensity(const GlmParams<Scalar>& params,
                                        const DesignRow<Scalar>& row)
{
    using std::exp;
    detail::check_dims(params, row.x.size(), row.y.size());
    bool clamped = false;
    const Scalar eta = clamp_predictor(params.k.dot(row.x) + params.h.dot(row.y) + params.mu,
                                       clamped);
    return {exp(eta), clamped};
}

/// Raw (unclamped) linear predictor for every design row.
template <typename Scalar>
Vector<Scalar> linear_predictor(const GlmParams<Scalar>& params, const Design<Scalar>& design)
{
    detail::check_dims(params, design.stimulus_lags.cols(), design.history_lags.cols());
    Vector<Scalar> eta = design.stimulus_lags * params.k + design.history_lags * params.h;
    eta.array() += params.mu;
    return eta;
}

template <typename Scalar>
RateVector<Scalar> intensities(const GlmParams<Scalar>& params, const Design<Scalar>& design)
{
    return detail::rates_from_predictor<Scalar>(linear_predictor(params, design));
}

/// Count-weighted point-process log-likelihood, dropping the
/// parameter-independent constant sum_t (y_t log delta - log y_t!).
template <typename Scalar>
Scalar log_likelihood(const GlmParams<Scalar>& params, const Design<Scalar>& design)
{
    detail::require_rows(design);
    return detail::poisson_loglik(intensities(params, design), design.observed, design.delta);
}

}  // namespace spikeglm
