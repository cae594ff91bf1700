#pragma once

// Binned spike trains, stimuli and the lagged regressor ("design") structures
// consumed by every likelihood evaluation.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace spikeglm {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using CountVector = Eigen::VectorXi;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Lag index outside [tau, length]; the caller must trim the burn-in region.
class IndexOutOfRange : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

/// Malformed inputs: length or bin-width mismatches, invalid counts.
class InvalidData : public Error {
public:
    using Error::Error;
};

/// Not enough usable bins or spikes to define the likelihood or its maximum.
class InsufficientData : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Data

/// Nonnegative spike counts per bin at bin width `delta` (seconds).
class SpikeTrain {
public:
    SpikeTrain(CountVector counts, double delta)
        : counts_(std::move(counts)), delta_(delta)
    {
        if (counts_.size() < 1)
            throw InvalidData("spike train must contain at least one bin");
        if (!(delta_ > 0.0) || !std::isfinite(delta_))
            throw InvalidData("bin width must be positive and finite");
        for (Index t = 0; t < counts_.size(); ++t) {
            if (counts_(t) < 0)
                throw InvalidData("negative spike count at bin " + std::to_string(t));
        }
    }

    const CountVector& counts() const { return counts_; }
    double delta() const { return delta_; }
    Index num_bins() const { return counts_.size(); }
    long long num_spikes() const { return counts_.cast<long long>().sum(); }

    friend bool operator==(const SpikeTrain& a, const SpikeTrain& b)
    {
        return a.delta_ == b.delta_ && a.counts_ == b.counts_;
    }

private:
    CountVector counts_;
    double delta_;
};

/// Real-valued stimulus, one row per spatial location, one column per bin.
class Stimulus {
public:
    Stimulus(Eigen::MatrixXd values, double delta)
        : values_(std::move(values)), delta_(delta)
    {
        if (values_.rows() < 1 || values_.cols() < 1)
            throw InvalidData("stimulus needs at least one location and one bin");
        if (!(delta_ > 0.0) || !std::isfinite(delta_))
            throw InvalidData("bin width must be positive and finite");
        if (!values_.allFinite())
            throw InvalidData("stimulus contains non-finite values");
    }

    const Eigen::MatrixXd& values() const { return values_; }
    double delta() const { return delta_; }
    Index num_locations() const { return values_.rows(); }
    Index num_bins() const { return values_.cols(); }

    friend bool operator==(const Stimulus& a, const Stimulus& b)
    {
        return a.delta_ == b.delta_ && a.values_ == b.values_;
    }

private:
    Eigen::MatrixXd values_;
    double delta_;
};

struct LagConfig {
    Index tau_k = 1;  ///< stimulus lag depth
    Index tau_h = 1;  ///< spike-history lag depth

    Index burn_in() const { return std::max(tau_k, tau_h); }
};

/// Lagged regressors for one bin. `x` is location-major: the lags of location
/// 0 (oldest first), then location 1, and so on.
template <typename Scalar>
struct DesignRow {
    Vector<Scalar> x;
    Vector<Scalar> y;
    Index bin_index = 0;
    int observed = 0;
};

/// Materialized design: one row per usable bin t in [burn_in, T-1].
///
/// Column layout of `stimulus_lags` is location-major (location i occupies
/// columns [i*tau_k, (i+1)*tau_k), oldest lag first). `history_lags` holds one
/// tau_h block per spike source; a single-neuron design has exactly one.
template <typename Scalar>
struct Design {
    Matrix<Scalar> stimulus_lags;
    Matrix<Scalar> history_lags;
    CountVector observed;
    Eigen::Matrix<Index, Eigen::Dynamic, 1> bin_index;
    Index num_locations = 1;
    Index tau_k = 1;
    Index tau_h = 1;
    Scalar delta = Scalar(1);

    Index rows() const { return observed.size(); }
    bool empty() const { return rows() == 0; }
    long long num_spikes() const { return observed.cast<long long>().sum(); }
    Index num_sources() const { return tau_h == 0 ? 0 : history_lags.cols() / tau_h; }

    DesignRow<Scalar> row(Index r) const
    {
        return {stimulus_lags.row(r).transpose(), history_lags.row(r).transpose(),
                bin_index(r), observed(r)};
    }

    /// Lag block of row r as a (num_locations x tau_k) matrix.
    Matrix<Scalar> stimulus_block(Index r) const
    {
        Matrix<Scalar> block(num_locations, tau_k);
        for (Index i = 0; i < num_locations; ++i)
            block.row(i) = stimulus_lags.row(r).segment(i * tau_k, tau_k);
        return block;
    }

    Vector<Scalar> observed_as_scalar() const { return observed.template cast<Scalar>(); }
};

// ---------------------------------------------------------------------------
// Operations

/// (series[t - tau], ..., series[t - 1]), oldest first.
template <typename Derived>
Vector<typename Derived::Scalar> build_lag_vector(const Eigen::DenseBase<Derived>& series,
                                                  Index tau, Index t)
{
    if (tau < 1)
        throw IndexOutOfRange("lag depth must be at least 1");
    if (t < tau || t > series.size())
        throw IndexOutOfRange("lag vector at bin " + std::to_string(t) + " with depth "
                              + std::to_string(tau) + " outside series of length "
                              + std::to_string(series.size()));
    return series.derived().segment(t - tau, tau);
}

namespace detail {

/// Row r holds series[first + r - tau .. first + r - 1].
template <typename Scalar, typename Derived>
Matrix<Scalar> lag_matrix(const Eigen::DenseBase<Derived>& series, Index tau, Index first,
                          Index rows)
{
    Matrix<Scalar> out(rows, tau);
    for (Index r = 0; r < rows; ++r)
        out.row(r) = series.derived().segment(first + r - tau, tau).template cast<Scalar>();
    return out;
}

inline void check_lags(const LagConfig& cfg, Index num_bins)
{
    if (cfg.tau_k < 1 || cfg.tau_h < 1)
        throw InvalidData("lag depths must be at least 1");
    if (cfg.tau_k > num_bins || cfg.tau_h > num_bins)
        throw InvalidData("lag depth exceeds the number of bins");
}

/// Stimulus lag block for rows t in [burn_in, T-1].
template <typename Scalar>
Matrix<Scalar> stimulus_lag_matrix(const Stimulus& stimulus, const LagConfig& cfg)
{
    const Index first = cfg.burn_in();
    const Index rows = std::max<Index>(0, stimulus.num_bins() - first);
    const Index s = stimulus.num_locations();
    Matrix<Scalar> out(rows, s * cfg.tau_k);
    for (Index i = 0; i < s; ++i)
        out.middleCols(i * cfg.tau_k, cfg.tau_k)
            = lag_matrix<Scalar>(stimulus.values().row(i), cfg.tau_k, first, rows);
    return out;
}

template <typename Scalar>
Matrix<Scalar> history_lag_matrix(const SpikeTrain& spikes, const LagConfig& cfg)
{
    const Index first = cfg.burn_in();
    const Index rows = std::max<Index>(0, spikes.num_bins() - first);
    return lag_matrix<Scalar>(spikes.counts(), cfg.tau_h, first, rows);
}

}  // namespace detail

/// Builds the design over t in [max(tau_k, tau_h), T-1]. Burn-in bins are
/// dropped rather than zero-padded. May return an empty design.
template <typename Scalar = double>
Design<Scalar> assemble_design(const Stimulus& stimulus, const SpikeTrain& spikes,
                               const LagConfig& cfg)
{
    if (stimulus.num_bins() != spikes.num_bins())
        throw InvalidData("stimulus has " + std::to_string(stimulus.num_bins())
                          + " bins but spike train has " + std::to_string(spikes.num_bins()));
    if (stimulus.delta() != spikes.delta())
        throw InvalidData("stimulus and spike train bin widths differ");
    detail::check_lags(cfg, spikes.num_bins());

    const Index first = cfg.burn_in();
    const Index rows = std::max<Index>(0, spikes.num_bins() - first);

    Design<Scalar> d;
    d.num_locations = stimulus.num_locations();
    d.tau_k = cfg.tau_k;
    d.tau_h = cfg.tau_h;
    d.delta = Scalar(spikes.delta());
    d.stimulus_lags = detail::stimulus_lag_matrix<Scalar>(stimulus, cfg);
    d.history_lags = detail::history_lag_matrix<Scalar>(spikes, cfg);
    d.observed = spikes.counts().segment(first, rows);
    d.bin_index = Eigen::Matrix<Index, Eigen::Dynamic, 1>::LinSpaced(rows, first, first + rows - 1);
    return d;
}

}  // namespace spikeglm
