#pragma once

// Coupled populations. Neuron i sees the shared stimulus through k_i and the
// spike history of every neuron j (itself included) through h_ij:
//
//   lambda_i = exp(k_i . x + sum_j h_ij . y_j + mu_i)
//
// Parameters of different neurons never meet in one intensity, so the
// population likelihood is a sum of per-neuron terms and each neuron is an
// ordinary single-neuron GLM whose history regressor stacks all y_j.

#include "spikeglm/optimizer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace spikeglm {

template <typename Scalar>
struct NeuronParams {
    Vector<Scalar> k;
    std::vector<Vector<Scalar>> h_couplings;  ///< h_couplings[j] = h_ij
    Scalar mu = Scalar(0);

    static NeuronParams zeros(Index nk, Index num_neurons, Index tau_h)
    {
        return {Vector<Scalar>::Zero(nk),
                std::vector<Vector<Scalar>>(num_neurons, Vector<Scalar>::Zero(tau_h)), Scalar(0)};
    }

    /// Single-neuron view with h = [h_i0 | h_i1 | ...].
    GlmParams<Scalar> to_glm() const
    {
        Index total = 0;
        for (const auto& h : h_couplings)
            total += h.size();
        Vector<Scalar> h(total);
        Index at = 0;
        for (const auto& c : h_couplings) {
            h.segment(at, c.size()) = c;
            at += c.size();
        }
        return {k, h, mu};
    }

    static NeuronParams from_glm(const GlmParams<Scalar>& p, Index num_neurons, Index tau_h)
    {
        if (p.h.size() != num_neurons * tau_h)
            throw DimensionMismatch("coupling vector length does not match the population");
        NeuronParams out{p.k, {}, p.mu};
        for (Index j = 0; j < num_neurons; ++j)
            out.h_couplings.push_back(p.h.segment(j * tau_h, tau_h));
        return out;
    }
};

/// A shared single-location stimulus and one spike train per neuron on the
/// same bin grid.
class PopulationData {
public:
    PopulationData(Stimulus stimulus, std::vector<SpikeTrain> trains)
        : stimulus_(std::move(stimulus)), trains_(std::move(trains))
    {
        if (trains_.empty())
            throw InvalidData("population needs at least one spike train");
        if (stimulus_.num_locations() != 1)
            throw DimensionMismatch("population models take a single-location stimulus");
        for (std::size_t i = 0; i < trains_.size(); ++i) {
            if (trains_[i].num_bins() != stimulus_.num_bins())
                throw InvalidData("spike train " + std::to_string(i) + " is not aligned with the stimulus");
            if (trains_[i].delta() != stimulus_.delta())
                throw InvalidData("spike train " + std::to_string(i) + " has a different bin width");
        }
    }

    const Stimulus& stimulus() const { return stimulus_; }
    const std::vector<SpikeTrain>& trains() const { return trains_; }
    Index num_neurons() const { return static_cast<Index>(trains_.size()); }
    double delta() const { return stimulus_.delta(); }

private:
    Stimulus stimulus_;
    std::vector<SpikeTrain> trains_;
};

namespace detail {

inline void check_neuron(const PopulationData& data, Index i)
{
    if (i < 0 || i >= data.num_neurons())
        throw IndexOutOfRange("neuron index " + std::to_string(i) + " outside population of "
                              + std::to_string(data.num_neurons()));
}

template <typename Scalar>
void check_neuron_params(const NeuronParams<Scalar>& p, const PopulationData& data,
                         const LagConfig& cfg)
{
    if (static_cast<Index>(p.h_couplings.size()) != data.num_neurons())
        throw DimensionMismatch("expected one coupling filter per neuron");
    for (const auto& h : p.h_couplings) {
        if (h.size() != cfg.tau_h)
            throw DimensionMismatch("coupling filter length differs from tau_h");
    }
    if (p.k.size() != cfg.tau_k)
        throw DimensionMismatch("stimulus filter length differs from tau_k");
}

}  // namespace detail

/// Design for neuron i: shared stimulus lags, history lags of every neuron
/// (neuron 0's block first), observed counts of neuron i.
template <typename Scalar = double>
Design<Scalar> population_design(const PopulationData& data, const LagConfig& cfg, Index i)
{
    detail::check_neuron(data, i);
    Design<Scalar> d = assemble_design<Scalar>(data.stimulus(), data.trains()[i], cfg);
    const Index n = data.num_neurons();
    Matrix<Scalar> hist(d.rows(), n * cfg.tau_h);
    for (Index j = 0; j < n; ++j)
        hist.middleCols(j * cfg.tau_h, cfg.tau_h) = detail::history_lag_matrix<Scalar>(data.trains()[j], cfg);
    d.history_lags = std::move(hist);
    return d;
}

/// exp(k_i . x + sum_j h_ij . y_j + mu_i)
template <typename Scalar>
Intensity<Scalar> network_intensity(const NeuronParams<Scalar>& params, const Vector<Scalar>& x,
                                    const std::vector<Vector<Scalar>>& histories)
{
    using std::exp;
    if (histories.size() != params.h_couplings.size())
        throw DimensionMismatch("got " + std::to_string(histories.size()) + " histories for "
                                + std::to_string(params.h_couplings.size()) + " coupling filters");
    if (x.size() != params.k.size())
        throw DimensionMismatch("stimulus lag vector length differs from k");
    Scalar eta = params.k.dot(x) + params.mu;
    for (std::size_t j = 0; j < histories.size(); ++j) {
        if (histories[j].size() != params.h_couplings[j].size())
            throw DimensionMismatch("history " + std::to_string(j) + " length differs from h_ij");
        eta += params.h_couplings[j].dot(histories[j]);
    }
    bool clamped = false;
    eta = clamp_predictor(eta, clamped);
    return {exp(eta), clamped};
}

/// Neuron i's term of the population log-likelihood.
template <typename Scalar>
Scalar neuron_log_likelihood(const NeuronParams<Scalar>& params, const PopulationData& data,
                             const LagConfig& cfg, Index i)
{
    detail::check_neuron_params(params, data, cfg);
    return log_likelihood(params.to_glm(), population_design<Scalar>(data, cfg, i));
}

template <typename Scalar>
Scalar network_log_likelihood(const std::vector<NeuronParams<Scalar>>& all_params,
                              const PopulationData& data, const LagConfig& cfg)
{
    if (static_cast<Index>(all_params.size()) != data.num_neurons())
        throw DimensionMismatch("expected one parameter set per neuron");
    Scalar total(0);
    for (Index i = 0; i < data.num_neurons(); ++i)
        total += neuron_log_likelihood(all_params[i], data, cfg, i);
    return total;
}

/// dL/dh_ij = sum_t y_i,t y_j - delta sum_t y_j lambda_i.
template <typename Scalar>
Vector<Scalar> coupling_gradient(const NeuronParams<Scalar>& params_i, const PopulationData& data,
                                 const LagConfig& cfg, Index i, Index j)
{
    detail::check_neuron(data, j);
    detail::check_neuron_params(params_i, data, cfg);
    const Gradient<Scalar> g = gradient(params_i.to_glm(), population_design<Scalar>(data, cfg, i));
    return g.d_h.segment(j * cfg.tau_h, cfg.tau_h);
}

/// Hessian over neuron i's own parameters, layout [k_i | h_i0 | h_i1 | ... | mu_i].
template <typename Scalar>
Hessian<Scalar> neuron_hessian(const NeuronParams<Scalar>& params_i, const PopulationData& data,
                               const LagConfig& cfg, Index i)
{
    detail::check_neuron_params(params_i, data, cfg);
    return hessian(params_i.to_glm(), population_design<Scalar>(data, cfg, i));
}

struct NeuronFit {
    Index neuron = 0;
    std::optional<FitResult<NeuronParams<double>>> fit;
    std::string error;  ///< set when the neuron could not be fit
};

enum class Execution { sequential, parallel };

/// Fits every neuron independently, one task per neuron. Results are ordered
/// by neuron index; a neuron without spikes yields an error entry instead of
/// failing the population.
std::vector<NeuronFit> fit_population(const PopulationData& data, const LagConfig& cfg,
                                      const FitOptions& options = {},
                                      Execution execution = Execution::parallel);

}  // namespace spikeglm
