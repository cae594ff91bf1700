#pragma once

// Ground-truth spike generation. Bins are emitted one at a time so the
// history regressors always see previously generated spikes; each post
// burn-in bin draws one uniform from the neuron's stream and emits a spike
// when it falls below 1 - exp(-lambda * delta).

#include "spikeglm/network.hpp"
#include "spikeglm/random.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace spikeglm {

enum class StimulusKind { gaussian_white_noise, constant, custom };

std::string to_string(StimulusKind kind);
StimulusKind stimulus_kind_from_string(const std::string& name);

struct SimConfig {
    Index num_bins = 10000;
    double delta = 0.001;
    std::uint64_t seed = 1;
    StimulusKind stimulus_kind = StimulusKind::gaussian_white_noise;
};

/// Intensity left the clamp range during generation.
class SimulationError : public Error {
public:
    using Error::Error;
};

struct SimDiagnostics {
    Index high_rate_bins = 0;  ///< bins with lambda * delta >= 0.5
    double max_rate_delta = 0.0;
};

/// Pins bin `bin` of a simulated train to `count`; the stream still advances.
struct ForcedBin {
    Index bin = 0;
    int count = 0;
};

/// gaussian_white_noise: independent standard normals from the stimulus
/// stream; constant: all ones. A custom stimulus cannot be generated.
Stimulus generate_stimulus(const SimConfig& cfg, Index num_locations);

/// `params.k` uses the design's location-major layout, so its length must be
/// a multiple of the stimulus location count. Uses random stream 0.
SpikeTrain simulate_spike_train(const GlmParams<double>& params, const Stimulus& stimulus,
                                const SimConfig& cfg, SimDiagnostics* diagnostics = nullptr,
                                std::span<const ForcedBin> forced = {});

/// Within a bin every neuron's intensity is computed from earlier bins, then
/// all neurons draw independently, neuron i from stream i.
PopulationData simulate_population(const std::vector<NeuronParams<double>>& all_params,
                                   const Stimulus& stimulus, const SimConfig& cfg,
                                   SimDiagnostics* diagnostics = nullptr);

// ---------------------------------------------------------------------------
// Reference filters for recovery experiments.

/// Biphasic temporal profile, oldest lag first, peak magnitude ~0.5.
Eigen::VectorXd reference_stimulus_filter(Index tau_k);

/// Refractory dip followed by a small rebound, oldest lag first.
Eigen::VectorXd reference_history_filter(Index tau_h);

/// Smooth positive spatial profile with unit norm.
Eigen::VectorXd reference_spatial_filter(Index num_locations);

/// Bias giving roughly `rate_hz` before history effects: log(rate) minus
/// E[k.x], using the lognormal mean for white noise.
double reference_bias(double rate_hz, const Eigen::VectorXd& k, StimulusKind kind);

/// Population with reference self-history filters, stimulus filters of
/// alternating sign, and a coupling filter of amplitude `coupling` from
/// neuron 1 into neuron 0 (when the population has two or more neurons).
std::vector<NeuronParams<double>> reference_population(Index num_neurons, const LagConfig& cfg,
                                                       double rate_hz, double coupling,
                                                       StimulusKind kind);

}  // namespace spikeglm
