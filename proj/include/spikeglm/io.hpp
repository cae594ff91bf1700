#pragma once

// Text formats for spike trains and stimuli, the JSON experiment
// configuration, and JSON fit reports.
//
// Spike train file:  "delta=<seconds>" then one nonnegative count per line.
// Stimulus file:     "delta=<seconds>", "locations=<s>", then one line per
//                    bin holding s whitespace-separated values.
// Numbers are written in shortest round-trip form, so save/load is lossless.

#include "spikeglm/network.hpp"
#include "spikeglm/separable.hpp"
#include "spikeglm/simulator.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace spikeglm {

inline constexpr const char* kToolName = "spikeglm";
inline constexpr const char* kToolVersion = "1.0.0";

/// Malformed data file; `line()` is 1-based, 0 when not tied to a line.
class ParseError : public InvalidData {
public:
    ParseError(const std::string& what, std::size_t line)
        : InvalidData(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line)
    {
    }
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Invalid or unknown configuration content.
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

SpikeTrain read_spike_train(std::istream& in);
void write_spike_train(const SpikeTrain& train, std::ostream& out);
SpikeTrain load_spike_train(const std::filesystem::path& path);
void save_spike_train(const SpikeTrain& train, const std::filesystem::path& path);

Stimulus read_stimulus(std::istream& in);
void write_stimulus(const Stimulus& stimulus, std::ostream& out);
Stimulus load_stimulus(const std::filesystem::path& path);
void save_stimulus(const Stimulus& stimulus, const std::filesystem::path& path);

/// Shortest decimal string that parses back to exactly `value`.
std::string format_double(double value);

// ---------------------------------------------------------------------------
// Configuration

enum class ModelKind { single, separable, network };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct SimulationSection {
    Index num_bins = 10000;
    std::uint64_t seed = 1;
    StimulusKind stimulus_kind = StimulusKind::gaussian_white_noise;
    Index num_locations = 1;  ///< separable model only
    Index num_neurons = 3;    ///< network model only
    double rate_hz = 50.0;    ///< baseline rate used when no bias is given
    double coupling = 0.0;    ///< network: coupling amplitude from neuron 1 into neuron 0

    bool operator==(const SimulationSection&) const = default;
};

/// Optional ground truth; missing pieces fall back to the reference filters.
struct TruthSection {
    std::optional<std::vector<double>> k;  ///< single model, location-major
    std::optional<std::vector<double>> h;
    std::optional<std::vector<double>> s;  ///< separable model
    std::optional<std::vector<double>> t;
    std::optional<double> mu;

    bool operator==(const TruthSection&) const = default;
};

struct PathsSection {
    std::string stimulus;             ///< empty: simulate from the config
    std::vector<std::string> spikes;  ///< one file per neuron
    std::string report = "fit_report.json";
    std::string output_dir = ".";

    bool operator==(const PathsSection&) const = default;
};

struct RecoverSection {
    double min_correlation = 0.7;   ///< single and network models
    double max_filter_error = 0.2;  ///< separable model, relative Frobenius error of K

    bool operator==(const RecoverSection&) const = default;
};

struct ExperimentConfig {
    ModelKind model = ModelKind::single;
    LagConfig lags{.tau_k = 20, .tau_h = 9};
    double delta = 0.001;
    FitOptions fit;
    int starts = 3;  ///< separable multi-start count
    SimulationSection simulation;
    TruthSection truth;
    PathsSection paths;
    RecoverSection recover;

    /// Directory that relative paths are resolved against.
    std::filesystem::path base_dir;

    friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
/// Rejects unknown keys, naming the offending one.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig parse_config(const std::string& text);
/// Relative paths inside the file resolve against its directory.
ExperimentConfig load_config(const std::filesystem::path& path);

SimConfig sim_config(const ExperimentConfig& cfg);
std::filesystem::path resolve(const ExperimentConfig& cfg, const std::string& path);

// ---------------------------------------------------------------------------
// Reports

nlohmann::json params_to_json(const GlmParams<double>& p);
nlohmann::json params_to_json(const SeparableParams<double>& p);
nlohmann::json params_to_json(const NeuronParams<double>& p);
GlmParams<double> glm_params_from_json(const nlohmann::json& j);
SeparableParams<double> separable_params_from_json(const nlohmann::json& j);
NeuronParams<double> neuron_params_from_json(const nlohmann::json& j);

nlohmann::json fit_report(const FitResult<GlmParams<double>>& result, const ExperimentConfig& cfg);
nlohmann::json fit_report(const FitResult<SeparableParams<double>>& result,
                          const ExperimentConfig& cfg);
nlohmann::json fit_report(const std::vector<NeuronFit>& fits, const ExperimentConfig& cfg);

void save_json(const nlohmann::json& doc, const std::filesystem::path& path);
nlohmann::json load_json(const std::filesystem::path& path);

template <typename Result>
void save_fit_report(const Result& result, const ExperimentConfig& cfg,
                     const std::filesystem::path& path)
{
    save_json(fit_report(result, cfg), path);
}

}  // namespace spikeglm
