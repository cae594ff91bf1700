#include "spikeglm/simulator.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace spikeglm {

std::string to_string(StimulusKind kind)
{
    switch (kind) {
    case StimulusKind::gaussian_white_noise: return "gaussian-white-noise";
    case StimulusKind::constant: return "constant";
    case StimulusKind::custom: return "custom";
    }
    return "unknown";
}

StimulusKind stimulus_kind_from_string(const std::string& name)
{
    if (name == "gaussian-white-noise")
        return StimulusKind::gaussian_white_noise;
    if (name == "constant")
        return StimulusKind::constant;
    if (name == "custom")
        return StimulusKind::custom;
    throw InvalidData("unknown stimulus kind '" + name
                      + "' (gaussian-white-noise, constant, custom accepted)");
}

Stimulus generate_stimulus(const SimConfig& cfg, Index num_locations)
{
    if (cfg.num_bins < 1 || num_locations < 1)
        throw InvalidData("stimulus needs at least one location and one bin");
    Eigen::MatrixXd values(num_locations, cfg.num_bins);
    switch (cfg.stimulus_kind) {
    case StimulusKind::gaussian_white_noise: {
        RandomStream rng(cfg.seed, kStimulusStream);
        // Bin-major draw order: all locations of bin 0, then bin 1, ...
        for (Index t = 0; t < cfg.num_bins; ++t)
            for (Index i = 0; i < num_locations; ++i)
                values(i, t) = rng.normal();
        break;
    }
    case StimulusKind::constant:
        values.setOnes();
        break;
    case StimulusKind::custom:
        throw InvalidData("a custom stimulus must be supplied, not generated");
    }
    return Stimulus(std::move(values), cfg.delta);
}

namespace {

struct Emission {
    int count;
    double rate_delta;
};

Emission emit(double eta, double delta, RandomStream& rng, Index t)
{
    bool clamped = false;
    clamp_predictor(eta, clamped);
    if (clamped || !std::isfinite(eta)) {
        std::ostringstream msg;
        msg << "linear predictor " << eta << " at bin " << t << " left the clamp range";
        throw SimulationError(msg.str());
    }
    const double rate_delta = std::exp(eta) * delta;
    const double p = -std::expm1(-rate_delta);
    return {rng.uniform() < p ? 1 : 0, rate_delta};
}

void note(SimDiagnostics* diag, double rate_delta)
{
    if (!diag)
        return;
    if (rate_delta >= 0.5)
        ++diag->high_rate_bins;
    diag->max_rate_delta = std::max(diag->max_rate_delta, rate_delta);
}

void check_sim(const Stimulus& stimulus, const SimConfig& cfg)
{
    if (stimulus.delta() != cfg.delta)
        throw InvalidData("stimulus bin width differs from the simulation bin width");
}

// Stimulus drive k . x_t for every bin t >= tau_k (zero before).
Eigen::VectorXd stimulus_drive(const Eigen::VectorXd& k, const Stimulus& stimulus, Index tau_k)
{
    const Index T = stimulus.num_bins();
    Eigen::VectorXd drive = Eigen::VectorXd::Zero(T);
    for (Index t = tau_k; t < T; ++t)
        for (Index i = 0; i < stimulus.num_locations(); ++i)
            drive(t) += k.segment(i * tau_k, tau_k).dot(stimulus.values().row(i).segment(t - tau_k, tau_k));
    return drive;
}

double history_drive(const Eigen::VectorXd& h, const CountVector& counts, Index t)
{
    const Index tau_h = h.size();
    double sum = 0.0;
    for (Index l = 0; l < tau_h; ++l)
        sum += h(l) * counts(t - tau_h + l);
    return sum;
}

}  // namespace

SpikeTrain simulate_spike_train(const GlmParams<double>& params, const Stimulus& stimulus,
                                const SimConfig& cfg, SimDiagnostics* diagnostics,
                                std::span<const ForcedBin> forced)
{
    check_sim(stimulus, cfg);
    const Index s = stimulus.num_locations();
    if (params.k.size() < 1 || params.k.size() % s != 0)
        throw DimensionMismatch("stimulus filter length is not a multiple of the location count");
    const Index tau_k = params.k.size() / s;
    const Index tau_h = params.h.size();
    const Index burn_in = std::max(tau_k, tau_h);
    const Index T = stimulus.num_bins();
    if (burn_in > T)
        throw InvalidData("lag depth exceeds the number of bins");

    const Eigen::VectorXd drive = stimulus_drive(params.k, stimulus, tau_k);
    CountVector counts = CountVector::Zero(T);
    RandomStream rng(cfg.seed, 0);
    for (Index t = burn_in; t < T; ++t) {
        const double eta = drive(t) + params.mu + history_drive(params.h, counts, t);
        const Emission e = emit(eta, cfg.delta, rng, t);
        note(diagnostics, e.rate_delta);
        counts(t) = e.count;
        for (const ForcedBin& f : forced) {
            if (f.bin == t)
                counts(t) = f.count;
        }
    }
    return SpikeTrain(std::move(counts), cfg.delta);
}

PopulationData simulate_population(const std::vector<NeuronParams<double>>& all_params,
                                   const Stimulus& stimulus, const SimConfig& cfg,
                                   SimDiagnostics* diagnostics)
{
    check_sim(stimulus, cfg);
    const Index n = static_cast<Index>(all_params.size());
    if (n < 1)
        throw InvalidData("population needs at least one neuron");
    if (stimulus.num_locations() != 1)
        throw DimensionMismatch("population models take a single-location stimulus");
    const Index tau_k = all_params[0].k.size();
    const Index tau_h = all_params[0].h_couplings.empty() ? 0 : all_params[0].h_couplings[0].size();
    for (const auto& p : all_params) {
        if (p.k.size() != tau_k || static_cast<Index>(p.h_couplings.size()) != n)
            throw DimensionMismatch("population parameters have inconsistent shapes");
        for (const auto& h : p.h_couplings)
            if (h.size() != tau_h)
                throw DimensionMismatch("coupling filters must share one lag depth");
    }
    const Index burn_in = std::max(tau_k, tau_h);
    const Index T = stimulus.num_bins();
    if (burn_in > T || tau_k < 1)
        throw InvalidData("lag depth exceeds the number of bins");

    std::vector<Eigen::VectorXd> drives;
    std::vector<RandomStream> streams;
    std::vector<CountVector> counts(n, CountVector::Zero(T));
    for (Index i = 0; i < n; ++i) {
        drives.push_back(stimulus_drive(all_params[i].k, stimulus, tau_k));
        streams.emplace_back(cfg.seed, static_cast<std::uint64_t>(i));
    }

    Eigen::VectorXd eta(n);
    for (Index t = burn_in; t < T; ++t) {
        for (Index i = 0; i < n; ++i) {
            double v = drives[i](t) + all_params[i].mu;
            for (Index j = 0; j < n; ++j)
                v += history_drive(all_params[i].h_couplings[j], counts[j], t);
            eta(i) = v;
        }
        for (Index i = 0; i < n; ++i) {
            const Emission e = emit(eta(i), cfg.delta, streams[i], t);
            note(diagnostics, e.rate_delta);
            counts[i](t) = e.count;
        }
    }

    std::vector<SpikeTrain> trains;
    for (Index i = 0; i < n; ++i)
        trains.emplace_back(std::move(counts[i]), cfg.delta);
    return PopulationData(stimulus, std::move(trains));
}

Eigen::VectorXd reference_stimulus_filter(Index tau_k)
{
    Eigen::VectorXd k(tau_k);
    for (Index l = 0; l < tau_k; ++l) {
        const double u = static_cast<double>(tau_k - l) / static_cast<double>(tau_k);  // (0, 1]
        k(l) = 1.2 * std::sin(2.0 * std::numbers::pi * u) * std::exp(-2.5 * u);
    }
    return k;
}

Eigen::VectorXd reference_history_filter(Index tau_h)
{
    Eigen::VectorXd h(tau_h);
    for (Index l = 0; l < tau_h; ++l) {
        const double back = static_cast<double>(tau_h - l);  // 1 = most recent bin
        h(l) = -1.0 * std::exp(-(back - 1.0) / 1.5) + 0.25 * std::exp(-(back - 4.0) * (back - 4.0) / 4.0);
    }
    return h;
}

Eigen::VectorXd reference_spatial_filter(Index num_locations)
{
    Eigen::VectorXd s(num_locations);
    const double centre = 0.5 * static_cast<double>(num_locations - 1);
    const double width = std::max(1.0, 0.3 * static_cast<double>(num_locations));
    for (Index i = 0; i < num_locations; ++i) {
        const double d = (static_cast<double>(i) - centre) / width;
        s(i) = std::exp(-0.5 * d * d) - 0.25;
    }
    return s / s.norm();
}

double reference_bias(double rate_hz, const Eigen::VectorXd& k, StimulusKind kind)
{
    if (!(rate_hz > 0.0))
        throw InvalidData("rate must be positive");
    const double drive = kind == StimulusKind::constant ? k.sum() : 0.5 * k.squaredNorm();
    return std::log(rate_hz) - drive;
}

std::vector<NeuronParams<double>> reference_population(Index num_neurons, const LagConfig& cfg,
                                                       double rate_hz, double coupling,
                                                       StimulusKind kind)
{
    std::vector<NeuronParams<double>> out;
    for (Index i = 0; i < num_neurons; ++i) {
        NeuronParams<double> p = NeuronParams<double>::zeros(cfg.tau_k, num_neurons, cfg.tau_h);
        p.k = (i % 2 == 0 ? 1.0 : -1.0) * reference_stimulus_filter(cfg.tau_k);
        p.h_couplings[i] = reference_history_filter(cfg.tau_h);
        p.mu = reference_bias(rate_hz, p.k, kind);
        out.push_back(std::move(p));
    }
    if (num_neurons >= 2 && coupling != 0.0) {
        Eigen::VectorXd& h01 = out[0].h_couplings[1];
        for (Index l = 0; l < cfg.tau_h; ++l) {
            const double back = static_cast<double>(cfg.tau_h - l);
            h01(l) = coupling * std::exp(-(back - 1.0) / 2.0);
        }
    }
    return out;
}

}  // namespace spikeglm
