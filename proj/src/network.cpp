#include "spikeglm/network.hpp"

#include <future>

namespace spikeglm {

namespace {

NeuronFit fit_neuron(const PopulationData& data, const LagConfig& cfg, const FitOptions& options,
                     Index i)
{
    NeuronFit out;
    out.neuron = i;
    try {
        const Design<double> design = population_design<double>(data, cfg, i);
        FitResult<GlmParams<double>> r = fit(design, options);
        FitResult<NeuronParams<double>> nr;
        nr.params = NeuronParams<double>::from_glm(r.params, data.num_neurons(), cfg.tau_h);
        nr.final_loglik = r.final_loglik;
        nr.iterations = r.iterations;
        nr.converged = r.converged;
        nr.trace = std::move(r.trace);
        nr.warnings = std::move(r.warnings);
        out.fit = std::move(nr);
    } catch (const InsufficientData& e) {
        out.error = std::string("unfittable: ") + e.what();
    }
    return out;
}

}  // namespace

std::vector<NeuronFit> fit_population(const PopulationData& data, const LagConfig& cfg,
                                      const FitOptions& options, Execution execution)
{
    const Index n = data.num_neurons();
    std::vector<NeuronFit> out;
    out.reserve(n);
    if (execution == Execution::sequential) {
        for (Index i = 0; i < n; ++i)
            out.push_back(fit_neuron(data, cfg, options, i));
        return out;
    }
    std::vector<std::future<NeuronFit>> tasks;
    tasks.reserve(n);
    for (Index i = 0; i < n; ++i)
        tasks.push_back(std::async(std::launch::async, fit_neuron, std::cref(data), std::cref(cfg),
                                   std::cref(options), i));
    for (auto& t : tasks)
        out.push_back(t.get());
    return out;
}

}  // namespace spikeglm
