#include "spikeglm/cli.hpp"

#include "spikeglm/io.hpp"
#include "spikeglm/metrics.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace spikeglm {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kGradientCheckStep = 1e-5;
constexpr double kGradientCheckLimit = 1e-5;

Eigen::VectorXd from_std(const std::vector<double>& v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Index>(v.size()));
}

std::string fixed(double v, int digits = 6)
{
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

// ---------------------------------------------------------------------------
// Ground truth from the config

GlmParams<double> single_truth(const ExperimentConfig& cfg)
{
    const Index s = cfg.simulation.num_locations;
    GlmParams<double> p;
    if (cfg.truth.k) {
        p.k = from_std(*cfg.truth.k);
    } else {
        const SeparableParams<double> sep{reference_spatial_filter(s),
                                          reference_stimulus_filter(cfg.lags.tau_k), {}, 0.0};
        p.k = s == 1 ? reference_stimulus_filter(cfg.lags.tau_k) : full_params(sep).k;
    }
    p.h = cfg.truth.h ? from_std(*cfg.truth.h) : reference_history_filter(cfg.lags.tau_h);
    if (p.k.size() != s * cfg.lags.tau_k || p.h.size() != cfg.lags.tau_h)
        throw ConfigError("truth filter lengths do not match tau_k, tau_h and num_locations");
    p.mu = cfg.truth.mu ? *cfg.truth.mu
                        : reference_bias(cfg.simulation.rate_hz, p.k, cfg.simulation.stimulus_kind);
    return p;
}

SeparableParams<double> separable_truth(const ExperimentConfig& cfg)
{
    SeparableParams<double> p;
    p.s_filter = cfg.truth.s ? from_std(*cfg.truth.s) : reference_spatial_filter(cfg.simulation.num_locations);
    p.t_filter = cfg.truth.t ? from_std(*cfg.truth.t) : reference_stimulus_filter(cfg.lags.tau_k);
    p.h = cfg.truth.h ? from_std(*cfg.truth.h) : reference_history_filter(cfg.lags.tau_h);
    if (p.s_filter.size() != cfg.simulation.num_locations || p.t_filter.size() != cfg.lags.tau_k
        || p.h.size() != cfg.lags.tau_h)
        throw ConfigError("truth filter lengths do not match tau_k, tau_h and num_locations");
    p.mu = cfg.truth.mu ? *cfg.truth.mu
                        : reference_bias(cfg.simulation.rate_hz, full_params(p).k,
                                         cfg.simulation.stimulus_kind);
    return p;
}

std::vector<NeuronParams<double>> network_truth(const ExperimentConfig& cfg)
{
    return reference_population(cfg.simulation.num_neurons, cfg.lags, cfg.simulation.rate_hz,
                                cfg.simulation.coupling, cfg.simulation.stimulus_kind);
}

Index stimulus_locations(const ExperimentConfig& cfg)
{
    return cfg.model == ModelKind::network ? 1 : cfg.simulation.num_locations;
}

// ---------------------------------------------------------------------------
// Data

struct Dataset {
    Stimulus stimulus;
    std::vector<SpikeTrain> trains;
};

Dataset simulate_dataset(const ExperimentConfig& cfg)
{
    const SimConfig sim = sim_config(cfg);
    Stimulus stimulus = generate_stimulus(sim, stimulus_locations(cfg));
    switch (cfg.model) {
    case ModelKind::single:
        return {stimulus, {simulate_spike_train(single_truth(cfg), stimulus, sim)}};
    case ModelKind::separable:
        return {stimulus, {simulate_spike_train(full_params(separable_truth(cfg)), stimulus, sim)}};
    case ModelKind::network: {
        PopulationData pop = simulate_population(network_truth(cfg), stimulus, sim);
        return {stimulus, pop.trains()};
    }
    }
    throw ConfigError("unknown model");
}

Dataset load_or_simulate(const ExperimentConfig& cfg)
{
    if (cfg.paths.stimulus.empty())
        return simulate_dataset(cfg);
    if (cfg.paths.spikes.empty())
        throw ConfigError("paths.spikes must list at least one spike train file");
    Dataset d{load_stimulus(resolve(cfg, cfg.paths.stimulus)), {}};
    for (const auto& p : cfg.paths.spikes)
        d.trains.push_back(load_spike_train(resolve(cfg, p)));
    if (cfg.model != ModelKind::network && d.trains.size() != 1)
        throw ConfigError("single and separable models take exactly one spike train");
    return d;
}

Design<double> single_design(const ExperimentConfig& cfg, const Dataset& d)
{
    return assemble_design(d.stimulus, d.trains.front(), cfg.lags);
}

SeparableFitOptions separable_options(const ExperimentConfig& cfg)
{
    SeparableFitOptions o;
    o.fit = cfg.fit;
    o.starts = cfg.starts;
    o.seed = cfg.simulation.seed;
    return o;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& out)
{
    const fs::path dir = out_dir.empty() ? resolve(cfg, cfg.paths.output_dir) : fs::path(out_dir);
    fs::create_directories(dir);
    const Dataset d = simulate_dataset(cfg);
    save_stimulus(d.stimulus, dir / "stimulus.txt");

    json truth;
    truth["model"] = to_string(cfg.model);
    switch (cfg.model) {
    case ModelKind::single: truth["params"] = params_to_json(single_truth(cfg)); break;
    case ModelKind::separable: truth["params"] = params_to_json(separable_truth(cfg)); break;
    case ModelKind::network: {
        truth["neurons"] = json::array();
        for (const auto& p : network_truth(cfg))
            truth["neurons"].push_back(params_to_json(p));
        break;
    }
    }
    save_json(truth, dir / "truth.json");

    for (std::size_t i = 0; i < d.trains.size(); ++i) {
        const std::string name = cfg.model == ModelKind::network
                                     ? "spikes_" + std::to_string(i) + ".txt"
                                     : std::string("spikes.txt");
        save_spike_train(d.trains[i], dir / name);
        out << name << ": " << d.trains[i].num_bins() << " bins, " << d.trains[i].num_spikes()
            << " spikes\n";
    }
    out << "wrote " << dir.string() << "\n";
    return kExitSuccess;
}

int cmd_fit(const ExperimentConfig& cfg, const std::string& out_path, std::ostream& out)
{
    const fs::path report = out_path.empty() ? resolve(cfg, cfg.paths.report) : fs::path(out_path);
    const Dataset d = load_or_simulate(cfg);
    bool converged = false;
    switch (cfg.model) {
    case ModelKind::single: {
        const auto r = fit(single_design(cfg, d), cfg.fit);
        save_fit_report(r, cfg, report);
        converged = r.converged;
        out << "log-likelihood " << fixed(r.final_loglik) << " after " << r.iterations
            << " iterations\n";
        break;
    }
    case ModelKind::separable: {
        const auto r = fit_separable(single_design(cfg, d), separable_options(cfg));
        save_fit_report(r, cfg, report);
        converged = r.converged;
        out << "log-likelihood " << fixed(r.final_loglik) << " after " << r.iterations
            << " sweeps\n";
        break;
    }
    case ModelKind::network: {
        const PopulationData pop(d.stimulus, d.trains);
        const auto fits = fit_population(pop, cfg.lags, cfg.fit);
        save_fit_report(fits, cfg, report);
        converged = true;
        for (const auto& f : fits) {
            converged = converged && f.fit && f.fit->converged;
            if (f.fit)
                out << "neuron " << f.neuron << ": log-likelihood " << fixed(f.fit->final_loglik)
                    << " after " << f.fit->iterations << " iterations\n";
            else
                out << "neuron " << f.neuron << ": " << f.error << "\n";
        }
        break;
    }
    }
    out << (converged ? "converged" : "NOT converged") << "; report written to " << report.string()
        << "\n";
    return converged ? kExitSuccess : kExitNotConverged;
}

struct CheckSummary {
    double max_error = 0.0;
    Index coordinates = 0;
    bool unreliable = false;
};

int cmd_check_grad(const ExperimentConfig& cfg, std::ostream& out)
{
    const Dataset d = load_or_simulate(cfg);
    CheckSummary summary;
    switch (cfg.model) {
    case ModelKind::single: {
        const auto c = check_gradient_fd(single_truth(cfg), single_design(cfg, d), kGradientCheckStep);
        summary = {c.max_relative_error, c.analytic.size(), c.any_unreliable};
        break;
    }
    case ModelKind::separable: {
        const Design<double> design = single_design(cfg, d);
        const SeparableParams<double> p = separable_truth(cfg);
        const Eigen::VectorXd analytic = separable_gradients(p, design).flatten();
        const Eigen::VectorXd numeric = central_difference<double>(
            [&](const Eigen::VectorXd& v) {
                return separable_log_likelihood(
                    SeparableParams<double>::unflatten(v, p.s_filter.size(), p.t_filter.size(), p.h.size()),
                    design);
            },
            p.flatten(), kGradientCheckStep);
        for (Index j = 0; j < analytic.size(); ++j)
            summary.max_error = std::max(summary.max_error, relative_error(analytic(j), numeric(j)));
        summary.coordinates = analytic.size();
        summary.unreliable = separable_gradients(p, design).clamped;
        break;
    }
    case ModelKind::network: {
        const PopulationData pop(d.stimulus, d.trains);
        const auto truth = network_truth(cfg);
        if (static_cast<Index>(truth.size()) != pop.num_neurons())
            throw ConfigError("simulation.num_neurons does not match the number of spike trains");
        for (Index i = 0; i < pop.num_neurons(); ++i) {
            const auto c = check_gradient_fd(truth[i].to_glm(), population_design(pop, cfg.lags, i),
                                             kGradientCheckStep);
            summary.max_error = std::max(summary.max_error, c.max_relative_error);
            summary.coordinates += c.analytic.size();
            summary.unreliable = summary.unreliable || c.any_unreliable;
        }
        break;
    }
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3e", summary.max_error);
    out << "max relative error: " << buf << " over " << summary.coordinates << " coordinates\n";
    if (summary.unreliable)
        out << "warning: some coordinates touch clamped bins; their differences are unreliable\n";
    const bool ok = summary.max_error <= kGradientCheckLimit;
    out << (ok ? "gradient check passed" : "gradient check FAILED") << "\n";
    return ok ? kExitSuccess : kExitData;
}

int cmd_recover(const ExperimentConfig& cfg, std::ostream& out)
{
    const Dataset d = simulate_dataset(cfg);
    bool converged = false;
    bool recovered = false;
    switch (cfg.model) {
    case ModelKind::single: {
        const GlmParams<double> truth = single_truth(cfg);
        const auto r = fit(single_design(cfg, d), cfg.fit);
        Eigen::VectorXd a(truth.k.size() + truth.h.size()), b(a.size());
        a << truth.k, truth.h;
        b << r.params.k, r.params.h;
        const double corr = pearson_correlation(a, b);
        out << "spikes: " << d.trains.front().num_spikes() << "\n";
        out << "iterations: " << r.iterations << "\n";
        out << "filter correlation (k, h): " << fixed(corr) << "\n";
        out << "stimulus filter correlation: " << fixed(pearson_correlation(truth.k, r.params.k)) << "\n";
        converged = r.converged;
        recovered = corr >= cfg.recover.min_correlation;
        break;
    }
    case ModelKind::separable: {
        const SeparableParams<double> truth = separable_truth(cfg);
        const auto r = fit_separable(single_design(cfg, d), separable_options(cfg));
        const double err = relative_frobenius_error(r.params.filter(), truth.filter());
        out << "spikes: " << d.trains.front().num_spikes() << "\n";
        out << "sweeps: " << r.iterations << "\n";
        out << "relative filter error: " << fixed(err) << "\n";
        converged = r.converged;
        recovered = err <= cfg.recover.max_filter_error;
        break;
    }
    case ModelKind::network: {
        const auto truth = network_truth(cfg);
        const PopulationData pop(d.stimulus, d.trains);
        const auto fits = fit_population(pop, cfg.lags, cfg.fit);
        converged = true;
        recovered = true;
        for (const auto& f : fits) {
            if (!f.fit) {
                out << "neuron " << f.neuron << ": " << f.error << "\n";
                converged = false;
                continue;
            }
            const double corr = pearson_correlation(truth[f.neuron].to_glm().flatten(),
                                                    f.fit->params.to_glm().flatten());
            out << "neuron " << f.neuron << ": spikes " << pop.trains()[f.neuron].num_spikes()
                << ", filter correlation " << fixed(corr) << "\n";
            converged = converged && f.fit->converged;
            recovered = recovered && corr >= cfg.recover.min_correlation;
        }
        break;
    }
    }
    out << "converged: " << (converged ? "yes" : "no") << "\n";
    out << "recovery " << (recovered ? "passed" : "FAILED") << "\n";
    return converged && recovered ? kExitSuccess : kExitNotConverged;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Maximum-likelihood GLM fitting for spike trains", "spikeglm"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_arg;
    std::string model;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"simulate", "Simulate a stimulus and spike trains from the config's ground truth"},
        {"fit", "Fit the configured model and write a JSON report"},
        {"check-grad", "Compare analytic and finite-difference gradients"},
        {"recover", "Simulate, fit, and report parameter recovery"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "Experiment config (JSON)")->required();
        sub->add_option("--seed", seed, "Override simulation.seed");
        sub->add_option("--out", out_arg, "Output directory (simulate) or report path (fit)");
        sub->add_option("--model", model, "Override model: single, separable or network");
    }

    std::vector<const char*> argv{"spikeglm"};
    for (const auto& a : args)
        argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitSuccess;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << app.help();
        return kExitUsage;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    ExperimentConfig cfg;
    try {
        cfg = load_config(config_path);
        if (seed)
            cfg.simulation.seed = *seed;
        if (!model.empty())
            cfg.model = model_kind_from_string(model);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (command == "simulate")
            return cmd_simulate(cfg, out_arg, out);
        if (command == "fit")
            return cmd_fit(cfg, out_arg, out);
        if (command == "check-grad")
            return cmd_check_grad(cfg, out);
        return cmd_recover(cfg, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
}

}  // namespace spikeglm
