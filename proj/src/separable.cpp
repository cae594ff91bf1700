#include "spikeglm/separable.hpp"

#include "spikeglm/random.hpp"

#include <sstream>

namespace spikeglm {

namespace {

// Design whose stimulus regressors are replaced by `regressors`; history,
// counts and bin width are shared with the source design.
Design<double> block_design(const Design<double>& source, Eigen::MatrixXd regressors)
{
    Design<double> d;
    d.stimulus_lags = std::move(regressors);
    d.history_lags = source.history_lags;
    d.observed = source.observed;
    d.bin_index = source.bin_index;
    d.num_locations = 1;
    d.tau_k = d.stimulus_lags.cols();
    d.tau_h = source.tau_h;
    d.delta = source.delta;
    return d;
}

// Outcome of one Newton step on a frozen-block subproblem.
struct BlockStep {
    Eigen::VectorXd filter;
    Eigen::VectorXd h;
    double mu = 0.0;
    double increment = 0.0;
    double step_norm = 0.0;
    double ridge = 0.0;
    bool stalled = false;
};

BlockStep block_newton_step(Design<double>& block, const Eigen::VectorXd& filter,
                            const SeparableParams<double>& p, const FitOptions& options)
{
    const GlmParams<double> sub{filter, p.h, p.mu};
    BlockStep out{filter, p.h, p.mu};
    try {
        auto [next, diag] = newton_step(sub, block, options);
        out.filter = std::move(next.k);
        out.h = std::move(next.h);
        out.mu = next.mu;
        out.increment = diag.loglik_increment;
        out.step_norm = diag.step_norm;
        out.ridge = diag.ridge;
    } catch (const StalledStep&) {
        out.stalled = true;
    }
    return out;
}

}  // namespace

SeparableParams<double> initialize_separable(const Design<double>& design,
                                             const SeparableFitOptions& options)
{
    const GlmParams<double> bias = initialize(design);
    const Index ns = design.num_locations;
    const Index nt = design.tau_k;

    const Eigen::VectorXd w = design.observed.cast<double>();
    const Eigen::VectorXd triggered = design.stimulus_lags.transpose() * w / w.sum();
    const Eigen::VectorXd overall = design.stimulus_lags.colwise().mean().transpose();
    Eigen::MatrixXd sta(ns, nt);
    for (Index i = 0; i < ns; ++i)
        sta.row(i) = (triggered - overall).segment(i * nt, nt).transpose();

    Eigen::VectorXd v = Eigen::VectorXd::Constant(nt, 1.0 / std::sqrt(static_cast<double>(nt)));
    Eigen::VectorXd u = Eigen::VectorXd::Zero(ns);
    double sigma = 0.0;
    for (int it = 0; it < options.power_iters; ++it) {
        u = sta * v;
        const double un = u.norm();
        if (!(un > 0.0))
            break;
        u /= un;
        Eigen::VectorXd next = sta.transpose() * u;
        sigma = next.norm();
        next /= sigma;
        const double change = (next - v).cwiseAbs().maxCoeff();
        v = std::move(next);
        if (change < options.power_tol)
            break;
    }

    SeparableParams<double> p;
    if (sigma > 0.0 && u.allFinite() && v.allFinite()) {
        p.s_filter = u;
        p.t_filter = sigma * v;
    } else {
        // Flat spike-triggered average: any nonzero start leaves the s = t = 0 saddle.
        p.s_filter = Eigen::VectorXd::Constant(ns, 1.0 / std::sqrt(static_cast<double>(ns)));
        p.t_filter = Eigen::VectorXd::Constant(nt, 1e-3);
    }
    p.h = bias.h;
    p.mu = bias.mu;
    return p;
}

FitResult<SeparableParams<double>> fit_separable_from(const Design<double>& design,
                                                      const SeparableParams<double>& start,
                                                      const FitOptions& options)
{
    detail::require_rows(design);
    if (design.num_spikes() == 0)
        throw InsufficientData("no spikes in the fitted range; the bias estimate diverges");
    detail::check_separable_dims(start, design);

    FitResult<SeparableParams<double>> result;
    result.params = start;
    SeparableParams<double>& p = result.params;

    Design<double> spatial = block_design(design, detail::spatial_regressors(design, p.t_filter));
    Design<double> temporal = block_design(design, detail::temporal_regressors(design, p.s_filter));

    double loglik = separable_log_likelihood(p, design);
    for (;;) {
        const SeparableGradient<double> g = separable_gradients(p, design);
        const double gnorm = g.max_norm();
        result.trace.push_back({loglik, gnorm});
        if (gnorm < options.grad_tol) {
            result.converged = true;
            break;
        }
        if (result.iterations >= options.max_iters) {
            result.warnings.push_back("sweep limit " + std::to_string(options.max_iters)
                                      + " reached before the gradient tolerance");
            break;
        }

        // s-block with t frozen.
        spatial.stimulus_lags = detail::spatial_regressors(design, p.t_filter);
        BlockStep bs = block_newton_step(spatial, p.s_filter, p, options);
        p.s_filter = std::move(bs.filter);
        p.h = std::move(bs.h);
        p.mu = bs.mu;

        // t-block with s frozen.
        temporal.stimulus_lags = detail::temporal_regressors(design, p.s_filter);
        BlockStep bt = block_newton_step(temporal, p.t_filter, p, options);
        p.t_filter = std::move(bt.filter);
        p.h = std::move(bt.h);
        p.mu = bt.mu;

        loglik += bs.increment + bt.increment;
        ++result.iterations;
        if (bs.ridge > 0.0 || bt.ridge > 0.0) {
            std::ostringstream msg;
            msg << "sweep " << result.iterations << ": ridge added to a block Hessian";
            result.warnings.push_back(msg.str());
        }
        if (bs.stalled && bt.stalled) {
            result.warnings.push_back("stalled: neither block found an ascent step at sweep "
                                      + std::to_string(result.iterations));
            result.trace.push_back({loglik, separable_gradients(p, design).max_norm()});
            break;
        }
        if (std::max(bs.step_norm, bt.step_norm) < options.step_tol) {
            const double final_norm = separable_gradients(p, design).max_norm();
            result.trace.push_back({loglik, final_norm});
            result.converged = final_norm < options.grad_tol;
            if (!result.converged)
                result.warnings.push_back("step size fell below step_tol with gradient max-norm "
                                          + std::to_string(final_norm));
            break;
        }
    }
    if (!result.converged && result.warnings.empty())
        result.warnings.push_back("did not converge");
    result.final_loglik = separable_log_likelihood(p, design);
    return result;
}

FitResult<SeparableParams<double>> fit_separable(const Design<double>& design,
                                                 const SeparableFitOptions& options)
{
    if (options.starts < 1)
        throw InvalidData("separable fit needs at least one start");
    const SeparableParams<double> base = initialize_separable(design, options);

    RandomStream rng(options.seed, kFitStartStream);
    std::optional<FitResult<SeparableParams<double>>> best;
    for (int start = 0; start < options.starts; ++start) {
        SeparableParams<double> init = base;
        if (start > 0) {
            const double s_scale = options.perturbation * base.s_filter.norm();
            const double t_scale = options.perturbation * base.t_filter.norm();
            for (Index i = 0; i < init.s_filter.size(); ++i)
                init.s_filter(i) += s_scale * rng.normal();
            for (Index l = 0; l < init.t_filter.size(); ++l)
                init.t_filter(l) += t_scale * rng.normal();
        }
        FitResult<SeparableParams<double>> r = fit_separable_from(design, init, options.fit);
        if (!best || r.final_loglik > best->final_loglik) {
            best = std::move(r);
        }
    }
    best->params = canonicalize(best->params);
    return std::move(*best);
}

}  // namespace spikeglm
