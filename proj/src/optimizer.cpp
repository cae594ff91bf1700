#include "spikeglm/optimizer.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace spikeglm {

namespace {

constexpr int kMaxBacktracks = 20;
constexpr int kMaxRidgeEscalations = 24;

struct Solve {
    Eigen::VectorXd direction;
    double ridge = 0.0;
};

// Ascent direction from (-H + ridge I) d = g, escalating the ridge until the
// factorization succeeds and d is a finite ascent direction.
Solve damped_newton_direction(const Eigen::MatrixXd& neg_hessian, const Eigen::VectorXd& g,
                              double damping)
{
    const Index n = g.size();
    Solve out;
    Eigen::LLT<Eigen::MatrixXd> llt(neg_hessian);
    for (int attempt = 0;; ++attempt) {
        if (llt.info() == Eigen::Success) {
            out.direction = llt.solve(g);
            if (out.direction.allFinite() && g.dot(out.direction) > 0.0)
                return out;
        }
        if (attempt == kMaxRidgeEscalations)
            break;
        out.ridge = out.ridge == 0.0 ? damping : out.ridge * 10.0;
        llt.compute(neg_hessian + out.ridge * Eigen::MatrixXd::Identity(n, n));
    }
    // Fall back to steepest ascent; backtracking decides whether it helps.
    out.direction = g;
    return out;
}

}  // namespace

namespace detail {

double loglik_increment(const Design<double>& design, const GlmParams<double>& params,
                        const Eigen::VectorXd& direction, double alpha)
{
    const Index nk = params.k.size();
    const Index nh = params.h.size();
    const Eigen::VectorXd eta = linear_predictor(params, design);
    Eigen::VectorXd change = design.stimulus_lags * (alpha * direction.head(nk))
                             + design.history_lags * (alpha * direction.segment(nk, nh));
    change.array() += alpha * direction(nk + nh);

    double total = 0.0;
    for (Index r = 0; r < design.rows(); ++r) {
        bool old_clamped = false, new_clamped = false;
        const double old_eta = clamp_predictor(eta(r), old_clamped);
        const double new_eta = clamp_predictor(eta(r) + change(r), new_clamped);
        const double d = (old_clamped || new_clamped) ? new_eta - old_eta : change(r);
        total += design.observed(r) * d - design.delta * std::exp(old_eta) * std::expm1(d);
    }
    return total;
}

}  // namespace detail

GlmParams<double> initialize(const Design<double>& design)
{
    detail::require_rows(design);
    const long long n_sp = design.num_spikes();
    if (n_sp == 0)
        throw InsufficientData("no spikes in the fitted range; the bias estimate diverges");
    GlmParams<double> p
        = GlmParams<double>::zeros(design.stimulus_lags.cols(), design.history_lags.cols());
    p.mu = std::log(static_cast<double>(n_sp) / (design.delta * static_cast<double>(design.rows())));
    return p;
}

std::pair<GlmParams<double>, StepDiagnostics> newton_step(const GlmParams<double>& params,
                                                          const Design<double>& design,
                                                          const FitOptions& options)
{
    StepDiagnostics diag;
    const Gradient<double> grad = gradient(params, design);
    const Eigen::VectorXd g = grad.flatten();
    diag.grad_norm = g.cwiseAbs().maxCoeff();
    diag.clamped = grad.clamped;
    if (diag.grad_norm < options.grad_tol)
        return {params, diag};

    const Solve solve = damped_newton_direction(-hessian(params, design), g, options.damping);
    diag.ridge = solve.ridge;

    const Index nk = params.k.size();
    const Index nh = params.h.size();
    const Eigen::VectorXd theta = params.flatten();
    double alpha = 1.0;
    for (int b = 0; b <= kMaxBacktracks; ++b, alpha *= 0.5) {
        const double inc = detail::loglik_increment(design, params, solve.direction, alpha);
        if (std::isfinite(inc) && inc > 0.0) {
            diag.alpha = alpha;
            diag.backtracks = b;
            diag.loglik_increment = inc;
            diag.step_norm = alpha * solve.direction.cwiseAbs().maxCoeff();
            return {GlmParams<double>::unflatten(theta + alpha * solve.direction, nk, nh), diag};
        }
    }
    diag.backtracks = kMaxBacktracks;
    std::ostringstream msg;
    msg << "no ascent after " << kMaxBacktracks << " backtracking halvings (gradient max-norm "
        << diag.grad_norm << ", ridge " << diag.ridge << ")";
    throw StalledStep(msg.str(), diag);
}

FitResult<GlmParams<double>> fit(const Design<double>& design, const FitOptions& options,
                                 const std::optional<GlmParams<double>>& start)
{
    FitResult<GlmParams<double>> result;
    result.params = start ? *start : initialize(design);
    if (start && design.num_spikes() == 0)
        throw InsufficientData("no spikes in the fitted range; the bias estimate diverges");
    detail::check_dims(result.params, design.stimulus_lags.cols(), design.history_lags.cols());

    double loglik = log_likelihood(result.params, design);
    Index clamp_events = 0;
    for (;;) {
        const Gradient<double> g = gradient(result.params, design);
        const double gnorm = g.max_norm();
        if (g.clamped)
            ++clamp_events;
        result.trace.push_back({loglik, gnorm});
        if (gnorm < options.grad_tol) {
            result.converged = true;
            break;
        }
        if (result.iterations >= options.max_iters) {
            result.warnings.push_back("iteration limit " + std::to_string(options.max_iters)
                                      + " reached before the gradient tolerance");
            break;
        }

        std::pair<GlmParams<double>, StepDiagnostics> step;
        try {
            step = newton_step(result.params, design, options);
        } catch (const StalledStep& e) {
            result.warnings.push_back(std::string("stalled: ") + e.what());
            break;
        }
        const StepDiagnostics& d = step.second;
        if (d.ridge > 0.0) {
            std::ostringstream msg;
            msg << "iteration " << result.iterations << ": ridge " << d.ridge
                << " added to factor the negative Hessian";
            result.warnings.push_back(msg.str());
        }
        result.params = std::move(step.first);
        loglik += d.loglik_increment;
        ++result.iterations;

        if (d.step_norm < options.step_tol) {
            const double final_norm = gradient(result.params, design).max_norm();
            result.trace.push_back({loglik, final_norm});
            result.converged = final_norm < options.grad_tol;
            if (!result.converged)
                result.warnings.push_back("step size fell below step_tol with gradient max-norm "
                                          + std::to_string(final_norm));
            break;
        }
    }
    if (clamp_events > 0)
        result.warnings.push_back("linear predictor clamped at " + std::to_string(clamp_events)
                                  + " iterate(s)");
    result.final_loglik = log_likelihood(result.params, design);
    return result;
}

}  // namespace spikeglm
