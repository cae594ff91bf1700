#pragma once

// Damped Newton-Raphson ascent to the maximum-likelihood estimate.

#include "spikeglm/calculus.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace spikeglm {

struct FitOptions {
    int max_iters = 100;
    double grad_tol = 1e-8;   ///< max-norm of the gradient
    double step_tol = 1e-10;  ///< max-norm of the accepted parameter change
    double damping = 1e-6;    ///< first ridge tried when -H cannot be factored; x10 per retry
};

struct IterationRecord {
    double loglik = 0.0;
    double grad_norm = 0.0;
};

/// Outcome of an iterative fit. Trace log-likelihoods after the first entry
/// are accumulated from directly evaluated increments, so they are monotone
/// even where the increments fall below the resolution of the total.
template <typename Params>
struct FitResult {
    Params params;
    double final_loglik = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<IterationRecord> trace;
    std::vector<std::string> warnings;
};

struct StepDiagnostics {
    double alpha = 0.0;             ///< accepted step fraction, 0 when already optimal
    double ridge = 0.0;             ///< ridge added to -H, 0 when it factored cleanly
    int backtracks = 0;
    double grad_norm = 0.0;         ///< gradient max-norm at the input point
    double step_norm = 0.0;         ///< max-norm of the accepted change
    double loglik_increment = 0.0;  ///< L(new) - L(old), evaluated directly
    bool clamped = false;
};

/// No ascent direction produced an increase after exhausting backtracking.
class StalledStep : public Error {
public:
    StalledStep(const std::string& what, StepDiagnostics diagnostics)
        : Error(what), diagnostics_(diagnostics)
    {
    }
    const StepDiagnostics& diagnostics() const { return diagnostics_; }

private:
    StepDiagnostics diagnostics_;
};

/// k = 0, h = 0, mu = log(n_sp / (delta * N_rows)).
GlmParams<double> initialize(const Design<double>& design);

/// One damped Newton step: solves (-H + ridge I) step = g, then backtracks
/// alpha over 1, 1/2, ..., 2^-20 until the log-likelihood strictly increases.
std::pair<GlmParams<double>, StepDiagnostics> newton_step(const GlmParams<double>& params,
                                                          const Design<double>& design,
                                                          const FitOptions& options = {});

FitResult<GlmParams<double>> fit(const Design<double>& design, const FitOptions& options = {},
                                 const std::optional<GlmParams<double>>& start = std::nullopt);

namespace detail {

/// L(params + alpha * direction) - L(params) computed from the predictor
/// change rather than as a difference of totals.
double loglik_increment(const Design<double>& design, const GlmParams<double>& params,
                        const Eigen::VectorXd& direction, double alpha);

}  // namespace detail

}  // namespace spikeglm
