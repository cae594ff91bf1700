#include <gtest/gtest.h>

#include "oracles.hpp"

#include "spikeglm/calculus.hpp"
#include "spikeglm/metrics.hpp"
#include "spikeglm/optimizer.hpp"
#include "spikeglm/separable.hpp"
#include "spikeglm/simulator.hpp"

#include <Eigen/Eigenvalues>

using namespace spikeglm;

namespace {

SeparableParams<double> random_separable(std::mt19937_64& rng, Index ns, Index nt, Index nh, double mu)
{
    std::normal_distribution<double> normal;
    SeparableParams<double> p{Eigen::VectorXd(ns), Eigen::VectorXd(nt), Eigen::VectorXd(nh), mu};
    for (Index i = 0; i < ns; ++i)
        p.s_filter[i] = 0.5 * normal(rng);
    for (Index i = 0; i < nt; ++i)
        p.t_filter[i] = 0.5 * normal(rng);
    for (Index i = 0; i < nh; ++i)
        p.h[i] = 0.2 * normal(rng);
    return p;
}

double sep_loglik_flat(const Eigen::VectorXd& v, const SeparableParams<double>& shape, const Design<double>& d)
{
    return separable_log_likelihood(
        SeparableParams<double>::unflatten(v, shape.s_filter.size(), shape.t_filter.size(), shape.h.size()), d);
}

}  // namespace

TEST(SeparableIntensity, SelectorPicksEntry)
{
    SpatioTemporalRow<double> row{Eigen::MatrixXd(2, 1), Eigen::VectorXd::Zero(1), 0, 0};
    row.X_block << 3, 7;
    SeparableParams<double> p{Eigen::Vector2d(1, 0), Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1), 0.0};
    EXPECT_NEAR(separable_intensity(p, row).rate, std::exp(3.0), 1e-12);
}

TEST(SeparableIntensity, ScaleCancels)
{
    std::mt19937_64 rng(71);
    const auto inst = oracle::random_instance(rng, 100, 5, 3, 4);
    auto p = random_separable(rng, 4, 5, 3, 3.0);
    auto q = p;
    q.s_filter *= 2.0;
    q.t_filter /= 2.0;
    for (Index r = 0; r < inst.design.rows(); ++r) {
        const auto row = spatiotemporal_row(inst.design, r);
        EXPECT_EQ(separable_intensity(p, row).rate, separable_intensity(q, row).rate);
    }
}

TEST(SeparableIntensity, MatchesFullModel)
{
    std::mt19937_64 rng(72);
    for (int trial = 0; trial < 10; ++trial) {
        const auto inst = oracle::random_instance(rng, 200, 6, 4, 3);
        const auto p = random_separable(rng, 3, 6, 4, 3.0);
        const auto full = full_params(p);
        for (Index r = 0; r < inst.design.rows(); r += 11) {
            const double a = separable_intensity(p, spatiotemporal_row(inst.design, r)).rate;
            const double b = oracle::naive_rate(full, inst.design, r);
            EXPECT_NEAR(a, b, 1e-12 * b);
        }
        EXPECT_NEAR(separable_log_likelihood(p, inst.design), log_likelihood(full, inst.design), 1e-12 * 1e3);
    }
}

TEST(SeparableIntensity, DimensionMismatch)
{
    SpatioTemporalRow<double> row{Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(1), 0, 0};
    SeparableParams<double> p{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(1), 0.0};
    EXPECT_THROW(separable_intensity(p, row), DimensionMismatch);
}

TEST(SeparableGradients, ZeroTemporalFilterKillsSpatialGradient)
{
    std::mt19937_64 rng(73);
    const auto inst = oracle::random_instance(rng, 300, 4, 3, 3);
    auto p = random_separable(rng, 3, 4, 3, 3.0);
    p.t_filter.setZero();
    EXPECT_TRUE(separable_gradients(p, inst.design).d_s.isZero(0));
}

TEST(SeparableGradients, MatchFiniteDifferences)
{
    std::mt19937_64 rng(74);
    for (int trial = 0; trial < 10; ++trial) {
        const auto inst = oracle::random_instance(rng, 1500, 5, 4, 3);
        const auto p = random_separable(rng, 3, 5, 4, 3.0);
        const Eigen::VectorXd theta = p.flatten();
        const Eigen::VectorXd fd = oracle::fd_gradient(
            [&](const Eigen::VectorXd& v) { return sep_loglik_flat(v, p, inst.design); }, theta, 1e-5);
        EXPECT_LT(oracle::max_relative_error(separable_gradients(p, inst.design).flatten(), fd), 1e-6);
    }
}

TEST(SeparableGradients, ChainRuleThroughFullGradient)
{
    std::mt19937_64 rng(75);
    for (int trial = 0; trial < 10; ++trial) {
        const auto inst = oracle::random_instance(rng, 800, 6, 3, 4);
        const auto p = random_separable(rng, 4, 6, 3, 3.0);
        const auto g_full = gradient(full_params(p), inst.design);
        const auto g = separable_gradients(p, inst.design);
        for (Index i = 0; i < 4; ++i) {
            double expected = 0.0;
            for (Index l = 0; l < 6; ++l)
                expected += g_full.d_k[i * 6 + l] * p.t_filter[l];
            EXPECT_NEAR(g.d_s[i], expected, 1e-10 * std::max(1.0, std::abs(expected)));
        }
        EXPECT_NEAR(g.d_mu, g_full.d_mu, 1e-10 * std::max(1.0, std::abs(g.d_mu)));
    }
}

TEST(CrossHessian, OriginWithoutSpikes)
{
    std::mt19937_64 rng(76);
    const auto inst = oracle::random_instance(rng, 300, 4, 3, 3);
    const auto d = assemble_design(inst.stimulus, SpikeTrain(Eigen::VectorXi::Zero(300), 0.001), inst.lags);
    SeparableParams<double> p{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(3), 1.5};
    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(3, 4);
    for (Index r = 0; r < d.rows(); ++r)
        expected -= d.delta * std::exp(1.5) * d.stimulus_block(r);
    EXPECT_LT((cross_hessian_st(p, d) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CrossHessian, MatchesFiniteDifferences)
{
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const auto inst = oracle::random_instance(rng, 1500, 5, 3, 4, 0.1);
        const auto p = random_separable(rng, 4, 5, 3, 4.0);
        const Eigen::MatrixXd fd = oracle::fd_jacobian(
            [&](const Eigen::VectorXd& t) {
                auto q = p;
                q.t_filter = t;
                return Eigen::VectorXd(separable_gradients(q, inst.design).d_s);
            },
            p.t_filter, 1e-5);
        EXPECT_LT(oracle::max_relative_error(cross_hessian_st(p, inst.design), fd), 1e-5);
        // The joint Hessian agrees with differentiated gradients as well.
        const Eigen::MatrixXd fd_full = oracle::fd_jacobian(
            [&](const Eigen::VectorXd& v) {
                return Eigen::VectorXd(
                    separable_gradients(SeparableParams<double>::unflatten(v, 4, 5, 3), inst.design).flatten());
            },
            p.flatten(), 1e-5);
        EXPECT_LT(oracle::max_relative_error(separable_hessian(p, inst.design), fd_full), 1e-5);
    }
}

// At s = t = 0 the diagonal s and t blocks vanish while the cross block does
// not, so the joint Hessian has a positive eigenvalue.
TEST(CrossHessian, NonConcavityWitness)
{
    std::mt19937_64 rng(78);
    const auto inst = oracle::random_instance(rng, 500, 3, 2, 2, 0.1);
    SeparableParams<double> p{Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(2), 4.0};
    const Eigen::MatrixXd h = separable_hessian(p, inst.design);
    EXPECT_EQ(h, h.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h, Eigen::EigenvaluesOnly);
    EXPECT_GT(eig.eigenvalues().maxCoeff(), 1e-6);
}

TEST(Canonicalize, WorkedCase)
{
    const auto [s, t] = canonicalize<double>(Eigen::Vector2d(0, -2), Eigen::VectorXd::Constant(1, 3.0));
    EXPECT_EQ(s, Eigen::Vector2d(0, 1));
    EXPECT_EQ(t[0], -6.0);
}

TEST(Canonicalize, IdempotentAndPreservesOuterProduct)
{
    std::mt19937_64 rng(79);
    for (int trial = 0; trial < 50; ++trial) {
        const auto p = random_separable(rng, 5, 7, 1, 0.0);
        const auto c = canonicalize(p);
        EXPECT_NEAR(c.s_filter.norm(), 1.0, 1e-12);
        EXPECT_GT(c.s_filter[0], 0.0);
        EXPECT_LT((c.filter() - p.filter()).cwiseAbs().maxCoeff(), 1e-14 * std::max(1.0, p.filter().cwiseAbs().maxCoeff()));
        const auto again = canonicalize(c);
        EXPECT_EQ(again.s_filter, c.s_filter);
        EXPECT_EQ(again.t_filter, c.t_filter);
    }
}

TEST(Canonicalize, ZeroSpatialFilter)
{
    EXPECT_THROW(canonicalize<double>(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Ones(2)), DegenerateFilter);
}

TEST(FitSeparable, SingleLocationMatchesFullFit)
{
    std::mt19937_64 rng(80);
    for (int trial = 0; trial < 3; ++trial) {
        const auto inst = oracle::random_instance(rng, 6000, 6, 4, 1);
        const auto full = fit(inst.design);
        const auto sep = fit_separable(inst.design);
        ASSERT_TRUE(full.converged);
        ASSERT_TRUE(sep.converged);
        EXPECT_EQ(sep.params.s_filter.size(), 1);
        EXPECT_EQ(sep.params.s_filter[0], 1.0);
        EXPECT_LT((sep.params.t_filter - full.params.k).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_LT((sep.params.h - full.params.h).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_NEAR(sep.params.mu, full.params.mu, 1e-6);
    }
}

TEST(FitSeparable, RecoversRankOneFilter)
{
    const Index ns = 4, nt = 6;
    SimConfig cfg;
    cfg.num_bins = 40000;
    cfg.seed = 5;
    const Stimulus stim = generate_stimulus(cfg, ns);
    const Eigen::VectorXd s = reference_spatial_filter(ns);
    const Eigen::VectorXd t = reference_stimulus_filter(nt);
    SeparableParams<double> truth{s, t, reference_history_filter(3), 0.0};
    auto full = full_params(truth);
    full.mu = reference_bias(40.0, full.k, cfg.stimulus_kind);
    const SpikeTrain spikes = simulate_spike_train(full, stim, cfg);
    const auto design = assemble_design(stim, spikes, {nt, 3});
    const auto result = fit_separable(design);
    EXPECT_TRUE(result.converged);
    EXPECT_LT(relative_frobenius_error(result.params.filter(), truth.filter()), 0.2);
    EXPECT_NEAR(result.params.s_filter.norm(), 1.0, 1e-12);
}

TEST(FitSeparable, BlockStepsNeverDecreaseLikelihood)
{
    std::mt19937_64 rng(81);
    const auto inst = oracle::random_instance(rng, 4000, 5, 3, 3, 0.05);
    const auto start = initialize_separable(inst.design);
    const auto result = fit_separable_from(inst.design, start, FitOptions{.max_iters = 200});
    for (std::size_t i = 1; i < result.trace.size(); ++i)
        EXPECT_GE(result.trace[i].loglik, result.trace[i - 1].loglik);
    EXPECT_GE(result.final_loglik, separable_log_likelihood(start, inst.design));
}

TEST(FitSeparable, FrozenBlockSubproblemIsConcave)
{
    std::mt19937_64 rng(82);
    const auto inst = oracle::random_instance(rng, 1000, 5, 3, 4);
    const auto p = random_separable(rng, 4, 5, 3, 3.0);
    const Eigen::MatrixXd h = separable_hessian(p, inst.design);
    // Drop the t rows and columns: what remains is the (s, h, mu) block.
    std::vector<Index> keep;
    for (Index i = 0; i < h.rows(); ++i)
        if (i < 4 || i >= 9)
            keep.push_back(i);
    Eigen::MatrixXd sub(keep.size(), keep.size());
    for (std::size_t a = 0; a < keep.size(); ++a)
        for (std::size_t b = 0; b < keep.size(); ++b)
            sub(a, b) = h(keep[a], keep[b]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sub, Eigen::EigenvaluesOnly);
    EXPECT_LE(eig.eigenvalues().maxCoeff(), 1e-8 * eig.eigenvalues().cwiseAbs().maxCoeff());
}

TEST(FitSeparable, Deterministic)
{
    std::mt19937_64 rng(83);
    const auto inst = oracle::random_instance(rng, 3000, 4, 3, 3);
    const auto a = fit_separable(inst.design);
    const auto b = fit_separable(inst.design);
    EXPECT_EQ(a.params.flatten(), b.params.flatten());
    EXPECT_EQ(a.final_loglik, b.final_loglik);
}

TEST(FitSeparable, InsufficientData)
{
    std::mt19937_64 rng(84);
    const auto inst = oracle::random_instance(rng, 300, 4, 3, 3);
    const auto d = assemble_design(inst.stimulus, SpikeTrain(Eigen::VectorXi::Zero(300), 0.001), inst.lags);
    EXPECT_THROW(fit_separable(d), InsufficientData);
}
