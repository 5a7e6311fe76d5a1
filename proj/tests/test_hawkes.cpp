#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "hawkesdx/hawkes.hpp"
#include "oracles.hpp"

using namespace hawkesdx;

namespace {

HawkesModel univariate(double mu, double alpha, double beta, double T = 0.0) {
    return HawkesModel::make({mu}, Matrix{{alpha}}, Matrix{{beta}}, T);
}

TimedSequence sequence(std::vector<double> t, std::vector<int> k, double T) {
    TimedSequence s;
    s.times = std::move(t);
    s.marks = std::move(k);
    s.horizon = T;
    return s;
}

std::vector<double> flat_gradient(const LikelihoodResult& r) {
    std::vector<double> g = r.grad_mu;
    g.insert(g.end(), r.grad_alpha.flat().begin(), r.grad_alpha.flat().end());
    return g;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

} // namespace

TEST(Intensity, EmptyHistoryIsBaseline) {
    const auto m = HawkesModel::make({0.3, 0.7}, Matrix::square(2, 0.2), Matrix::square(2, 1.0));
    const TimedSequence empty;
    EXPECT_EQ(intensity(m, empty, 0, 5.0), 0.3);
    EXPECT_EQ(intensity(m, empty, 1, 5.0), 0.7);
}

TEST(Intensity, SingleEventHandValue) {
    const auto m = univariate(0.5, 0.2, 1.0);
    const auto h = sequence({1.0}, {0}, 10.0);
    const double expected = 0.5 + 0.2 * std::exp(-1.0);
    EXPECT_NEAR(intensity(m, h, 0, 2.0), expected, 1e-15);
    EXPECT_NEAR(intensity(m, h, 0, 2.0), 0.573576, 5e-7);
    EXPECT_THROW(intensity(m, h, 0, 0.5), Error);
    EXPECT_EQ(intensity(m, h, 0, 1.0), 0.5);  // left limit at the event itself
}

TEST(Intensity, ZeroAlphaIsPoisson) {
    const auto m = HawkesModel::make({0.4, 0.9}, Matrix::square(2), Matrix::square(2, 2.0));
    const auto h = sequence({0.1, 0.5, 0.7}, {0, 1, 0}, 2.0);
    for (double t : {0.8, 1.2, 1.9}) {
        EXPECT_EQ(intensity(m, h, 0, t), 0.4);
        EXPECT_EQ(intensity(m, h, 1, t), 0.9);
    }
}

TEST(Intensity, NeverBelowFloor) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        auto inst = oracle::random_instance(rng, 3, 40, 20.0);
        for (auto& m : inst.model.mu) m = kMuFloor;
        for (std::size_t n = 0; n < inst.seq.size(); ++n) {
            TimedSequence prior = inst.seq;
            prior.times.resize(n);
            prior.marks.resize(n);
            for (std::size_t i = 0; i < 3; ++i) EXPECT_GE(intensity(inst.model, prior, i, inst.seq.times[n]), kMuFloor);
        }
    }
}

TEST(LogLikelihood, HandExample) {
    const auto m = univariate(0.5, 0.2, 1.0, 2.0);
    const auto s = sequence({1.0}, {0}, 2.0);
    const double expected = std::log(0.5) - (1.0 + 0.2 * (1.0 - std::exp(-1.0)));
    const auto r = log_likelihood(m, s);
    EXPECT_NEAR(r.value, expected, 1e-14);
    EXPECT_NEAR(r.value, -1.819571, 5e-7);
}

TEST(LogLikelihood, NoEvents) {
    const auto m = HawkesModel::make({0.2, 0.3}, Matrix::square(2, 0.1), Matrix::square(2, 1.0));
    const auto r = log_likelihood(m, sequence({}, {}, 4.0));
    EXPECT_DOUBLE_EQ(r.value, -(0.2 + 0.3) * 4.0);
    EXPECT_EQ(r.grad_mu, (std::vector<double>{-4.0, -4.0}));
    for (double g : r.grad_alpha.flat()) EXPECT_EQ(g, 0.0);
}

TEST(LogLikelihood, RejectsUnorderedEvents) {
    const auto m = univariate(0.5, 0.2, 1.0);
    EXPECT_THROW(log_likelihood(m, sequence({2.0, 1.0}, {0, 0}, 3.0)), Error);
    EXPECT_THROW(log_likelihood(m, sequence({1.0, 1.0}, {0, 0}, 3.0)), Error);
    EXPECT_THROW(log_likelihood(m, sequence({1.0, 4.0}, {0, 0}, 3.0)), Error);
}

TEST(LogLikelihood, RecursionMatchesNaiveSum) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t K = 1 + trial % 3;
        auto inst = oracle::random_instance(rng, K, 200, 50.0);
        EXPECT_NEAR(log_likelihood(inst.model, inst.seq).value, oracle::naive_log_likelihood(inst.model, inst.seq),
                    1e-9);
    }
}

TEST(LogLikelihood, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t K = 1 + trial % 3;
        auto inst = oracle::random_instance(rng, K, 50, 10.0);
        const auto g = flat_gradient(log_likelihood(inst.model, inst.seq));
        EXPECT_LE(relative_error(g, oracle::finite_difference_gradient(inst.model, inst.seq)), 1e-5);
    }
}

TEST(Compensator, MatchesClosedForm) {
    std::mt19937_64 rng(44);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t K = 1 + trial % 3;
        auto inst = oracle::random_instance(rng, K, 150, 30.0);
        const auto trace = compensator(inst.model, inst.seq);
        for (std::size_t i = 0; i < K; ++i) {
            double closed = inst.model.mu[i] * inst.seq.horizon;
            for (std::size_t m = 0; m < inst.seq.size(); ++m) {
                const auto j = std::size_t(inst.seq.marks[m]);
                closed += inst.model.alpha(i, j) *
                          (1.0 - std::exp(-inst.model.beta(i, j) * (inst.seq.horizon - inst.seq.times[m])));
            }
            EXPECT_NEAR(trace.at_horizon[i], closed, 1e-9);
        }
    }
}

TEST(Fit, PoissonDataRecoversRate) {
    const auto truth = univariate(2.0, 0.0, 1.0);
    const auto data = simulate(truth, 1000.0, 5);
    const auto res = fit(data, Matrix{{1.0}});
    EXPECT_NEAR(res.model.mu[0], 2.0, 0.15);
    EXPECT_LE(res.model.alpha(0, 0), 0.05);
    EXPECT_TRUE(res.report.converged);
    // Poisson MLE oracle.
    EXPECT_NEAR(res.model.mu[0] / (1 - res.model.alpha(0, 0)), double(data.size()) / 1000.0, 0.1);
}

TEST(Fit, AcceptedIterationsNeverDecreaseLikelihood) {
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 5; ++trial) {
        const auto truth = HawkesModel::make({0.3, 0.5}, Matrix{{0.2, 0.1}, {0.3, 0.1}}, Matrix::square(2, 1.5));
        const auto data = simulate(truth, 300.0, std::uint64_t(trial));
        const auto res = fit(data, truth.beta);
        ASSERT_GE(res.report.trace.size(), 2u);
        for (std::size_t k = 1; k < res.report.trace.size(); ++k)
            EXPECT_GE(res.report.trace[k], res.report.trace[k - 1]);
        EXPECT_GE(res.report.log_likelihood, res.report.initial_log_likelihood);
    }
}

TEST(Fit, FittedLikelihoodAtLeastTruth) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto truth =
            HawkesModel::make({0.4, 0.6}, Matrix{{0.3, 0.1}, {0.0, 0.4}}, Matrix::square(2, 1.0), 500.0);
        const auto data = simulate(truth, 500.0, seed);
        const auto res = fit(data, truth.beta);
        EXPECT_GE(res.report.log_likelihood, log_likelihood(truth, data).value - 1e-6);
        EXPECT_TRUE(res.report.converged);
        for (double m : res.model.mu) EXPECT_GE(m, kMuFloor);
        for (double a : res.model.alpha.flat()) EXPECT_GE(a, 0.0);
        EXPECT_EQ(res.model.beta, truth.beta);
    }
}

TEST(Fit, InsufficientEventsExcluded) {
    const auto s = sequence({1.0, 2.0, 3.0}, {0, 0, 0}, 10.0);
    const auto res = fit(s, Matrix{{1.0}});
    ASSERT_TRUE(res.report.excluded_reason.has_value());
    EXPECT_FALSE(res.report.converged);
}

TEST(Fit, InitialPoint) {
    const auto truth = univariate(1.0, 0.3, 1.0);
    const auto data = simulate(truth, 100.0, 1);
    FitOptions opts;
    opts.max_iterations = 0;
    const auto res = fit(data, Matrix{{1.0}}, opts);
    EXPECT_DOUBLE_EQ(res.model.mu[0], 0.5 * double(data.size()) / 100.0);
    EXPECT_DOUBLE_EQ(res.model.alpha(0, 0), 0.1);
}

TEST(Simulate, SameSeedSameSequence) {
    const auto m = HawkesModel::make({0.5, 0.2}, Matrix{{0.3, 0.2}, {0.1, 0.4}}, Matrix{{1.0, 2.0}, {3.0, 1.0}});
    const auto a = simulate(m, 200.0, 99), b = simulate(m, 200.0, 99), c = simulate(m, 200.0, 100);
    EXPECT_EQ(a.times, b.times);
    EXPECT_EQ(a.marks, b.marks);
    EXPECT_NE(a.times, c.times);
    for (std::size_t n = 1; n < a.size(); ++n) EXPECT_GT(a.times[n], a.times[n - 1]);
    if (a.size()) {
        EXPECT_LT(a.times.back(), 200.0);
    }
}

TEST(Simulate, PoissonCount) {
    const auto m = univariate(2.0, 0.0, 1.0);
    double total = 0.0;
    const int runs = 200;
    for (int r = 0; r < runs; ++r) total += double(simulate(m, 100.0, std::uint64_t(r)).size());
    const double mean = total / runs;
    // Poisson(200): standard error of the mean sqrt(200 / runs).
    EXPECT_NEAR(mean, 200.0, 3.0 * std::sqrt(200.0 / runs));
}

TEST(Simulate, SupercriticalIsCapped) {
    const auto m = univariate(1.0, 1.5, 1.0);
    const auto s = simulate(m, 1000.0, 1, 5000);
    EXPECT_EQ(s.size(), 5000u);
}

TEST(Diagnostics, EmptyTopicInsufficient) {
    const auto m = HawkesModel::make({1.0, 1.0}, Matrix::square(2), Matrix::square(2, 1.0));
    const auto d = residual_diagnostics(m, sequence({0.5, 1.0, 1.5}, {0, 0, 0}, 2.0));
    EXPECT_TRUE(d[0].insufficient);
    EXPECT_TRUE(d[1].insufficient);
    EXPECT_EQ(d[1].events, 0u);
}

TEST(Diagnostics, TrueModelUsuallyPasses) {
    const auto m = HawkesModel::make({0.5, 0.5}, Matrix{{0.3, 0.2}, {0.1, 0.4}}, Matrix::square(2, 1.0));
    int pass = 0, total = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto data = simulate(m, 300.0, seed);
        for (const auto& d : residual_diagnostics(m, data)) {
            ASSERT_FALSE(d.insufficient);
            pass += d.pass;
            ++total;
        }
    }
    EXPECT_GE(double(pass) / total, 0.85);
}

TEST(Diagnostics, KsStatisticKnownSample) {
    // Single point at the median of Exp(1): D = 1/2.
    EXPECT_NEAR(ks_exponential({std::log(2.0)}), 0.5, 1e-15);
}

TEST(SpectralRadius, KnownMatrices) {
    EXPECT_NEAR(spectral_radius_nonnegative(Matrix{{0.3, 0.1}, {0.0, 0.4}}), 0.4, 1e-12);
    EXPECT_NEAR(spectral_radius_nonnegative(Matrix{{0.0, 1.0}, {1.0, 0.0}}), 1.0, 1e-12);
    EXPECT_NEAR(spectral_radius_nonnegative(Matrix{{0.0, 0.5}, {0.0, 0.0}}), 0.0, 1e-12);
    EXPECT_NEAR(spectral_radius_nonnegative(Matrix{{1.0, 2.0}, {3.0, 4.0}}), (5.0 + std::sqrt(33.0)) / 2.0, 1e-10);
}
