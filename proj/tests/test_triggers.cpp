#include "etl/etse.hpp"
#include "etl/harness/config.hpp"
#include "etl/stopping.hpp"
#include "etl/triggers.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using etl::TriggerKind;

TEST(Kappa, ReferenceValues)
{
    EXPECT_NEAR(etl::kappa_exact_mean(0.05, 300, 100.0), 7.8410, 1e-3);
    EXPECT_NEAR(etl::kappa_approx_mean(0.05, 300, 100000, 100.0), 7.8528, 1e-3);
    EXPECT_NEAR(etl::kappa_exact_cdf(0.05, 300), 0.078410, 1e-5);
    EXPECT_NEAR(etl::kappa_exact_cdf(0.05, 10000), 0.013581, 1e-5);
    EXPECT_NEAR(etl::kappa_ks(0.05, 10000, 10000), 0.019206, 1e-5);
    EXPECT_NEAR(etl::kappa_ks(0.05, 5000, 5000), 0.027162, 1e-5);
}

TEST(Kappa, DomainErrors)
{
    EXPECT_THROW(etl::kappa_exact_mean(2.0, 300, 100.0), std::domain_error);
    EXPECT_THROW(etl::kappa_exact_mean(0.0, 300, 100.0), std::domain_error);
    EXPECT_THROW(etl::kappa_exact_mean(0.05, 0, 100.0), std::domain_error);
    EXPECT_THROW(etl::kappa_exact_mean(0.05, 10, 0.0), std::domain_error);
    EXPECT_THROW(etl::kappa_approx_mean(0.05, 10, 0, 100.0), std::domain_error);
    EXPECT_THROW(etl::kappa_exact_cdf(1.0, 10), std::domain_error);
    EXPECT_THROW(etl::kappa_ks(0.05, 0, 10), std::domain_error);
}

TEST(Kappa, AlphaNearOneLimit)
{
    const double limit = 100.0 * std::sqrt(std::log(2.0) / 600.0);
    EXPECT_NEAR(etl::kappa_exact_mean(1.0 - 1e-12, 300, 100.0), limit, 1e-9);
}

TEST(Kappa, QuadruplingNHalvesKappa)
{
    for (std::size_t n : {1U, 7U, 300U, 10000U}) {
        EXPECT_NEAR(etl::kappa_exact_mean(0.05, 4 * n, 100.0), 0.5 * etl::kappa_exact_mean(0.05, n, 100.0), 1e-12);
        EXPECT_NEAR(etl::kappa_exact_cdf(0.05, 4 * n), 0.5 * etl::kappa_exact_cdf(0.05, n), 1e-12);
    }
}

TEST(Kappa, ApproxConvergesToExactForLargeM)
{
    EXPECT_NEAR(etl::kappa_approx_mean(0.05, 300, 1000000000, 100.0), etl::kappa_exact_mean(0.05, 300, 100.0), 1e-3);
}

TEST(Kappa, EqualSampleSizesSimplify)
{
    for (std::size_t n : {10U, 300U, 5000U}) {
        EXPECT_NEAR(etl::kappa_approx_mean(0.05, n, n, 100.0), 100.0 * std::sqrt(std::log(40.0) / n), 1e-12);
    }
}

TEST(Kappa, CdfRadiusIsMeanRadiusOverTauMax)
{
    for (double a : {0.01, 0.05, 0.3})
        for (std::size_t n : {1U, 300U, 10000U})
            EXPECT_NEAR(etl::kappa_exact_cdf(a, n), etl::kappa_exact_mean(a, n, 37.0) / 37.0, 1e-14);
}

TEST(Kappa, KsSymmetric)
{
    EXPECT_EQ(etl::kappa_ks(0.05, 300, 7000), etl::kappa_ks(0.05, 7000, 300));
    EXPECT_EQ(etl::kappa_approx_mean(0.05, 300, 7000, 100.0), etl::kappa_approx_mean(0.05, 7000, 300, 100.0));
}

TEST(Kappa, BoundsInvertToAlpha)
{
    for (double a : {0.001, 0.01, 0.05, 0.2, 0.9}) {
        for (std::size_t n : {1U, 300U, 10000U}) {
            const std::size_t m = 3 * n + 1;
            EXPECT_NEAR(etl::hoeffding_bound(etl::kappa_exact_mean(a, n, 100.0), n, 100.0) / a, 1.0, 1e-12);
            EXPECT_NEAR(etl::hoeffding_two_sample_bound(etl::kappa_approx_mean(a, n, m, 100.0), n, m, 100.0) / a, 1.0, 1e-12);
            EXPECT_NEAR(etl::dkw_bound(etl::kappa_exact_cdf(a, n), n) / a, 1.0, 1e-12);
            EXPECT_NEAR(etl::ks_two_sample_bound(etl::kappa_ks(a, n, m), n, m) / a, 1.0, 1e-12);
        }
    }
}

TEST(ExactMeanTrigger, BufferAtExpectationDoesNotFire)
{
    const std::vector<double> buffer(300, 28.5);
    const auto v = etl::exact_mean_trigger(buffer, 28.5, 0.05, 100.0);
    EXPECT_EQ(v.statistic, 0.0);
    EXPECT_FALSE(v.fired);
    EXPECT_EQ(v.kind, TriggerKind::exact_mean);
}

TEST(ExactMeanTrigger, BoundaryFires)
{
    // The mean of two copies of κ is exactly κ.
    const double alpha = 0.05;
    const double kappa = etl::kappa_exact_mean(alpha, 2, 1.0);
    const std::vector<double> buffer{kappa, kappa};
    const auto v = etl::exact_mean_trigger(buffer, 0.0, alpha, 1.0);
    EXPECT_EQ(v.statistic, v.kappa);
    EXPECT_TRUE(v.fired);
}

TEST(ExactMeanTrigger, EmptyBufferRejected)
{
    EXPECT_THROW(etl::exact_mean_trigger(std::vector<double>{}, 1.0, 0.05, 100.0), std::invalid_argument);
}

TEST(ApproxMeanTrigger, IdenticalSamplesDoNotFire)
{
    const std::vector<double> a{3, 5, 8, 13, 21};
    const auto v = etl::approx_mean_trigger(a, a, 0.05, 100.0);
    EXPECT_EQ(v.statistic, 0.0);
    EXPECT_FALSE(v.fired);
    EXPECT_EQ(v.mc_size, 5U);
}

TEST(ApproxMeanTrigger, BoundaryUsesGreaterOrEqual)
{
    const double kappa = etl::kappa_approx_mean(0.05, 4, 4, 100.0);
    const std::vector<double> mc{0, 0, 0, 0};
    const std::vector<double> buffer(4, kappa);
    EXPECT_TRUE(etl::approx_mean_trigger(buffer, mc, 0.05, 100.0).fired);
    const std::vector<double> below(4, std::nextafter(kappa, 0.0));
    EXPECT_FALSE(etl::approx_mean_trigger(below, mc, 0.05, 100.0).fired);
}

TEST(ExactCdfTrigger, SingleSampleAgainstUnitStep)
{
    const std::vector<double> buffer{4.0};
    const auto v = etl::exact_cdf_trigger(buffer, [](double t) { return t >= 4.0 ? 1.0 : 0.0; }, 0.05);
    EXPECT_EQ(v.statistic, 0.0);
    EXPECT_FALSE(v.fired);
}

TEST(ExactCdfTrigger, ConstantSampleAgainstUniform)
{
    const double t0 = 5.0;
    const std::vector<double> buffer(50, t0);
    const auto uniform = [t0](double t) { return std::clamp(t / (2.0 * t0), 0.0, 1.0); };
    EXPECT_NEAR(etl::exact_cdf_trigger(buffer, uniform, 0.05).statistic, 0.5, 1e-12);
}

TEST(ExactCdfTrigger, InvalidCdfRejected)
{
    const std::vector<double> buffer{1, 2, 3};
    EXPECT_THROW(etl::exact_cdf_trigger(buffer, [](double t) { return t < 2.0 ? 0.8 : 0.2; }, 0.05),
                 std::invalid_argument);
    EXPECT_THROW(etl::exact_cdf_trigger(buffer, [](double) { return 1.5; }, 0.05), std::invalid_argument);
    EXPECT_THROW(etl::exact_cdf_trigger(buffer, etl::Cdf{}, 0.05), std::invalid_argument);
}

TEST(ExactCdfTrigger, BoundaryIsStrict)
{
    // Buffer all at 1 against F ≡ κ on [0, 1): the left-limit gap is exactly κ.
    const std::size_t n = 8;
    const double kappa = etl::kappa_exact_cdf(0.05, n);
    const std::vector<double> buffer(n, 1.0);
    const auto f = [kappa](double t) { return t >= 1.0 ? 1.0 : (t >= 0.0 ? kappa : 0.0); };
    const auto v = etl::exact_cdf_trigger(buffer, f, 0.05);
    EXPECT_EQ(v.statistic, kappa);
    EXPECT_FALSE(v.fired);
}

TEST(KsTrigger, IdenticalMultisets)
{
    const std::vector<double> a{1, 2, 2, 3, 9};
    std::vector<double> b = a;
    std::reverse(b.begin(), b.end());
    const auto v = etl::ks_trigger(a, b, 0.05);
    EXPECT_EQ(v.statistic, 0.0);
    EXPECT_FALSE(v.fired);
}

TEST(KsTrigger, DisjointSupportsGiveOne)
{
    std::vector<double> low(20);
    std::vector<double> high(20);
    std::iota(low.begin(), low.end(), 1.0);
    std::iota(high.begin(), high.end(), 21.0);
    const auto v = etl::ks_trigger(low, high, 0.05);
    EXPECT_EQ(v.statistic, 1.0);
    EXPECT_TRUE(v.fired);
}

TEST(KsTrigger, TiedAtomsUseBothOneSidedLimits)
{
    // F_a jumps 0 → 1 at 2; F_b is 0.5 on [1, 3). Sup is 0.5, attained on both sides of 2.
    EXPECT_DOUBLE_EQ(etl::ks_statistic(std::vector<double>{2, 2}, std::vector<double>{1, 3}), 0.5);
    EXPECT_DOUBLE_EQ(etl::ks_statistic(std::vector<double>{2}, std::vector<double>{2, 2, 2, 3}), 0.25);
}

TEST(KsTrigger, EmptyRejected)
{
    EXPECT_THROW(etl::ks_trigger(std::vector<double>{}, std::vector<double>{1.0}, 0.05), std::invalid_argument);
}

TEST(Triggers, VerdictsInvariantUnderPermutation)
{
    const auto mc = etl::sample_stopping_times(etl::scenarios::scalar_detuned_model(), 3.0, 100, 5000,
                                               etl::MonteCarloOptions{.seed = 3});
    etl::RandomSource rng(4);
    const auto emp = etl::collect_stopping_times(etl::scenarios::scalar_plant(), etl::scenarios::scalar_plant(),
                                                 etl::TriggerConfig{}, 300, rng);
    std::vector<double> shuffled = emp.values;
    std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937(11));
    const etl::EmpiricalCdf ref(mc.values);
    const auto cdf = [&ref](double t) { return ref(t); };
    const double mean = etl::empirical_mean(mc);

    const auto check = [](const etl::TriggerVerdict& a, const etl::TriggerVerdict& b) {
        EXPECT_EQ(a.fired, b.fired);
        EXPECT_NEAR(a.statistic, b.statistic, 1e-12);
        EXPECT_EQ(a.kappa, b.kappa);
    };
    check(etl::exact_mean_trigger(emp.values, mean, 0.05, 100.0), etl::exact_mean_trigger(shuffled, mean, 0.05, 100.0));
    check(etl::approx_mean_trigger(emp.values, mc.values, 0.05, 100.0),
          etl::approx_mean_trigger(shuffled, mc.values, 0.05, 100.0));
    check(etl::exact_cdf_trigger(emp.values, cdf, 0.05), etl::exact_cdf_trigger(shuffled, cdf, 0.05));
    check(etl::ks_trigger(emp.values, mc.values, 0.05), etl::ks_trigger(shuffled, mc.values, 0.05));
}

TEST(Triggers, CensoredMassDoesNotChangeKs)
{
    // Every value is ≤ τ_max and both ECDFs equal 1 at τ_max, so the sup over
    // t < τ_max equals the sup over all t.
    const auto a = etl::sample_stopping_times(etl::scenarios::scalar_detuned_model(), 3.0, 30, 5000,
                                              etl::MonteCarloOptions{.seed = 1});
    const auto b = etl::sample_stopping_times(etl::scenarios::scalar_plant(), 3.0, 30, 5000,
                                              etl::MonteCarloOptions{.seed = 2});
    ASSERT_GT(b.censored_fraction(), 0.1);
    const etl::EmpiricalCdf fa(a.values);
    const etl::EmpiricalCdf fb(b.values);
    double below_cap = 0.0;
    for (int t = 0; t < 30; ++t) below_cap = std::max(below_cap, std::abs(fa(t) - fb(t)));
    EXPECT_DOUBLE_EQ(etl::ks_statistic(a.values, b.values), below_cap);
}

TEST(Triggers, OpaqueSamplesFromContinuousTime)
{
    // Sample-based triggers only see numbers: rescaling discrete stopping
    // times to a continuous time axis (and τ_max with them) leaves every
    // verdict unchanged, and two continuous-time samples of one model pass.
    const auto a = etl::sample_stopping_times(etl::scenarios::scalar_plant(), 3.0, 100, 2000, etl::MonteCarloOptions{.seed = 8});
    const auto b = etl::sample_stopping_times(etl::scenarios::scalar_detuned_model(), 3.0, 100, 5000, etl::MonteCarloOptions{.seed = 9});
    const double h = 0.01;
    std::vector<double> as = a.values;
    std::vector<double> bs = b.values;
    for (double& v : as) v *= h;
    for (double& v : bs) v *= h;
    const auto mean_d = etl::approx_mean_trigger(a.values, b.values, 0.05, 100.0);
    const auto mean_c = etl::approx_mean_trigger(as, bs, 0.05, 100.0 * h);
    EXPECT_EQ(mean_d.fired, mean_c.fired);
    EXPECT_NEAR(mean_c.statistic / mean_c.kappa, mean_d.statistic / mean_d.kappa, 1e-12);
    EXPECT_EQ(etl::ks_trigger(a.values, b.values, 0.05).statistic, etl::ks_trigger(as, bs, 0.05).statistic);

    const auto model = etl::ContinuousLinearModel::scalar(-1.0, std::sqrt(2.0));
    const auto c1 = etl::sample_stopping_times_continuous(model, 1.5, 20.0, 1e-2, 2000, etl::MonteCarloOptions{.seed = 1});
    const auto c2 = etl::sample_stopping_times_continuous(model, 1.5, 20.0, 1e-2, 5000, etl::MonteCarloOptions{.seed = 2});
    EXPECT_FALSE(etl::ks_trigger(c1.values, c2.values, 0.01).fired);
    EXPECT_FALSE(etl::approx_mean_trigger(c1.values, c2.values, 0.01, 20.0).fired);
}

TEST(Triggers, FalsePositiveRateUnderCorrectModel)
{
    // 200 fills here; the acceptance gate runs 1000.
    const auto plant = etl::scenarios::scalar_plant();
    const etl::TriggerConfig cfg{.delta = 3.0, .tau_max = 100, .n = 300};
    const auto mc = etl::sample_stopping_times(plant, 3.0, 100, 100000, etl::MonteCarloOptions{.seed = 5});
    etl::RandomSource rng(6);
    int fires = 0;
    const int fills = 200;
    for (int i = 0; i < fills; ++i) {
        const auto buffer = etl::collect_stopping_times(plant, plant, cfg, 300, rng);
        fires += etl::approx_mean_trigger(buffer.values, mc.values, 0.05, 100.0).fired ? 1 : 0;
        fires += etl::ks_trigger(buffer.values, mc.values, 0.05).fired ? 1 : 0;
    }
    const double rate = fires / (2.0 * fills);
    EXPECT_LE(rate, 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / (2.0 * fills)));
}

TEST(TriggerBuffer, FillThenEvaluate)
{
    etl::TriggerBuffer buffer(3);
    EXPECT_FALSE(buffer.push(1));
    EXPECT_FALSE(buffer.push(2));
    EXPECT_TRUE(buffer.push(3));
    EXPECT_THROW(buffer.push(4), std::invalid_argument);
    buffer.after_evaluation(false);
    EXPECT_EQ(buffer.size(), 0U);
}

TEST(TriggerBuffer, SlidingWindow)
{
    etl::TriggerBuffer buffer(3, etl::BufferPolicy::sliding_window);
    for (double v : {1.0, 2.0, 3.0}) buffer.push(v);
    buffer.after_evaluation(false);
    EXPECT_TRUE(buffer.push(4));
    EXPECT_EQ(buffer.values(), (std::vector<double>{2, 3, 4}));
    buffer.after_evaluation(true);
    EXPECT_EQ(buffer.size(), 0U);
}

TEST(TriggerBuffer, PolicyNames)
{
    EXPECT_EQ(etl::parse_buffer_policy("sliding_window"), etl::BufferPolicy::sliding_window);
    EXPECT_EQ(etl::to_string(etl::BufferPolicy::fill_then_evaluate), "fill_then_evaluate");
    EXPECT_THROW(etl::parse_buffer_policy("ring"), std::invalid_argument);
    EXPECT_THROW(etl::TriggerBuffer(0), std::invalid_argument);
    EXPECT_EQ(etl::parse_trigger_kind("ks"), TriggerKind::two_sample_ks);
    EXPECT_THROW(etl::parse_trigger_kind("chi2"), std::invalid_argument);
}

TEST(LearningTrigger, RejectsWrongBufferSize)
{
    etl::LearningTrigger trigger(TriggerKind::approx_mean, 0.05, 100.0, 5);
    etl::StoppingSample ref;
    for (double v : {1.0, 2.0, 3.0}) ref.push(v);
    trigger.set_reference(ref);
    EXPECT_THROW((void)trigger.evaluate(std::vector<double>{1, 2, 3}), std::invalid_argument);
    EXPECT_NO_THROW((void)trigger.evaluate(std::vector<double>{1, 2, 3, 1, 2}));
}

TEST(LearningTrigger, RequiresReference)
{
    etl::LearningTrigger trigger(TriggerKind::two_sample_ks, 0.05, 100.0, 2);
    EXPECT_THROW((void)trigger.evaluate(std::vector<double>{1, 2}), std::invalid_argument);
    EXPECT_THROW(etl::LearningTrigger(TriggerKind::exact_mean, 1.5, 100.0, 2), std::domain_error);
}

TEST(LearningTrigger, DispatchesToConfiguredKind)
{
    etl::StoppingSample ref;
    for (double v : {2.0, 4.0, 6.0, 8.0}) ref.push(v);
    const std::vector<double> buffer{1, 1, 9, 9};
    for (TriggerKind kind : {TriggerKind::exact_mean, TriggerKind::approx_mean, TriggerKind::exact_cdf, TriggerKind::two_sample_ks}) {
        etl::LearningTrigger trigger(kind, 0.05, 10.0, 4);
        trigger.set_reference(ref);
        const auto v = trigger.evaluate(buffer);
        EXPECT_EQ(v.kind, kind);
        EXPECT_DOUBLE_EQ(v.kappa, trigger.kappa());
    }
    etl::LearningTrigger exact(TriggerKind::exact_mean, 0.05, 10.0, 4);
    exact.set_reference(ref);
    EXPECT_EQ(exact.expected_tau(), 5.0);
    exact.set_expected_tau(1.0);
    EXPECT_DOUBLE_EQ(exact.evaluate(buffer).statistic, 4.0);
}
