#pragma once

// Learning triggers: statistical tests that compare observed stopping times
// against model-induced ones and decide when a new model must be learned.
//
// Mean-based tests rest on Hoeffding's inequality for variables bounded by
// τ_max; distribution-based tests rest on the DKW inequality and the
// two-sample Kolmogorov-Smirnov bound. Each κ is chosen so that the
// false-positive probability under a correct model is at most α.

#include "etl/core.hpp"
#include "etl/stopping.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace etl {

enum class TriggerKind { exact_mean, approx_mean, exact_cdf, two_sample_ks };

inline std::string_view to_string(TriggerKind kind)
{
    switch (kind) {
    case TriggerKind::exact_mean: return "exact_mean";
    case TriggerKind::approx_mean: return "approx_mean";
    case TriggerKind::exact_cdf: return "exact_cdf";
    case TriggerKind::two_sample_ks: return "two_sample_ks";
    }
    return "unknown";
}

inline TriggerKind parse_trigger_kind(std::string_view name)
{
    if (name == "exact_mean") return TriggerKind::exact_mean;
    if (name == "approx_mean") return TriggerKind::approx_mean;
    if (name == "exact_cdf") return TriggerKind::exact_cdf;
    if (name == "two_sample_ks" || name == "ks") return TriggerKind::two_sample_ks;
    throw std::invalid_argument("unknown trigger kind '" + std::string(name) + "'");
}

struct TriggerVerdict {
    TriggerKind kind = TriggerKind::approx_mean;
    bool fired = false;
    double statistic = 0.0;
    double kappa = 0.0;
    std::size_t buffer_size = 0;
    std::size_t mc_size = 0; ///< 0 for the exact triggers
    double alpha = 0.0;
};

// ---------------------------------------------------------------------------
// Confidence radii
// ---------------------------------------------------------------------------

namespace detail {

inline void check_alpha(double alpha)
{
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::domain_error("alpha must lie in (0, 1)");
    }
}

inline void check_count(std::size_t count, const char* name)
{
    if (count < 1) {
        throw std::domain_error(std::string(name) + " must be >= 1");
    }
}

inline void check_tau_max(double tau_max)
{
    if (!(tau_max > 0.0) || !std::isfinite(tau_max)) {
        throw std::domain_error("tau_max must be positive and finite");
    }
}

} // namespace detail

/// κ = τ_max √(ln(2/α) / 2n)
inline double kappa_exact_mean(double alpha, std::size_t n, double tau_max)
{
    detail::check_alpha(alpha);
    detail::check_count(n, "n");
    detail::check_tau_max(tau_max);
    return tau_max * std::sqrt(std::log(2.0 / alpha) / (2.0 * static_cast<double>(n)));
}

/// κ = τ_max √((n+m)/(2nm) ln(2/α))
inline double kappa_approx_mean(double alpha, std::size_t n, std::size_t m, double tau_max)
{
    detail::check_alpha(alpha);
    detail::check_count(n, "n");
    detail::check_count(m, "m");
    detail::check_tau_max(tau_max);
    const double nd = static_cast<double>(n);
    const double md = static_cast<double>(m);
    return tau_max * std::sqrt((nd + md) / (2.0 * nd * md) * std::log(2.0 / alpha));
}

/// κ = √(ln(2/α) / 2n)
inline double kappa_exact_cdf(double alpha, std::size_t n)
{
    detail::check_alpha(alpha);
    detail::check_count(n, "n");
    return std::sqrt(std::log(2.0 / alpha) / (2.0 * static_cast<double>(n)));
}

/// κ = √((n+m)/(2nm) ln(2/α))
inline double kappa_ks(double alpha, std::size_t n, std::size_t m)
{
    detail::check_alpha(alpha);
    detail::check_count(n, "n");
    detail::check_count(m, "m");
    const double nd = static_cast<double>(n);
    const double md = static_cast<double>(m);
    return std::sqrt((nd + md) / (2.0 * nd * md) * std::log(2.0 / alpha));
}

// Tail bounds the radii invert.

inline double hoeffding_bound(double kappa, std::size_t n, double tau_max)
{
    return 2.0 * std::exp(-2.0 * static_cast<double>(n) * kappa * kappa / (tau_max * tau_max));
}

inline double hoeffding_two_sample_bound(double kappa, std::size_t n, std::size_t m, double tau_max)
{
    const double inv = 1.0 / static_cast<double>(n) + 1.0 / static_cast<double>(m);
    return 2.0 * std::exp(-2.0 * kappa * kappa / (inv * tau_max * tau_max));
}

inline double dkw_bound(double kappa, std::size_t n)
{
    return 2.0 * std::exp(-2.0 * static_cast<double>(n) * kappa * kappa);
}

inline double ks_two_sample_bound(double kappa, std::size_t n, std::size_t m)
{
    const double inv = 1.0 / static_cast<double>(n) + 1.0 / static_cast<double>(m);
    return 2.0 * std::exp(-2.0 * kappa * kappa / inv);
}

// ---------------------------------------------------------------------------
// Test statistics
// ---------------------------------------------------------------------------

/// sup_t |F̂_m(t) − F_n(t)| over the merged support. Both ECDFs are constant
/// between support points, so evaluating after every block of tied values
/// covers both one-sided limits at each atom.
inline double ks_statistic(std::span<const double> a, std::span<const double> b)
{
    require(!a.empty() && !b.empty(), "ks_statistic: empty sample");
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double nx = static_cast<double>(x.size());
    const double ny = static_cast<double>(y.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double sup = 0.0;
    while (i < x.size() || j < y.size()) {
        double t = 0.0;
        if (j >= y.size() || (i < x.size() && x[i] <= y[j])) {
            t = x[i];
        } else {
            t = y[j];
        }
        while (i < x.size() && x[i] <= t) ++i;
        while (j < y.size() && y[j] <= t) ++j;
        sup = std::max(sup, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
    }
    return sup;
}

using Cdf = std::function<double(double)>;

/// sup_t |F(t) − F_n(t)| for a reference CDF F. On each interval between
/// sample atoms F_n is constant and F monotone, so the supremum is attained at
/// an atom or at the left limit of the next one.
inline double cdf_distance(std::span<const double> sample, const Cdf& reference)
{
    require(!sample.empty(), "cdf_distance: empty sample");
    require(static_cast<bool>(reference), "cdf_distance: reference CDF not set");
    std::vector<double> x(sample.begin(), sample.end());
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double sup = 0.0;
    double previous_f = 0.0;
    double below = 0.0; // F_n just left of the current atom
    std::size_t i = 0;
    while (i < x.size()) {
        const double t = x[i];
        std::size_t end = i;
        while (end < x.size() && x[end] == t) ++end;
        const double above = static_cast<double>(end) / n;
        const double f_left = reference(std::nextafter(t, -std::numeric_limits<double>::infinity()));
        const double f_at = reference(t);
        if (!(f_left >= 0.0 && f_at <= 1.0 && f_left <= f_at && f_left >= previous_f)) {
            throw std::invalid_argument("cdf_distance: reference is not a nondecreasing CDF with values in [0, 1]");
        }
        sup = std::max({sup, std::abs(f_left - below), std::abs(f_at - above)});
        previous_f = f_at;
        below = above;
        i = end;
    }
    return sup;
}

// ---------------------------------------------------------------------------
// Triggers
// ---------------------------------------------------------------------------

/// Fires on |mean(buffer) − E[τ]| ≥ κ_exact. E[τ] comes from outside (an
/// analytic value or a high-m Monte Carlo surrogate).
inline TriggerVerdict exact_mean_trigger(std::span<const double> buffer, double expected_tau, double alpha,
                                         double tau_max)
{
    require(!buffer.empty(), "exact_mean_trigger: empty buffer");
    TriggerVerdict v{.kind = TriggerKind::exact_mean, .buffer_size = buffer.size(), .alpha = alpha};
    v.kappa = kappa_exact_mean(alpha, buffer.size(), tau_max);
    v.statistic = std::abs(empirical_mean(buffer) - expected_tau);
    v.fired = v.statistic >= v.kappa;
    return v;
}

/// Fires on |mean(buffer) − mean(mc)| ≥ κ_approx.
inline TriggerVerdict approx_mean_trigger(std::span<const double> buffer, std::span<const double> mc_sample,
                                          double alpha, double tau_max)
{
    require(!buffer.empty() && !mc_sample.empty(), "approx_mean_trigger: empty sample");
    TriggerVerdict v{.kind = TriggerKind::approx_mean,
                     .buffer_size = buffer.size(),
                     .mc_size = mc_sample.size(),
                     .alpha = alpha};
    v.kappa = kappa_approx_mean(alpha, buffer.size(), mc_sample.size(), tau_max);
    v.statistic = std::abs(empirical_mean(buffer) - empirical_mean(mc_sample));
    v.fired = v.statistic >= v.kappa;
    return v;
}

/// Fires on sup_t |F(t) − F_n(t)| > κ_exact.
inline TriggerVerdict exact_cdf_trigger(std::span<const double> buffer, const Cdf& analytic_cdf, double alpha)
{
    TriggerVerdict v{.kind = TriggerKind::exact_cdf, .buffer_size = buffer.size(), .alpha = alpha};
    v.statistic = cdf_distance(buffer, analytic_cdf);
    v.kappa = kappa_exact_cdf(alpha, buffer.size());
    v.fired = v.statistic > v.kappa;
    return v;
}

/// Two-sample Kolmogorov-Smirnov trigger: fires on sup_t |F̂_m(t) − F_n(t)| > κ.
inline TriggerVerdict ks_trigger(std::span<const double> buffer, std::span<const double> mc_sample, double alpha)
{
    TriggerVerdict v{.kind = TriggerKind::two_sample_ks,
                     .buffer_size = buffer.size(),
                     .mc_size = mc_sample.size(),
                     .alpha = alpha};
    v.statistic = ks_statistic(buffer, mc_sample);
    v.kappa = kappa_ks(alpha, buffer.size(), mc_sample.size());
    v.fired = v.statistic > v.kappa;
    return v;
}

// ---------------------------------------------------------------------------
// Buffer and configured evaluator
// ---------------------------------------------------------------------------

enum class BufferPolicy {
    fill_then_evaluate, ///< evaluate each disjoint block of n gaps
    sliding_window,     ///< evaluate the last n gaps after every new one; breaks block independence
};

inline std::string_view to_string(BufferPolicy policy)
{
    return policy == BufferPolicy::fill_then_evaluate ? "fill_then_evaluate" : "sliding_window";
}

inline BufferPolicy parse_buffer_policy(std::string_view name)
{
    if (name == "fill_then_evaluate") return BufferPolicy::fill_then_evaluate;
    if (name == "sliding_window") return BufferPolicy::sliding_window;
    throw std::invalid_argument("unknown buffer policy '" + std::string(name) + "'");
}

class TriggerBuffer {
public:
    explicit TriggerBuffer(std::size_t capacity, BufferPolicy policy = BufferPolicy::fill_then_evaluate)
        : capacity_(capacity), policy_(policy)
    {
        require(capacity >= 1, "trigger buffer: capacity must be >= 1");
    }

    /// Adds a stopping time. Returns true when the buffer is ready for evaluation.
    bool push(double tau)
    {
        if (entries_.size() == capacity_) {
            require(policy_ == BufferPolicy::sliding_window, "trigger buffer: full buffer must be evaluated and cleared");
            entries_.pop_front();
        }
        entries_.push_back(tau);
        return full();
    }

    /// Called after an evaluation. Fill-then-evaluate always starts a fresh
    /// block; a sliding window is only emptied when the trigger fired.
    void after_evaluation(bool fired)
    {
        if (fired || policy_ == BufferPolicy::fill_then_evaluate) {
            clear();
        }
    }

    void clear() { entries_.clear(); }

    [[nodiscard]] bool full() const { return entries_.size() == capacity_; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] std::size_t capacity() const { return capacity_; }
    [[nodiscard]] BufferPolicy policy() const { return policy_; }
    [[nodiscard]] std::vector<double> values() const { return {entries_.begin(), entries_.end()}; }

    [[nodiscard]] double mean() const { return empirical_mean(values()); }

private:
    std::size_t capacity_;
    BufferPolicy policy_;
    std::deque<double> entries_;
};

/// A trigger bound to its model-based reference: the Monte Carlo sample for the
/// approximate tests, plus E[τ] or a CDF for the exact ones (taken from the
/// sample itself when not supplied).
class LearningTrigger {
public:
    LearningTrigger(TriggerKind kind, double alpha, double tau_max, std::size_t n)
        : kind_(kind), alpha_(alpha), tau_max_(tau_max), n_(n)
    {
        detail::check_alpha(alpha);
        detail::check_tau_max(tau_max);
        detail::check_count(n, "n");
    }

    void set_reference(StoppingSample mc_sample)
    {
        require(!mc_sample.empty(), "learning trigger: empty reference sample");
        reference_ = std::move(mc_sample);
        expected_tau_ = empirical_mean(reference_);
        auto cdf = std::make_shared<EmpiricalCdf>(reference_.values);
        cdf_ = [cdf](double t) { return (*cdf)(t); };
    }

    void set_expected_tau(double value) { expected_tau_ = value; }
    void set_cdf(Cdf cdf) { cdf_ = std::move(cdf); }

    [[nodiscard]] TriggerVerdict evaluate(std::span<const double> buffer) const
    {
        require(buffer.size() == n_, "learning trigger: buffer holds " + std::to_string(buffer.size()) +
                                         " entries, declared n = " + std::to_string(n_));
        require(!reference_.empty(), "learning trigger: reference sample not set");
        switch (kind_) {
        case TriggerKind::exact_mean: return exact_mean_trigger(buffer, expected_tau_, alpha_, tau_max_);
        case TriggerKind::approx_mean: return approx_mean_trigger(buffer, reference_.view(), alpha_, tau_max_);
        case TriggerKind::exact_cdf: return exact_cdf_trigger(buffer, cdf_, alpha_);
        case TriggerKind::two_sample_ks: return ks_trigger(buffer, reference_.view(), alpha_);
        }
        throw std::logic_error("unreachable trigger kind");
    }

    /// Threshold the configured kind would use for a full buffer.
    [[nodiscard]] double kappa() const
    {
        switch (kind_) {
        case TriggerKind::exact_mean: return kappa_exact_mean(alpha_, n_, tau_max_);
        case TriggerKind::approx_mean: return kappa_approx_mean(alpha_, n_, reference_.size(), tau_max_);
        case TriggerKind::exact_cdf: return kappa_exact_cdf(alpha_, n_);
        case TriggerKind::two_sample_ks: return kappa_ks(alpha_, n_, reference_.size());
        }
        return 0.0;
    }

    [[nodiscard]] TriggerKind kind() const { return kind_; }
    [[nodiscard]] double expected_tau() const { return expected_tau_; }
    [[nodiscard]] const StoppingSample& reference() const { return reference_; }

private:
    TriggerKind kind_;
    double alpha_;
    double tau_max_;
    std::size_t n_;
    StoppingSample reference_;
    double expected_tau_ = 0.0;
    Cdf cdf_;
};

} // namespace etl
