#pragma once

// Stopping (inter-communication) times: Monte Carlo sampling of first exit
// times of the prediction-error process from the δ-ball, plus the empirical
// statistics the learning triggers consume.

#include "etl/core.hpp"
#include "etl/csv.hpp"
#include "etl/linsys.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <numeric>
#include <span>
#include <thread>
#include <utility>
#include <vector>

namespace etl {

enum class TimeMode { discrete, continuous };

/// Ordered multiset of stopping times with censoring flags. Censored entries
/// were forced by the τ_max cap (or the simulation horizon) and carry the cap
/// value.
struct StoppingSample {
    std::vector<double> values;
    std::vector<std::uint8_t> censored;
    TimeMode mode = TimeMode::discrete;

    void push(double value, bool is_censored = false)
    {
        values.push_back(value);
        censored.push_back(is_censored ? 1 : 0);
    }

    void append(const StoppingSample& other)
    {
        values.insert(values.end(), other.values.begin(), other.values.end());
        censored.insert(censored.end(), other.censored.begin(), other.censored.end());
    }

    [[nodiscard]] std::size_t size() const { return values.size(); }
    [[nodiscard]] bool empty() const { return values.empty(); }
    [[nodiscard]] std::span<const double> view() const { return values; }

    [[nodiscard]] std::size_t censored_count() const
    {
        return static_cast<std::size_t>(std::count(censored.begin(), censored.end(), std::uint8_t{1}));
    }

    [[nodiscard]] double censored_fraction() const
    {
        return empty() ? 0.0 : static_cast<double>(censored_count()) / static_cast<double>(size());
    }
};

// ---------------------------------------------------------------------------
// Empirical statistics
// ---------------------------------------------------------------------------

inline double empirical_mean(std::span<const double> values)
{
    require(!values.empty(), "empirical_mean: empty sample");
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

inline double empirical_mean(const StoppingSample& sample)
{
    return empirical_mean(sample.view());
}

/// Unbiased sample variance; zero for a single observation.
inline double sample_variance(std::span<const double> values)
{
    require(!values.empty(), "sample_variance: empty sample");
    if (values.size() < 2) {
        return 0.0;
    }
    const double mean = empirical_mean(values);
    double acc = 0.0;
    for (double v : values) {
        acc += (v - mean) * (v - mean);
    }
    return acc / static_cast<double>(values.size() - 1);
}

inline double standard_error(std::span<const double> values)
{
    return std::sqrt(sample_variance(values) / static_cast<double>(values.size()));
}

/// Right-continuous step function F_n(t) = #{values ≤ t} / n.
class EmpiricalCdf {
public:
    explicit EmpiricalCdf(std::vector<double> values) : sorted_(std::move(values))
    {
        require(!sorted_.empty(), "empirical_cdf: empty sample");
        require(std::none_of(sorted_.begin(), sorted_.end(), [](double v) { return std::isnan(v); }),
                "empirical_cdf: NaN in sample");
        std::sort(sorted_.begin(), sorted_.end());
    }

    explicit EmpiricalCdf(std::span<const double> values) : EmpiricalCdf(std::vector<double>(values.begin(), values.end())) {}

    double operator()(double t) const
    {
        const auto count = std::upper_bound(sorted_.begin(), sorted_.end(), t) - sorted_.begin();
        return static_cast<double>(count) / static_cast<double>(sorted_.size());
    }

    [[nodiscard]] std::size_t size() const { return sorted_.size(); }
    [[nodiscard]] const std::vector<double>& sorted_values() const { return sorted_; }

    /// (t, F(t)) at every distinct support point, ascending.
    [[nodiscard]] std::vector<std::pair<double, double>> steps() const
    {
        std::vector<std::pair<double, double>> out;
        const double n = static_cast<double>(sorted_.size());
        for (std::size_t i = 0; i < sorted_.size(); ++i) {
            if (i + 1 < sorted_.size() && sorted_[i + 1] == sorted_[i]) {
                continue;
            }
            out.emplace_back(sorted_[i], static_cast<double>(i + 1) / n);
        }
        return out;
    }

private:
    std::vector<double> sorted_;
};

inline EmpiricalCdf empirical_cdf(const StoppingSample& sample)
{
    return EmpiricalCdf(sample.values);
}

// ---------------------------------------------------------------------------
// Monte Carlo machinery
// ---------------------------------------------------------------------------

/// Seeding and fan-out for Monte Carlo sampling. Work is cut into fixed-size
/// blocks, each with its own stream derived from (seed, block index), so the
/// result depends on the seed only, never on the worker count.
struct MonteCarloOptions {
    std::uint64_t seed = 0;
    unsigned workers = 0; ///< 0 = default_worker_count()
    std::size_t block_size = 4096;
};

/// Runs fn(rng, begin, count) for every block of [0, total).
template <class BlockFn>
void for_each_block(std::size_t total, const MonteCarloOptions& opts, BlockFn&& fn)
{
    require(opts.block_size > 0, "monte carlo: block size must be positive");
    const std::size_t blocks = (total + opts.block_size - 1) / opts.block_size;
    const unsigned workers =
        static_cast<unsigned>(std::min<std::size_t>(opts.workers == 0 ? default_worker_count() : opts.workers,
                                                    std::max<std::size_t>(blocks, 1)));
    auto run_block = [&](std::size_t b) {
        RandomSource rng(derive_seed(opts.seed, b));
        const std::size_t begin = b * opts.block_size;
        fn(rng, begin, std::min(opts.block_size, total - begin));
    };
    if (workers <= 1) {
        for (std::size_t b = 0; b < blocks; ++b) {
            run_block(b);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            try {
                for (std::size_t b = next++; b < blocks && !failed; b = next++) {
                    run_block(b);
                }
            } catch (...) {
                if (!failed.exchange(true)) {
                    failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

namespace detail {

// First exit of z(k+1) = A z(k) + L ξ(k), z(0) = 0, from the open δ-ball.
// With a bridge covariance Σ the chain is read as a sampled diffusion: a step
// that stays inside still exits with the Brownian-bridge crossing probability
// exp(−2 d₀ d₁ / (nᵀ Σ n)), d = distance to the sphere, n = outward normal.
// Fixed-size instantiations keep the inner loop allocation-free.
template <int N>
void exit_times(const Matrix& a, const Matrix& l, double delta, std::int64_t cap, const Matrix* bridge,
                RandomSource& rng, std::span<double> values, std::span<std::uint8_t> censored)
{
    using Mat = Eigen::Matrix<double, N, N>;
    using Vec = Eigen::Matrix<double, N, 1>;
    const Eigen::Index n = a.rows();
    const Mat transition = a;
    const Mat factor = l;
    const Mat bridge_cov = bridge != nullptr ? Mat(*bridge) : Mat(Mat::Zero(n, n));
    Vec z = Vec::Zero(n);
    Vec next = Vec::Zero(n);
    Vec xi = Vec::Zero(n);
    for (std::size_t i = 0; i < values.size(); ++i) {
        z.setZero();
        std::int64_t exit_step = 0;
        for (std::int64_t k = 1; k <= cap; ++k) {
            rng.fill_gaussian(xi);
            next.noalias() = transition * z;
            next.noalias() += factor * xi;
            const double r_next = next.norm();
            if (r_next >= delta) {
                exit_step = k;
                break;
            }
            if (bridge != nullptr && r_next > 0.0) {
                const double d0 = delta - z.norm();
                const double d1 = delta - r_next;
                const double var = (next.transpose() * bridge_cov * next).value() / (r_next * r_next);
                const double exponent = 2.0 * d0 * d1 / var;
                if (var > 0.0 && exponent < 40.0 && rng.uniform() < std::exp(-exponent)) {
                    exit_step = k;
                    break;
                }
            }
            z = next;
        }
        values[i] = static_cast<double>(exit_step == 0 ? cap : exit_step);
        censored[i] = exit_step == 0 ? 1 : 0;
    }
}

inline void exit_times_dispatch(const Matrix& a, const Matrix& l, double delta, std::int64_t cap,
                                const Matrix* bridge, RandomSource& rng, std::span<double> values,
                                std::span<std::uint8_t> censored)
{
    switch (a.rows()) {
    case 1: exit_times<1>(a, l, delta, cap, bridge, rng, values, censored); break;
    case 2: exit_times<2>(a, l, delta, cap, bridge, rng, values, censored); break;
    case 3: exit_times<3>(a, l, delta, cap, bridge, rng, values, censored); break;
    case 4: exit_times<4>(a, l, delta, cap, bridge, rng, values, censored); break;
    default: exit_times<Eigen::Dynamic>(a, l, delta, cap, bridge, rng, values, censored); break;
    }
}

inline StoppingSample sample_exit_chain(const Matrix& a, const Matrix& l, double delta, std::int64_t cap,
                                        std::size_t m, const MonteCarloOptions& opts,
                                        const Matrix* bridge = nullptr)
{
    StoppingSample out;
    out.values.assign(m, 0.0);
    out.censored.assign(m, 0);
    for_each_block(m, opts, [&](RandomSource& rng, std::size_t begin, std::size_t count) {
        exit_times_dispatch(a, l, delta, cap, bridge, rng, std::span(out.values).subspan(begin, count),
                            std::span(out.censored).subspan(begin, count));
    });
    return out;
}

} // namespace detail

/// m independent exit times of the model error process
///   z(k+1) = Â z(k) + ε̂(k),  z(0) = 0,  ε̂ ~ N(0, Q̂),
/// i.e. the first k with ‖z(k)‖₂ ≥ δ, censored at τ_max.
inline StoppingSample sample_stopping_times(const DiscreteLinearModel& model, double delta, std::int64_t tau_max,
                                            std::size_t m, const MonteCarloOptions& opts)
{
    require(m >= 1, "sample_stopping_times: m must be >= 1");
    require(delta >= 0.0, "sample_stopping_times: delta must be non-negative");
    require(tau_max >= 1, "sample_stopping_times: tau_max must be >= 1");
    return detail::sample_exit_chain(model.transition(), model.noise_factor(), delta, tau_max, m, opts);
}

inline StoppingSample sample_stopping_times(const DiscreteLinearModel& model, double delta, std::int64_t tau_max,
                                            std::size_t m, RandomSource& rng)
{
    return sample_stopping_times(model, delta, tau_max, m, MonteCarloOptions{.seed = rng.next_seed()});
}

/// Exit times of the Euler-Maruyama chain of dZ = Â Z dt + Ĉ dW, reported in
/// seconds (k·h). Paths still inside the ball at `horizon` are censored there.
/// With `bridge_correction` each step also tests for a crossing between the
/// grid points, which removes the O(√h) bias of checking only at k·h.
inline StoppingSample sample_stopping_times_continuous(const ContinuousLinearModel& model, double delta,
                                                       double horizon, double h, std::size_t m,
                                                       const MonteCarloOptions& opts, bool bridge_correction = true)
{
    require(h > 0.0, "sample_stopping_times_continuous: step size must be positive");
    require(horizon >= h, "sample_stopping_times_continuous: horizon must cover at least one step");
    require(m >= 1, "sample_stopping_times_continuous: m must be >= 1");
    require(delta >= 0.0, "sample_stopping_times_continuous: delta must be non-negative");
    const Eigen::Index n = model.dim();
    const Matrix euler = Matrix::Identity(n, n) + model.drift() * h;
    const Matrix factor = model.diffusion() * std::sqrt(h);
    const Matrix step_cov = factor * factor.transpose();
    const auto cap = static_cast<std::int64_t>(std::llround(horizon / h));
    StoppingSample out =
        detail::sample_exit_chain(euler, factor, delta, cap, m, opts, bridge_correction ? &step_cov : nullptr);
    for (double& v : out.values) {
        v *= h;
    }
    out.mode = TimeMode::continuous;
    return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline void write_sample_csv(std::ostream& out, const StoppingSample& sample)
{
    out << "tau,censored\n";
    for (std::size_t i = 0; i < sample.size(); ++i) {
        out << csv::format(sample.values[i]) << ',' << int(sample.censored[i]) << '\n';
    }
}

inline StoppingSample read_sample_csv(std::istream& in)
{
    const csv::Table table = csv::read(in);
    const std::size_t tau = table.column("tau");
    std::size_t cens = table.header.size();
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (table.header[i] == "censored") {
            cens = i;
        }
    }
    StoppingSample out;
    for (const auto& row : table.rows) {
        out.push(row[tau], cens < row.size() && row[cens] != 0.0);
        if (row[tau] != std::floor(row[tau])) {
            out.mode = TimeMode::continuous;
        }
    }
    return out;
}

inline void write_cdf_csv(std::ostream& out, const EmpiricalCdf& cdf)
{
    out << "t,F\n";
    for (const auto& [t, f] : cdf.steps()) {
        out << csv::format(t) << ',' << csv::format(f) << '\n';
    }
}

} // namespace etl
