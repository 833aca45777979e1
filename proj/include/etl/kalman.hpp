#pragma once

// Output measurements: the sender runs a steady-state Kalman filter on
//     x(k+1) = A x(k) + e(k),  y(k) = C x(k) + v(k),
// and triggers on the distance between its estimate x̂ and the receiver's
// open-loop prediction x̌. In innovation form the estimate evolves as
//     x̂(k+1) = A x̂(k) + K I(k),  I(k) ~ N(0, S),
// so K S Kᵀ plays the role of process noise for stopping-time sampling.

#include "etl/core.hpp"
#include "etl/csv.hpp"
#include "etl/etse.hpp"
#include "etl/linsys.hpp"
#include "etl/stopping.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

namespace etl {

/// (A, C, Q, R). C maps states to outputs (rows = number of outputs).
class OutputModel {
public:
    OutputModel(Matrix a, Matrix c, Matrix q, Matrix r) : a_(std::move(a)), c_(std::move(c)), q_(std::move(q)), r_(std::move(r))
    {
        require(a_.rows() > 0 && a_.rows() == a_.cols(), "output model: A must be square and non-empty");
        require(c_.rows() > 0, "output model: C must have at least one row");
        require_dim(a_.rows(), c_.cols(), "output model C cols");
        require_dim(a_.rows(), q_.rows(), "output model Q rows");
        require_dim(a_.rows(), q_.cols(), "output model Q cols");
        require_dim(c_.rows(), r_.rows(), "output model R rows");
        require_dim(c_.rows(), r_.cols(), "output model R cols");
        require(spectral_radius(a_) < 1.0, "output model: A must have spectral radius < 1");
        require(is_positive_definite(q_), "output model: Q must be symmetric positive definite");
        require(is_positive_definite(r_), "output model: R must be symmetric positive definite");
        require(is_observable(a_, c_), "output model: (A, C) must be observable");
        q_factor_ = covariance_factor(q_, false);
        r_factor_ = covariance_factor(r_, false);
    }

    static bool is_observable(const Matrix& a, const Matrix& c)
    {
        const Eigen::Index n = a.rows();
        Matrix obs(c.rows() * n, n);
        Matrix block = c;
        for (Eigen::Index i = 0; i < n; ++i) {
            obs.middleRows(i * c.rows(), c.rows()) = block;
            block = block * a;
        }
        return Eigen::FullPivLU<Matrix>(obs).rank() == n;
    }

    [[nodiscard]] Eigen::Index state_dim() const { return a_.rows(); }
    [[nodiscard]] Eigen::Index output_dim() const { return c_.rows(); }
    [[nodiscard]] const Matrix& A() const { return a_; }
    [[nodiscard]] const Matrix& C() const { return c_; }
    [[nodiscard]] const Matrix& Q() const { return q_; }
    [[nodiscard]] const Matrix& R() const { return r_; }
    [[nodiscard]] const Matrix& q_factor() const { return q_factor_; }
    [[nodiscard]] const Matrix& r_factor() const { return r_factor_; }

    [[nodiscard]] OutputModel with_measurement_noise(Matrix r) const { return {a_, c_, q_, std::move(r)}; }

private:
    Matrix a_;
    Matrix c_;
    Matrix q_;
    Matrix r_;
    Matrix q_factor_;
    Matrix r_factor_;
};

/// Stationary filter quantities. P is the one-step prediction error covariance;
/// K = P Cᵀ S⁻¹ is the measurement-update gain and S = C P Cᵀ + R.
struct SteadyStateFilter {
    Matrix gain;
    Matrix error_cov;
    Matrix innovation_cov;
    std::size_t iterations = 0;
};

inline Matrix riccati_map(const OutputModel& model, const Matrix& p)
{
    const Matrix& a = model.A();
    const Matrix& c = model.C();
    const Matrix s = c * p * c.transpose() + model.R();
    const Matrix apct = a * p * c.transpose();
    Matrix next = a * p * a.transpose() + model.Q() - apct * s.ldlt().solve(apct.transpose());
    return 0.5 * (next + next.transpose());
}

inline double riccati_residual(const OutputModel& model, const Matrix& p)
{
    return (riccati_map(model, p) - p).cwiseAbs().maxCoeff();
}

/// Fixed-point iteration of the Riccati map from P₀ = Q until successive
/// iterates agree to `tol` in max-abs norm.
inline SteadyStateFilter solve_dare(const OutputModel& model, double tol = 1e-12, std::size_t max_iter = 100000)
{
    require(tol > 0.0, "solve_dare: tolerance must be positive");
    Matrix p = model.Q();
    std::size_t iter = 0;
    for (; iter < max_iter; ++iter) {
        Matrix next = riccati_map(model, p);
        if (!next.allFinite()) {
            throw ConvergenceError("solve_dare: Riccati iteration diverged");
        }
        const double change = (next - p).cwiseAbs().maxCoeff();
        p = std::move(next);
        if (change < tol) {
            break;
        }
    }
    if (iter == max_iter) {
        throw ConvergenceError("solve_dare: no convergence within " + std::to_string(max_iter) + " iterations");
    }
    SteadyStateFilter filter;
    filter.error_cov = p;
    filter.innovation_cov = model.C() * p * model.C().transpose() + model.R();
    filter.innovation_cov = 0.5 * (filter.innovation_cov + filter.innovation_cov.transpose());
    Eigen::LLT<Matrix> llt(filter.innovation_cov);
    if (llt.info() != Eigen::Success) {
        throw std::runtime_error("solve_dare: innovation covariance is singular");
    }
    filter.gain = llt.solve(model.C() * p).transpose();
    filter.iterations = iter + 1;
    return filter;
}

/// x̂(k+1) = Â x̂(k) + K (y(k+1) − Ĉ Â x̂(k))
inline Vector kf_step(const SteadyStateFilter& filter, const OutputModel& model, const Vector& xhat,
                      const Vector& y_next)
{
    require_dim(model.state_dim(), xhat.size(), "kf_step state");
    require_dim(model.output_dim(), y_next.size(), "kf_step output");
    require_dim(model.state_dim(), filter.gain.rows(), "kf_step gain rows");
    require_dim(model.output_dim(), filter.gain.cols(), "kf_step gain cols");
    const Vector predicted = model.A() * xhat;
    return predicted + filter.gain * (y_next - model.C() * predicted);
}

/// Sender/receiver loop for output measurements. The true plant produces y
/// through the true C and R; the sender filters with the gain of the model;
/// the receiver predicts with Â and resets to x̂ on communication.
class KalmanEtseLoop {
public:
    KalmanEtseLoop(OutputModel plant, OutputModel model, const TriggerConfig& cfg)
        : plant_(std::move(plant)), model_(std::move(model)), filter_(solve_dare(model_)), delta_(cfg.delta),
          tau_max_(cfg.tau_max)
    {
        require(cfg.delta > 0.0, "kalman etse: delta must be > 0");
        require(cfg.tau_max >= 1, "kalman etse: tau_max must be >= 1");
        require_dim(plant_.state_dim(), model_.state_dim(), "kalman etse plant/model states");
        require_dim(plant_.output_dim(), model_.output_dim(), "kalman etse plant/model outputs");
        const Eigen::Index n = plant_.state_dim();
        state_ = Vector::Zero(n);
        estimate_ = Vector::Zero(n);
        prediction_ = Vector::Zero(n);
        process_xi_ = Vector::Zero(n);
        output_xi_ = Vector::Zero(plant_.output_dim());
    }

    std::optional<CommunicationEvent> step(RandomSource& rng)
    {
        ++step_;
        ++since_comm_;
        rng.fill_gaussian(process_xi_);
        rng.fill_gaussian(output_xi_);
        state_ = plant_.A() * state_ + plant_.q_factor() * process_xi_;
        const Vector y = plant_.C() * state_ + plant_.r_factor() * output_xi_;
        estimate_ = kf_step(filter_, model_, estimate_, y);
        prediction_ = model_.A() * prediction_;

        const bool fired = state_trigger(estimate_, prediction_, delta_);
        if (!fired && since_comm_ < tau_max_) {
            return std::nullopt;
        }
        CommunicationEvent event{step_, since_comm_, !fired};
        prediction_ = estimate_;
        since_comm_ = 0;
        ++resets_;
        return event;
    }

    void set_model(OutputModel model)
    {
        require_dim(plant_.state_dim(), model.state_dim(), "kalman etse model update");
        filter_ = solve_dare(model);
        model_ = std::move(model);
    }

    [[nodiscard]] const Vector& state() const { return state_; }
    [[nodiscard]] const Vector& estimate() const { return estimate_; }
    [[nodiscard]] const Vector& prediction() const { return prediction_; }
    [[nodiscard]] const SteadyStateFilter& filter() const { return filter_; }
    [[nodiscard]] const OutputModel& model() const { return model_; }
    [[nodiscard]] const OutputModel& plant() const { return plant_; }
    [[nodiscard]] std::int64_t step_index() const { return step_; }
    /// Number of receiver resets performed so far.
    [[nodiscard]] std::int64_t resets() const { return resets_; }

private:
    OutputModel plant_;
    OutputModel model_;
    SteadyStateFilter filter_;
    double delta_;
    std::int64_t tau_max_;
    Vector state_;
    Vector estimate_;
    Vector prediction_;
    Vector process_xi_;
    Vector output_xi_;
    std::int64_t step_ = 0;
    std::int64_t since_comm_ = 0;
    std::int64_t resets_ = 0;
};

struct KalmanEtseResult {
    Trajectory states;
    Trajectory estimates;
    Trajectory predictions;
    CommunicationLog log;
    StoppingSample stopping_times; ///< gaps whose closing event lies after burn-in
};

inline KalmanEtseResult run_etse_kf(const OutputModel& plant, const OutputModel& model, const TriggerConfig& cfg,
                                    std::int64_t steps, std::int64_t burn_in, RandomSource& rng,
                                    bool record_trajectories = true)
{
    require(steps >= 1, "run_etse_kf: steps must be >= 1");
    require(burn_in >= 0, "run_etse_kf: burn_in must be >= 0");
    KalmanEtseLoop loop(plant, model, cfg);
    KalmanEtseResult out;
    auto record = [&](std::int64_t k) {
        if (record_trajectories) {
            out.states.push(static_cast<double>(k), loop.state());
            out.estimates.push(static_cast<double>(k), loop.estimate());
            out.predictions.push(static_cast<double>(k), loop.prediction());
        }
    };
    record(0);
    for (std::int64_t k = 1; k <= steps; ++k) {
        if (auto event = loop.step(rng)) {
            out.log.record(event->step, event->censored);
            if (event->step > burn_in) {
                out.stopping_times.push(static_cast<double>(event->gap), event->censored);
            }
        }
        record(k);
    }
    return out;
}

/// Runs the loop until `count` post-burn-in stopping times were collected.
inline StoppingSample collect_stopping_times_kf(const OutputModel& plant, const OutputModel& model,
                                                const TriggerConfig& cfg, std::size_t count, std::int64_t burn_in,
                                                RandomSource& rng)
{
    KalmanEtseLoop loop(plant, model, cfg);
    StoppingSample out;
    while (out.size() < count) {
        if (auto event = loop.step(rng); event && event->step > burn_in) {
            out.push(static_cast<double>(event->gap), event->censored);
        }
    }
    return out;
}

/// Heuristic burn-in covering the filter transient: 10·n / (1 − ρ(A)).
inline std::int64_t recommended_burn_in(const OutputModel& model)
{
    const double rho = spectral_radius(model.A());
    return static_cast<std::int64_t>(std::ceil(10.0 * static_cast<double>(model.state_dim()) / (1.0 - rho)));
}

/// Filter-state process x̂(k+1) = Â x̂(k) + K̂ I(k) as a discrete model with
/// (rank-deficient) process noise K̂ Ŝ K̂ᵀ.
inline DiscreteLinearModel innovation_model(const OutputModel& model, const SteadyStateFilter& filter)
{
    Matrix cov = filter.gain * filter.innovation_cov * filter.gain.transpose();
    cov = 0.5 * (cov + cov.transpose());
    return {model.A(), cov, ModelChecks{.require_stable = true, .allow_degenerate_noise = true}};
}

inline StoppingSample sample_stopping_times_kf(const OutputModel& model, double delta, std::int64_t tau_max,
                                               std::size_t m, const MonteCarloOptions& opts)
{
    const SteadyStateFilter filter = solve_dare(model);
    return sample_stopping_times(innovation_model(model, filter), delta, tau_max, m, opts);
}

inline StoppingSample sample_stopping_times_kf(const OutputModel& model, double delta, std::int64_t tau_max,
                                               std::size_t m, RandomSource& rng)
{
    return sample_stopping_times_kf(model, delta, tau_max, m, MonteCarloOptions{.seed = rng.next_seed()});
}

/// Columns: step, x0.., xhat0.., x_pred0.., event_flag.
inline void write_etse_kf_csv(std::ostream& out, const KalmanEtseResult& run)
{
    require(!run.states.empty(), "write_etse_kf_csv: trajectories were not recorded");
    const Eigen::Index n = run.states.states.front().size();
    out << "step";
    for (const char* prefix : {"x", "xhat", "x_pred"}) {
        for (Eigen::Index i = 0; i < n; ++i) {
            out << ',' << prefix << i;
        }
    }
    out << ",event_flag\n";
    std::size_t next_event = 0;
    for (std::size_t k = 0; k < run.states.size(); ++k) {
        const auto step = static_cast<std::int64_t>(run.states.times[k]);
        bool event = false;
        if (next_event < run.log.size() && run.log.event_steps[next_event] == step) {
            event = true;
            ++next_event;
        }
        out << step;
        for (const Trajectory* t : {&run.states, &run.estimates, &run.predictions}) {
            for (Eigen::Index i = 0; i < n; ++i) {
                out << ',' << csv::format(t->states[k](i));
            }
        }
        out << ',' << (event ? 1 : 0) << '\n';
    }
}

} // namespace etl
