#pragma once

// Event-triggered state estimation: the sender runs the plant, the receiver
// runs open-loop predictions x̌(k+1) = Â x̌(k), and the sender transmits its
// state whenever ‖x(k) − x̌(k)‖₂ ≥ δ or τ_max steps passed without a message.

#include "etl/core.hpp"
#include "etl/csv.hpp"
#include "etl/linsys.hpp"
#include "etl/stopping.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

namespace etl {

struct TriggerConfig {
    double delta = 3.0;           ///< state-trigger threshold
    std::int64_t tau_max = 100;   ///< forced-communication horizon
    std::size_t n = 300;          ///< empirical buffer size
    std::size_t m = 100000;       ///< Monte Carlo sample count
    double alpha = 0.05;          ///< confidence level

    void validate() const
    {
        require(delta > 0.0, "trigger config: delta must be > 0");
        require(tau_max >= 1, "trigger config: tau_max must be >= 1");
        require(n >= 1, "trigger config: n must be >= 1");
        require(m >= 1, "trigger config: m must be >= 1");
        require(alpha > 0.0 && alpha < 1.0, "trigger config: alpha must lie in (0, 1)");
    }
};

struct CommunicationLog {
    std::vector<std::int64_t> event_steps;
    std::vector<std::uint8_t> censored; ///< 1 when forced by τ_max

    void record(std::int64_t step, bool forced)
    {
        event_steps.push_back(step);
        censored.push_back(forced ? 1 : 0);
    }

    [[nodiscard]] std::size_t size() const { return event_steps.size(); }
    [[nodiscard]] bool empty() const { return event_steps.empty(); }
};

/// γ_state: fires on ‖x − x̌‖₂ ≥ δ (the boundary counts).
template <class A, class B>
bool state_trigger(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x_pred, double delta)
{
    require_dim(x.size(), x_pred.size(), "state_trigger");
    return (x - x_pred).norm() >= delta;
}

struct CommunicationEvent {
    std::int64_t step = 0;
    std::int64_t gap = 0;
    bool censored = false;
};

/// Stepwise sender/receiver loop. The trigger is checked after each state
/// update and a reset takes effect at the same step, so the error entering
/// the next step is exactly zero.
class EtseLoop {
public:
    EtseLoop(DiscreteLinearModel plant, const DiscreteLinearModel& model, const TriggerConfig& cfg,
             std::optional<Vector> x0 = std::nullopt)
        : plant_(std::move(plant)), predictor_(model.transition()), delta_(cfg.delta), tau_max_(cfg.tau_max)
    {
        require(cfg.delta > 0.0, "etse: delta must be > 0");
        require(cfg.tau_max >= 1, "etse: tau_max must be >= 1");
        require_dim(plant_.dim(), model.dim(), "etse plant/model");
        state_ = x0 ? *x0 : Vector::Zero(plant_.dim());
        require_dim(plant_.dim(), state_.size(), "etse initial state");
        prediction_ = state_;
        xi_ = Vector::Zero(plant_.dim());
    }

    std::optional<CommunicationEvent> step(RandomSource& rng)
    {
        ++step_;
        ++since_comm_;
        rng.fill_gaussian(xi_);
        state_ = plant_.transition() * state_ + plant_.noise_factor() * xi_;
        prediction_ = predictor_ * prediction_;

        const bool fired = state_trigger(state_, prediction_, delta_);
        if (!fired && since_comm_ < tau_max_) {
            return std::nullopt;
        }
        CommunicationEvent event{step_, since_comm_, !fired};
        prediction_ = state_;
        since_comm_ = 0;
        ++resets_;
        return event;
    }

    /// Replaces the receiver's prediction model; takes effect from the next step.
    void set_model(const DiscreteLinearModel& model)
    {
        require_dim(plant_.dim(), model.dim(), "etse model update");
        predictor_ = model.transition();
    }

    [[nodiscard]] const Vector& state() const { return state_; }
    [[nodiscard]] const Vector& prediction() const { return prediction_; }
    [[nodiscard]] std::int64_t step_index() const { return step_; }
    /// Number of receiver resets performed so far.
    [[nodiscard]] std::int64_t resets() const { return resets_; }
    [[nodiscard]] std::int64_t steps_since_comm() const { return since_comm_; }
    [[nodiscard]] const DiscreteLinearModel& plant() const { return plant_; }

private:
    DiscreteLinearModel plant_;
    Matrix predictor_;
    double delta_;
    std::int64_t tau_max_;
    Vector state_;
    Vector prediction_;
    Vector xi_;
    std::int64_t step_ = 0;
    std::int64_t since_comm_ = 0;
    std::int64_t resets_ = 0;
};

struct EtseResult {
    Trajectory states;      ///< x(k), k = 0..steps
    Trajectory predictions; ///< x̌(k) after any reset at step k
    CommunicationLog log;
};

inline EtseResult run_etse(const DiscreteLinearModel& plant, const DiscreteLinearModel& model,
                           const TriggerConfig& cfg, std::int64_t steps, RandomSource& rng,
                           std::optional<Vector> x0 = std::nullopt)
{
    require(steps >= 1, "run_etse: steps must be >= 1");
    EtseLoop loop(plant, model, cfg, std::move(x0));
    EtseResult out;
    out.states.push(0.0, loop.state());
    out.predictions.push(0.0, loop.prediction());
    for (std::int64_t k = 1; k <= steps; ++k) {
        if (auto event = loop.step(rng)) {
            out.log.record(event->step, event->censored);
        }
        out.states.push(static_cast<double>(k), loop.state());
        out.predictions.push(static_cast<double>(k), loop.prediction());
    }
    return out;
}

/// Runs the loop from x = x̌ = 0 until `count` inter-communication times were observed.
inline StoppingSample collect_stopping_times(const DiscreteLinearModel& plant, const DiscreteLinearModel& model,
                                             const TriggerConfig& cfg, std::size_t count, RandomSource& rng)
{
    EtseLoop loop(plant, model, cfg);
    StoppingSample out;
    while (out.size() < count) {
        if (auto event = loop.step(rng)) {
            out.push(static_cast<double>(event->gap), event->censored);
        }
    }
    return out;
}

/// Gaps between successive events; the first gap is measured from step 0.
inline StoppingSample intercomm_times(const CommunicationLog& log, std::int64_t origin = 0)
{
    require(!log.empty(), "intercomm_times: empty communication log");
    StoppingSample out;
    std::int64_t previous = origin;
    for (std::size_t i = 0; i < log.size(); ++i) {
        out.push(static_cast<double>(log.event_steps[i] - previous), log.censored[i] != 0);
        previous = log.event_steps[i];
    }
    return out;
}

/// Columns: step, x0.., x_pred0.., event_flag.
inline void write_etse_csv(std::ostream& out, const EtseResult& run)
{
    const Eigen::Index n = run.states.states.front().size();
    out << "step";
    for (Eigen::Index i = 0; i < n; ++i) {
        out << ",x" << i;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        out << ",x_pred" << i;
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
        for (Eigen::Index i = 0; i < n; ++i) {
            out << ',' << csv::format(run.states.states[k](i));
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            out << ',' << csv::format(run.predictions.states[k](i));
        }
        out << ',' << (event ? 1 : 0) << '\n';
    }
}

} // namespace etl
