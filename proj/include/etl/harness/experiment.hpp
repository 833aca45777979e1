#pragma once

// Closed-loop event-triggered learning: the ETSE loop produces stopping times,
// a buffer feeds the learning trigger, and a fired trigger relearns the model,
// pushes it to the predictor, regenerates the model-based reference sample and
// clears the buffer.

#include "etl/etse.hpp"
#include "etl/harness/config.hpp"
#include "etl/harness/model_io.hpp"
#include "etl/kalman.hpp"
#include "etl/stopping.hpp"
#include "etl/sysid.hpp"
#include "etl/triggers.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace etl {

enum class EventType { state_event, forced_event, evaluation, model_update };

inline std::string_view to_string(EventType type)
{
    switch (type) {
    case EventType::state_event: return "state_event";
    case EventType::forced_event: return "forced_event";
    case EventType::evaluation: return "evaluation";
    case EventType::model_update: return "model_update";
    }
    return "unknown";
}

struct EventRecord {
    std::int64_t step = 0;
    EventType type = EventType::state_event;
    std::int64_t gap = 0;           ///< communication events
    std::optional<TriggerVerdict> verdict; ///< evaluations
    int model_version = 0;
};

/// Buffer mean after each accepted stopping time, against the model-based
/// mean and its confidence band.
struct RunningMeanPoint {
    std::int64_t step = 0;
    std::size_t buffer_size = 0;
    double buffer_mean = 0.0;
    double model_mean = 0.0;
    double kappa = 0.0;
    int model_version = 0;
};

/// Statistics of the stopping times observed under one model version.
struct ModelPhase {
    int model_version = 0;
    std::int64_t start_step = 0;
    std::size_t gaps = 0;
    double gap_sum = 0.0;
    double model_mean = 0.0;

    [[nodiscard]] double mean_gap() const { return gaps == 0 ? 0.0 : gap_sum / static_cast<double>(gaps); }
};

struct ExperimentResult {
    std::vector<EventRecord> events;
    std::vector<RunningMeanPoint> running_mean;
    std::vector<ModelPhase> phases;
    std::int64_t state_events = 0;
    std::int64_t forced_events = 0;
    std::int64_t receiver_resets = 0;
    std::int64_t evaluations = 0;
    std::int64_t fires = 0;
    std::int64_t model_updates = 0;
    std::int64_t learning_transmissions = 0; ///< full-rate samples sent during learning episodes
    std::int64_t model_message_values = 0;   ///< scalar values sent for model updates

    [[nodiscard]] std::vector<TriggerVerdict> verdicts() const
    {
        std::vector<TriggerVerdict> out;
        for (const auto& e : events) {
            if (e.verdict) out.push_back(*e.verdict);
        }
        return out;
    }
};

namespace detail {

// Full-state process: (A, Q) plant and model.
class FullStateProcess {
public:
    explicit FullStateProcess(const ExperimentConfig& cfg)
        : cfg_(cfg), plant_(*cfg.plant), model_(*cfg.model), loop_(*cfg.plant, *cfg.model, cfg.trigger)
    {
    }

    std::optional<CommunicationEvent> step(RandomSource& rng) { return loop_.step(rng); }
    [[nodiscard]] std::int64_t resets() const { return loop_.resets(); }

    StoppingSample reference(std::uint64_t seed) const
    {
        return sample_stopping_times(model_, cfg_.trigger.delta, cfg_.trigger.tau_max, cfg_.trigger.m,
                                     MonteCarloOptions{.seed = seed});
    }

    /// Returns the number of full-rate transmissions spent on learning.
    std::int64_t learn(RandomSource& rng)
    {
        if (cfg_.learning == LearningMode::oracle) {
            model_ = plant_;
            loop_.set_model(model_);
            return 0;
        }
        std::size_t length = cfg_.episode_length;
        std::int64_t spent = 0;
        for (int attempt = 0;; ++attempt) {
            const LearningDataset data = learning_episode(plant_, length, rng);
            spent += static_cast<std::int64_t>(length);
            try {
                model_ = identify_discrete(data);
                break;
            } catch (const UnstableModelError&) {
                if (attempt >= 4) throw;
                length *= 2;
            }
        }
        loop_.set_model(model_);
        return spent;
    }

    [[nodiscard]] std::int64_t model_message_values() const { return 2 * model_.dim() * model_.dim(); }
    [[nodiscard]] std::int64_t collect_from(std::int64_t) const { return 0; }
    [[nodiscard]] io::json model_json() const { return io::to_json(model_); }

private:
    const ExperimentConfig& cfg_;
    DiscreteLinearModel plant_;
    DiscreteLinearModel model_;
    EtseLoop loop_;
};

// Output-measurement process: the sender filters, the receiver predicts.
class KalmanProcess {
public:
    explicit KalmanProcess(const ExperimentConfig& cfg)
        : cfg_(cfg), plant_(*cfg.output_plant), model_(*cfg.output_model),
          loop_(*cfg.output_plant, *cfg.output_model, cfg.trigger)
    {
    }

    std::optional<CommunicationEvent> step(RandomSource& rng) { return loop_.step(rng); }
    [[nodiscard]] std::int64_t resets() const { return loop_.resets(); }

    StoppingSample reference(std::uint64_t seed) const
    {
        return sample_stopping_times_kf(model_, cfg_.trigger.delta, cfg_.trigger.tau_max, cfg_.trigger.m,
                                        MonteCarloOptions{.seed = seed});
    }

    std::int64_t learn(RandomSource&)
    {
        model_ = plant_;
        loop_.set_model(model_);
        return 0;
    }

    [[nodiscard]] std::int64_t model_message_values() const
    {
        const auto n = model_.state_dim();
        const auto p = model_.output_dim();
        return 2 * n * n + p * n + p * p;
    }

    /// A new gain restarts the filter transient; stopping times are collected
    /// again once it has decayed.
    [[nodiscard]] std::int64_t collect_from(std::int64_t step) const { return step + cfg_.burn_in; }
    [[nodiscard]] io::json model_json() const { return io::to_json(model_); }

private:
    const ExperimentConfig& cfg_;
    OutputModel plant_;
    OutputModel model_;
    KalmanEtseLoop loop_;
};

template <class Process>
ExperimentResult run_closed_loop(const ExperimentConfig& cfg, Process& process)
{
    ExperimentResult out;
    RandomSource plant_rng(derive_seed(cfg.seed, 1));
    RandomSource learning_rng(derive_seed(cfg.seed, 2));
    int version = 0;
    auto reference_seed = [&](int v) { return derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(v)); };

    LearningTrigger trigger(cfg.trigger_kind, cfg.trigger.alpha, static_cast<double>(cfg.trigger.tau_max),
                            cfg.trigger.n);
    trigger.set_reference(process.reference(reference_seed(version)));
    TriggerBuffer buffer(cfg.trigger.n, cfg.buffer_policy);
    const double mean_kappa = kappa_approx_mean(cfg.trigger.alpha, cfg.trigger.n, cfg.trigger.m,
                                                static_cast<double>(cfg.trigger.tau_max));

    std::int64_t collect_after = cfg.mode == EstimationMode::kalman ? cfg.burn_in : 0;
    out.phases.push_back(ModelPhase{.model_version = 0, .start_step = 0, .model_mean = trigger.expected_tau()});

    for (std::int64_t k = 1; k <= cfg.steps; ++k) {
        const auto event = process.step(plant_rng);
        if (!event) {
            continue;
        }
        out.events.push_back(EventRecord{.step = k,
                                          .type = event->censored ? EventType::forced_event : EventType::state_event,
                                          .gap = event->gap,
                                          .verdict = std::nullopt,
                                          .model_version = version});
        (event->censored ? out.forced_events : out.state_events) += 1;
        if (k <= collect_after) {
            continue;
        }
        ModelPhase& phase = out.phases.back();
        phase.gaps += 1;
        phase.gap_sum += static_cast<double>(event->gap);

        if (!buffer.push(static_cast<double>(event->gap))) {
            out.running_mean.push_back({k, buffer.size(), buffer.mean(), trigger.expected_tau(), mean_kappa, version});
            continue;
        }
        const std::vector<double> values = buffer.values();
        out.running_mean.push_back({k, buffer.size(), empirical_mean(values), trigger.expected_tau(), mean_kappa, version});
        const TriggerVerdict verdict = trigger.evaluate(values);
        out.evaluations += 1;
        out.events.push_back(EventRecord{.step = k, .type = EventType::evaluation, .verdict = verdict, .model_version = version});
        buffer.after_evaluation(verdict.fired);
        if (!verdict.fired) {
            continue;
        }
        out.fires += 1;
        out.learning_transmissions += process.learn(learning_rng);
        out.model_message_values += process.model_message_values();
        ++version;
        trigger.set_reference(process.reference(reference_seed(version)));
        buffer.clear();
        out.model_updates += 1;
        out.events.push_back(EventRecord{.step = k, .type = EventType::model_update, .verdict = std::nullopt, .model_version = version});
        out.phases.push_back(ModelPhase{.model_version = version, .start_step = k, .model_mean = trigger.expected_tau()});
        collect_after = process.collect_from(k);
    }
    out.receiver_resets = process.resets();
    return out;
}

} // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg)
{
    cfg.validate();
    if (cfg.mode == EstimationMode::full_state) {
        detail::FullStateProcess process(cfg);
        return detail::run_closed_loop(cfg, process);
    }
    detail::KalmanProcess process(cfg);
    return detail::run_closed_loop(cfg, process);
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

inline void write_events_csv(std::ostream& out, const ExperimentResult& result)
{
    out << "step,type,gap,model_version,kind,statistic,kappa,fired,buffer_size,mc_size,alpha\n";
    for (const auto& e : result.events) {
        out << e.step << ',' << to_string(e.type) << ',' << e.gap << ',' << e.model_version;
        if (e.verdict) {
            const auto& v = *e.verdict;
            out << ',' << to_string(v.kind) << ',' << csv::format(v.statistic) << ',' << csv::format(v.kappa) << ','
                << (v.fired ? 1 : 0) << ',' << v.buffer_size << ',' << v.mc_size << ',' << csv::format(v.alpha);
        } else {
            out << ",,,,,,,";
        }
        out << '\n';
    }
}

inline void write_verdicts_csv(std::ostream& out, const ExperimentResult& result)
{
    out << "step,kind,statistic,kappa,fired,buffer_size,mc_size,alpha,model_version\n";
    for (const auto& e : result.events) {
        if (!e.verdict) continue;
        const auto& v = *e.verdict;
        out << e.step << ',' << to_string(v.kind) << ',' << csv::format(v.statistic) << ',' << csv::format(v.kappa)
            << ',' << (v.fired ? 1 : 0) << ',' << v.buffer_size << ',' << v.mc_size << ',' << csv::format(v.alpha)
            << ',' << e.model_version << '\n';
    }
}

inline void write_running_mean_csv(std::ostream& out, const ExperimentResult& result)
{
    out << "step,buffer_size,buffer_mean,model_mean,band_lower,band_upper,model_version\n";
    for (const auto& p : result.running_mean) {
        out << p.step << ',' << p.buffer_size << ',' << csv::format(p.buffer_mean) << ',' << csv::format(p.model_mean)
            << ',' << csv::format(p.model_mean - p.kappa) << ',' << csv::format(p.model_mean + p.kappa) << ','
            << p.model_version << '\n';
    }
}

inline io::json experiment_manifest(const ExperimentConfig& cfg, const ExperimentResult& result)
{
    io::json doc;
    doc["config"] = io::to_json(cfg);
    const double tau_max = static_cast<double>(cfg.trigger.tau_max);
    doc["kappa"] = {
        {"exact_mean", kappa_exact_mean(cfg.trigger.alpha, cfg.trigger.n, tau_max)},
        {"approx_mean", kappa_approx_mean(cfg.trigger.alpha, cfg.trigger.n, cfg.trigger.m, tau_max)},
        {"exact_cdf", kappa_exact_cdf(cfg.trigger.alpha, cfg.trigger.n)},
        {"two_sample_ks", kappa_ks(cfg.trigger.alpha, cfg.trigger.n, cfg.trigger.m)},
    };
    io::json verdicts = io::json::array();
    for (const auto& e : result.events) {
        if (!e.verdict) continue;
        io::json v = io::to_json(*e.verdict);
        v["step"] = e.step;
        verdicts.push_back(std::move(v));
    }
    doc["verdicts"] = std::move(verdicts);
    io::json phases = io::json::array();
    for (const auto& p : result.phases) {
        phases.push_back({{"model_version", p.model_version},
                          {"start_step", p.start_step},
                          {"gaps", p.gaps},
                          {"mean_gap", p.mean_gap()},
                          {"model_mean", p.model_mean}});
    }
    doc["phases"] = std::move(phases);
    doc["counts"] = {{"state_events", result.state_events},
                     {"forced_events", result.forced_events},
                     {"receiver_resets", result.receiver_resets},
                     {"evaluations", result.evaluations},
                     {"fires", result.fires},
                     {"model_updates", result.model_updates}};
    doc["learning_cost"] = {{"episode_transmissions", result.learning_transmissions},
                            {"model_message_values", result.model_message_values}};
    return doc;
}

inline void write_json(const std::filesystem::path& path, const io::json& doc)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

template <class Writer>
void write_file(const std::filesystem::path& path, Writer&& writer)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    writer(out);
}

/// Writes events.csv, verdicts.csv, running_mean.csv and manifest.json.
inline io::json write_experiment(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                                 const ExperimentResult& result)
{
    std::filesystem::create_directories(dir);
    write_file(dir / "events.csv", [&](std::ostream& o) { write_events_csv(o, result); });
    write_file(dir / "verdicts.csv", [&](std::ostream& o) { write_verdicts_csv(o, result); });
    write_file(dir / "running_mean.csv", [&](std::ostream& o) { write_running_mean_csv(o, result); });
    io::json manifest = experiment_manifest(cfg, result);
    write_json(dir / "manifest.json", manifest);
    return manifest;
}

} // namespace etl
