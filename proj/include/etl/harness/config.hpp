#pragma once

// Experiment configuration and the named scenario presets.

#include "etl/etse.hpp"
#include "etl/harness/model_io.hpp"
#include "etl/kalman.hpp"
#include "etl/sysid.hpp"
#include "etl/triggers.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace etl {

enum class EstimationMode { full_state, kalman };
enum class LearningMode { oracle, least_squares };

/// Thrown for malformed or inconsistent experiment configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
    EstimationMode mode = EstimationMode::full_state;
    std::optional<DiscreteLinearModel> plant;
    std::optional<DiscreteLinearModel> model;
    std::optional<OutputModel> output_plant;
    std::optional<OutputModel> output_model;
    TriggerConfig trigger;
    TriggerKind trigger_kind = TriggerKind::approx_mean;
    BufferPolicy buffer_policy = BufferPolicy::fill_then_evaluate;
    LearningMode learning = LearningMode::oracle;
    std::size_t episode_length = 10000;
    std::uint64_t seed = 1;
    std::int64_t steps = 100000;
    std::int64_t burn_in = 1000; ///< kalman mode only

    void validate() const
    {
        try {
            trigger.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        if (steps < 1) throw ConfigError("config: steps must be >= 1");
        if (burn_in < 0) throw ConfigError("config: burn_in must be >= 0");
        if (mode == EstimationMode::full_state) {
            if (!plant || !model) throw ConfigError("config: full_state mode needs 'plant' and 'model'");
            if (plant->dim() != model->dim()) throw ConfigError("config: plant and model dimensions differ");
            if (learning == LearningMode::least_squares &&
                episode_length < LearningDataset::minimum_transitions(plant->dim())) {
                throw ConfigError("config: episode_length below the identification minimum");
            }
        } else {
            if (!output_plant || !output_model) throw ConfigError("config: kalman mode needs 'plant' and 'model'");
            if (output_plant->state_dim() != output_model->state_dim() ||
                output_plant->output_dim() != output_model->output_dim()) {
                throw ConfigError("config: plant and model dimensions differ");
            }
            if (learning != LearningMode::oracle) {
                throw ConfigError("config: kalman mode supports oracle learning only");
            }
        }
    }
};

inline std::string_view to_string(EstimationMode mode)
{
    return mode == EstimationMode::full_state ? "full_state" : "kalman";
}

inline std::string_view to_string(LearningMode mode)
{
    return mode == LearningMode::oracle ? "oracle" : "least_squares";
}

namespace io {

inline json to_json(const ExperimentConfig& cfg)
{
    json doc;
    doc["mode"] = std::string(to_string(cfg.mode));
    if (cfg.mode == EstimationMode::full_state) {
        doc["plant"] = to_json(*cfg.plant);
        doc["model"] = to_json(*cfg.model);
    } else {
        doc["plant"] = to_json(*cfg.output_plant);
        doc["model"] = to_json(*cfg.output_model);
        doc["burn_in"] = cfg.burn_in;
    }
    doc["trigger"] = to_json(cfg.trigger);
    doc["trigger_kind"] = std::string(to_string(cfg.trigger_kind));
    doc["buffer_policy"] = std::string(to_string(cfg.buffer_policy));
    doc["learning"] = std::string(to_string(cfg.learning));
    doc["episode_length"] = cfg.episode_length;
    doc["seed"] = cfg.seed;
    doc["steps"] = cfg.steps;
    return doc;
}

inline ExperimentConfig experiment_from_json(const json& doc)
{
    try {
        ExperimentConfig cfg;
        const std::string mode = doc.value("mode", std::string("full_state"));
        if (mode == "full_state") {
            cfg.mode = EstimationMode::full_state;
            cfg.plant = discrete_from_json(doc.at("plant"));
            cfg.model = discrete_from_json(doc.at("model"));
        } else if (mode == "kalman") {
            cfg.mode = EstimationMode::kalman;
            cfg.output_plant = output_from_json(doc.at("plant"));
            cfg.output_model = output_from_json(doc.at("model"));
        } else {
            throw ConfigError("config: unknown mode '" + mode + "'");
        }
        if (doc.contains("trigger")) {
            cfg.trigger = trigger_config_from_json(doc.at("trigger"));
        }
        cfg.trigger_kind = parse_trigger_kind(doc.value("trigger_kind", std::string("approx_mean")));
        cfg.buffer_policy = parse_buffer_policy(doc.value("buffer_policy", std::string("fill_then_evaluate")));
        const std::string learning = doc.value("learning", std::string("oracle"));
        if (learning == "oracle") {
            cfg.learning = LearningMode::oracle;
        } else if (learning == "least_squares") {
            cfg.learning = LearningMode::least_squares;
        } else {
            throw ConfigError("config: unknown learning mode '" + learning + "'");
        }
        cfg.episode_length = doc.value("episode_length", cfg.episode_length);
        cfg.seed = doc.value("seed", cfg.seed);
        cfg.steps = doc.value("steps", cfg.steps);
        cfg.burn_in = doc.value("burn_in", cfg.burn_in);
        cfg.validate();
        return cfg;
    } catch (const ConfigError&) {
        throw;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

} // namespace io

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

namespace scenarios {

/// Linearized closed loop of a stabilized inverted pendulum; two measured states.
inline Matrix pendulum_transition()
{
    Matrix a(4, 4);
    a << 1.000, 0.010, -0.005, 0.000,
         0.017, 1.027, -0.301, -0.061,
         0.000, 0.000, 0.997, 0.009,
         0.046, 0.067, -0.507, 0.850;
    return a;
}

inline Matrix pendulum_output()
{
    Matrix c(2, 4);
    c << 1, 0, 0, 0,
         0, 0, 1, 0;
    return c;
}

/// Pendulum with Q = 0.1 I₄ and R = r I₂.
inline OutputModel pendulum(double r)
{
    return {pendulum_transition(), pendulum_output(), 0.1 * Matrix::Identity(4, 4), r * Matrix::Identity(2, 2)};
}

inline DiscreteLinearModel scalar_system(double a, double q)
{
    return DiscreteLinearModel::scalar(a, q);
}

/// True system of the scalar scenarios: x(k+1) = 0.9 x(k) + ε, ε ~ N(0, 1).
inline DiscreteLinearModel scalar_plant() { return scalar_system(0.9, 1.0); }

/// Mismatched model with faster decay: (0.8, 1).
inline DiscreteLinearModel scalar_detuned_model() { return scalar_system(0.8, 1.0); }

/// Model whose mean stopping time nearly matches the plant's while the
/// distribution differs: Â = 0.5 with noise standard deviation 1.7.
inline DiscreteLinearModel scalar_mean_matched_model() { return scalar_system(0.5, 1.7 * 1.7); }

inline ExperimentConfig detection()
{
    ExperimentConfig cfg;
    cfg.plant = scalar_plant();
    cfg.model = scalar_detuned_model();
    cfg.trigger = TriggerConfig{.delta = 3.0, .tau_max = 100, .n = 300, .m = 100000, .alpha = 0.05};
    cfg.trigger_kind = TriggerKind::approx_mean;
    cfg.steps = 40000;
    return cfg;
}

inline ExperimentConfig matched()
{
    ExperimentConfig cfg = detection();
    cfg.model = scalar_plant();
    cfg.steps = 1000000;
    return cfg;
}

inline ExperimentConfig counterexample()
{
    ExperimentConfig cfg = detection();
    cfg.model = scalar_mean_matched_model();
    cfg.trigger.n = 10000;
    cfg.trigger.m = 10000;
    cfg.trigger_kind = TriggerKind::two_sample_ks;
    cfg.steps = 250000;
    return cfg;
}

inline ExperimentConfig kalman()
{
    ExperimentConfig cfg;
    cfg.mode = EstimationMode::kalman;
    cfg.output_plant = pendulum(0.1);
    cfg.output_model = pendulum(0.5);
    cfg.trigger = TriggerConfig{.delta = 1.0, .tau_max = 100, .n = 5000, .m = 5000, .alpha = 0.05};
    cfg.trigger_kind = TriggerKind::two_sample_ks;
    cfg.steps = 80000;
    cfg.burn_in = 1000;
    return cfg;
}

inline const std::map<std::string, ExperimentConfig (*)()>& presets()
{
    static const std::map<std::string, ExperimentConfig (*)()> table{
        {"detection", &detection},
        {"matched", &matched},
        {"counterexample", &counterexample},
        {"kalman", &kalman},
    };
    return table;
}

} // namespace scenarios

/// Loads a config: a preset name (optionally "preset:<name>") or a JSON file path.
inline ExperimentConfig load_experiment_config(const std::string& source)
{
    std::string name = source;
    if (name.rfind("preset:", 0) == 0) {
        name = name.substr(7);
    }
    const auto& table = scenarios::presets();
    if (auto it = table.find(name); it != table.end()) {
        return it->second();
    }
    std::ifstream in(source);
    if (!in) {
        throw ConfigError("config: cannot open '" + source + "' and no preset has that name");
    }
    io::json doc;
    try {
        in >> doc;
    } catch (const io::json::exception& e) {
        throw ConfigError("config: " + source + ": " + e.what());
    }
    return io::experiment_from_json(doc);
}

} // namespace etl
