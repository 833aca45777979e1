#pragma once

// JSON documents for models. Matrices are flat row-major arrays:
//   discrete:   {"dim": n, "A": [...], "Q": [...]}
//   continuous: {"dim": n, "drift": [...], "diffusion": [...]}
//   output:     {"dim": n, "outputs": p, "A": [...], "C": [...], "Q": [...], "R": [...]}
// An optional "degenerate": true admits semidefinite noise.

#include "etl/kalman.hpp"
#include "etl/linsys.hpp"
#include "etl/triggers.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace etl::io {

using json = nlohmann::json;

inline Matrix read_matrix(const json& doc, const char* key, Eigen::Index rows, Eigen::Index cols)
{
    if (!doc.contains(key)) {
        throw std::invalid_argument(std::string("model document: missing key '") + key + "'");
    }
    const json& entry = doc.at(key);
    if (entry.is_number()) {
        return from_row_major({entry.get<double>()}, rows, cols);
    }
    return from_row_major(entry.get<std::vector<double>>(), rows, cols);
}

inline Eigen::Index read_dim(const json& doc, const char* key = "dim")
{
    if (!doc.contains(key)) {
        throw std::invalid_argument(std::string("model document: missing key '") + key + "'");
    }
    const auto dim = doc.at(key).get<long long>();
    require(dim > 0, std::string("model document: '") + key + "' must be positive");
    return static_cast<Eigen::Index>(dim);
}

inline ModelChecks read_checks(const json& doc)
{
    ModelChecks checks;
    if (doc.value("degenerate", false)) {
        checks.allow_degenerate_noise = true;
    }
    if (doc.contains("require_stable")) {
        checks.require_stable = doc.at("require_stable").get<bool>();
    }
    return checks;
}

inline DiscreteLinearModel discrete_from_json(const json& doc)
{
    const Eigen::Index n = read_dim(doc);
    return {read_matrix(doc, "A", n, n), read_matrix(doc, "Q", n, n), read_checks(doc)};
}

inline json to_json(const DiscreteLinearModel& model)
{
    json doc{{"dim", model.dim()}, {"A", to_row_major(model.transition())}, {"Q", to_row_major(model.noise_cov())}};
    if (model.checks().allow_degenerate_noise) {
        doc["degenerate"] = true;
    }
    return doc;
}

inline ContinuousLinearModel continuous_from_json(const json& doc)
{
    const Eigen::Index n = read_dim(doc);
    return {read_matrix(doc, "drift", n, n), read_matrix(doc, "diffusion", n, n), read_checks(doc)};
}

inline json to_json(const ContinuousLinearModel& model)
{
    return json{{"dim", model.dim()},
                {"drift", to_row_major(model.drift())},
                {"diffusion", to_row_major(model.diffusion())}};
}

inline OutputModel output_from_json(const json& doc)
{
    const Eigen::Index n = read_dim(doc);
    const Eigen::Index p = read_dim(doc, "outputs");
    return {read_matrix(doc, "A", n, n), read_matrix(doc, "C", p, n), read_matrix(doc, "Q", n, n),
            read_matrix(doc, "R", p, p)};
}

inline json to_json(const OutputModel& model)
{
    return json{{"dim", model.state_dim()},
                {"outputs", model.output_dim()},
                {"A", to_row_major(model.A())},
                {"C", to_row_major(model.C())},
                {"Q", to_row_major(model.Q())},
                {"R", to_row_major(model.R())}};
}

inline json to_json(const TriggerConfig& cfg)
{
    return json{{"delta", cfg.delta}, {"tau_max", cfg.tau_max}, {"n", cfg.n}, {"m", cfg.m}, {"alpha", cfg.alpha}};
}

inline TriggerConfig trigger_config_from_json(const json& doc)
{
    TriggerConfig cfg;
    cfg.delta = doc.value("delta", cfg.delta);
    cfg.tau_max = doc.value("tau_max", cfg.tau_max);
    cfg.n = doc.value("n", cfg.n);
    cfg.m = doc.value("m", cfg.m);
    cfg.alpha = doc.value("alpha", cfg.alpha);
    cfg.validate();
    return cfg;
}

inline json to_json(const TriggerVerdict& v)
{
    return json{{"kind", std::string(to_string(v.kind))},
                {"statistic", v.statistic},
                {"kappa", v.kappa},
                {"fired", v.fired},
                {"buffer_size", v.buffer_size},
                {"mc_size", v.mc_size},
                {"alpha", v.alpha}};
}

} // namespace etl::io
