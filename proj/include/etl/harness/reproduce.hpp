#pragma once

// Data bundles behind the figures of the numerical examples. Every bundle is a
// directory of CSV series plus manifest.json with the parameters, seed, radii
// and verdicts.

#include "etl/etse.hpp"
#include "etl/harness/config.hpp"
#include "etl/harness/experiment.hpp"
#include "etl/harness/model_io.hpp"
#include "etl/kalman.hpp"
#include "etl/stopping.hpp"
#include "etl/triggers.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace etl {

struct ReproduceOptions {
    std::uint64_t seed = 1;
};

namespace detail {

/// Verdicts of all four triggers for one buffer against one model reference.
/// The exact triggers use the reference sample's mean and ECDF as stand-ins
/// for E[τ̂] and F̂.
inline io::json compare_samples(const StoppingSample& empirical, const StoppingSample& reference, double alpha,
                                double tau_max)
{
    io::json verdicts = io::json::object();
    for (TriggerKind kind : {TriggerKind::exact_mean, TriggerKind::approx_mean, TriggerKind::exact_cdf,
                             TriggerKind::two_sample_ks}) {
        LearningTrigger trigger(kind, alpha, tau_max, empirical.size());
        trigger.set_reference(reference);
        verdicts[std::string(to_string(kind))] = io::to_json(trigger.evaluate(empirical.view()));
    }
    const auto empirical_values = empirical.view();
    const auto reference_values = reference.view();
    return {
        {"empirical", {{"size", empirical.size()},
                       {"mean", empirical_mean(empirical_values)},
                       {"std", std::sqrt(sample_variance(empirical_values))},
                       {"censored_fraction", empirical.censored_fraction()}}},
        {"model", {{"size", reference.size()},
                   {"mean", empirical_mean(reference_values)},
                   {"std", std::sqrt(sample_variance(reference_values))},
                   {"censored_fraction", reference.censored_fraction()}}},
        {"mean_gap", std::abs(empirical_mean(empirical_values) - empirical_mean(reference_values))},
        {"ks_statistic", ks_statistic(empirical_values, reference_values)},
        {"verdicts", std::move(verdicts)},
    };
}

/// Columns: t, F_model, F_empirical, band_lower, band_upper on t = 0..τ_max,
/// with the band F_model ± κ_ks.
inline void write_cdf_pair_csv(std::ostream& out, const StoppingSample& empirical, const StoppingSample& reference,
                               double alpha, std::int64_t tau_max)
{
    const EmpiricalCdf f_model(reference.values);
    const EmpiricalCdf f_emp(empirical.values);
    const double kappa = kappa_ks(alpha, empirical.size(), reference.size());
    out << "t,F_model,F_empirical,band_lower,band_upper\n";
    for (std::int64_t t = 0; t <= tau_max; ++t) {
        const double x = static_cast<double>(t);
        const double fm = f_model(x);
        out << t << ',' << csv::format(fm) << ',' << csv::format(f_emp(x)) << ','
            << csv::format(std::max(0.0, fm - kappa)) << ',' << csv::format(std::min(1.0, fm + kappa)) << '\n';
    }
}

/// Columns: quantity, empirical, model, band_lower, band_upper (mean ± κ_approx).
inline void write_mean_summary_csv(std::ostream& out, const io::json& cmp, double kappa)
{
    const double emp = cmp["empirical"]["mean"];
    const double mod = cmp["model"]["mean"];
    out << "quantity,empirical,model,band_lower,band_upper\n";
    out << "mean_tau," << csv::format(emp) << ',' << csv::format(mod) << ',' << csv::format(mod - kappa) << ','
        << csv::format(mod + kappa) << '\n';
}

inline io::json scalar_comparison_bundle(const std::filesystem::path& dir, const std::string& figure,
                                         const DiscreteLinearModel& plant, const DiscreteLinearModel& model,
                                         const TriggerConfig& cfg, std::uint64_t seed)
{
    RandomSource plant_rng(derive_seed(seed, 1));
    const StoppingSample empirical = collect_stopping_times(plant, model, cfg, cfg.n, plant_rng);
    const StoppingSample reference = sample_stopping_times(model, cfg.delta, cfg.tau_max, cfg.m,
                                                           MonteCarloOptions{.seed = derive_seed(seed, 1000)});
    const double tau_max = static_cast<double>(cfg.tau_max);
    io::json cmp = compare_samples(empirical, reference, cfg.alpha, tau_max);
    const double kappa = kappa_approx_mean(cfg.alpha, cfg.n, cfg.m, tau_max);

    write_file(dir / "cdf.csv", [&](std::ostream& o) { write_cdf_pair_csv(o, empirical, reference, cfg.alpha, cfg.tau_max); });
    write_file(dir / "means.csv", [&](std::ostream& o) { write_mean_summary_csv(o, cmp, kappa); });
    write_file(dir / "empirical_tau.csv", [&](std::ostream& o) { write_sample_csv(o, empirical); });

    io::json manifest;
    manifest["figure"] = figure;
    manifest["seed"] = seed;
    manifest["plant"] = io::to_json(plant);
    manifest["model"] = io::to_json(model);
    manifest["trigger"] = io::to_json(cfg);
    manifest["kappa"] = {{"exact_mean", kappa_exact_mean(cfg.alpha, cfg.n, tau_max)},
                         {"approx_mean", kappa},
                         {"exact_cdf", kappa_exact_cdf(cfg.alpha, cfg.n)},
                         {"two_sample_ks", kappa_ks(cfg.alpha, cfg.n, cfg.m)}};
    manifest["comparison"] = cmp;
    manifest["fired"] = {{"approx_mean", cmp["verdicts"]["approx_mean"]["fired"]},
                         {"two_sample_ks", cmp["verdicts"]["two_sample_ks"]["fired"]}};
    return manifest;
}

inline TriggerConfig scalar_trigger_config()
{
    return TriggerConfig{.delta = 3.0, .tau_max = 100, .n = 300, .m = 100000, .alpha = 0.05};
}

inline TriggerConfig kalman_trigger_config()
{
    return TriggerConfig{.delta = 1.0, .tau_max = 100, .n = 5000, .m = 5000, .alpha = 0.05};
}

// Sample path with the error signal and the first ten inter-communication times.
inline io::json reproduce_fig2(const std::filesystem::path& dir, std::uint64_t seed)
{
    const TriggerConfig cfg = scalar_trigger_config();
    const auto plant = scenarios::scalar_plant();
    const auto model = scenarios::scalar_detuned_model();
    RandomSource rng(derive_seed(seed, 1));
    EtseResult run = run_etse(plant, model, cfg, 100, rng);
    while (run.log.size() < 10) {
        // Extend the horizon until ten events are visible.
        const auto steps = static_cast<std::int64_t>(run.states.size() - 1) * 2;
        rng = RandomSource(derive_seed(seed, 1));
        run = run_etse(plant, model, cfg, steps, rng);
    }
    write_file(dir / "trajectory.csv", [&](std::ostream& o) { write_etse_csv(o, run); });

    // Error before the reset is not stored in the trajectory; recompute it along the path.
    double max_error_between_events = 0.0;
    std::size_t next_event = 0;
    write_file(dir / "error.csv", [&](std::ostream& o) {
        o << "step,error_norm,event_flag\n";
        Vector pred = run.predictions.states.front();
        for (std::size_t k = 0; k < run.states.size(); ++k) {
            const auto step = static_cast<std::int64_t>(run.states.times[k]);
            if (k > 0) pred = model.transition() * pred;
            const double err = (run.states.states[k] - pred).norm();
            bool event = false;
            if (next_event < run.log.size() && run.log.event_steps[next_event] == step) {
                event = true;
                ++next_event;
                pred = run.states.states[k];
            } else {
                max_error_between_events = std::max(max_error_between_events, err);
            }
            o << step << ',' << csv::format(err) << ',' << (event ? 1 : 0) << '\n';
        }
    });

    const StoppingSample gaps = intercomm_times(run.log);
    io::json first_gaps = io::json::array();
    write_file(dir / "gaps.csv", [&](std::ostream& o) {
        o << "index,tau,censored\n";
        for (std::size_t i = 0; i < 10; ++i) {
            o << i + 1 << ',' << csv::format(gaps.values[i]) << ',' << int(gaps.censored[i]) << '\n';
            first_gaps.push_back(gaps.values[i]);
        }
    });

    return {{"figure", "fig2"},
            {"seed", seed},
            {"plant", io::to_json(plant)},
            {"model", io::to_json(model)},
            {"trigger", io::to_json(cfg)},
            {"steps", run.states.size() - 1},
            {"events", run.log.size()},
            {"first_gaps", first_gaps},
            {"max_error_between_events", max_error_between_events}};
}

// Closed-loop detection: running buffer mean against the model band.
inline io::json reproduce_fig3(const std::filesystem::path& dir, std::uint64_t seed)
{
    ExperimentConfig cfg = scenarios::detection();
    cfg.seed = seed;
    const ExperimentResult result = run_experiment(cfg);
    io::json manifest = write_experiment(dir, cfg, result);
    manifest["figure"] = "fig3";
    return manifest;
}

// Kalman setting: test statistics before and after correcting R̂.
inline io::json reproduce_fig7(const std::filesystem::path& dir, std::uint64_t seed)
{
    const TriggerConfig cfg = kalman_trigger_config();
    const std::int64_t burn_in = 1000;
    const OutputModel plant = scenarios::pendulum(0.1);
    io::json phases = io::json::object();
    std::vector<std::pair<std::string, io::json>> rows;
    int index = 0;
    for (const auto& [name, r_hat] : std::vector<std::pair<std::string, double>>{{"mismatch", 0.5}, {"corrected", 0.1}}) {
        const OutputModel model = scenarios::pendulum(r_hat);
        RandomSource rng(derive_seed(seed, 10 + index));
        const StoppingSample empirical = collect_stopping_times_kf(plant, model, cfg, cfg.n, burn_in, rng);
        const StoppingSample reference = sample_stopping_times_kf(
            model, cfg.delta, cfg.tau_max, cfg.m, MonteCarloOptions{.seed = derive_seed(seed, 1000 + index)});
        io::json cmp = compare_samples(empirical, reference, cfg.alpha, static_cast<double>(cfg.tau_max));
        cmp["model"]["R"] = r_hat;
        write_file(dir / ("cdf_" + name + ".csv"),
                   [&](std::ostream& o) { write_cdf_pair_csv(o, empirical, reference, cfg.alpha, cfg.tau_max); });
        rows.emplace_back(name, cmp);
        phases[name] = std::move(cmp);
        ++index;
    }
    write_file(dir / "statistics.csv", [&](std::ostream& o) {
        o << "phase,trigger,statistic,kappa,fired,empirical_mean,model_mean\n";
        for (const auto& [name, cmp] : rows) {
            for (const char* kind : {"approx_mean", "two_sample_ks", "exact_mean", "exact_cdf"}) {
                const auto& v = cmp["verdicts"][kind];
                o << name << ',' << kind << ',' << csv::format(v["statistic"].get<double>()) << ','
                  << csv::format(v["kappa"].get<double>()) << ',' << (v["fired"].get<bool>() ? 1 : 0) << ','
                  << csv::format(cmp["empirical"]["mean"].get<double>()) << ','
                  << csv::format(cmp["model"]["mean"].get<double>()) << '\n';
            }
        }
    });
    const double before = phases["mismatch"]["empirical"]["mean"];
    const double after = phases["corrected"]["empirical"]["mean"];
    return {{"figure", "fig7"},
            {"seed", seed},
            {"plant", io::to_json(plant)},
            {"trigger", io::to_json(cfg)},
            {"burn_in", burn_in},
            {"phases", phases},
            {"mean_tau_before", before},
            {"mean_tau_after", after},
            {"mean_decreased", after < before}};
}

// Tracking at three model qualities with common random numbers.
inline io::json reproduce_fig8(const std::filesystem::path& dir, std::uint64_t seed)
{
    const TriggerConfig cfg = kalman_trigger_config();
    const OutputModel plant = scenarios::pendulum(0.1);
    const std::int64_t window = 150;
    const std::int64_t long_run = 100000;
    const std::int64_t burn_in = 1000;
    io::json runs = io::json::array();
    std::vector<std::size_t> window_events;
    std::vector<double> long_run_rates;
    for (double r_hat : {0.1, 0.5, 10.0}) {
        const OutputModel model = scenarios::pendulum(r_hat);
        RandomSource rng(derive_seed(seed, 1));
        const KalmanEtseResult run = run_etse_kf(plant, model, cfg, window, 0, rng);
        std::ostringstream label;
        label << "run_R" << csv::format(r_hat) << ".csv";
        write_file(dir / label.str(), [&](std::ostream& o) { write_etse_kf_csv(o, run); });

        RandomSource long_rng(derive_seed(seed, 2));
        const KalmanEtseResult stats = run_etse_kf(plant, model, cfg, long_run + burn_in, burn_in, long_rng, false);
        const double rate = static_cast<double>(stats.stopping_times.size()) / static_cast<double>(long_run);
        window_events.push_back(run.log.size());
        long_run_rates.push_back(rate);
        runs.push_back({{"R_hat", r_hat},
                        {"file", label.str()},
                        {"window_events", run.log.size()},
                        {"long_run_event_rate", rate},
                        {"long_run_mean_tau", empirical_mean(stats.stopping_times)}});
    }
    write_file(dir / "event_counts.csv", [&](std::ostream& o) {
        o << "R_hat,window_events,long_run_event_rate\n";
        for (const auto& r : runs) {
            o << csv::format(r["R_hat"].get<double>()) << ',' << r["window_events"].get<std::size_t>() << ','
              << csv::format(r["long_run_event_rate"].get<double>()) << '\n';
        }
    });
    return {{"figure", "fig8"},
            {"seed", seed},
            {"plant", io::to_json(plant)},
            {"trigger", io::to_json(cfg)},
            {"window_steps", window},
            {"long_run_steps", long_run},
            {"runs", runs},
            {"window_monotone", std::is_sorted(window_events.rbegin(), window_events.rend())},
            {"long_run_monotone", std::is_sorted(long_run_rates.rbegin(), long_run_rates.rend())}};
}

} // namespace detail

inline const std::vector<std::string>& figure_ids()
{
    static const std::vector<std::string> ids{"fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"};
    return ids;
}

/// Writes the bundle for one figure into `dir` and returns its manifest.
inline io::json reproduce(const std::string& figure, const std::filesystem::path& dir, const ReproduceOptions& opts = {})
{
    if (std::find(figure_ids().begin(), figure_ids().end(), figure) == figure_ids().end()) {
        throw ConfigError("reproduce: unknown figure '" + figure + "'");
    }
    std::filesystem::create_directories(dir);
    io::json manifest;
    if (figure == "fig2") {
        manifest = detail::reproduce_fig2(dir, opts.seed);
    } else if (figure == "fig3") {
        manifest = detail::reproduce_fig3(dir, opts.seed);
    } else if (figure == "fig4") {
        manifest = detail::scalar_comparison_bundle(dir, figure, scenarios::scalar_plant(),
                                                    scenarios::scalar_detuned_model(),
                                                    detail::scalar_trigger_config(), opts.seed);
    } else if (figure == "fig5") {
        manifest = detail::scalar_comparison_bundle(dir, figure, scenarios::scalar_plant(), scenarios::scalar_plant(),
                                                    detail::scalar_trigger_config(), opts.seed);
    } else if (figure == "fig6") {
        TriggerConfig cfg = detail::scalar_trigger_config();
        cfg.n = 10000;
        cfg.m = 10000;
        manifest = detail::scalar_comparison_bundle(dir, figure, scenarios::scalar_plant(),
                                                    scenarios::scalar_mean_matched_model(), cfg, opts.seed);
    } else if (figure == "fig7") {
        manifest = detail::reproduce_fig7(dir, opts.seed);
    } else {
        manifest = detail::reproduce_fig8(dir, opts.seed);
    }
    write_json(dir / "manifest.json", manifest);
    return manifest;
}

/// Runs seeds first_seed .. first_seed + count − 1 into seed_<s>/ subdirectories.
inline std::vector<io::json> reproduce_sweep(const std::string& figure, const std::filesystem::path& dir,
                                             std::uint64_t first_seed, std::size_t count)
{
    require(count >= 1, "reproduce: seed count must be >= 1");
    std::vector<io::json> out;
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t seed = first_seed + i;
        out.push_back(reproduce(figure, dir / ("seed_" + std::to_string(seed)), ReproduceOptions{.seed = seed}));
    }
    return out;
}

} // namespace etl
