// etl: command-line front end for event-triggered learning experiments.
//
//   etl run <config> [overrides] [--out DIR]
//   etl reproduce <figure_id> [--out DIR] [--seed N] [--seeds N]
//   etl sample-tau (--model FILE | --A .. --Q ..) --delta D --tau-max T --m M [--seed N]
//   etl identify <dataset.csv> [--out FILE]
//
// Exit codes: 0 success, 1 configuration or input error, 2 runtime or
// convergence error. ETL_WORKERS sets the Monte Carlo worker count.

#include "etl/harness/config.hpp"
#include "etl/harness/experiment.hpp"
#include "etl/harness/model_io.hpp"
#include "etl/harness/reproduce.hpp"
#include "etl/stopping.hpp"
#include "etl/sysid.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using etl::io::json;

constexpr int exit_ok = 0;
constexpr int exit_config = 1;
constexpr int exit_runtime = 2;

struct RunArgs {
    std::string config;
    std::string out = "etl_run";
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> steps;
    std::optional<std::string> trigger;
    std::optional<std::string> buffer;
    std::optional<std::string> learning;
    std::optional<double> delta;
    std::optional<std::int64_t> tau_max;
    std::optional<std::size_t> n;
    std::optional<std::size_t> m;
    std::optional<double> alpha;
    std::optional<std::size_t> episode_length;
    std::optional<std::int64_t> burn_in;
};

struct ReproduceArgs {
    std::string figure;
    std::optional<std::string> out;
    std::uint64_t seed = 1;
    std::size_t seeds = 1;
};

struct SampleArgs {
    std::optional<std::string> model;
    std::vector<double> a;
    std::vector<double> q;
    bool continuous = false;
    bool no_bridge = false;
    double h = 1e-3;
    double delta = 3.0;
    double tau_max = 100.0;
    std::size_t m = 100000;
    std::uint64_t seed = 1;
    std::optional<std::string> out;
    std::optional<std::string> cdf_out;
};

struct IdentifyArgs {
    std::string dataset;
    std::optional<std::string> out;
};

etl::ConfigError config_error(const std::string& what) { return etl::ConfigError(what); }

int cmd_run(const RunArgs& args)
{
    etl::ExperimentConfig cfg = etl::load_experiment_config(args.config);
    try {
        if (args.seed) cfg.seed = *args.seed;
        if (args.steps) cfg.steps = *args.steps;
        if (args.trigger) cfg.trigger_kind = etl::parse_trigger_kind(*args.trigger);
        if (args.buffer) cfg.buffer_policy = etl::parse_buffer_policy(*args.buffer);
        if (args.learning) {
            if (*args.learning == "oracle") {
                cfg.learning = etl::LearningMode::oracle;
            } else if (*args.learning == "least_squares") {
                cfg.learning = etl::LearningMode::least_squares;
            } else {
                throw config_error("unknown learning mode '" + *args.learning + "'");
            }
        }
        if (args.delta) cfg.trigger.delta = *args.delta;
        if (args.tau_max) cfg.trigger.tau_max = *args.tau_max;
        if (args.n) cfg.trigger.n = *args.n;
        if (args.m) cfg.trigger.m = *args.m;
        if (args.alpha) cfg.trigger.alpha = *args.alpha;
        if (args.episode_length) cfg.episode_length = *args.episode_length;
        if (args.burn_in) cfg.burn_in = *args.burn_in;
    } catch (const etl::ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
    }
    cfg.validate();

    const etl::ExperimentResult result = etl::run_experiment(cfg);
    etl::write_experiment(args.out, cfg, result);
    std::cout << "steps " << cfg.steps << "\n"
              << "communications " << result.state_events + result.forced_events << " (state "
              << result.state_events << ", forced " << result.forced_events << ")\n"
              << "evaluations " << result.evaluations << ", fires " << result.fires << ", model updates "
              << result.model_updates << "\n";
    for (const auto& p : result.phases) {
        std::cout << "model " << p.model_version << " from step " << p.start_step << ": mean gap "
                  << p.mean_gap() << " over " << p.gaps << " gaps, model mean " << p.model_mean << "\n";
    }
    std::cout << "output " << args.out << "\n";
    return exit_ok;
}

int cmd_reproduce(const ReproduceArgs& args)
{
    const std::string out = args.out.value_or("etl_" + args.figure);
    if (args.seeds > 1) {
        const auto manifests = etl::reproduce_sweep(args.figure, out, args.seed, args.seeds);
        std::cout << args.figure << ": " << manifests.size() << " seeds written to " << out << "\n";
        return exit_ok;
    }
    const json manifest = etl::reproduce(args.figure, out, etl::ReproduceOptions{.seed = args.seed});
    std::cout << args.figure << " written to " << out << "\n";
    if (manifest.contains("fired")) {
        std::cout << "fired " << manifest["fired"].dump() << "\n";
    }
    return exit_ok;
}

etl::Matrix square_from_flat(const std::vector<double>& values, const char* name)
{
    const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(values.size()))));
    if (values.empty() || static_cast<std::size_t>(n * n) != values.size()) {
        throw config_error(std::string("--") + name + ": expected n*n row-major values");
    }
    return etl::from_row_major(values, n, n);
}

int cmd_sample_tau(const SampleArgs& args)
{
    if (args.model.has_value() == !args.a.empty()) {
        throw config_error("sample-tau: give either --model or --A/--Q");
    }
    json doc;
    if (args.model) {
        std::ifstream in(*args.model);
        if (!in) throw config_error("sample-tau: cannot open '" + *args.model + "'");
        try {
            in >> doc;
        } catch (const json::exception& e) {
            throw config_error(std::string("sample-tau: ") + e.what());
        }
    } else if (args.q.empty()) {
        throw config_error("sample-tau: --Q is required with --A");
    }

    etl::StoppingSample sample;
    const etl::MonteCarloOptions opts{.seed = args.seed};
    // Zero or rank-deficient noise is a valid sampling input (all paths censored).
    const etl::ModelChecks sampling_checks{.allow_degenerate_noise = true};
    if (args.continuous) {
        std::optional<etl::ContinuousLinearModel> model;
        try {
            model = args.model ? etl::io::continuous_from_json(doc)
                               : etl::ContinuousLinearModel(square_from_flat(args.a, "A"), square_from_flat(args.q, "Q"), sampling_checks);
        } catch (const std::invalid_argument& e) {
            throw config_error(e.what());
        } catch (const json::exception& e) {
            throw config_error(e.what());
        }
        sample = etl::sample_stopping_times_continuous(*model, args.delta, args.tau_max, args.h, args.m, opts,
                                                         !args.no_bridge);
    } else {
        std::optional<etl::DiscreteLinearModel> model;
        try {
            model = args.model ? etl::io::discrete_from_json(doc)
                               : etl::DiscreteLinearModel(square_from_flat(args.a, "A"), square_from_flat(args.q, "Q"), sampling_checks);
        } catch (const std::invalid_argument& e) {
            throw config_error(e.what());
        } catch (const json::exception& e) {
            throw config_error(e.what());
        }
        if (args.tau_max != std::floor(args.tau_max)) throw config_error("sample-tau: --tau-max must be an integer");
        sample = etl::sample_stopping_times(*model, args.delta, static_cast<std::int64_t>(args.tau_max), args.m, opts);
    }

    const auto values = sample.view();
    std::cout << "samples " << sample.size() << "\n"
              << "mean " << etl::empirical_mean(values) << "\n"
              << "std " << std::sqrt(etl::sample_variance(values)) << "\n"
              << "stderr " << etl::standard_error(values) << "\n"
              << "censored_fraction " << sample.censored_fraction() << "\n";
    if (args.out) {
        etl::write_file(*args.out, [&](std::ostream& o) { etl::write_sample_csv(o, sample); });
    }
    if (args.cdf_out) {
        etl::write_file(*args.cdf_out, [&](std::ostream& o) { etl::write_cdf_csv(o, etl::empirical_cdf(sample)); });
    }
    return exit_ok;
}

int cmd_identify(const IdentifyArgs& args)
{
    std::ifstream in(args.dataset);
    if (!in) throw config_error("identify: cannot open '" + args.dataset + "'");
    etl::LearningDataset data;
    try {
        data = etl::read_dataset_csv(in);
    } catch (const std::invalid_argument& e) {
        throw config_error(e.what());
    }
    const etl::DiscreteLinearModel model = etl::identify_discrete(data);
    json doc = etl::io::to_json(model);
    doc["transitions"] = data.transitions();
    doc["spectral_radius"] = etl::spectral_radius(model.transition());
    if (args.out) {
        etl::write_json(*args.out, doc);
    }
    std::cout << doc.dump(2) << "\n";
    return exit_ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Event-triggered learning for linear state estimation"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run the closed learning loop from a config file or preset");
    run_cmd->add_option("config", run.config, "JSON config path or preset name")->required();
    run_cmd->add_option("--out", run.out, "Output directory");
    run_cmd->add_option("--seed", run.seed);
    run_cmd->add_option("--steps", run.steps);
    run_cmd->add_option("--trigger", run.trigger, "exact_mean | approx_mean | exact_cdf | two_sample_ks");
    run_cmd->add_option("--buffer", run.buffer, "fill_then_evaluate | sliding_window");
    run_cmd->add_option("--learning", run.learning, "oracle | least_squares");
    run_cmd->add_option("--delta", run.delta);
    run_cmd->add_option("--tau-max", run.tau_max);
    run_cmd->add_option("--n", run.n, "Buffer size");
    run_cmd->add_option("--m", run.m, "Monte Carlo sample size");
    run_cmd->add_option("--alpha", run.alpha);
    run_cmd->add_option("--episode-length", run.episode_length);
    run_cmd->add_option("--burn-in", run.burn_in);

    ReproduceArgs rep;
    auto* rep_cmd = app.add_subcommand("reproduce", "Write the data bundle behind a figure");
    rep_cmd->add_option("figure_id", rep.figure)->required()->check(CLI::IsMember(etl::figure_ids()));
    rep_cmd->add_option("--out", rep.out, "Output directory");
    rep_cmd->add_option("--seed", rep.seed, "Seed (first seed of a sweep)");
    rep_cmd->add_option("--seeds", rep.seeds, "Number of seeds to sweep")->check(CLI::PositiveNumber);

    SampleArgs smp;
    auto* smp_cmd = app.add_subcommand("sample-tau", "Monte Carlo stopping-time sample for a model");
    smp_cmd->add_option("--model", smp.model, "Model JSON file");
    smp_cmd->add_option("--A", smp.a, "Transition (or drift) matrix, row-major")->delimiter(',');
    smp_cmd->add_option("--Q", smp.q, "Noise covariance (or diffusion) matrix, row-major")->delimiter(',');
    smp_cmd->add_flag("--continuous", smp.continuous, "Treat the model as an SDE");
    smp_cmd->add_flag("--no-bridge", smp.no_bridge, "Check exits only at grid points (continuous mode)");
    smp_cmd->add_option("--step-size", smp.h, "Euler-Maruyama step size")->check(CLI::PositiveNumber);
    smp_cmd->add_option("--delta", smp.delta)->check(CLI::PositiveNumber);
    smp_cmd->add_option("--tau-max", smp.tau_max, "Cap (steps, or time units with --continuous)")
        ->check(CLI::PositiveNumber);
    smp_cmd->add_option("--m", smp.m, "Sample size")->check(CLI::PositiveNumber);
    smp_cmd->add_option("--seed", smp.seed);
    smp_cmd->add_option("--out", smp.out, "Write the sample as CSV");
    smp_cmd->add_option("--cdf-out", smp.cdf_out, "Write the empirical CDF as CSV");

    IdentifyArgs idf;
    auto* idf_cmd = app.add_subcommand("identify", "Least-squares (A, Q) from a state recording");
    idf_cmd->add_option("dataset", idf.dataset, "CSV with columns step, x0, x1, ...")->required();
    idf_cmd->add_option("--out", idf.out, "Write the model JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (*run_cmd) return cmd_run(run);
        if (*rep_cmd) return cmd_reproduce(rep);
        if (*smp_cmd) return cmd_sample_tau(smp);
        if (*idf_cmd) return cmd_identify(idf);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_runtime;
    }
    return exit_ok;
}
