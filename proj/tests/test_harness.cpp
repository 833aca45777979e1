#include "etl/harness/config.hpp"
#include "etl/harness/experiment.hpp"
#include "etl/harness/reproduce.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using etl::EventType;
using etl::ExperimentConfig;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("etl_harness_" + name);
    fs::remove_all(dir);
    return dir;
}

etl::io::json read_json(const fs::path& path)
{
    std::ifstream in(path);
    return etl::io::json::parse(in);
}

void expect_stream_invariants(const etl::ExperimentResult& r)
{
    for (std::size_t i = 1; i < r.events.size(); ++i) EXPECT_LE(r.events[i - 1].step, r.events[i].step);
    for (std::size_t i = 0; i < r.events.size(); ++i) {
        if (r.events[i].type != EventType::model_update) continue;
        ASSERT_GT(i, 0U);
        const auto& prev = r.events[i - 1];
        EXPECT_EQ(prev.type, EventType::evaluation);
        ASSERT_TRUE(prev.verdict.has_value());
        EXPECT_TRUE(prev.verdict->fired);
    }
    EXPECT_EQ(r.state_events + r.forced_events, r.receiver_resets);
    EXPECT_EQ(r.model_updates, r.fires);
}

} // namespace

TEST(ExperimentConfig, JsonRoundTrip)
{
    for (const auto& [name, make] : etl::scenarios::presets()) {
        const ExperimentConfig cfg = make();
        const auto doc = etl::io::to_json(cfg);
        const ExperimentConfig back = etl::io::experiment_from_json(doc);
        EXPECT_EQ(etl::io::to_json(back), doc) << name;
    }
}

TEST(ExperimentConfig, LoadsFileAndPresetNames)
{
    const fs::path dir = scratch("config");
    fs::create_directories(dir);
    const fs::path file = dir / "cfg.json";
    std::ofstream(file) << etl::io::to_json(etl::scenarios::counterexample()).dump();
    EXPECT_EQ(etl::load_experiment_config(file.string()).trigger.n, 10000U);
    EXPECT_EQ(etl::load_experiment_config("preset:kalman").mode, etl::EstimationMode::kalman);
    EXPECT_EQ(etl::load_experiment_config("detection").trigger_kind, etl::TriggerKind::approx_mean);
}

TEST(ExperimentConfig, Errors)
{
    using etl::io::json;
    const json good = etl::io::to_json(etl::scenarios::detection());
    auto broken = [&](auto mutate) {
        json doc = good;
        mutate(doc);
        return doc;
    };
    EXPECT_THROW(etl::io::experiment_from_json(broken([](json& d) { d["mode"] = "hybrid"; })), etl::ConfigError);
    EXPECT_THROW(etl::io::experiment_from_json(broken([](json& d) { d.erase("plant"); })), etl::ConfigError);
    EXPECT_THROW(etl::io::experiment_from_json(broken([](json& d) { d["trigger_kind"] = "chi2"; })), etl::ConfigError);
    EXPECT_THROW(etl::io::experiment_from_json(broken([](json& d) { d["trigger"]["alpha"] = 1.5; })), etl::ConfigError);
    EXPECT_THROW(etl::io::experiment_from_json(broken([](json& d) { d["plant"]["A"] = {1.2}; })), etl::ConfigError);
    EXPECT_THROW(etl::io::experiment_from_json(broken([](json& d) { d["learning"] = "magic"; })), etl::ConfigError);
    EXPECT_THROW(etl::io::experiment_from_json(broken([](json& d) { d["steps"] = 0; })), etl::ConfigError);
    json kalman = etl::io::to_json(etl::scenarios::kalman());
    kalman["learning"] = "least_squares";
    EXPECT_THROW(etl::io::experiment_from_json(kalman), etl::ConfigError);
    EXPECT_THROW(etl::load_experiment_config("/nonexistent/cfg.json"), etl::ConfigError);
}

TEST(RunExperiment, DetectionPhases)
{
    ExperimentConfig cfg = etl::scenarios::detection();
    cfg.steps = 120000;
    cfg.seed = 3;
    const auto r = etl::run_experiment(cfg);
    expect_stream_invariants(r);
    const auto verdicts = r.verdicts();
    ASSERT_GE(verdicts.size(), 6U);
    EXPECT_TRUE(verdicts.front().fired);
    EXPECT_EQ(r.model_updates, 1);
    ASSERT_EQ(r.phases.size(), 2U);
    EXPECT_GT(r.phases[1].mean_gap(), r.phases[0].mean_gap());
    EXPECT_NEAR(r.phases[0].model_mean, 28.6, 0.5);
    EXPECT_NEAR(r.phases[1].model_mean, 19.0, 0.5);
    // After the update the running mean of each full buffer lies in the band.
    for (const auto& p : r.running_mean) {
        if (p.model_version == 1 && p.buffer_size == cfg.trigger.n) {
            EXPECT_LT(std::abs(p.buffer_mean - p.model_mean), p.kappa);
        }
    }
}

TEST(RunExperiment, BitReproducible)
{
    ExperimentConfig cfg = etl::scenarios::detection();
    cfg.steps = 20000;
    const auto a = etl::run_experiment(cfg);
    const auto b = etl::run_experiment(cfg);
    ASSERT_EQ(a.events.size(), b.events.size());
    for (std::size_t i = 0; i < a.events.size(); ++i) {
        EXPECT_EQ(a.events[i].step, b.events[i].step);
        EXPECT_EQ(a.events[i].type, b.events[i].type);
        if (a.events[i].verdict) {
            EXPECT_EQ(a.events[i].verdict->statistic, b.events[i].verdict->statistic);
        }
    }
}

TEST(RunExperiment, MatchedModelRarelyFires)
{
    ExperimentConfig cfg = etl::scenarios::matched();
    const auto r = etl::run_experiment(cfg);
    expect_stream_invariants(r);
    ASSERT_GT(r.evaluations, 100);
    const double n = static_cast<double>(r.evaluations);
    EXPECT_LE(static_cast<double>(r.fires), 0.05 * n + 3.0 * std::sqrt(0.05 * 0.95 * n));
}

TEST(RunExperiment, LeastSquaresLearning)
{
    ExperimentConfig cfg = etl::scenarios::detection();
    cfg.learning = etl::LearningMode::least_squares;
    cfg.steps = 60000;
    const auto r = etl::run_experiment(cfg);
    expect_stream_invariants(r);
    ASSERT_GE(r.model_updates, 1);
    EXPECT_GE(r.learning_transmissions, static_cast<std::int64_t>(cfg.episode_length));
    EXPECT_EQ(r.model_message_values, 2 * r.model_updates);
    EXPECT_NEAR(r.phases[1].model_mean, 18.9, 1.5);
}

TEST(RunExperiment, SlidingWindowEvaluatesEveryGap)
{
    ExperimentConfig cfg = etl::scenarios::matched();
    cfg.buffer_policy = etl::BufferPolicy::sliding_window;
    cfg.trigger.n = 50;
    cfg.steps = 5000;
    const auto r = etl::run_experiment(cfg);
    expect_stream_invariants(r);
    const auto gaps = r.state_events + r.forced_events;
    EXPECT_EQ(r.evaluations, gaps - 49 - 49 * r.fires);
}

TEST(RunExperiment, KalmanModeMeanDecreasesAfterUpdate)
{
    const auto r = etl::run_experiment(etl::scenarios::kalman());
    expect_stream_invariants(r);
    ASSERT_GE(r.phases.size(), 2U);
    EXPECT_TRUE(r.verdicts().front().fired);
    EXPECT_LT(r.phases[1].mean_gap(), r.phases[0].mean_gap());
    EXPECT_EQ(r.model_message_values, 2 * 16 + 8 + 4);
}

TEST(WriteExperiment, FilesAndManifest)
{
    ExperimentConfig cfg = etl::scenarios::detection();
    cfg.steps = 20000;
    const auto r = etl::run_experiment(cfg);
    const fs::path dir = scratch("run");
    etl::write_experiment(dir, cfg, r);
    for (const char* f : {"events.csv", "verdicts.csv", "running_mean.csv", "manifest.json"}) {
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    }
    const auto m = read_json(dir / "manifest.json");
    EXPECT_NEAR(m["kappa"]["approx_mean"].get<double>(), 7.8528, 1e-3);
    EXPECT_EQ(m["verdicts"].size(), static_cast<std::size_t>(r.evaluations));
    EXPECT_EQ(m["counts"]["receiver_resets"].get<std::int64_t>(), r.receiver_resets);
    std::ifstream events(dir / "events.csv");
    std::string header;
    std::getline(events, header);
    EXPECT_EQ(header, "step,type,gap,model_version,kind,statistic,kappa,fired,buffer_size,mc_size,alpha");
}

TEST(Reproduce, UnknownFigure)
{
    EXPECT_THROW(etl::reproduce("fig9", scratch("fig9")), etl::ConfigError);
}

TEST(Reproduce, Fig2Bundle)
{
    const fs::path dir = scratch("fig2");
    const auto m = etl::reproduce("fig2", dir);
    for (const char* f : {"trajectory.csv", "error.csv", "gaps.csv", "manifest.json"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_LT(m["max_error_between_events"].get<double>(), 3.0);
    EXPECT_EQ(m["first_gaps"].size(), 10U);
}

TEST(Reproduce, Fig3Bundle)
{
    const fs::path dir = scratch("fig3");
    const auto m = etl::reproduce("fig3", dir);
    EXPECT_TRUE(fs::exists(dir / "running_mean.csv"));
    EXPECT_TRUE(m["verdicts"][0]["fired"].get<bool>());
}

TEST(Reproduce, Fig4FiresFig5Silent)
{
    const auto m4 = etl::reproduce("fig4", scratch("fig4"));
    EXPECT_TRUE(m4["fired"]["approx_mean"].get<bool>());
    EXPECT_GT(m4["comparison"]["mean_gap"].get<double>(), m4["kappa"]["approx_mean"].get<double>());
    const fs::path dir5 = scratch("fig5");
    const auto m5 = etl::reproduce("fig5", dir5);
    EXPECT_FALSE(m5["fired"]["approx_mean"].get<bool>());
    EXPECT_FALSE(m5["fired"]["two_sample_ks"].get<bool>());
    for (const char* f : {"cdf.csv", "means.csv", "empirical_tau.csv", "manifest.json"}) EXPECT_TRUE(fs::exists(dir5 / f)) << f;
}

TEST(Reproduce, Fig6MeanSilentKsFires)
{
    const auto m = etl::reproduce("fig6", scratch("fig6"));
    EXPECT_FALSE(m["fired"]["approx_mean"].get<bool>());
    EXPECT_TRUE(m["fired"]["two_sample_ks"].get<bool>());
}

TEST(Reproduce, Fig7Bundle)
{
    const fs::path dir = scratch("fig7");
    const auto m = etl::reproduce("fig7", dir);
    for (const char* f : {"cdf_mismatch.csv", "cdf_corrected.csv", "statistics.csv"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_TRUE(m["phases"]["mismatch"]["verdicts"]["two_sample_ks"]["fired"].get<bool>());
    EXPECT_FALSE(m["phases"]["corrected"]["verdicts"]["two_sample_ks"]["fired"].get<bool>());
    EXPECT_TRUE(m["mean_decreased"].get<bool>());
}

TEST(Reproduce, Fig8FewerEventsAsModelWorsens)
{
    const fs::path dir = scratch("fig8");
    const auto m = etl::reproduce("fig8", dir);
    EXPECT_TRUE(m["window_monotone"].get<bool>());
    EXPECT_TRUE(m["long_run_monotone"].get<bool>());
    for (const char* f : {"run_R0.1.csv", "run_R0.5.csv", "run_R10.csv", "event_counts.csv"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
}

TEST(Reproduce, SeedSweep)
{
    const fs::path dir = scratch("sweep");
    const auto ms = etl::reproduce_sweep("fig5", dir, 7, 2);
    ASSERT_EQ(ms.size(), 2U);
    EXPECT_TRUE(fs::exists(dir / "seed_7" / "manifest.json"));
    EXPECT_TRUE(fs::exists(dir / "seed_8" / "manifest.json"));
    EXPECT_NE(ms[0]["comparison"]["empirical"]["mean"], ms[1]["comparison"]["empirical"]["mean"]);
}
