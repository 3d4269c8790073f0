#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace twcrl;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string write_expert_demos(const std::string& dir, const std::string& map, std::size_t n) {
    const auto spec = load_map(test::data_file(map));
    DemoSet d;
    for (std::uint64_t s = 0; s < n; ++s) d.add(scripted_expert(spec, 1000 + s));
    const auto path = dir + "/expert.jsonl";
    save_demos(d, path);
    return path;
}

/// Tiny configuration: one 300-step episode of policy training per iteration.
RunConfig tiny_config(const std::string& dir) {
    RunConfig c;
    c.map_path = test::data_file("umaze.map");
    c.demos_path = write_expert_demos(dir, "umaze.map", 2);
    c.reward_hidden = {8, 8};
    c.reward_epochs = 2;
    c.reward_batch = 128;
    c.reward_update_interval = 1;
    c.td3.actor_hidden = {8, 8};
    c.td3.critic_hidden = {8, 8};
    c.td3.batch_size = 32;
    c.iterations = 3;
    c.eval_episodes = 2;
    c.heatmap_resolution = 8;
    c.seed = 42;
    c.out_dir = dir + "/run";
    return c;
}

}  // namespace

TEST(RunConfig, ParsesAndRejectsUnknownKeys) {
    const auto c = parse_run_config(nlohmann::json::parse(
        R"({"map":"m.map","demos":"d.jsonl","alpha":0.5,"goal_mode":"three","td3":{"batch_size":64},
            "rule":"return_threshold","r_theta":3,"reward_on":"current"})"));
    EXPECT_EQ(c.alpha, 0.5);
    EXPECT_EQ(c.goal_mode, GoalCellsMode::Three);
    EXPECT_EQ(c.td3.batch_size, 64u);
    EXPECT_EQ(c.rule, RuleKind::ReturnThreshold);
    EXPECT_EQ(c.r_theta, 3.0);
    EXPECT_EQ(c.reward_on, RewardOn::Current);
    EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"map":"m","demos":"d","bogus":1})")), ValidationError);
    EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"map":"m","demos":"d","td3":{"lr":1}})")),
                 ValidationError);
    EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"map":"m","demos":"d","alpha":"two"})")),
                 ValidationError);
    EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"map":"m","demos":"d","rule":"other"})")),
                 ValidationError);
}

TEST(RunConfig, AblationFlagsMustBeConsistent) {
    EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"map":"m","vanilla_td3":true,"constant_labels":true})")),
                 ValidationError);
    EXPECT_THROW(parse_run_config(nlohmann::json::parse(
                     R"({"map":"m","demos":"d","use_success_only":true,"use_failure_only":true})")),
                 ValidationError);
    EXPECT_NO_THROW(parse_run_config(nlohmann::json::parse(R"({"map":"m","vanilla_td3":true})")));
    EXPECT_THROW(parse_run_config(nlohmann::json::parse(R"({"map":"m"})")), ValidationError);
}

TEST(RunConfig, PaperHyperparameters) {
    const auto c = parse_run_config(nlohmann::json::parse(R"({"map":"m","demos":"d","paper_hparams":true})"));
    EXPECT_EQ(c.td3.actor_hidden, (std::vector<std::size_t>{256, 256, 256}));
    EXPECT_EQ(c.td3.batch_size, 512u);
    EXPECT_EQ(c.reward_hidden, (std::vector<std::size_t>{128, 128, 128}));
    EXPECT_EQ(c.alpha, 2.0);
}

TEST(RunConfig, ShippedConfigsParse) {
    for (const char* name : {"umaze.json", "trapmaze1.json"}) {
        const auto c = load_run_config(test::data_file("../configs/") + name);
        EXPECT_EQ(c.alpha, 0.01) << name;
        EXPECT_EQ(c.max_env_steps, 200000u) << name;
    }
}

TEST(RunConfig, MissingFileNamesPath) {
    try {
        load_run_config("/nonexistent/run.json");
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/run.json"), std::string::npos);
    }
}

TEST(CollectRollouts, UntrainedPolicySplitIsExhaustive) {
    const auto spec = load_map(test::data_file("trapmaze1.map"));
    Rng rng(1);
    TD3State td3(kMazeObsDim, kMazeActDim, TD3Config{}, rng);
    const auto d = collect_rollouts(exploring_policy(td3), spec, 20, maze_goal_rule(spec), 7);
    EXPECT_EQ(d.successes.size() + d.failures.size(), 20u);
    for (const auto& t : d.successes) EXPECT_EQ(classify_trajectory(t, maze_goal_rule(spec)), Outcome::Success);
    for (const auto& t : d.failures) EXPECT_EQ(classify_trajectory(t, maze_goal_rule(spec)), Outcome::Failure);
    EXPECT_THROW(collect_rollouts(exploring_policy(td3), spec, 0, maze_goal_rule(spec), 7), ValidationError);
}

TEST(CollectRollouts, ExpertAdapterSucceeds) {
    for (const char* map : {"umaze.map", "trapmaze1.map"}) {
        const auto spec = load_map(test::data_file(map));
        const auto d = collect_rollouts(expert_policy(spec), spec, 5, maze_goal_rule(spec), 3);
        EXPECT_EQ(d.successes.size(), 5u) << map;
    }
}

TEST(CollectRollouts, DeterministicAcrossThreadCounts) {
    const auto spec = load_map(test::data_file("trapmaze1.map"));
    Rng rng(2);
    TD3State td3(kMazeObsDim, kMazeActDim, TD3Config{}, rng);
    const auto a = collect_rollouts(exploring_policy(td3), spec, 6, maze_goal_rule(spec), 11, 1);
    EXPECT_EQ(a, collect_rollouts(exploring_policy(td3), spec, 6, maze_goal_rule(spec), 11, 1));
    EXPECT_EQ(a, collect_rollouts(exploring_policy(td3), spec, 6, maze_goal_rule(spec), 11, 3));
}

TEST(Evaluate, DeterministicAndBounded) {
    const auto spec = load_map(test::data_file("umaze.map"));
    Rng rng(3);
    TD3State td3(kMazeObsDim, kMazeActDim, TD3Config{}, rng);
    const auto a = evaluate(td3.actor, spec, 5, 9);
    const auto b = evaluate(td3.actor, spec, 5, 9, 2);
    EXPECT_EQ(a.mean_env_return, b.mean_env_return);
    EXPECT_EQ(a.std_env_return, b.std_env_return);
    EXPECT_EQ(a.success_rate, b.success_rate);
    EXPECT_GE(a.success_rate, 0.0);
    EXPECT_LE(a.success_rate, 1.0);
    EXPECT_GE(a.mean_env_return, 0.0);
    EXPECT_LE(a.mean_env_return, 300.0);
    EXPECT_THROW(evaluate(td3.actor, spec, 0, 9), ValidationError);
}

TEST(Evaluate, GoalSittingReturnIsHorizonMinusArrival) {
    const auto spec = load_map(test::data_file("umaze.map"));
    for (const auto& t : rollout_episodes(expert_policy(spec), spec, 5, 4)) {
        std::size_t arrival = 0;
        while (!in_goal_disc(spec, t.states[arrival + 1])) ++arrival;
        EXPECT_EQ(t.episodic_return, static_cast<double>(spec.horizon - arrival));
    }
}

TEST(RunTwcrl, ZeroIterationsWritesInitialFitOnly) {
    const auto dir = test::scratch_dir("pipe_zero");
    auto c = tiny_config(dir);
    c.iterations = 0;
    const auto art = run_twcrl(c);
    EXPECT_EQ(art.reward_checkpoints, std::vector<std::string>{c.out_dir + "/reward_iter0.json"});
    EXPECT_EQ(art.heatmaps, std::vector<std::string>{c.out_dir + "/heatmap_iter0.csv"});
    EXPECT_TRUE(art.policy_checkpoints.empty());
    EXPECT_TRUE(art.history.empty());
    EXPECT_EQ(load_demos(art.demos_path), load_demos(c.demos_path));
    const auto model = load_reward_model(art.reward_checkpoints[0]);
    EXPECT_EQ(model.params.alpha, c.alpha);
    EXPECT_NE(score(model, std::vector<double>{1.5, 1.5, 1.5, 3.5}), 0.0);
    EXPECT_EQ(slurp(art.metrics_path), "iteration,episode,env_return,learned_return,success,steps\n");
}

TEST(RunTwcrl, ArtifactsAndAppendOnlyDemos) {
    const auto dir = test::scratch_dir("pipe_art");
    const auto c = tiny_config(dir);
    std::string previous = slurp(c.demos_path);
    std::size_t last_count = 2;
    RunOptions opts;
    opts.on_iteration = [&](const IterationRecord& rec) {
        const auto now = slurp(c.out_dir + "/demos.jsonl");
        EXPECT_EQ(now.substr(0, previous.size()), previous) << "iteration " << rec.iteration;
        const auto count = load_demos(c.out_dir + "/demos.jsonl").size();
        EXPECT_EQ(count, last_count + rec.successes + rec.failures);
        previous = now;
        last_count = count;
    };
    const auto art = run_twcrl(c, opts);
    ASSERT_EQ(art.history.size(), 3u);
    EXPECT_EQ(art.policy_checkpoints.size(), 3u);
    EXPECT_EQ(art.reward_checkpoints.size(), 4u);
    for (const auto& p : art.policy_checkpoints) EXPECT_EQ(load_net(p).input_dim(), kMazeObsDim);
    for (const auto& p : art.heatmaps) EXPECT_EQ(load_heatmap_csv(p).resolution, 8u);
    EXPECT_EQ(art.demo_count, 5u);
    EXPECT_EQ(art.history[2].env_steps, 900u);

    std::istringstream metrics(slurp(art.metrics_path));
    std::string line;
    std::getline(metrics, line);
    std::size_t rows = 0;
    while (std::getline(metrics, line)) ++rows;
    EXPECT_EQ(rows, 3u);
}

TEST(RunTwcrl, SameSeedReproducesMetricsBitExactly) {
    const auto d1 = test::scratch_dir("pipe_det1");
    const auto d2 = test::scratch_dir("pipe_det2");
    const auto a = run_twcrl(tiny_config(d1));
    const auto b = run_twcrl(tiny_config(d2));
    EXPECT_EQ(slurp(a.metrics_path), slurp(b.metrics_path));
    EXPECT_EQ(slurp(a.eval_path), slurp(b.eval_path));
    EXPECT_EQ(slurp(a.policy_checkpoints.back()), slurp(b.policy_checkpoints.back()));
}

TEST(RunTwcrl, ResumeReproducesNextIteration) {
    const auto full_dir = test::scratch_dir("pipe_full");
    const auto part_dir = test::scratch_dir("pipe_part");
    const auto full = run_twcrl(tiny_config(full_dir));

    const auto c = tiny_config(part_dir);
    RunOptions stop;
    stop.stop_after = 2;
    EXPECT_EQ(run_twcrl(c, stop).history.size(), 2u);
    RunOptions resume;
    resume.resume = true;
    const auto resumed = run_twcrl(c, resume);
    ASSERT_EQ(resumed.history.size(), 3u);
    EXPECT_EQ(slurp(resumed.metrics_path), slurp(full.metrics_path));
    EXPECT_EQ(slurp(resumed.eval_path), slurp(full.eval_path));
    EXPECT_EQ(slurp(resumed.demos_path), slurp(full.demos_path));
    EXPECT_EQ(slurp(part_dir + "/run/policy_iter3.json"), slurp(full_dir + "/run/policy_iter3.json"));
    EXPECT_EQ(slurp(part_dir + "/run/reward_iter3.json"), slurp(full_dir + "/run/reward_iter3.json"));
}

TEST(RunTwcrl, VanillaSkipsRewardStages) {
    const auto dir = test::scratch_dir("pipe_vanilla");
    auto c = tiny_config(dir);
    c.vanilla_td3 = true;
    c.demos_path.clear();
    c.iterations = 2;
    const auto art = run_twcrl(c);
    EXPECT_TRUE(art.reward_checkpoints.empty());
    EXPECT_TRUE(art.heatmaps.empty());
    EXPECT_EQ(art.policy_checkpoints.size(), 2u);
    EXPECT_EQ(load_demos(art.demos_path).size(), 2u);
    EXPECT_FALSE(std::filesystem::exists(c.out_dir + "/reward_iter0.json"));
}

TEST(RunTwcrl, SuccessOnlyExcludesFailuresFromLabels) {
    RunConfig c;
    c.use_success_only = true;
    DemoSet d;
    Rng rng(5);
    for (int i = 0; i < 6; ++i) d.add(test::random_trajectory(rng, 4, 4, 2));
    const auto s = detail::labeled_subset(c, d);
    EXPECT_EQ(s.successes, d.successes);
    EXPECT_TRUE(s.failures.empty());
    c.use_success_only = false;
    c.use_failure_only = true;
    EXPECT_TRUE(detail::labeled_subset(c, d).successes.empty());

    const auto dir = test::scratch_dir("pipe_success_only");
    auto run = tiny_config(dir);
    run.use_success_only = true;
    run.iterations = 1;
    const auto art = run_twcrl(run);
    EXPECT_EQ(art.history.size(), 1u);
    // Failures are still collected into the dataset file.
    EXPECT_EQ(load_demos(art.demos_path).size(), 3u);
}

TEST(RunTwcrl, EnvStepBudgetStopsLoop) {
    const auto dir = test::scratch_dir("pipe_budget");
    auto c = tiny_config(dir);
    c.iterations = 10;
    c.max_env_steps = 700;
    EXPECT_EQ(run_twcrl(c).history.size(), 2u);
}

TEST(RunTwcrl, DemosWithoutSuccessRejected) {
    const auto dir = test::scratch_dir("pipe_nosuccess");
    auto c = tiny_config(dir);
    const auto spec = load_map(c.map_path);
    DemoSet d;
    d.add(run_episode(spec, reset(spec, 1), [](const MazeState&) { return std::vector<double>{0.0, 0.0}; }));
    save_demos(d, c.demos_path);
    EXPECT_THROW(run_twcrl(c), ValidationError);
    c.demos_path = dir + "/missing.jsonl";
    EXPECT_THROW(run_twcrl(c), ValidationError);
}
