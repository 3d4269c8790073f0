#pragma once

// The iterative loop: fit the reward on the demo set, train the policy
// against it, classify the episodes it produced, grow the demo set, repeat.

#include "twcrl/demo_io.hpp"
#include "twcrl/maze.hpp"
#include "twcrl/policy_opt.hpp"
#include "twcrl/reward_learner.hpp"
#include "twcrl/snapshot.hpp"
#include "twcrl/td3.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace twcrl {

// ---------------------------------------------------------------------------
// Rollouts and evaluation

using StochasticPolicy = std::function<std::vector<double>(const MazeState&, Rng&)>;

/// Exploring TD3 actor (Gaussian noise, clipped to the action bound).
inline StochasticPolicy exploring_policy(const TD3State& td3) {
    return [&td3](const MazeState& s, Rng& rng) { return select_action(td3, s.observation(), true, rng); };
}

inline StochasticPolicy greedy_policy(const DenseNet& actor) {
    return [&actor](const MazeState& s, Rng&) {
        const Vector a = actor.forward(s.observation());
        return std::vector<double>(a.data(), a.data() + a.size());
    };
}

/// Stateless version of the scripted expert: heads for the center of the next
/// cell on the shortest path to the goal cell, or for the goal itself once in
/// the goal cell.
inline StochasticPolicy expert_policy(const MazeSpec& spec) {
    return [spec](const MazeState& s, Rng&) -> std::vector<double> {
        if (s.frozen != Frozen::Mobile) return {0.0, 0.0};
        const Cell here = spec.cell_of(s.position);
        const Cell goal = spec.cell_of(s.goal);
        if (here == goal) return steer_towards(spec, s.position, s.goal);
        const auto path = plan_path(spec, here, goal);
        return steer_towards(spec, s.position, path.size() > 2 ? spec.cell_center(path[1]) : s.goal);
    };
}

/// One episode per index; episode i starts from reset(spec, derive_seed(seed, i))
/// and draws policy randomness from its own stream, so results do not depend
/// on how episodes are spread over threads.
inline std::vector<Trajectory> rollout_episodes(const StochasticPolicy& policy, const MazeSpec& spec, std::size_t n,
                                                std::uint64_t seed, std::size_t threads = 1) {
    std::vector<Trajectory> out(n);
    auto work = [&](std::size_t first, std::size_t stride) {
        for (std::size_t i = first; i < n; i += stride) {
            const std::uint64_t ep_seed = derive_seed(seed, i);
            Rng rng = make_rng(ep_seed, "policy");
            out[i] = run_episode(spec, reset(spec, ep_seed), [&](const MazeState& s) { return policy(s, rng); });
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
        for (auto& th : pool) th.join();
    }
    return out;
}

/// Runs n episodes and splits them by `rule`.
inline DemoSet collect_rollouts(const StochasticPolicy& policy, const MazeSpec& spec, std::size_t n,
                                const ClassificationRule& rule, std::uint64_t seed, std::size_t threads = 1) {
    if (n < 1) throw ValidationError("collect_rollouts needs n >= 1");
    DemoSet out;
    for (auto& traj : rollout_episodes(policy, spec, n, seed, threads)) {
        traj.outcome = classify_trajectory(traj, rule);
        out.add(std::move(traj));
    }
    return out;
}

struct EvalStats {
    double mean_env_return = 0.0;
    double std_env_return = 0.0;
    double success_rate = 0.0;
};

/// Noise-free rollouts of the actor.
inline EvalStats evaluate(const DenseNet& actor, const MazeSpec& spec, std::size_t n_episodes, std::uint64_t seed,
                          std::size_t threads = 1) {
    if (n_episodes < 1) throw ValidationError("evaluate needs at least one episode");
    const auto episodes = rollout_episodes(greedy_policy(actor), spec, n_episodes, seed, threads);
    EvalStats stats;
    double sum = 0.0, sum_sq = 0.0, successes = 0.0;
    for (const auto& e : episodes) {
        sum += e.episodic_return;
        sum_sq += e.episodic_return * e.episodic_return;
        if (e.outcome == Outcome::Success) successes += 1.0;
    }
    const double n = static_cast<double>(n_episodes);
    stats.mean_env_return = sum / n;
    stats.std_env_return = std::sqrt(std::max(0.0, sum_sq / n - stats.mean_env_return * stats.mean_env_return));
    stats.success_rate = successes / n;
    return stats;
}

// ---------------------------------------------------------------------------
// Configuration

enum class RuleKind { TerminalGoal, ReturnThreshold };

struct RunConfig {
    std::string map_path;
    GoalCellsMode goal_mode = GoalCellsMode::One;
    std::size_t horizon = 300;
    std::string demos_path;  // expert demonstrations (successes)

    double alpha = 2.0;

    std::vector<std::size_t> reward_hidden{64, 64};
    double reward_lr = 1e-3;
    std::size_t reward_epochs = 200;
    std::size_t reward_batch = 256;
    std::size_t reward_update_interval = 10;  // episodes between reward refits
    std::size_t rollouts_per_iteration = 0;   // extra exploring rollouts; 0 uses the training episodes only
    bool reward_reset = false;

    TD3Config td3;
    RewardOn reward_on = RewardOn::Next;
    bool absorbing_done = false;
    bool relabel_replay = true;

    std::size_t iterations = 20;
    std::size_t max_env_steps = 0;  // 0: no cap besides iterations
    std::size_t eval_episodes = 10;
    double converge_success = 0.95;
    std::size_t converge_patience = 3;

    RuleKind rule = RuleKind::TerminalGoal;
    double r_theta = 1.0;

    std::uint64_t seed = 0;
    std::string out_dir = "run";
    std::size_t heatmap_resolution = 64;
    std::size_t threads = 1;

    bool constant_labels = false;
    bool use_success_only = false;
    bool use_failure_only = false;
    bool vanilla_td3 = false;

    void validate() const {
        if (map_path.empty()) throw ValidationError("config: 'map' is required");
        if (!vanilla_td3 && demos_path.empty()) throw ValidationError("config: 'demos' is required");
        if (use_success_only && use_failure_only)
            throw ValidationError("config: use_success_only and use_failure_only are mutually exclusive");
        if (vanilla_td3 && (constant_labels || use_success_only || use_failure_only))
            throw ValidationError("config: vanilla_td3 excludes the reward-learning ablation flags");
        if (!(alpha > 0.0)) throw ValidationError("config: alpha must be > 0");
        if (horizon < 1) throw InvalidHorizon("config: horizon must be >= 1");
        if (reward_update_interval < 1) throw ValidationError("config: reward_update_interval must be >= 1");
        if (eval_episodes < 1) throw ValidationError("config: eval_episodes must be >= 1");
        if (td3.batch_size < 1 || td3.policy_delay < 1) throw ValidationError("config: bad TD3 batch/policy_delay");
    }

    /// Switches every hyperparameter to the published table values.
    void apply_paper_hparams() {
        td3 = TD3Config::paper();
        reward_hidden = {128, 128, 128};
        reward_lr = 1e-3;
        reward_epochs = 200;
        reward_update_interval = 10;
        alpha = 2.0;
        horizon = 300;
    }
};

namespace detail {

template <class T>
void maybe_get(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// Parses a run config; unknown keys are rejected.
inline RunConfig parse_run_config(const nlohmann::json& j) {
    static const std::vector<std::string> known{
        "map", "goal_mode", "horizon", "demos", "alpha", "reward_hidden", "reward_lr", "reward_epochs",
        "reward_batch", "reward_update_interval", "rollouts_per_iteration", "reward_reset", "td3", "reward_on", "absorbing_done",
        "relabel_replay", "iterations", "max_env_steps", "eval_episodes", "converge_success", "converge_patience",
        "rule", "r_theta", "seed", "out_dir", "heatmap_resolution", "threads", "constant_labels",
        "use_success_only", "use_failure_only", "vanilla_td3", "paper_hparams"};
    static const std::vector<std::string> known_td3{
        "actor_hidden", "critic_hidden", "actor_lr", "critic_lr", "gamma", "tau", "policy_delay", "exploration_std",
        "target_noise_std", "noise_clip", "batch_size", "start_steps", "replay_capacity", "actor_preact_reg"};
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ValidationError("config: unknown key '" + key + "'");

    RunConfig c;
    try {
        if (j.value("paper_hparams", false)) c.apply_paper_hparams();
        detail::maybe_get(j, "map", c.map_path);
        if (j.contains("goal_mode")) c.goal_mode = parse_goal_mode(j.at("goal_mode").get<std::string>());
        detail::maybe_get(j, "horizon", c.horizon);
        detail::maybe_get(j, "demos", c.demos_path);
        detail::maybe_get(j, "alpha", c.alpha);
        detail::maybe_get(j, "reward_hidden", c.reward_hidden);
        detail::maybe_get(j, "reward_lr", c.reward_lr);
        detail::maybe_get(j, "reward_epochs", c.reward_epochs);
        detail::maybe_get(j, "reward_batch", c.reward_batch);
        detail::maybe_get(j, "reward_update_interval", c.reward_update_interval);
        detail::maybe_get(j, "rollouts_per_iteration", c.rollouts_per_iteration);
        detail::maybe_get(j, "reward_reset", c.reward_reset);
        if (j.contains("td3")) {
            const auto& t = j.at("td3");
            for (const auto& [key, _] : t.items())
                if (std::find(known_td3.begin(), known_td3.end(), key) == known_td3.end())
                    throw ValidationError("config: unknown td3 key '" + key + "'");
            detail::maybe_get(t, "actor_hidden", c.td3.actor_hidden);
            detail::maybe_get(t, "critic_hidden", c.td3.critic_hidden);
            detail::maybe_get(t, "actor_lr", c.td3.actor_lr);
            detail::maybe_get(t, "critic_lr", c.td3.critic_lr);
            detail::maybe_get(t, "gamma", c.td3.gamma);
            detail::maybe_get(t, "tau", c.td3.tau);
            detail::maybe_get(t, "policy_delay", c.td3.policy_delay);
            detail::maybe_get(t, "exploration_std", c.td3.exploration_std);
            detail::maybe_get(t, "target_noise_std", c.td3.target_noise_std);
            detail::maybe_get(t, "noise_clip", c.td3.noise_clip);
            detail::maybe_get(t, "batch_size", c.td3.batch_size);
            detail::maybe_get(t, "start_steps", c.td3.start_steps);
            detail::maybe_get(t, "replay_capacity", c.td3.replay_capacity);
            detail::maybe_get(t, "actor_preact_reg", c.td3.actor_preact_reg);
        }
        if (j.contains("reward_on")) {
            const auto s = j.at("reward_on").get<std::string>();
            if (s == "next")
                c.reward_on = RewardOn::Next;
            else if (s == "current")
                c.reward_on = RewardOn::Current;
            else
                throw ValidationError("config: reward_on must be 'next' or 'current'");
        }
        detail::maybe_get(j, "absorbing_done", c.absorbing_done);
        detail::maybe_get(j, "relabel_replay", c.relabel_replay);
        detail::maybe_get(j, "iterations", c.iterations);
        detail::maybe_get(j, "max_env_steps", c.max_env_steps);
        detail::maybe_get(j, "eval_episodes", c.eval_episodes);
        detail::maybe_get(j, "converge_success", c.converge_success);
        detail::maybe_get(j, "converge_patience", c.converge_patience);
        if (j.contains("rule")) {
            const auto s = j.at("rule").get<std::string>();
            if (s == "terminal_goal")
                c.rule = RuleKind::TerminalGoal;
            else if (s == "return_threshold")
                c.rule = RuleKind::ReturnThreshold;
            else
                throw ValidationError("config: rule must be 'terminal_goal' or 'return_threshold'");
        }
        detail::maybe_get(j, "r_theta", c.r_theta);
        detail::maybe_get(j, "seed", c.seed);
        detail::maybe_get(j, "out_dir", c.out_dir);
        detail::maybe_get(j, "heatmap_resolution", c.heatmap_resolution);
        detail::maybe_get(j, "threads", c.threads);
        detail::maybe_get(j, "constant_labels", c.constant_labels);
        detail::maybe_get(j, "use_success_only", c.use_success_only);
        detail::maybe_get(j, "use_failure_only", c.use_failure_only);
        detail::maybe_get(j, "vanilla_td3", c.vanilla_td3);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline RunConfig load_run_config(const std::string& path) {
    if (!std::filesystem::exists(path)) throw ValidationError("config file '" + path + "' does not exist");
    return parse_run_config(read_json_file(path));
}

inline ClassificationRule make_rule(const RunConfig& c, const MazeSpec& spec) {
    if (c.rule == RuleKind::ReturnThreshold) return ReturnThreshold{c.r_theta};
    return maze_goal_rule(spec);
}

// ---------------------------------------------------------------------------
// Run

struct IterationRecord {
    std::size_t iteration = 0;
    std::size_t env_steps = 0;
    EvalStats eval;
    std::size_t successes = 0;  // collected this iteration
    std::size_t failures = 0;
};

struct RunArtifacts {
    std::string out_dir;
    std::vector<std::string> reward_checkpoints;
    std::vector<std::string> policy_checkpoints;
    std::vector<std::string> heatmaps;
    std::string demos_path;
    std::string metrics_path;
    std::string eval_path;
    std::vector<IterationRecord> history;
    std::size_t demo_count = 0;
    bool converged = false;
};

/// Loop state that survives across iterations.
struct RunState {
    MazeSpec spec;
    DemoSet demos;
    RewardModel reward;
    TD3State td3;
    std::size_t iteration = 0;  // completed iterations
    std::size_t episodes = 0;
    std::size_t rollout_steps = 0;  // env steps spent outside policy training
    std::size_t streak = 0;     // consecutive iterations at the convergence success rate
    std::vector<IterationRecord> history;
};

namespace detail {

inline std::string path_in(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

inline std::uintmax_t file_size_or_zero(const std::string& path) {
    std::error_code ec;
    const auto n = std::filesystem::file_size(path, ec);
    return ec ? 0 : n;
}

/// The subset of demos the reward is fitted on under the ablation flags.
inline DemoSet labeled_subset(const RunConfig& c, const DemoSet& demos) {
    DemoSet out;
    if (!c.use_failure_only) out.successes = demos.successes;
    if (!c.use_success_only) out.failures = demos.failures;
    return out;
}

inline void fit_reward(const RunConfig& c, RunState& st, std::size_t iteration) {
    if (c.vanilla_td3) return;
    const DemoSet subset = labeled_subset(c, st.demos);
    if (subset.empty()) return;
    if (c.reward_reset && iteration > 0) {
        Rng rng = make_rng(derive_seed(c.seed, iteration), "reward-init");
        st.reward.reset(rng);
    }
    train_reward(st.reward, subset, c.reward_epochs, c.reward_batch, derive_seed(derive_seed(c.seed, "reward"), iteration),
                 c.constant_labels ? LabelMode::Constant : LabelMode::TimeWeighted);
}

inline StateScorer make_scorer(const RunConfig& c, const RunState& st) {
    if (c.vanilla_td3) return sparse_env_scorer(st.spec);
    const RewardModel* model = &st.reward;
    return [model](std::span<const double> obs) { return score(*model, obs); };
}

inline BatchScorer make_relabeler(const RunConfig& c, const RunState& st) {
    const RewardModel* model = &st.reward;
    const RewardOn on = c.reward_on;
    return [model, on](const Matrix& obs, const Matrix& next_obs) {
        return score_batch(*model, on == RewardOn::Next ? next_obs : obs);
    };
}

inline void write_checkpoints(const RunConfig& c, const RunState& st, RunArtifacts& art, std::size_t k) {
    const std::string tag = std::to_string(k);
    if (!c.vanilla_td3) {
        const auto reward_path = path_in(c.out_dir, "reward_iter" + tag + ".json");
        save_reward_model(st.reward, reward_path);
        art.reward_checkpoints.push_back(reward_path);
        const auto heat_path = path_in(c.out_dir, "heatmap_iter" + tag + ".csv");
        const RewardModel* model = &st.reward;
        const auto goal = st.spec.cell_center(st.spec.goal_candidates().front());
        save_heatmap_csv(reward_heatmap(st.spec, [model](std::span<const double> o) { return score(*model, o); },
                                        c.heatmap_resolution, goal),
                         heat_path);
        art.heatmaps.push_back(heat_path);
    }
    if (k > 0) {
        const auto policy_path = path_in(c.out_dir, "policy_iter" + tag + ".json");
        save_policy(st.td3, policy_path);
        art.policy_checkpoints.push_back(policy_path);
    }
}

inline void write_snapshot(const RunConfig& c, RunState& st) {
    const auto tmp = path_in(c.out_dir, "snapshot.bin.tmp");
    {
        SnapshotWriter w(tmp);
        w.write_u64(st.iteration);
        w.write_u64(st.episodes);
        w.write_u64(st.rollout_steps);
        w.write_u64(st.streak);
        w.write_u64(file_size_or_zero(path_in(c.out_dir, "demos.jsonl")));
        w.write_u64(file_size_or_zero(path_in(c.out_dir, "metrics.csv")));
        w.write_u64(file_size_or_zero(path_in(c.out_dir, "eval.csv")));
        write_reward_model(w, st.reward);
        write_td3(w, st.td3);
        w.write_u64(st.history.size());
        for (const auto& h : st.history) {
            w.write_u64(h.iteration);
            w.write_u64(h.env_steps);
            w.write_f64(h.eval.mean_env_return);
            w.write_f64(h.eval.std_env_return);
            w.write_f64(h.eval.success_rate);
            w.write_u64(h.successes);
            w.write_u64(h.failures);
        }
        w.finish();
    }
    std::filesystem::rename(tmp, path_in(c.out_dir, "snapshot.bin"));
}

inline void truncate_file(const std::string& path, std::uintmax_t size) {
    if (std::filesystem::exists(path)) std::filesystem::resize_file(path, size);
}

inline void read_snapshot(const RunConfig& c, RunState& st) {
    SnapshotReader r(path_in(c.out_dir, "snapshot.bin"));
    st.iteration = r.read_u64();
    st.episodes = r.read_u64();
    st.rollout_steps = r.read_u64();
    st.streak = r.read_u64();
    const auto demos_size = r.read_u64();
    const auto metrics_size = r.read_u64();
    const auto eval_size = r.read_u64();
    read_reward_model(r, st.reward);
    read_td3(r, st.td3);
    const auto n = r.read_u64();
    st.history.clear();
    for (std::uint64_t i = 0; i < n; ++i) {
        IterationRecord h;
        h.iteration = r.read_u64();
        h.env_steps = r.read_u64();
        h.eval.mean_env_return = r.read_f64();
        h.eval.std_env_return = r.read_f64();
        h.eval.success_rate = r.read_f64();
        h.successes = r.read_u64();
        h.failures = r.read_u64();
        st.history.push_back(h);
    }
    r.finish();
    // Drop anything written by an iteration that did not complete.
    truncate_file(path_in(c.out_dir, "demos.jsonl"), demos_size);
    truncate_file(path_in(c.out_dir, "metrics.csv"), metrics_size);
    truncate_file(path_in(c.out_dir, "eval.csv"), eval_size);
    st.demos = load_demos(path_in(c.out_dir, "demos.jsonl"));
}

inline void append_line(const std::string& path, const std::string& line) {
    std::ofstream os(path, std::ios::app);
    if (!os) throw Error("cannot append to '" + path + "'");
    os << line << '\n';
}

inline std::string fmt_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace detail

struct RunOptions {
    bool resume = false;
    /// Stop after this many completed iterations (in addition to the config budget).
    std::optional<std::size_t> stop_after;
    std::function<void(const IterationRecord&)> on_iteration;
};

/// Executes the loop for the configured budget. Files written to out_dir:
/// demos.jsonl (append-only), metrics.csv, eval.csv, reward_iter<k>.json,
/// policy_iter<k>.json, heatmap_iter<k>.csv and snapshot.bin.
inline RunArtifacts run_twcrl(const RunConfig& config, const RunOptions& options = {}) {
    config.validate();
    std::filesystem::create_directories(config.out_dir);

    RunState st;
    st.spec = load_map(config.map_path);
    st.spec.horizon = config.horizon;
    st.spec.goal_cells_mode = config.goal_mode;
    const ClassificationRule rule = make_rule(config, st.spec);

    RunArtifacts art;
    art.out_dir = config.out_dir;
    art.demos_path = detail::path_in(config.out_dir, "demos.jsonl");
    art.metrics_path = detail::path_in(config.out_dir, "metrics.csv");
    art.eval_path = detail::path_in(config.out_dir, "eval.csv");

    st.reward = RewardModel(kMazeObsDim, config.reward_hidden, TimeWeightParams{config.alpha, config.horizon},
                            config.reward_lr);
    {
        Rng rng = make_rng(config.seed, "reward-init");
        st.reward.init_random(rng);
    }
    {
        Rng rng = make_rng(config.seed, "policy-init");
        st.td3 = TD3State(kMazeObsDim, kMazeActDim, config.td3, rng);
    }

    if (options.resume) {
        detail::read_snapshot(config, st);
    } else {
        for (const auto& p : {art.demos_path, art.metrics_path, art.eval_path}) std::filesystem::remove(p);
        if (!config.vanilla_td3) {
            st.demos = load_demos(config.demos_path, rule);
            if (st.demos.successes.empty())
                throw ValidationError("expert demo file '" + config.demos_path + "' holds no successful trajectory");
            for (const auto& t : st.demos.successes)
                if (t.length() > config.horizon) throw ValidationError("expert demo longer than the run horizon");
            save_demos(st.demos, art.demos_path);
        } else {
            save_demos(st.demos, art.demos_path);
        }
        detail::append_line(art.metrics_path, "iteration,episode,env_return,learned_return,success,steps");
        detail::append_line(art.eval_path, "iteration,env_steps,success_rate,mean_env_return,std_env_return,"
                                           "successes,failures");
        detail::fit_reward(config, st, 0);
        detail::write_checkpoints(config, st, art, 0);
        detail::write_snapshot(config, st);
    }

    const PolicyTrainOptions train_opts{config.reward_on, config.absorbing_done};
    const std::size_t steps_per_iter = config.reward_update_interval * config.horizon;
    const std::uint64_t policy_seed = derive_seed(config.seed, "policy");
    const std::uint64_t eval_seed = derive_seed(config.seed, "eval");
    const std::uint64_t rollout_seed = derive_seed(config.seed, "rollouts");
    const std::size_t rollout_cost = config.rollouts_per_iteration * config.horizon;

    while (st.iteration < config.iterations) {
        const std::size_t used = st.td3.env_steps + st.rollout_steps;
        if (config.max_env_steps && used + steps_per_iter + rollout_cost > config.max_env_steps) break;
        if (st.streak >= config.converge_patience) {
            art.converged = true;
            break;
        }
        if (options.stop_after && st.iteration >= *options.stop_after) break;
        const std::size_t k = st.iteration + 1;

        // Policy optimization against the current reward; its episodes are the new rollouts.
        const auto trained = train_policy(st.td3, st.spec, detail::make_scorer(config, st), steps_per_iter,
                                          derive_seed(policy_seed, k), train_opts, st.episodes);
        st.episodes += trained.trajectories.size();

        DemoSet collected;
        for (auto traj : trained.trajectories) {
            traj.outcome = classify_trajectory(traj, rule);
            collected.add(std::move(traj));
        }
        if (config.rollouts_per_iteration > 0) {
            collected.append(collect_rollouts(exploring_policy(st.td3), st.spec, config.rollouts_per_iteration, rule,
                                              derive_seed(rollout_seed, k), config.threads));
            st.rollout_steps += rollout_cost;
        }
        save_demos(collected, art.demos_path, true);
        st.demos.append(collected);
        for (const auto& m : trained.episodes)
            detail::append_line(art.metrics_path, std::to_string(k) + "," + std::to_string(m.episode) + "," +
                                                      detail::fmt_double(m.env_return) + "," +
                                                      detail::fmt_double(m.learned_return) + "," +
                                                      (m.success ? "1" : "0") + "," + std::to_string(m.steps));

        // Refit the reward on the grown set and relabel stored transitions.
        detail::fit_reward(config, st, k);
        if (!config.vanilla_td3 && config.relabel_replay) st.td3.replay.relabel(detail::make_relabeler(config, st));

        IterationRecord rec;
        rec.iteration = k;
        rec.env_steps = st.td3.env_steps + st.rollout_steps;
        rec.eval = evaluate(st.td3.actor, st.spec, config.eval_episodes, eval_seed, config.threads);
        rec.successes = collected.successes.size();
        rec.failures = collected.failures.size();
        st.history.push_back(rec);
        st.streak = rec.eval.success_rate >= config.converge_success ? st.streak + 1 : 0;
        detail::append_line(art.eval_path, std::to_string(k) + "," + std::to_string(rec.env_steps) + "," +
                                               detail::fmt_double(rec.eval.success_rate) + "," +
                                               detail::fmt_double(rec.eval.mean_env_return) + "," +
                                               detail::fmt_double(rec.eval.std_env_return) + "," +
                                               std::to_string(rec.successes) + "," + std::to_string(rec.failures));

        st.iteration = k;
        detail::write_checkpoints(config, st, art, k);
        detail::write_snapshot(config, st);
        if (options.on_iteration) options.on_iteration(rec);
    }
    if (st.streak >= config.converge_patience) art.converged = true;
    art.history = st.history;
    art.demo_count = st.demos.size();
    return art;
}

}  // namespace twcrl
