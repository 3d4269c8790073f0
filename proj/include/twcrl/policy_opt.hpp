#pragma once

// Off-policy TD3 training loop on maze environments against an arbitrary
// state scorer (the learned reward, or the env's own sparse reward).

#include "twcrl/core.hpp"
#include "twcrl/maze.hpp"
#include "twcrl/rng.hpp"
#include "twcrl/td3.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace twcrl {

/// Which observation the scorer sees for a transition s -> s'.
enum class RewardOn { Next, Current };

struct PolicyTrainOptions {
    RewardOn reward_on = RewardOn::Next;
    /// Stop bootstrapping at goal/trap absorption. Off by default: episodes run
    /// to the horizon and the frozen steps are stored, so the critic learns the
    /// value of staying absorbed.
    bool absorbing_done = false;
};

struct EpisodeMetrics {
    std::size_t episode = 0;  // global episode counter
    double env_return = 0.0;
    double learned_return = 0.0;
    bool success = false;
    std::size_t steps = 0;  // global env steps when the episode ended
};

struct TrainPolicyResult {
    std::vector<EpisodeMetrics> episodes;
    std::vector<Trajectory> trajectories;  // completed episodes, in order
};

/// Batch form of a state scorer: maps (obs, next_obs) columns to rewards.
using BatchScorer = std::function<Vector(const Matrix& obs, const Matrix& next_obs)>;

inline BatchScorer make_batch_scorer(const StateScorer& scorer, RewardOn on) {
    return [scorer, on](const Matrix& obs, const Matrix& next_obs) {
        const Matrix& src = on == RewardOn::Next ? next_obs : obs;
        Vector r(src.cols());
        std::vector<double> col(static_cast<std::size_t>(src.rows()));
        for (Eigen::Index j = 0; j < src.cols(); ++j) {
            for (Eigen::Index d = 0; d < src.rows(); ++d) col[static_cast<std::size_t>(d)] = src(d, j);
            r(j) = scorer(col);
        }
        return r;
    };
}

/// Env reward as a scorer: 1 inside the goal disc, else 0.
inline StateScorer sparse_env_scorer(const MazeSpec& spec) {
    return [spec](std::span<const double> obs) { return in_goal_disc(spec, obs) ? 1.0 : 0.0; };
}

/// Runs `total_steps` env steps of off-policy training. Episodes start from
/// reset(spec, derive_seed(seed, episode)); the first `start_steps` env steps
/// of the agent's lifetime use uniform random actions. Every transition is
/// stored with reward = scorer(s') (or scorer(s)) and followed by one TD3
/// update once the buffer holds a batch.
inline TrainPolicyResult train_policy(TD3State& td3, const MazeSpec& spec, const StateScorer& scorer,
                                      std::size_t total_steps, std::uint64_t seed,
                                      const PolicyTrainOptions& options = {}, std::size_t first_episode = 0) {
    if (td3.obs_dim() != kMazeObsDim || td3.act_dim() != kMazeActDim)
        throw DimensionMismatch("policy/env dimensions", kMazeObsDim, td3.obs_dim());
    TrainPolicyResult result;
    if (total_steps == 0) return result;

    Rng noise_rng = make_rng(seed, "noise");
    Rng update_rng = make_rng(seed, "update");
    const std::uint64_t env_seed = derive_seed(seed, "env");
    std::uniform_real_distribution<double> uniform(-td3.config.action_bound, td3.config.action_bound);

    std::size_t episode = first_episode;
    MazeState state = reset(spec, derive_seed(env_seed, episode));
    Trajectory traj;
    double learned_return = 0.0;
    auto begin_episode = [&] {
        traj = Trajectory{};
        traj.horizon = spec.horizon;
        traj.states.push_back(state.observation());
        learned_return = 0.0;
    };
    begin_episode();

    for (std::size_t i = 0; i < total_steps; ++i) {
        const auto obs = state.observation();
        std::vector<double> action;
        if (td3.env_steps < td3.config.start_steps) {
            action = {uniform(noise_rng), uniform(noise_rng)};
        } else {
            action = select_action(td3, obs, true, noise_rng);
        }
        const StepResult r = step(spec, state, action);
        const auto next_obs = r.next.observation();
        const double reward = scorer(options.reward_on == RewardOn::Next ? next_obs : obs);
        const bool done = options.absorbing_done && state.frozen == Frozen::Mobile && r.next.frozen != Frozen::Mobile;
        // With absorbing_done, frozen steps carry no information and are not stored.
        if (!(options.absorbing_done && state.frozen != Frozen::Mobile))
            td3.replay.add(obs, action, reward, next_obs, done);
        ++td3.env_steps;
        if (td3.replay.size() >= td3.config.batch_size) td3_update(td3, update_rng);

        traj.actions.push_back(action);
        traj.env_rewards.push_back(r.env_reward);
        traj.states.push_back(next_obs);
        learned_return += reward;
        state = r.next;

        if (r.truncated) {
            traj.episodic_return = sum_rewards(traj.env_rewards);
            traj.outcome = classify_trajectory(traj, maze_goal_rule(spec));
            result.episodes.push_back({episode, traj.episodic_return, learned_return,
                                       traj.outcome == Outcome::Success, td3.env_steps});
            result.trajectories.push_back(std::move(traj));
            ++episode;
            state = reset(spec, derive_seed(env_seed, episode));
            begin_episode();
        }
    }
    return result;
}

}  // namespace twcrl
