#pragma once

// Domain types shared by every module: transitions, trajectories, demo sets,
// tabular MDPs, and the success/failure taxonomy.

#include "twcrl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace twcrl {

using Vec = std::vector<double>;

enum class Outcome { Success, Failure };

inline const char* to_string(Outcome o) { return o == Outcome::Success ? "success" : "failure"; }

struct Transition {
    Vec state;
    Vec action;
    Vec next_state;
    double env_reward = 0.0;
    std::size_t step_index = 0;
};

/// A recorded episode. States are stored once: `states` holds s_0..s_n and
/// `actions`/`env_rewards` hold the n transitions between them, so the
/// trajectory length is the number of actions.
struct Trajectory {
    std::vector<Vec> states;
    std::vector<Vec> actions;
    Vec env_rewards;
    Outcome outcome = Outcome::Failure;
    double episodic_return = 0.0;
    std::size_t horizon = 0;

    std::size_t length() const noexcept { return actions.size(); }
    bool empty() const noexcept { return actions.empty(); }

    Transition transition(std::size_t i) const {
        return Transition{states.at(i), actions.at(i), states.at(i + 1), env_rewards.at(i), i};
    }

    const Vec& final_state() const { return states.back(); }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Sum of env rewards in recording order; the stored episodic return is always this value.
inline double sum_rewards(std::span<const double> rewards) {
    double total = 0.0;
    for (double r : rewards) total += r;
    return total;
}

/// Checks the structural invariants (shape alignment, action bound, return consistency).
inline void validate_trajectory(const Trajectory& traj) {
    if (traj.states.size() != traj.actions.size() + 1)
        throw ValidationError("trajectory needs exactly one more state than actions (got " +
                              std::to_string(traj.states.size()) + " states, " +
                              std::to_string(traj.actions.size()) + " actions)");
    if (traj.env_rewards.size() != traj.actions.size())
        throw ValidationError("env_rewards and actions differ in length");
    if (traj.horizon > 0 && traj.length() > traj.horizon)
        throw ValidationError("trajectory longer than its horizon");
    for (const auto& a : traj.actions)
        for (double x : a)
            if (!(x >= -1.0 && x <= 1.0))
                throw ValidationError("action component " + std::to_string(x) + " outside [-1, 1]");
    for (const auto& s : traj.states)
        for (double x : s)
            if (!std::isfinite(x)) throw ValidationError("non-finite state component");
    if (sum_rewards(traj.env_rewards) != traj.episodic_return)
        throw ValidationError("episodic_return does not equal the sum of env_rewards");
}

struct DemoSet {
    std::vector<Trajectory> successes;
    std::vector<Trajectory> failures;

    std::size_t size() const noexcept { return successes.size() + failures.size(); }
    bool empty() const noexcept { return size() == 0; }

    /// N: the number of labeled states (s_0..s_n of every trajectory).
    std::size_t state_count() const noexcept {
        std::size_t n = 0;
        for (const auto& t : successes) n += t.states.size();
        for (const auto& t : failures) n += t.states.size();
        return n;
    }

    void add(Trajectory traj) {
        (traj.outcome == Outcome::Success ? successes : failures).push_back(std::move(traj));
    }

    void append(const DemoSet& other) {
        successes.insert(successes.end(), other.successes.begin(), other.successes.end());
        failures.insert(failures.end(), other.failures.begin(), other.failures.end());
    }

    friend bool operator==(const DemoSet&, const DemoSet&) = default;
};

// ---------------------------------------------------------------------------
// Classification

/// Success iff the final state satisfies the goal predicate.
struct TerminalGoal {
    std::function<bool(std::span<const double>)> in_goal;
};

/// Success iff episodic return >= threshold.
struct ReturnThreshold {
    double threshold = 0.0;
};

using ClassificationRule = std::variant<TerminalGoal, ReturnThreshold>;

inline Outcome classify_trajectory(const Trajectory& traj, const ClassificationRule& rule) {
    if (traj.empty()) throw InvalidTrajectory("cannot classify an empty trajectory");
    if (const auto* goal = std::get_if<TerminalGoal>(&rule)) {
        return goal->in_goal(traj.final_state()) ? Outcome::Success : Outcome::Failure;
    }
    const auto& thr = std::get<ReturnThreshold>(rule);
    return traj.episodic_return >= thr.threshold ? Outcome::Success : Outcome::Failure;
}

/// Keeps the first min(len, horizon) transitions and re-classifies under `rule`.
inline Trajectory truncate_trajectory(const Trajectory& traj, std::size_t horizon,
                                      const ClassificationRule& rule) {
    if (horizon < 1) throw InvalidHorizon("truncation horizon must be >= 1");
    Trajectory out = traj;
    const std::size_t n = std::min(traj.length(), horizon);
    out.actions.resize(n);
    out.env_rewards.resize(n);
    out.states.resize(n + 1);
    out.episodic_return = sum_rewards(out.env_rewards);
    out.horizon = std::min(traj.horizon == 0 ? horizon : traj.horizon, horizon);
    if (!out.empty()) out.outcome = classify_trajectory(out, rule);
    return out;
}

// ---------------------------------------------------------------------------
// Tabular MDP

struct TabularMDP {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    /// transition_probs[s][a][s'] = P(s' | s, a)
    std::vector<std::vector<Vec>> transition_probs;
    std::vector<std::size_t> goal_states;
    Vec initial_dist;

    const Vec& probs(std::size_t s, std::size_t a) const { return transition_probs[s][a]; }

    bool is_goal(std::size_t s) const {
        return std::find(goal_states.begin(), goal_states.end(), s) != goal_states.end();
    }
};

inline void validate_mdp(const TabularMDP& mdp) {
    auto check_dist = [&](const Vec& p, const std::string& where) {
        if (p.size() != mdp.n_states)
            throw ValidationError(where + ": distribution has " + std::to_string(p.size()) +
                                  " entries, expected " + std::to_string(mdp.n_states));
        double total = 0.0;
        for (double x : p) {
            if (!(x >= 0.0) || !std::isfinite(x))
                throw ValidationError(where + ": negative or non-finite probability");
            total += x;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw ValidationError(where + ": probabilities sum to " + std::to_string(total));
    };
    if (mdp.n_states == 0 || mdp.n_actions == 0)
        throw ValidationError("MDP needs at least one state and one action");
    if (mdp.transition_probs.size() != mdp.n_states)
        throw ValidationError("transition table has wrong number of states");
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        if (mdp.transition_probs[s].size() != mdp.n_actions)
            throw ValidationError("state " + std::to_string(s) + " has wrong number of actions");
        for (std::size_t a = 0; a < mdp.n_actions; ++a)
            check_dist(mdp.transition_probs[s][a],
                       "P(.|" + std::to_string(s) + "," + std::to_string(a) + ")");
    }
    for (std::size_t g : mdp.goal_states)
        if (g >= mdp.n_states) throw ValidationError("goal state index out of range");
    if (!mdp.initial_dist.empty()) check_dist(mdp.initial_dist, "initial distribution");
}

}  // namespace twcrl
