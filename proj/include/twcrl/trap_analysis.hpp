#pragma once

// Trap states of a finite MDP: the largest non-goal set whose every action
// keeps all probability mass inside the set.

#include "twcrl/core.hpp"

#include <deque>
#include <vector>

namespace twcrl {

enum class TrapMethod { FixedPoint, BruteForce };

struct TrapReport {
    std::vector<std::size_t> trap_states;  // sorted ascending
    std::size_t iterations = 0;
    TrapMethod method = TrapMethod::FixedPoint;

    bool contains(std::size_t s) const {
        return std::binary_search(trap_states.begin(), trap_states.end(), s);
    }
};

/// Greatest fixed point of the self-containment condition. Starts from all
/// non-goal states and removes states that leak mass outside the candidate
/// set; removals are propagated through reverse support edges.
inline TrapReport compute_trap_set(const TabularMDP& mdp) {
    if (mdp.goal_states.empty()) throw MissingGoals("trap analysis needs at least one goal state");
    validate_mdp(mdp);

    const std::size_t n = mdp.n_states;
    std::vector<char> in_set(n, 1);
    for (std::size_t g : mdp.goal_states) in_set[g] = 0;

    // predecessors[s'] = states with some action putting positive mass on s'
    std::vector<std::vector<std::size_t>> predecessors(n);
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t a = 0; a < mdp.n_actions; ++a)
            for (std::size_t sp = 0; sp < n; ++sp)
                if (mdp.probs(s, a)[sp] > 0.0) predecessors[sp].push_back(s);

    auto leaks = [&](std::size_t s) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            const auto& p = mdp.probs(s, a);
            for (std::size_t sp = 0; sp < n; ++sp)
                if (p[sp] > 0.0 && !in_set[sp]) return true;
        }
        return false;
    };

    TrapReport report;
    std::vector<std::size_t> frontier;
    for (std::size_t s = 0; s < n; ++s)
        if (in_set[s] && leaks(s)) frontier.push_back(s);

    // Each sweep removes the current frontier and collects the predecessors it exposes.
    while (!frontier.empty()) {
        ++report.iterations;
        for (std::size_t s : frontier) in_set[s] = 0;
        std::vector<std::size_t> next;
        for (std::size_t removed : frontier)
            for (std::size_t pred : predecessors[removed])
                if (in_set[pred] && std::find(next.begin(), next.end(), pred) == next.end())
                    next.push_back(pred);
        frontier = std::move(next);
    }

    for (std::size_t s = 0; s < n; ++s)
        if (in_set[s]) report.trap_states.push_back(s);
    return report;
}

/// True iff no goal state is reachable from `s` in the support graph.
inline bool brute_force_trap_check(const TabularMDP& mdp, std::size_t s) {
    if (s >= mdp.n_states) throw OutOfRange("state index " + std::to_string(s) + " out of range");
    std::vector<char> seen(mdp.n_states, 0);
    std::deque<std::size_t> queue{s};
    seen[s] = 1;
    while (!queue.empty()) {
        const std::size_t u = queue.front();
        queue.pop_front();
        if (mdp.is_goal(u)) return false;
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            const auto& p = mdp.probs(u, a);
            for (std::size_t v = 0; v < mdp.n_states; ++v)
                if (p[v] > 0.0 && !seen[v]) {
                    seen[v] = 1;
                    queue.push_back(v);
                }
        }
    }
    return true;
}

inline TrapReport brute_force_trap_set(const TabularMDP& mdp) {
    TrapReport report;
    report.method = TrapMethod::BruteForce;
    for (std::size_t s = 0; s < mdp.n_states; ++s)
        if (brute_force_trap_check(mdp, s)) report.trap_states.push_back(s);
    report.iterations = 1;
    return report;
}

}  // namespace twcrl
