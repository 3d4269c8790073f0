#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace twcrl;

namespace {

TabularMDP chain3() { return load_mdp(test::data_file("chain3.json")); }

/// Random MDP with a mix of deterministic and stochastic rows.
TabularMDP random_mdp(Rng& rng, std::size_t max_states, std::size_t max_actions) {
    TabularMDP m;
    m.n_states = 2 + rng() % (max_states - 1);
    m.n_actions = 1 + rng() % max_actions;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t s = 0; s < m.n_states; ++s) {
        std::vector<Vec> rows;
        for (std::size_t a = 0; a < m.n_actions; ++a) {
            Vec p(m.n_states, 0.0);
            if (rng() % 2 == 0) {
                p[rng() % m.n_states] = 1.0;
            } else {
                const std::size_t k = 1 + rng() % 3;
                for (std::size_t i = 0; i < k; ++i) p[rng() % m.n_states] += u(rng) + 0.01;
                double total = 0.0;
                for (double x : p) total += x;
                for (double& x : p) x /= total;
            }
            rows.push_back(p);
        }
        m.transition_probs.push_back(rows);
    }
    const std::size_t goals = 1 + rng() % 2;
    for (std::size_t g = 0; g < goals; ++g) {
        const std::size_t s = rng() % m.n_states;
        if (!m.is_goal(s)) m.goal_states.push_back(s);
    }
    return m;
}

}  // namespace

TEST(TrapSet, ChainHasTwoTraps) {
    const auto r = compute_trap_set(chain3());
    EXPECT_EQ(r.trap_states, (std::vector<std::size_t>{0, 1}));
    EXPECT_TRUE(r.contains(0));
    EXPECT_FALSE(r.contains(2));
}

TEST(TrapSet, EmptyWhenEveryStateCanEnterGoal) {
    TabularMDP m;
    m.n_states = 3;
    m.n_actions = 2;
    m.goal_states = {0};
    m.transition_probs = {{{1, 0, 0}, {1, 0, 0}}, {{0.1, 0.9, 0}, {0, 0, 1}}, {{0, 0, 1}, {0.5, 0, 0.5}}};
    EXPECT_TRUE(compute_trap_set(m).trap_states.empty());
}

TEST(TrapSet, MissingGoalsRejected) {
    auto m = chain3();
    m.goal_states.clear();
    EXPECT_THROW(compute_trap_set(m), MissingGoals);
}

TEST(TrapSet, TerminatesWithinStateCountSweeps) {
    Rng rng(1);
    for (int i = 0; i < 100; ++i) {
        const auto m = random_mdp(rng, 8, 3);
        EXPECT_LE(compute_trap_set(m).iterations, m.n_states);
    }
}

TEST(BruteForce, Examples) {
    const auto m = chain3();
    EXPECT_FALSE(brute_force_trap_check(m, 2));
    EXPECT_TRUE(brute_force_trap_check(m, 1));
    EXPECT_TRUE(brute_force_trap_check(m, 0));
    EXPECT_THROW(brute_force_trap_check(m, 3), OutOfRange);
}

TEST(TrapSet, MatchesReachabilityOracleOnRandomMdps) {
    Rng rng(2024);
    std::size_t nonempty = 0;
    for (int i = 0; i < 200; ++i) {
        const auto m = random_mdp(rng, 8, 3);
        const auto r = compute_trap_set(m);
        for (std::size_t s = 0; s < m.n_states; ++s)
            ASSERT_EQ(r.contains(s), brute_force_trap_check(m, s)) << "mdp " << i << " state " << s;
        nonempty += !r.trap_states.empty();
    }
    EXPECT_GT(nonempty, 20u);
}

TEST(TrapSet, AddingGoalEdgeRemovesState) {
    Rng rng(7);
    for (int i = 0; i < 100; ++i) {
        auto m = random_mdp(rng, 8, 3);
        const auto before = compute_trap_set(m);
        if (before.trap_states.empty()) continue;
        const std::size_t s = before.trap_states[rng() % before.trap_states.size()];
        auto& p = m.transition_probs[s][0];
        for (double& x : p) x *= 0.5;
        p[m.goal_states[0]] += 0.5;
        const auto after = compute_trap_set(m);
        EXPECT_FALSE(after.contains(s));
        for (std::size_t t : after.trap_states) EXPECT_TRUE(before.contains(t));
    }
}

TEST(TrapSet, OneStepFromTrapStaysInTraps) {
    Rng rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        const auto m = random_mdp(rng, 8, 3);
        const auto r = compute_trap_set(m);
        for (std::size_t s : r.trap_states)
            for (std::size_t a = 0; a < m.n_actions; ++a)
                for (int k = 0; k < 20; ++k) {
                    std::discrete_distribution<std::size_t> next(m.probs(s, a).begin(), m.probs(s, a).end());
                    EXPECT_TRUE(r.contains(next(rng)));
                }
    }
}

TEST(MdpFile, MalformedRejected) {
    EXPECT_THROW(parse_mdp(nlohmann::json::parse(R"({"n_states": 2})")), ValidationError);
    EXPECT_THROW(parse_mdp(nlohmann::json::parse(
                     R"({"n_states":1,"n_actions":1,"goals":[0],"transitions":[[[0.5]]]})")),
                 ValidationError);
}
