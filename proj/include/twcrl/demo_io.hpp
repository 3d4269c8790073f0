#pragma once

// JSON-lines demo files (one trajectory per line) and tabular MDP files.

#include "twcrl/core.hpp"
#include "twcrl/json_util.hpp"

#include <fstream>
#include <optional>
#include <string>

namespace twcrl {

/// Serializes one trajectory as a single JSON object (no trailing newline).
inline void write_demo_record(std::ostream& os, const Trajectory& traj) {
    validate_trajectory(traj);
    os << "{\"states\":";
    detail::write_matrix(os, traj.states);
    os << ",\"actions\":";
    detail::write_matrix(os, traj.actions);
    os << ",\"env_rewards\":";
    detail::write_vec(os, traj.env_rewards);
    os << ",\"outcome\":\"" << to_string(traj.outcome) << "\",\"episodic_return\":";
    detail::write_number(os, traj.episodic_return);
    os << ",\"horizon\":" << traj.horizon << '}';
}

inline Trajectory parse_demo_record(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    if (!j.is_object()) throw ValidationError("record is not a JSON object");
    for (const char* key : {"states", "actions", "env_rewards", "outcome", "episodic_return", "horizon"})
        if (!j.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
    Trajectory traj;
    traj.states = detail::read_matrix(j.at("states"), "states");
    traj.actions = detail::read_matrix(j.at("actions"), "actions");
    traj.env_rewards = detail::read_vec(j.at("env_rewards"), "env_rewards");
    const auto outcome = j.at("outcome").get<std::string>();
    if (outcome == "success")
        traj.outcome = Outcome::Success;
    else if (outcome == "failure")
        traj.outcome = Outcome::Failure;
    else
        throw ValidationError("outcome must be \"success\" or \"failure\"");
    traj.episodic_return = j.at("episodic_return").get<double>();
    const auto& h = j.at("horizon");
    if (!h.is_number_unsigned()) throw ValidationError("horizon must be a non-negative integer");
    traj.horizon = h.get<std::size_t>();
    return traj;
}

/// Writes every trajectory (successes first) to `os`, one line each.
inline void write_demos(std::ostream& os, const DemoSet& demos) {
    for (const auto& t : demos.successes) {
        if (t.outcome != Outcome::Success) throw ValidationError("failure trajectory in success set");
        write_demo_record(os, t);
        os << '\n';
    }
    for (const auto& t : demos.failures) {
        if (t.outcome != Outcome::Failure) throw ValidationError("success trajectory in failure set");
        write_demo_record(os, t);
        os << '\n';
    }
}

inline void save_demos(const DemoSet& demos, const std::string& path, bool append = false) {
    std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
    if (!os) throw ValidationError("cannot open '" + path + "' for writing");
    write_demos(os, demos);
    if (!os) throw Error("write to '" + path + "' failed");
}

/// Parses demo records. When `rule` is given, each outcome is re-derived and a
/// mismatch with the stored label is rejected.
inline DemoSet read_demos(std::istream& is, const std::optional<ClassificationRule>& rule = std::nullopt) {
    DemoSet demos;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Trajectory traj;
        try {
            traj = parse_demo_record(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, e.what());
        } catch (const ValidationError& e) {
            throw ParseError(lineno, e.what());
        }
        try {
            validate_trajectory(traj);
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (rule && !traj.empty() && classify_trajectory(traj, *rule) != traj.outcome)
            throw ValidationError("line " + std::to_string(lineno) + ": stored outcome '" +
                                  to_string(traj.outcome) + "' disagrees with classification rule");
        demos.add(std::move(traj));
    }
    return demos;
}

inline DemoSet load_demos(const std::string& path, const std::optional<ClassificationRule>& rule = std::nullopt) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open demo file '" + path + "'");
    return read_demos(is, rule);
}

// ---------------------------------------------------------------------------
// Tabular MDP files:
// {"n_states": n, "n_actions": m, "goals": [...], "transitions": [[[p,...],...],...], "initial": [...]}

inline TabularMDP parse_mdp(const nlohmann::json& j) {
    TabularMDP mdp;
    try {
        mdp.n_states = j.at("n_states").get<std::size_t>();
        mdp.n_actions = j.at("n_actions").get<std::size_t>();
        mdp.goal_states = j.at("goals").get<std::vector<std::size_t>>();
        const auto& tr = j.at("transitions");
        if (!tr.is_array()) throw ValidationError("transitions must be an array");
        for (const auto& per_state : tr) mdp.transition_probs.push_back(detail::read_matrix(per_state, "transitions"));
        if (j.contains("initial")) mdp.initial_dist = detail::read_vec(j.at("initial"), "initial");
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed MDP: ") + e.what());
    }
    validate_mdp(mdp);
    return mdp;
}

inline TabularMDP load_mdp(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open MDP file '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("'" + path + "': " + e.what());
    }
    return parse_mdp(j);
}

inline nlohmann::json mdp_to_json(const TabularMDP& mdp) {
    nlohmann::json j;
    j["n_states"] = mdp.n_states;
    j["n_actions"] = mdp.n_actions;
    j["goals"] = mdp.goal_states;
    j["transitions"] = mdp.transition_probs;
    if (!mdp.initial_dist.empty()) j["initial"] = mdp.initial_dist;
    return j;
}

}  // namespace twcrl
