// twcrl command-line tool.

#include "twcrl/twcrl.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace twcrl;

namespace {

struct Common {
    std::uint64_t seed = 0;
    std::string out;
    std::size_t threads = 1;
    bool paper_hparams = false;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
    cmd->add_option("--seed", c.seed, "Root random seed");
    cmd->add_option("--out", c.out, out_help);
    cmd->add_option("--threads", c.threads, "Worker threads for rollouts (1 = serial)")->check(CLI::PositiveNumber);
    cmd->add_flag("--paper-hparams", c.paper_hparams, "Use the published hyperparameter table");
}

std::string fmt(double x, const char* spec = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, x);
    return buf;
}

Point parse_point(const std::string& text) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) throw ValidationError("expected 'x,y', got '" + text + "'");
    try {
        return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
    } catch (const std::exception&) {
        throw ValidationError("expected 'x,y', got '" + text + "'");
    }
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string config;
    bool resume = false;
    std::size_t iterations = 0;
};

int cmd_train(const TrainArgs& a, const Common& c, CLI::App* cmd) {
    if (!std::filesystem::exists(a.config)) throw ValidationError("config file '" + a.config + "' does not exist");
    nlohmann::json j = read_json_file(a.config);
    if (c.paper_hparams) j["paper_hparams"] = true;
    if (cmd->count("--seed")) j["seed"] = c.seed;
    if (cmd->count("--out")) j["out_dir"] = c.out;
    if (cmd->count("--threads")) j["threads"] = c.threads;
    if (cmd->count("--iterations")) j["iterations"] = a.iterations;
    const RunConfig config = parse_run_config(j);

    RunOptions opts;
    opts.resume = a.resume;
    opts.on_iteration = [](const IterationRecord& r) {
        std::cout << "iteration " << r.iteration << "  env_steps " << r.env_steps << "  success_rate "
                  << fmt(r.eval.success_rate, "%.3f") << "  mean_return " << fmt(r.eval.mean_env_return, "%.2f")
                  << "  collected +" << r.successes << "/-" << r.failures << std::endl;
    };
    const RunArtifacts art = run_twcrl(config, opts);
    std::cout << "done: " << art.history.size() << " iterations, " << art.demo_count << " demos"
              << (art.converged ? ", converged" : "") << ", artifacts in " << art.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct DemoGenArgs {
    std::string map;
    std::size_t n = 5;
    std::string path;
    std::string goal_mode = "one";
    std::size_t horizon = 300;
};

int cmd_demo_gen(const DemoGenArgs& a, const Common& c) {
    if (c.out.empty()) throw ValidationError("demo-gen needs --out");
    if (a.n < 1) throw ValidationError("--n must be >= 1");
    MazeSpec spec = load_map(a.map);
    spec.horizon = a.horizon;
    spec.goal_cells_mode = parse_goal_mode(a.goal_mode);
    const std::vector<Cell> waypoints = a.path.empty() ? std::vector<Cell>{} : parse_waypoints(a.path);
    DemoSet demos;
    for (std::size_t i = 0; i < a.n; ++i) {
        const std::uint64_t seed = derive_seed(derive_seed(c.seed, "demos"), i);
        Trajectory t = waypoints.empty() ? scripted_expert(spec, seed) : scripted_expert(spec, seed, waypoints);
        demos.add(std::move(t));
    }
    save_demos(demos, c.out);
    std::cout << "wrote " << demos.successes.size() << " successful and " << demos.failures.size()
              << " failed demos to " << c.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct HeatmapArgs {
    std::string map;
    std::string reward;
    std::size_t res = 64;
    std::string pgm;
    std::string goal;
};

int cmd_heatmap(const HeatmapArgs& a, const Common& c) {
    if (c.out.empty()) throw ValidationError("heatmap needs --out");
    const MazeSpec spec = load_map(a.map);
    const RewardModel model = load_reward_model(a.reward);
    if (model.net.input_dim() != kMazeObsDim)
        throw DimensionMismatch("reward checkpoint input", kMazeObsDim, model.net.input_dim());
    const Point goal = a.goal.empty() ? spec.cell_center(spec.goal_candidates().front()) : parse_point(a.goal);
    const Heatmap h =
        reward_heatmap(spec, [&](std::span<const double> o) { return score(model, o); }, a.res, goal);
    save_heatmap_csv(h, c.out);
    if (!a.pgm.empty()) save_heatmap_pgm(h, a.pgm);
    const double goal_mean = disc_mean(spec, h, goal, spec.goal_radius * spec.cell_size);
    std::cout << "goal disc mean " << fmt(goal_mean, "%.4f");
    if (!spec.trap_cells().empty()) std::cout << "  trap disc mean " << fmt(trap_mean(spec, h), "%.4f");
    std::cout << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct ValidateArgs {
    double alpha = 2.0;
    std::size_t horizon = 300;
    std::size_t samples = 100000;
    std::string csv;
};

int cmd_validate_tw(ValidateArgs a, const Common& c, CLI::App* cmd) {
    if (c.paper_hparams) {
        if (!cmd->count("--alpha")) a.alpha = 2.0;
        if (!cmd->count("--horizon")) a.horizon = 300;
    }
    const TimeWeightParams p{a.alpha, a.horizon};
    p.validate();
    const std::string csv = !a.csv.empty() ? a.csv : c.out;
    const std::size_t T = a.horizon;

    std::vector<double> f(T + 1), w(T + 1), exact(T + 1);
    for (std::size_t t = 0; t <= T; ++t) {
        f[t] = transition_prob_f(t, p);
        w[t] = time_weight_w(t, p);
        exact[t] = exact_conditional(t, p);
    }

    std::vector<std::size_t> shown;
    const std::size_t stride = T <= 30 ? 1 : T / 20;
    for (std::size_t t = 0; t <= T; t += stride) shown.push_back(t);
    if (shown.back() != T) shown.push_back(T);
    std::printf("%6s %24s %24s %24s %12s\n", "t", "f", "w", "exact", "|delta|");
    for (std::size_t t : shown)
        std::printf("%6zu %24.17g %24.17g %24.17g %12.3e\n", t, f[t], w[t], exact[t], std::abs(w[t] - exact[t]));

    bool ok = true;
    auto check = [&](const std::string& name, bool pass, const std::string& detail) {
        std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << "\n";
        ok = ok && pass;
    };
    check("boundary", w[0] == 0.0 && w[T] == 1.0, "w(0)=" + fmt(w[0]) + " w(T)=" + fmt(w[T]));
    bool monotone = true, finite = true;
    for (std::size_t t = 0; t <= T; ++t) {
        finite = finite && std::isfinite(f[t]) && std::isfinite(w[t]) && std::isfinite(exact[t]);
        if (t > 0 && w[t] < w[t - 1]) monotone = false;
    }
    check("monotone", monotone, "w non-decreasing over t=0..T");
    check("finite", finite, "no NaN or infinity");

    double max_gap = 0.0;
    std::size_t regime = 0;
    for (std::size_t t = 1; t <= T; ++t)
        if (f[t] * static_cast<double>(T) >= 40.0) {
            ++regime;
            max_gap = std::max(max_gap, std::abs(w[t] - exact[t]));
        }
    check("approximation", max_gap <= 1e-6,
          std::to_string(regime) + " steps with f*T >= 40, max |delta| " + fmt(max_gap, "%.3e"));

    const double k = std::min(0.5, 2.0 / static_cast<double>(T));
    const std::size_t t_mid = std::max<std::size_t>(1, T / 4);
    const auto mc = mc_constant_k_conditional(k, t_mid, T, std::max<std::size_t>(a.samples, 1000), c.seed);
    const double closed = constant_k_conditional(k, t_mid, T);
    const double z = mc.std_error > 0 ? std::abs(mc.estimate - closed) / mc.std_error : 0.0;
    check("absorbing-chain oracle", mc.std_error > 0 ? z <= 3.0 : mc.estimate == closed,
          "k=" + fmt(k, "%.4g") + " t=" + std::to_string(t_mid) + " mc " + fmt(mc.estimate, "%.5f") + " +- " +
              fmt(mc.std_error, "%.1e") + " closed form " + fmt(closed, "%.5f"));

    if (!csv.empty()) {
        std::ofstream os(csv);
        if (!os) throw ValidationError("cannot open '" + csv + "' for writing");
        os << "t,f,w,exact,abs_delta\n";
        for (std::size_t t = 0; t <= T; ++t)
            os << t << ',' << fmt(f[t]) << ',' << fmt(w[t]) << ',' << fmt(exact[t]) << ','
               << fmt(std::abs(w[t] - exact[t])) << '\n';
    }
    return ok ? 0 : 2;
}

// ---------------------------------------------------------------------------

std::string state_set(const std::vector<std::size_t>& states) {
    std::string s = "{";
    for (std::size_t i = 0; i < states.size(); ++i) s += (i ? ", s" : "s") + std::to_string(states[i]);
    return s + "}";
}

int cmd_trap_check(const std::string& mdp_path, const Common& c) {
    const TabularMDP mdp = load_mdp(mdp_path);
    const TrapReport fixed = compute_trap_set(mdp);
    const TrapReport brute = brute_force_trap_set(mdp);
    const bool agree = fixed.trap_states == brute.trap_states;
    std::cout << state_set(fixed.trap_states) << "\n";
    std::cout << "fixed point: " << fixed.iterations << " removal rounds; reachability oracle "
              << (agree ? "agrees" : "DISAGREES: " + state_set(brute.trap_states)) << "\n";
    if (!c.out.empty()) {
        nlohmann::json j;
        j["trap_states"] = fixed.trap_states;
        j["iterations"] = fixed.iterations;
        j["oracle_agrees"] = agree;
        std::ofstream os(c.out);
        if (!os) throw ValidationError("cannot open '" + c.out + "' for writing");
        os << j.dump() << "\n";
    }
    return agree ? 0 : 2;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string map;
    std::string policy;
    std::size_t episodes = 20;
    std::string goal_mode = "one";
    std::size_t horizon = 300;
};

int cmd_eval(const EvalArgs& a, const Common& c) {
    MazeSpec spec = load_map(a.map);
    spec.horizon = a.horizon;
    spec.goal_cells_mode = parse_goal_mode(a.goal_mode);
    const DenseNet actor = load_net(a.policy);
    if (actor.input_dim() != kMazeObsDim || actor.output_dim() != kMazeActDim)
        throw DimensionMismatch("policy checkpoint input", kMazeObsDim, actor.input_dim());
    if (a.episodes < 1) throw ValidationError("--episodes must be >= 1");
    const EvalStats s = evaluate(actor, spec, a.episodes, derive_seed(c.seed, "eval"), c.threads);
    nlohmann::json j;
    j["episodes"] = a.episodes;
    j["goal_mode"] = to_string(spec.goal_cells_mode);
    j["success_rate"] = s.success_rate;
    j["mean_env_return"] = s.mean_env_return;
    j["std_env_return"] = s.std_env_return;
    std::cout << j.dump(2) << "\n";
    if (!c.out.empty()) {
        std::ofstream os(c.out);
        if (!os) throw ValidationError("cannot open '" + c.out + "' for writing");
        os << j.dump() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-weighted contrastive reward learning"};
    app.require_subcommand(1);

    Common train_c, demo_c, heat_c, tw_c, trap_c, eval_c;

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Run the reward/policy learning loop from a JSON config");
    train_cmd->add_option("--config", train.config, "Run config (JSON)")->required();
    train_cmd->add_flag("--resume", train.resume, "Continue from the snapshot in the output directory");
    train_cmd->add_option("--iterations", train.iterations, "Override the iteration budget");
    add_common(train_cmd, train_c, "Output directory (overrides out_dir)");

    DemoGenArgs demo;
    auto* demo_cmd = app.add_subcommand("demo-gen", "Generate scripted-expert demonstrations");
    demo_cmd->add_option("--map", demo.map, "Maze map file")->required();
    demo_cmd->add_option("--n", demo.n, "Number of demonstrations");
    demo_cmd->add_option("--path", demo.path, "Waypoint cells 'r,c;r,c;...' (default: shortest safe path)");
    demo_cmd->add_option("--goal-mode", demo.goal_mode, "one | three | any");
    demo_cmd->add_option("--horizon", demo.horizon, "Episode horizon");
    add_common(demo_cmd, demo_c, "Output demos file (JSON lines)");

    HeatmapArgs heat;
    auto* heat_cmd = app.add_subcommand("heatmap", "Export a learned reward surface");
    heat_cmd->add_option("--map", heat.map, "Maze map file")->required();
    heat_cmd->add_option("--reward", heat.reward, "Reward checkpoint")->required();
    heat_cmd->add_option("--res", heat.res, "Lattice resolution");
    heat_cmd->add_option("--pgm", heat.pgm, "Also write an 8-bit PGM image");
    heat_cmd->add_option("--goal", heat.goal, "Goal position 'x,y' fed to the scorer (default: goal cell center)");
    add_common(heat_cmd, heat_c, "Output CSV");

    ValidateArgs tw;
    auto* tw_cmd = app.add_subcommand("validate-tw", "Tabulate the time-weight function and run its oracles");
    tw_cmd->add_option("--alpha", tw.alpha, "Decay rate");
    tw_cmd->add_option("--horizon", tw.horizon, "Horizon T");
    tw_cmd->add_option("--samples", tw.samples, "Monte-Carlo samples for the absorbing-chain oracle");
    tw_cmd->add_option("--csv", tw.csv, "Write the full table as CSV");
    add_common(tw_cmd, tw_c, "Same as --csv");

    std::string mdp_path;
    auto* trap_cmd = app.add_subcommand("trap-check", "Compute the trap set of a tabular MDP");
    trap_cmd->add_option("--mdp", mdp_path, "MDP JSON file")->required();
    add_common(trap_cmd, trap_c, "Write the report as JSON");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a policy checkpoint without exploration noise");
    eval_cmd->add_option("--map", ev.map, "Maze map file")->required();
    eval_cmd->add_option("--policy", ev.policy, "Policy checkpoint")->required();
    eval_cmd->add_option("--episodes", ev.episodes, "Number of episodes");
    eval_cmd->add_option("--goal-mode", ev.goal_mode, "one | three | any");
    eval_cmd->add_option("--horizon", ev.horizon, "Episode horizon");
    add_common(eval_cmd, eval_c, "Write statistics as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*train_cmd) return cmd_train(train, train_c, train_cmd);
        if (*demo_cmd) return cmd_demo_gen(demo, demo_c);
        if (*heat_cmd) return cmd_heatmap(heat, heat_c);
        if (*tw_cmd) return cmd_validate_tw(tw, tw_c, tw_cmd);
        if (*trap_cmd) return cmd_trap_check(mdp_path, trap_c);
        if (*eval_cmd) return cmd_eval(ev, eval_c);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
