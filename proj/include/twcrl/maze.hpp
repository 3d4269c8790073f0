#pragma once

// Continuous point-mass mazes with absorbing goal and trap discs.
//
// World frame: x grows with the column index and y with the row index, so
// cell (row, col) covers [col, col+1) x [row, row+1) times cell_size.
// Observations are (x, y, gx, gy).

#include "twcrl/core.hpp"
#include "twcrl/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace twcrl {

enum class CellKind { Wall, Free, Start, GoalCandidate, Trap };

/// Where goals are drawn from at reset.
enum class GoalCellsMode { One, Three, Any };

inline GoalCellsMode parse_goal_mode(const std::string& s) {
    if (s == "one" || s == "1") return GoalCellsMode::One;
    if (s == "three" || s == "3") return GoalCellsMode::Three;
    if (s == "any") return GoalCellsMode::Any;
    throw ValidationError("unknown goal mode '" + s + "' (expected one|three|any)");
}

inline const char* to_string(GoalCellsMode m) {
    switch (m) {
        case GoalCellsMode::One: return "one";
        case GoalCellsMode::Three: return "three";
        case GoalCellsMode::Any: return "any";
    }
    return "one";
}

struct Cell {
    int row = 0;
    int col = 0;
    friend bool operator==(const Cell&, const Cell&) = default;
};

struct Point {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct MazeSpec {
    std::vector<std::vector<CellKind>> grid;
    double cell_size = 1.0;
    double goal_radius = 0.45;  // in cells
    double trap_radius = 0.45;  // in cells
    double step_scale = 0.2;    // world units per unit action
    std::size_t horizon = 300;
    GoalCellsMode goal_cells_mode = GoalCellsMode::One;

    int rows() const { return static_cast<int>(grid.size()); }
    int cols() const { return grid.empty() ? 0 : static_cast<int>(grid[0].size()); }

    CellKind at(int row, int col) const {
        if (row < 0 || col < 0 || row >= rows() || col >= cols()) return CellKind::Wall;
        return grid[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)];
    }
    bool is_wall(int row, int col) const { return at(row, col) == CellKind::Wall; }
    bool is_wall(Cell c) const { return is_wall(c.row, c.col); }

    std::vector<Cell> cells_of(CellKind kind) const {
        std::vector<Cell> out;
        for (int r = 0; r < rows(); ++r)
            for (int c = 0; c < cols(); ++c)
                if (at(r, c) == kind) out.push_back({r, c});
        return out;
    }

    std::vector<Cell> start_cells() const { return cells_of(CellKind::Start); }
    std::vector<Cell> goal_candidates() const { return cells_of(CellKind::GoalCandidate); }
    std::vector<Cell> trap_cells() const { return cells_of(CellKind::Trap); }

    /// Cells the goal may be drawn from under the configured mode, in row-major order.
    std::vector<Cell> goal_cells() const {
        switch (goal_cells_mode) {
            case GoalCellsMode::One: return {goal_candidates().front()};
            case GoalCellsMode::Three: {
                auto g = goal_candidates();
                if (g.size() < 3)
                    throw ValidationError("goal mode 'three' needs at least 3 goal-candidate cells in the map");
                g.resize(3);
                return g;
            }
            case GoalCellsMode::Any: {
                std::vector<Cell> out;
                for (int r = 0; r < rows(); ++r)
                    for (int c = 0; c < cols(); ++c) {
                        const auto k = at(r, c);
                        if (k == CellKind::Free || k == CellKind::GoalCandidate) out.push_back({r, c});
                    }
                return out;
            }
        }
        return {};
    }

    Point cell_center(Cell c) const { return {(c.col + 0.5) * cell_size, (c.row + 0.5) * cell_size}; }

    Cell cell_of(Point p) const {
        return {static_cast<int>(std::floor(p.y / cell_size)), static_cast<int>(std::floor(p.x / cell_size))};
    }

    double goal_radius_world() const { return goal_radius * cell_size; }
    double trap_radius_world() const { return trap_radius * cell_size; }

    double width() const { return cols() * cell_size; }
    double height() const { return rows() * cell_size; }
};

/// Parses an ASCII map: '#' wall, '.' free, 'S' start, 'G' goal candidate, 'X' trap.
inline MazeSpec parse_map(const std::string& text) {
    std::vector<std::string> lines;
    {
        std::istringstream is(text);
        std::string line;
        while (std::getline(is, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(line);
        }
        while (!lines.empty() && lines.back().empty()) lines.pop_back();
    }
    if (lines.empty()) throw MapError(0, 0, "empty map");

    MazeSpec spec;
    const std::size_t width = lines[0].size();
    for (std::size_t r = 0; r < lines.size(); ++r) {
        if (lines[r].size() != width)
            throw MapError(r, std::min(lines[r].size(), width), "ragged row (expected width " + std::to_string(width) + ")");
        std::vector<CellKind> row;
        for (std::size_t c = 0; c < width; ++c) {
            switch (lines[r][c]) {
                case '#': row.push_back(CellKind::Wall); break;
                case '.': row.push_back(CellKind::Free); break;
                case 'S': row.push_back(CellKind::Start); break;
                case 'G': row.push_back(CellKind::GoalCandidate); break;
                case 'X': row.push_back(CellKind::Trap); break;
                default: throw MapError(r, c, std::string("unknown character '") + lines[r][c] + "'");
            }
        }
        spec.grid.push_back(std::move(row));
    }
    const int rows = spec.rows(), cols = spec.cols();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const bool boundary = r == 0 || c == 0 || r == rows - 1 || c == cols - 1;
            if (boundary && !spec.is_wall(r, c))
                throw MapError(static_cast<std::size_t>(r), static_cast<std::size_t>(c), "outer boundary must be wall");
        }
    if (spec.start_cells().empty()) throw MapError(0, 0, "map has no start cell 'S'");
    if (spec.goal_candidates().empty()) throw MapError(0, 0, "map has no goal-candidate cell 'G'");
    return spec;
}

inline MazeSpec load_map(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open map file '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_map(ss.str());
}

enum class Frozen { Mobile, AtGoal, InTrap };

struct MazeState {
    Point position;
    Point goal;
    Frozen frozen = Frozen::Mobile;
    std::size_t t = 0;  // steps taken so far

    std::vector<double> observation() const { return {position.x, position.y, goal.x, goal.y}; }

    friend bool operator==(const MazeState&, const MazeState&) = default;
};

inline constexpr std::size_t kMazeObsDim = 4;
inline constexpr std::size_t kMazeActDim = 2;

/// Gap kept between a clipped position and the wall face so the point never
/// sits on a cell boundary that belongs to the wall.
inline constexpr double kWallMargin = 1e-9;

inline MazeState reset(const MazeSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto starts = spec.start_cells();
    const auto goals = spec.goal_cells();
    if (goals.empty()) throw ValidationError("no cells available for goal placement");

    std::uniform_int_distribution<std::size_t> pick_start(0, starts.size() - 1);
    const Cell start = starts[pick_start(rng)];
    const double jitter = 0.1 * spec.cell_size;
    const Point c = spec.cell_center(start);

    MazeState s;
    s.position = {c.x + (2.0 * unit(rng) - 1.0) * jitter, c.y + (2.0 * unit(rng) - 1.0) * jitter};

    std::uniform_int_distribution<std::size_t> pick_goal(0, goals.size() - 1);
    const Cell g = goals[pick_goal(rng)];
    s.goal = {(g.col + unit(rng)) * spec.cell_size, (g.row + unit(rng)) * spec.cell_size};
    return s;
}

struct StepResult {
    MazeState next;
    double env_reward = 0.0;
    bool truncated = false;
};

namespace detail {

/// Moves one coordinate by `delta`, stopping at the face of a wall cell.
/// `along_x` selects which coordinate moves; the other fixes the row/column.
inline double move_axis(const MazeSpec& spec, Point p, double delta, bool along_x) {
    const double cs = spec.cell_size;
    const double from = along_x ? p.x : p.y;
    double to = from + delta;
    const int fixed = static_cast<int>(std::floor((along_x ? p.y : p.x) / cs));
    const int cur = static_cast<int>(std::floor(from / cs));
    const int dest = static_cast<int>(std::floor(to / cs));
    if (dest == cur) return to;
    // |delta| < cell_size, so at most one boundary is crossed.
    const bool blocked = along_x ? spec.is_wall(fixed, dest) : spec.is_wall(dest, fixed);
    if (!blocked) return to;
    return dest > cur ? dest * cs - kWallMargin : (dest + 1) * cs + kWallMargin;
}

}  // namespace detail

inline StepResult step(const MazeSpec& spec, const MazeState& state, std::span<const double> action) {
    if (action.size() != kMazeActDim) throw DimensionMismatch("maze action", kMazeActDim, action.size());
    StepResult out;
    out.next = state;
    out.next.t = state.t + 1;
    if (state.frozen == Frozen::Mobile) {
        const double dx = std::clamp(action[0], -1.0, 1.0) * spec.step_scale;
        const double dy = std::clamp(action[1], -1.0, 1.0) * spec.step_scale;
        Point p = state.position;
        p.x = detail::move_axis(spec, p, dx, true);
        p.y = detail::move_axis(spec, p, dy, false);
        out.next.position = p;
        if (distance(p, state.goal) <= spec.goal_radius_world()) {
            out.next.frozen = Frozen::AtGoal;
        } else {
            for (const Cell& trap : spec.trap_cells())
                if (distance(p, spec.cell_center(trap)) <= spec.trap_radius_world()) {
                    out.next.frozen = Frozen::InTrap;
                    break;
                }
        }
    }
    out.env_reward = out.next.frozen == Frozen::AtGoal ? 1.0 : 0.0;
    out.truncated = out.next.t >= spec.horizon;
    return out;
}

inline bool in_goal_disc(const MazeSpec& spec, std::span<const double> obs) {
    return distance({obs[0], obs[1]}, {obs[2], obs[3]}) <= spec.goal_radius_world();
}

inline bool in_trap_disc(const MazeSpec& spec, Point p) {
    for (const Cell& trap : spec.trap_cells())
        if (distance(p, spec.cell_center(trap)) <= spec.trap_radius_world()) return true;
    return false;
}

/// Success iff the final observation lies in the goal disc. Goal discs are
/// absorbing, so this agrees with ReturnThreshold{1} on maze episodes.
inline ClassificationRule maze_goal_rule(const MazeSpec& spec) {
    return TerminalGoal{[spec](std::span<const double> obs) { return in_goal_disc(spec, obs); }};
}

using MazePolicy = std::function<std::vector<double>(const MazeState&)>;

/// Runs one full episode (always to the horizon) and records it.
inline Trajectory run_episode(const MazeSpec& spec, const MazeState& initial, const MazePolicy& policy) {
    Trajectory traj;
    traj.horizon = spec.horizon;
    MazeState s = initial;
    traj.states.push_back(s.observation());
    for (std::size_t t = 0; t < spec.horizon; ++t) {
        auto a = policy(s);
        for (double& x : a) x = std::clamp(x, -1.0, 1.0);
        const auto r = step(spec, s, a);
        traj.actions.push_back(std::move(a));
        traj.env_rewards.push_back(r.env_reward);
        s = r.next;
        traj.states.push_back(s.observation());
    }
    traj.episodic_return = sum_rewards(traj.env_rewards);
    traj.outcome = classify_trajectory(traj, maze_goal_rule(spec));
    return traj;
}

// ---------------------------------------------------------------------------
// Scripted expert

/// Shortest 4-connected path between two cells through non-wall, non-trap cells.
inline std::vector<Cell> plan_path(const MazeSpec& spec, Cell from, Cell to) {
    const int rows = spec.rows(), cols = spec.cols();
    auto passable = [&](Cell c) {
        const auto k = spec.at(c.row, c.col);
        return k != CellKind::Wall && k != CellKind::Trap;
    };
    if (!passable(from) || !passable(to)) throw ValidationError("path endpoints must be free cells");
    std::vector<int> parent(static_cast<std::size_t>(rows * cols), -1);
    auto index = [&](Cell c) { return static_cast<std::size_t>(c.row * cols + c.col); };
    std::deque<Cell> queue{from};
    parent[index(from)] = static_cast<int>(index(from));
    const std::array<Cell, 4> moves{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
    while (!queue.empty()) {
        const Cell u = queue.front();
        queue.pop_front();
        if (u == to) break;
        for (const Cell& m : moves) {
            const Cell v{u.row + m.row, u.col + m.col};
            if (!passable(v) || parent[index(v)] != -1) continue;
            parent[index(v)] = static_cast<int>(index(u));
            queue.push_back(v);
        }
    }
    if (parent[index(to)] == -1) throw ValidationError("goal cell unreachable from start");
    std::vector<Cell> path{to};
    while (!(path.back() == from)) {
        const int p = parent[index(path.back())];
        path.push_back({p / cols, p % cols});
    }
    std::reverse(path.begin(), path.end());
    return path;
}

inline void validate_waypoints(const MazeSpec& spec, Cell start, const std::vector<Cell>& path) {
    if (path.empty()) throw ValidationError("waypoint path is empty");
    Cell prev = start;
    for (std::size_t i = 0; i < path.size(); ++i) {
        const Cell c = path[i];
        const auto kind = spec.at(c.row, c.col);
        if (kind == CellKind::Wall)
            throw ValidationError("waypoint " + std::to_string(i) + " (" + std::to_string(c.row) + "," +
                                  std::to_string(c.col) + ") is a wall cell");
        if (kind == CellKind::Trap)
            throw ValidationError("waypoint " + std::to_string(i) + " is a trap cell");
        const int manhattan = std::abs(c.row - prev.row) + std::abs(c.col - prev.col);
        if (manhattan > 1)
            throw ValidationError("waypoint " + std::to_string(i) + " is not adjacent to its predecessor");
        prev = c;
    }
}

/// Action of the proportional waypoint controller: head straight for `target`,
/// reaching it exactly once it is within one step.
inline std::vector<double> steer_towards(const MazeSpec& spec, Point from, Point target) {
    return {std::clamp((target.x - from.x) / spec.step_scale, -1.0, 1.0),
            std::clamp((target.y - from.y) / spec.step_scale, -1.0, 1.0)};
}

/// Greedy waypoint follower. Steers to each waypoint center in turn and to the
/// goal position on the last leg. The waypoint list may begin with the start
/// cell or with one of its neighbours; its last cell must hold the goal.
inline Trajectory scripted_expert(const MazeSpec& spec, std::uint64_t seed, const std::vector<Cell>& waypoints) {
    const MazeState initial = reset(spec, seed);
    const Cell start = spec.cell_of(initial.position);
    validate_waypoints(spec, start, waypoints);
    if (!(spec.cell_of(initial.goal) == waypoints.back()))
        throw ValidationError("last waypoint does not contain the episode's goal");

    std::vector<Point> targets;
    for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) targets.push_back(spec.cell_center(waypoints[i]));
    targets.push_back(initial.goal);

    std::size_t leg = 0;
    auto policy = [&](const MazeState& s) -> std::vector<double> {
        if (s.frozen != Frozen::Mobile) return {0.0, 0.0};
        while (leg + 1 < targets.size() && distance(s.position, targets[leg]) < 1e-6) ++leg;
        return steer_towards(spec, s.position, targets[leg]);
    };
    Trajectory traj = run_episode(spec, initial, policy);
    if (traj.outcome != Outcome::Success) throw ExpertStuck("scripted expert did not reach the goal within the horizon");
    return traj;
}

/// Expert demo on the shortest path to whatever goal the seed produces.
inline Trajectory scripted_expert(const MazeSpec& spec, std::uint64_t seed) {
    const MazeState initial = reset(spec, seed);
    return scripted_expert(spec, seed, plan_path(spec, spec.cell_of(initial.position), spec.cell_of(initial.goal)));
}

inline std::vector<Cell> parse_waypoints(const std::string& text) {
    std::vector<Cell> out;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ';')) {
        if (item.empty()) continue;
        const auto comma = item.find(',');
        if (comma == std::string::npos) throw ValidationError("waypoint '" + item + "' must be 'row,col'");
        try {
            out.push_back({std::stoi(item.substr(0, comma)), std::stoi(item.substr(comma + 1))});
        } catch (const std::exception&) {
            throw ValidationError("waypoint '" + item + "' must be 'row,col'");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reward surfaces

using StateScorer = std::function<double(std::span<const double>)>;

/// Row-major grid of scores; NaN marks lattice points inside walls.
struct Heatmap {
    std::size_t resolution = 0;
    std::vector<double> values;  // values[row * resolution + col]

    double at(std::size_t row, std::size_t col) const { return values[row * resolution + col]; }
};

/// World position of lattice point (row, col).
inline Point lattice_point(const MazeSpec& spec, std::size_t resolution, std::size_t row, std::size_t col) {
    const double r = static_cast<double>(resolution);
    return {(static_cast<double>(col) + 0.5) / r * spec.width(), (static_cast<double>(row) + 0.5) / r * spec.height()};
}

inline Heatmap reward_heatmap(const MazeSpec& spec, const StateScorer& scorer, std::size_t resolution, Point goal) {
    if (resolution < 8) throw ValidationError("heatmap resolution must be >= 8");
    Heatmap h;
    h.resolution = resolution;
    h.values.resize(resolution * resolution);
    for (std::size_t r = 0; r < resolution; ++r)
        for (std::size_t c = 0; c < resolution; ++c) {
            const Point p = lattice_point(spec, resolution, r, c);
            const Cell cell = spec.cell_of(p);
            const std::array<double, 4> obs{p.x, p.y, goal.x, goal.y};
            h.values[r * resolution + c] =
                spec.is_wall(cell) ? std::numeric_limits<double>::quiet_NaN() : scorer(obs);
        }
    return h;
}

/// Mean heatmap value over lattice points within `radius` of `center` (NaN if none).
inline double disc_mean(const MazeSpec& spec, const Heatmap& h, Point center, double radius) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < h.resolution; ++r)
        for (std::size_t c = 0; c < h.resolution; ++c) {
            const double v = h.at(r, c);
            if (std::isnan(v)) continue;
            if (distance(lattice_point(spec, h.resolution, r, c), center) <= radius) {
                total += v;
                ++count;
            }
        }
    return count ? total / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

/// Mean over all trap discs of the map.
inline double trap_mean(const MazeSpec& spec, const Heatmap& h) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < h.resolution; ++r)
        for (std::size_t c = 0; c < h.resolution; ++c) {
            const double v = h.at(r, c);
            if (std::isnan(v)) continue;
            if (in_trap_disc(spec, lattice_point(spec, h.resolution, r, c))) {
                total += v;
                ++count;
            }
        }
    return count ? total / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

inline void write_heatmap_csv(const Heatmap& h, std::ostream& os) {
    char buf[32];
    for (std::size_t r = 0; r < h.resolution; ++r) {
        for (std::size_t c = 0; c < h.resolution; ++c) {
            if (c) os << ',';
            const double v = h.at(r, c);
            if (std::isnan(v)) {
                os << "nan";
            } else {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                os << buf;
            }
        }
        os << '\n';
    }
}

inline void save_heatmap_csv(const Heatmap& h, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open '" + path + "' for writing");
    write_heatmap_csv(h, os);
}

inline Heatmap load_heatmap_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open heatmap '" + path + "'");
    Heatmap h;
    std::string line;
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::size_t cols = 0;
        while (std::getline(ls, cell, ',')) {
            h.values.push_back(cell == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(cell));
            ++cols;
        }
        if (rows == 0) h.resolution = cols;
        if (cols != h.resolution) throw ParseError(rows + 1, "heatmap row has wrong width");
        ++rows;
    }
    if (rows != h.resolution) throw ValidationError("heatmap is not square");
    return h;
}

/// Binary 8-bit PGM: finite values scaled linearly to [1, 255] over their
/// min..max, walls black (0).
inline void save_heatmap_pgm(const Heatmap& h, const std::string& path) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : h.values)
        if (!std::isnan(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot open '" + path + "' for writing");
    os << "P5\n" << h.resolution << ' ' << h.resolution << "\n255\n";
    for (double v : h.values) {
        unsigned char px = 0;
        if (!std::isnan(v)) {
            const double u = hi > lo ? (v - lo) / (hi - lo) : 0.5;
            px = static_cast<unsigned char>(1 + std::lround(u * 254.0));
        }
        os.put(static_cast<char>(px));
    }
}

}  // namespace twcrl
