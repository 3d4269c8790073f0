#pragma once

// Contrastive reward learning: states from successful demos are labeled
// +w(t), states from failed demos -w(t), and a scalar network is regressed
// onto the labels with mean squared error.

#include "twcrl/core.hpp"
#include "twcrl/dense_net.hpp"
#include "twcrl/time_weight.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace twcrl {

struct LabeledState {
    Vec observation;
    double label = 0.0;
    Outcome source = Outcome::Success;
    std::size_t t = 0;
    std::size_t T = 0;
};

enum class LabelMode { TimeWeighted, Constant };

/// One label per state s_0..s_n of every trajectory. Each trajectory uses its
/// own length as T, so its final state always carries |label| = 1.
inline std::vector<LabeledState> label_dataset(const DemoSet& demos, const TimeWeightParams& params,
                                               LabelMode mode = LabelMode::TimeWeighted) {
    if (demos.empty()) throw NoData("cannot label an empty demo set");
    params.validate();
    std::map<std::size_t, std::vector<double>> weights_by_length;
    auto weights_for = [&](std::size_t T) -> const std::vector<double>& {
        auto it = weights_by_length.find(T);
        if (it != weights_by_length.end()) return it->second;
        std::vector<double> w(T + 1);
        const TimeWeightParams p{params.alpha, T};
        for (std::size_t t = 0; t <= T; ++t) w[t] = time_weight_w(t, p);
        return weights_by_length.emplace(T, std::move(w)).first->second;
    };

    std::vector<LabeledState> out;
    out.reserve(demos.state_count());
    auto emit = [&](const Trajectory& traj, Outcome source) {
        if (traj.empty()) throw InvalidTrajectory("cannot label a trajectory without transitions");
        const std::size_t T = traj.length();
        if (T > params.horizon)
            throw InvalidHorizon("trajectory of length " + std::to_string(T) + " exceeds horizon " +
                                 std::to_string(params.horizon));
        const double sign = source == Outcome::Success ? 1.0 : -1.0;
        const auto& w = weights_for(T);
        for (std::size_t t = 0; t <= T; ++t) {
            const double magnitude = mode == LabelMode::Constant ? 1.0 : w[t];
            out.push_back({traj.states[t], sign * magnitude, source, t, T});
        }
    };
    for (const auto& traj : demos.successes) emit(traj, Outcome::Success);
    for (const auto& traj : demos.failures) emit(traj, Outcome::Failure);
    return out;
}

/// Mean squared error between predictions and labels.
inline double crl_loss(std::span<const double> predictions, std::span<const double> labels) {
    if (predictions.size() != labels.size())
        throw DimensionMismatch("crl_loss", labels.size(), predictions.size());
    if (predictions.empty()) throw NoData("crl_loss needs at least one sample");
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double d = predictions[i] - labels[i];
        total += d * d;
    }
    return total / static_cast<double>(labels.size());
}

struct RewardModel {
    DenseNet net;
    TimeWeightParams params;
    AdamState optimizer;
    std::vector<std::pair<std::size_t, double>> training_log;  // (epoch, loss on the training set)
    std::size_t epochs_trained = 0;

    RewardModel() = default;

    /// Zero-initialized model: scores 0 everywhere until trained.
    RewardModel(std::size_t obs_dim, const std::vector<std::size_t>& hidden, TimeWeightParams tw, double lr = 1e-3)
        : params(tw) {
        std::vector<std::size_t> sizes{obs_dim};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(1);
        net = DenseNet(sizes, OutputHead::linear());
        optimizer = AdamState(net.num_params(), lr);
    }

    void init_random(Rng& rng) { net.init_glorot(rng); }

    /// Reinitializes weights and optimizer state.
    void reset(Rng& rng) {
        net.init_glorot(rng);
        optimizer = AdamState(net.num_params(), optimizer.learning_rate);
    }
};

inline double score(const RewardModel& model, std::span<const double> observation) {
    if (observation.size() != model.net.input_dim())
        throw DimensionMismatch("reward observation", model.net.input_dim(), observation.size());
    Matrix x(static_cast<Eigen::Index>(observation.size()), 1);
    for (std::size_t i = 0; i < observation.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = observation[i];
    return model.net.forward_batch(x)(0, 0);
}

/// Scores a column-major batch of observations (obs_dim x n).
inline Vector score_batch(const RewardModel& model, const Matrix& observations) {
    return model.net.forward_batch(observations).row(0).transpose();
}

namespace detail {

inline Matrix stack_observations(const std::vector<LabeledState>& data) {
    const auto dim = static_cast<Eigen::Index>(data.front().observation.size());
    Matrix x(dim, static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (static_cast<Eigen::Index>(data[i].observation.size()) != dim)
            throw DimensionMismatch("labeled observation", static_cast<std::size_t>(dim), data[i].observation.size());
        for (Eigen::Index d = 0; d < dim; ++d) x(d, static_cast<Eigen::Index>(i)) = data[i].observation[static_cast<std::size_t>(d)];
    }
    return x;
}

inline double dataset_loss(const DenseNet& net, const Matrix& x, const Vector& y) {
    const Vector pred = net.forward_batch(x).row(0).transpose();
    return (pred - y).squaredNorm() / static_cast<double>(y.size());
}

}  // namespace detail

/// Minibatch Adam on the contrastive MSE over already-labeled states.
/// One epoch is one shuffled pass over the data; the training-set loss is
/// logged after every epoch.
inline void train_on_labels(RewardModel& model, const std::vector<LabeledState>& data, std::size_t epochs,
                            std::size_t batch_size, std::uint64_t seed) {
    if (data.empty()) throw NoData("no labeled states to train on");
    if (batch_size == 0) throw ValidationError("batch size must be positive");
    if (data.front().observation.size() != model.net.input_dim())
        throw DimensionMismatch("reward training data", model.net.input_dim(), data.front().observation.size());
    if (epochs == 0) return;

    const Matrix x = detail::stack_observations(data);
    Vector y(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) y(static_cast<Eigen::Index>(i)) = data[i].label;

    const std::size_t n = data.size();
    const std::size_t bs = std::min(batch_size, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    ForwardCache cache;
    Vector grad;
    Matrix xb(x.rows(), static_cast<Eigen::Index>(bs));
    Vector yb(static_cast<Eigen::Index>(bs));

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t m = std::min(bs, n - start);
            xb.resize(x.rows(), static_cast<Eigen::Index>(m));
            yb.resize(static_cast<Eigen::Index>(m));
            for (std::size_t j = 0; j < m; ++j) {
                xb.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(order[start + j]));
                yb(static_cast<Eigen::Index>(j)) = y(static_cast<Eigen::Index>(order[start + j]));
            }
            const Matrix pred = model.net.forward_batch(xb, cache);
            const Matrix upstream = (2.0 / static_cast<double>(m)) * (pred.row(0) - yb.transpose());
            model.net.backward(cache, upstream, grad);
            adam_step(model.optimizer, model.net.params(), grad);
        }
        const double loss = detail::dataset_loss(model.net, x, y);
        if (!std::isfinite(loss)) throw OptimDiverged("reward loss became non-finite");
        model.training_log.emplace_back(++model.epochs_trained, loss);
    }
}

inline RewardModel& train_reward(RewardModel& model, const DemoSet& demos, std::size_t epochs, std::size_t batch_size,
                                 std::uint64_t seed, LabelMode mode = LabelMode::TimeWeighted) {
    const auto data = label_dataset(demos, model.params, mode);
    train_on_labels(model, data, epochs, batch_size, seed);
    return model;
}

inline const std::vector<std::string>& maze_observation_layout() {
    static const std::vector<std::string> layout{"x", "y", "goal_x", "goal_y"};
    return layout;
}

inline void save_reward_model(const RewardModel& model, const std::string& path,
                              const std::vector<std::string>& layout = maze_observation_layout()) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open '" + path + "' for writing");
    os << "{\"alpha\":";
    detail::write_number(os, model.params.alpha);
    os << ",\"horizon\":" << model.params.horizon << ",\"observation_layout\":[";
    for (std::size_t i = 0; i < layout.size(); ++i) os << (i ? "," : "") << '"' << layout[i] << '"';
    os << "],\"net\":" << net_to_json(model.net) << "}\n";
}

inline RewardModel load_reward_model(const std::string& path) {
    const auto j = read_json_file(path);
    RewardModel model;
    try {
        model.params.alpha = j.at("alpha").get<double>();
        model.params.horizon = j.at("horizon").get<std::size_t>();
        model.net = net_from_json(j.at("net"));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed reward checkpoint '" + path + "': " + e.what());
    }
    if (model.net.output_dim() != 1) throw ValidationError("reward checkpoint must have a scalar output");
    model.optimizer = AdamState(model.net.num_params(), 1e-3);
    return model;
}

}  // namespace twcrl
