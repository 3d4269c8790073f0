#pragma once

// Twin-delayed deterministic policy gradient (TD3): a deterministic actor,
// twin critics with clipped double-Q targets, target smoothing noise, delayed
// actor updates and Polyak-averaged target networks.

#include "twcrl/dense_net.hpp"
#include "twcrl/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace twcrl {

struct TD3Config {
    std::vector<std::size_t> actor_hidden{64, 64};
    std::vector<std::size_t> critic_hidden{64, 64};
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double gamma = 0.99;
    double tau = 0.005;
    std::size_t policy_delay = 2;
    double exploration_std = 0.2;
    double target_noise_std = 0.2;
    double noise_clip = 0.5;
    std::size_t batch_size = 128;
    std::size_t start_steps = 100;
    std::size_t replay_capacity = 1'000'000;
    double action_bound = 1.0;
    /// Weight of an L2 penalty on the actor's pre-tanh outputs (0 disables it).
    double actor_preact_reg = 0.0;

    /// Values of the published hyperparameter table (three 256-unit layers, batch 512).
    static TD3Config paper() {
        TD3Config c;
        c.actor_hidden = {256, 256, 256};
        c.critic_hidden = {256, 256, 256};
        c.batch_size = 512;
        return c;
    }
};

struct ReplayBatch {
    Matrix obs;       // obs_dim x B
    Matrix action;    // act_dim x B
    Vector reward;    // B
    Matrix next_obs;  // obs_dim x B
    Vector done;      // B, 1.0 where bootstrapping stops

    std::size_t size() const { return static_cast<std::size_t>(reward.size()); }
};

/// Fixed-capacity ring buffer of transitions with uniform sampling.
class ReplayBuffer {
public:
    ReplayBuffer() = default;
    ReplayBuffer(std::size_t capacity, std::size_t obs_dim, std::size_t act_dim)
        : capacity_(capacity), obs_dim_(obs_dim), act_dim_(act_dim) {
        if (capacity == 0) throw ValidationError("replay capacity must be positive");
    }

    std::size_t size() const noexcept { return size_; }
    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t obs_dim() const noexcept { return obs_dim_; }
    std::size_t act_dim() const noexcept { return act_dim_; }

    /// Slot the next add() writes to.
    std::size_t cursor() const noexcept { return next_; }

    void add(std::span<const double> obs, std::span<const double> action, double reward,
             std::span<const double> next_obs, bool done) {
        if (obs.size() != obs_dim_ || next_obs.size() != obs_dim_)
            throw DimensionMismatch("replay observation", obs_dim_, obs.size());
        if (action.size() != act_dim_) throw DimensionMismatch("replay action", act_dim_, action.size());
        const std::size_t slot = next_;
        if (size_ < capacity_) {
            obs_.insert(obs_.end(), obs.begin(), obs.end());
            act_.insert(act_.end(), action.begin(), action.end());
            next_obs_.insert(next_obs_.end(), next_obs.begin(), next_obs.end());
            reward_.push_back(reward);
            done_.push_back(done ? 1.0 : 0.0);
            ++size_;
        } else {
            std::copy(obs.begin(), obs.end(), obs_.begin() + static_cast<std::ptrdiff_t>(slot * obs_dim_));
            std::copy(action.begin(), action.end(), act_.begin() + static_cast<std::ptrdiff_t>(slot * act_dim_));
            std::copy(next_obs.begin(), next_obs.end(), next_obs_.begin() + static_cast<std::ptrdiff_t>(slot * obs_dim_));
            reward_[slot] = reward;
            done_[slot] = done ? 1.0 : 0.0;
        }
        next_ = (slot + 1) % capacity_;
    }

    ReplayBatch gather(std::span<const std::size_t> indices) const {
        const auto B = static_cast<Eigen::Index>(indices.size());
        ReplayBatch b{Matrix(static_cast<Eigen::Index>(obs_dim_), B), Matrix(static_cast<Eigen::Index>(act_dim_), B),
                      Vector(B), Matrix(static_cast<Eigen::Index>(obs_dim_), B), Vector(B)};
        for (Eigen::Index j = 0; j < B; ++j) {
            const std::size_t i = indices[static_cast<std::size_t>(j)];
            if (i >= size_) throw OutOfRange("replay index out of range");
            for (std::size_t d = 0; d < obs_dim_; ++d) {
                b.obs(static_cast<Eigen::Index>(d), j) = obs_[i * obs_dim_ + d];
                b.next_obs(static_cast<Eigen::Index>(d), j) = next_obs_[i * obs_dim_ + d];
            }
            for (std::size_t d = 0; d < act_dim_; ++d) b.action(static_cast<Eigen::Index>(d), j) = act_[i * act_dim_ + d];
            b.reward(j) = reward_[i];
            b.done(j) = done_[i];
        }
        return b;
    }

    /// Indices drawn uniformly with replacement.
    std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const {
        if (size_ == 0) throw NoData("cannot sample from an empty replay buffer");
        std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
        std::vector<std::size_t> idx(n);
        for (auto& i : idx) i = pick(rng);
        return idx;
    }

    ReplayBatch sample(std::size_t n, Rng& rng) const { return gather(sample_indices(n, rng)); }

    std::span<const double> obs(std::size_t i) const { return {obs_.data() + i * obs_dim_, obs_dim_}; }
    std::span<const double> action(std::size_t i) const { return {act_.data() + i * act_dim_, act_dim_}; }
    std::span<const double> next_obs(std::size_t i) const { return {next_obs_.data() + i * obs_dim_, obs_dim_}; }
    double reward(std::size_t i) const { return reward_[i]; }
    bool done(std::size_t i) const { return done_[i] != 0.0; }

    /// Recomputes every stored reward from a batch scorer over (obs, next_obs) columns.
    void relabel(const std::function<Vector(const Matrix& obs, const Matrix& next_obs)>& scorer,
                 std::size_t chunk = 4096) {
        for (std::size_t start = 0; start < size_; start += chunk) {
            const std::size_t m = std::min(chunk, size_ - start);
            const auto cols = static_cast<Eigen::Index>(m);
            const auto rows = static_cast<Eigen::Index>(obs_dim_);
            const Matrix o = Eigen::Map<const Matrix>(obs_.data() + start * obs_dim_, rows, cols);
            const Matrix no = Eigen::Map<const Matrix>(next_obs_.data() + start * obs_dim_, rows, cols);
            const Vector r = scorer(o, no);
            for (std::size_t j = 0; j < m; ++j) reward_[start + j] = r(static_cast<Eigen::Index>(j));
        }
    }

    /// Raw storage, used by run snapshots.
    struct Raw {
        std::vector<double>* obs;
        std::vector<double>* act;
        std::vector<double>* reward;
        std::vector<double>* next_obs;
        std::vector<double>* done;
        std::size_t* size;
        std::size_t* next;
    };
    Raw raw() { return {&obs_, &act_, &reward_, &next_obs_, &done_, &size_, &next_}; }

private:
    std::size_t capacity_ = 0;
    std::size_t obs_dim_ = 0;
    std::size_t act_dim_ = 0;
    std::size_t size_ = 0;
    std::size_t next_ = 0;
    std::vector<double> obs_;
    std::vector<double> act_;
    std::vector<double> reward_;
    std::vector<double> next_obs_;
    std::vector<double> done_;
};

struct TD3State {
    TD3Config config;
    DenseNet actor, critic1, critic2;
    DenseNet actor_target, critic1_target, critic2_target;
    AdamState actor_opt, critic1_opt, critic2_opt;
    ReplayBuffer replay;
    std::size_t update_count = 0;
    std::size_t env_steps = 0;

    TD3State() = default;

    /// Glorot-initialized online nets; targets start as exact copies.
    TD3State(std::size_t obs_dim, std::size_t act_dim, TD3Config cfg, Rng& rng) : TD3State(obs_dim, act_dim, cfg) {
        actor.init_glorot(rng);
        critic1.init_glorot(rng);
        critic2.init_glorot(rng);
        sync_targets();
    }

    /// All parameters zero (used by fixed-point tests).
    TD3State(std::size_t obs_dim, std::size_t act_dim, TD3Config cfg)
        : config(std::move(cfg)), replay(config.replay_capacity, obs_dim, act_dim) {
        auto sizes = [](std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
            std::vector<std::size_t> s{in};
            s.insert(s.end(), hidden.begin(), hidden.end());
            s.push_back(out);
            return s;
        };
        actor = DenseNet(sizes(obs_dim, config.actor_hidden, act_dim), OutputHead::tanh_scaled(config.action_bound));
        critic1 = DenseNet(sizes(obs_dim + act_dim, config.critic_hidden, 1), OutputHead::linear());
        critic2 = critic1;
        sync_targets();
        actor_opt = AdamState(actor.num_params(), config.actor_lr);
        critic1_opt = AdamState(critic1.num_params(), config.critic_lr);
        critic2_opt = AdamState(critic2.num_params(), config.critic_lr);
    }

    void sync_targets() {
        actor_target = actor;
        critic1_target = critic1;
        critic2_target = critic2;
    }

    std::size_t obs_dim() const { return actor.input_dim(); }
    std::size_t act_dim() const { return actor.output_dim(); }
};

/// Deterministic actor output, optionally with clipped Gaussian exploration noise.
inline std::vector<double> select_action(const TD3State& td3, std::span<const double> obs, bool explore, Rng& rng) {
    if (obs.size() != td3.obs_dim()) throw DimensionMismatch("actor observation", td3.obs_dim(), obs.size());
    Matrix x(static_cast<Eigen::Index>(obs.size()), 1);
    for (std::size_t i = 0; i < obs.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = obs[i];
    const Matrix a = td3.actor.forward_batch(x);
    const double bound = td3.config.action_bound;
    std::normal_distribution<double> noise(0.0, td3.config.exploration_std * bound);
    std::vector<double> out(td3.act_dim());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = a(static_cast<Eigen::Index>(i), 0);
        if (explore) v += noise(rng);
        out[i] = std::clamp(v, -bound, bound);
    }
    return out;
}

inline Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
    Matrix x(top.rows() + bottom.rows(), top.cols());
    x.topRows(top.rows()) = top;
    x.bottomRows(bottom.rows()) = bottom;
    return x;
}

/// Clipped double-Q target with an explicit smoothing-noise matrix (act_dim x B).
inline Vector critic_target(const TD3State& td3, const ReplayBatch& batch, const Matrix& smoothing_noise) {
    const double bound = td3.config.action_bound;
    Matrix next_action = td3.actor_target.forward_batch(batch.next_obs) + smoothing_noise;
    next_action = next_action.cwiseMax(-bound).cwiseMin(bound);
    const Matrix x = stack_rows(batch.next_obs, next_action);
    const Vector q1 = td3.critic1_target.forward_batch(x).row(0).transpose();
    const Vector q2 = td3.critic2_target.forward_batch(x).row(0).transpose();
    const Vector qmin = q1.cwiseMin(q2);
    return batch.reward + td3.config.gamma * (Vector::Ones(qmin.size()) - batch.done).cwiseProduct(qmin);
}

inline Vector critic_target(const TD3State& td3, const ReplayBatch& batch, Rng& rng) {
    const double clip = td3.config.noise_clip * td3.config.action_bound;
    std::normal_distribution<double> noise(0.0, td3.config.target_noise_std * td3.config.action_bound);
    Matrix eps(static_cast<Eigen::Index>(td3.act_dim()), static_cast<Eigen::Index>(batch.size()));
    for (Eigen::Index c = 0; c < eps.cols(); ++c)
        for (Eigen::Index r = 0; r < eps.rows(); ++r) eps(r, c) = std::clamp(noise(rng), -clip, clip);
    return critic_target(td3, batch, eps);
}

struct LossReport {
    double critic1_loss = 0.0;
    double critic2_loss = 0.0;
    std::optional<double> actor_loss;  // set when the actor was updated
};

namespace detail {

inline double critic_step(DenseNet& critic, AdamState& opt, const Matrix& x, const Vector& y) {
    ForwardCache cache;
    const Matrix q = critic.forward_batch(x, cache);
    const Matrix err = q.row(0) - y.transpose();
    const double loss = err.squaredNorm() / static_cast<double>(y.size());
    Vector grad;
    critic.backward(cache, (2.0 / static_cast<double>(y.size())) * err, grad);
    adam_step(opt, critic.params(), grad);
    return loss;
}

}  // namespace detail

/// One TD3 update on a given batch: both critics step toward the clipped
/// double-Q target; every policy_delay-th call the actor ascends critic1 and
/// all targets are Polyak-averaged.
inline LossReport td3_update(TD3State& td3, const ReplayBatch& batch, Rng& rng) {
    const Vector y = critic_target(td3, batch, rng);
    const Matrix x = stack_rows(batch.obs, batch.action);
    LossReport report;
    report.critic1_loss = detail::critic_step(td3.critic1, td3.critic1_opt, x, y);
    report.critic2_loss = detail::critic_step(td3.critic2, td3.critic2_opt, x, y);
    if (!std::isfinite(report.critic1_loss) || !std::isfinite(report.critic2_loss))
        throw OptimDiverged("critic loss became non-finite");

    ++td3.update_count;
    if (td3.update_count % td3.config.policy_delay == 0) {
        ForwardCache actor_cache, critic_cache;
        const Matrix a = td3.actor.forward_batch(batch.obs, actor_cache);
        const Matrix q = td3.critic1.forward_batch(stack_rows(batch.obs, a), critic_cache);
        const auto B = static_cast<double>(batch.size());
        report.actor_loss = -q.sum() / B;
        Vector critic_grad;
        const Matrix dx = td3.critic1.backward(critic_cache, Matrix::Constant(1, q.cols(), -1.0 / B), critic_grad);
        const Matrix& z = actor_cache.preacts.back();
        const Matrix preact_grad = (2.0 * td3.config.actor_preact_reg / B) * z;
        if (td3.config.actor_preact_reg > 0.0) *report.actor_loss += td3.config.actor_preact_reg * z.squaredNorm() / B;
        Vector actor_grad;
        td3.actor.backward(actor_cache, dx.bottomRows(static_cast<Eigen::Index>(td3.act_dim())), preact_grad,
                           actor_grad);
        adam_step(td3.actor_opt, td3.actor.params(), actor_grad);

        soft_update(td3.actor_target, td3.actor, td3.config.tau);
        soft_update(td3.critic1_target, td3.critic1, td3.config.tau);
        soft_update(td3.critic2_target, td3.critic2, td3.config.tau);
    }
    return report;
}

/// Samples a batch from the replay buffer and runs td3_update on it.
inline LossReport td3_update(TD3State& td3, Rng& rng) {
    if (td3.replay.size() < td3.config.batch_size)
        throw NoData("replay buffer holds fewer transitions than one batch");
    const ReplayBatch batch = td3.replay.sample(td3.config.batch_size, rng);
    return td3_update(td3, batch, rng);
}

inline void save_policy(const TD3State& td3, const std::string& path) { save_net(td3.actor, path); }

}  // namespace twcrl
