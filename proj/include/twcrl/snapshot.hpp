#pragma once

// Binary run snapshots for bit-exact resumption: network parameters,
// optimizer moments, replay contents and loop counters, stored as raw
// little-endian doubles and 64-bit counts.

#include "twcrl/reward_learner.hpp"
#include "twcrl/td3.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace twcrl {

class SnapshotWriter {
public:
    explicit SnapshotWriter(const std::string& path) : os_(path, std::ios::binary | std::ios::trunc), path_(path) {
        if (!os_) throw ValidationError("cannot open snapshot '" + path + "' for writing");
        write_u64(kMagic);
    }

    void write_u64(std::uint64_t v) { os_.write(reinterpret_cast<const char*>(&v), sizeof v); }
    void write_f64(double v) { os_.write(reinterpret_cast<const char*>(&v), sizeof v); }

    void write_doubles(const double* data, std::size_t n) {
        write_u64(n);
        os_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    }
    void write(const std::vector<double>& v) { write_doubles(v.data(), v.size()); }
    void write(const Vector& v) { write_doubles(v.data(), static_cast<std::size_t>(v.size())); }

    void write(const AdamState& a) {
        write_f64(a.learning_rate);
        write_u64(a.step_count);
        write(a.first_moment);
        write(a.second_moment);
    }

    void finish() {
        write_u64(kMagic);
        os_.flush();
        if (!os_) throw Error("failed writing snapshot '" + path_ + "'");
    }

    static constexpr std::uint64_t kMagic = 0x747763726c736e31ULL;

private:
    std::ofstream os_;
    std::string path_;
};

class SnapshotReader {
public:
    explicit SnapshotReader(const std::string& path) : is_(path, std::ios::binary), path_(path) {
        if (!is_) throw ValidationError("cannot open snapshot '" + path + "'");
        if (read_u64() != SnapshotWriter::kMagic) throw ValidationError("'" + path + "' is not a run snapshot");
    }

    std::uint64_t read_u64() {
        std::uint64_t v = 0;
        is_.read(reinterpret_cast<char*>(&v), sizeof v);
        check();
        return v;
    }
    double read_f64() {
        double v = 0;
        is_.read(reinterpret_cast<char*>(&v), sizeof v);
        check();
        return v;
    }

    std::vector<double> read_doubles() {
        const auto n = read_u64();
        if (n > (std::uint64_t{1} << 32)) throw ValidationError("corrupt snapshot '" + path_ + "'");
        std::vector<double> v(n);
        is_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
        check();
        return v;
    }

    void read_into(Vector& v) {
        const auto d = read_doubles();
        if (static_cast<Eigen::Index>(d.size()) != v.size())
            throw DimensionMismatch("snapshot vector", static_cast<std::size_t>(v.size()), d.size());
        v = Eigen::Map<const Vector>(d.data(), v.size());
    }

    void read_into(AdamState& a) {
        a.learning_rate = read_f64();
        a.step_count = read_u64();
        read_into(a.first_moment);
        read_into(a.second_moment);
    }

    void finish() {
        if (read_u64() != SnapshotWriter::kMagic) throw ValidationError("truncated snapshot '" + path_ + "'");
    }

private:
    void check() {
        if (!is_) throw ValidationError("truncated snapshot '" + path_ + "'");
    }

    std::ifstream is_;
    std::string path_;
};

inline void write_reward_model(SnapshotWriter& w, const RewardModel& m) {
    w.write(m.net.params());
    w.write(m.optimizer);
    w.write_u64(m.epochs_trained);
    w.write_u64(m.training_log.size());
    for (const auto& [epoch, loss] : m.training_log) {
        w.write_u64(epoch);
        w.write_f64(loss);
    }
}

inline void read_reward_model(SnapshotReader& r, RewardModel& m) {
    r.read_into(m.net.params());
    r.read_into(m.optimizer);
    m.epochs_trained = r.read_u64();
    const auto n = r.read_u64();
    m.training_log.clear();
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto epoch = r.read_u64();
        m.training_log.emplace_back(epoch, r.read_f64());
    }
}

inline void write_td3(SnapshotWriter& w, TD3State& td3) {
    for (const DenseNet* net : {&td3.actor, &td3.critic1, &td3.critic2, &td3.actor_target, &td3.critic1_target,
                                &td3.critic2_target})
        w.write(net->params());
    w.write(td3.actor_opt);
    w.write(td3.critic1_opt);
    w.write(td3.critic2_opt);
    w.write_u64(td3.update_count);
    w.write_u64(td3.env_steps);
    auto raw = td3.replay.raw();
    w.write(*raw.obs);
    w.write(*raw.act);
    w.write(*raw.reward);
    w.write(*raw.next_obs);
    w.write(*raw.done);
    w.write_u64(*raw.size);
    w.write_u64(*raw.next);
}

inline void read_td3(SnapshotReader& r, TD3State& td3) {
    for (DenseNet* net : {&td3.actor, &td3.critic1, &td3.critic2, &td3.actor_target, &td3.critic1_target,
                          &td3.critic2_target})
        r.read_into(net->params());
    r.read_into(td3.actor_opt);
    r.read_into(td3.critic1_opt);
    r.read_into(td3.critic2_opt);
    td3.update_count = r.read_u64();
    td3.env_steps = r.read_u64();
    auto raw = td3.replay.raw();
    *raw.obs = r.read_doubles();
    *raw.act = r.read_doubles();
    *raw.reward = r.read_doubles();
    *raw.next_obs = r.read_doubles();
    *raw.done = r.read_doubles();
    *raw.size = r.read_u64();
    *raw.next = r.read_u64();
    if (raw.reward->size() != *raw.size || raw.obs->size() != *raw.size * td3.replay.obs_dim())
        throw ValidationError("inconsistent replay buffer in snapshot");
}

}  // namespace twcrl
