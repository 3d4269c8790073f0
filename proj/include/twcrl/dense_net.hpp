#pragma once

// Dense feed-forward networks with ReLU hidden layers, analytic reverse-mode
// gradients, and an Adam optimizer. Parameters live in one flat vector so that
// optimizers, soft target updates and checkpoints operate on a single buffer.
//
// Batches are column-major: an input batch is (input_dim x batch_size).

#include "twcrl/errors.hpp"
#include "twcrl/json_util.hpp"
#include "twcrl/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace twcrl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class OutputActivation { Linear, Tanh, TanhScaled };

struct OutputHead {
    OutputActivation kind = OutputActivation::Linear;
    double bound = 1.0;  // only used by TanhScaled

    static OutputHead linear() { return {OutputActivation::Linear, 1.0}; }
    static OutputHead tanh() { return {OutputActivation::Tanh, 1.0}; }
    static OutputHead tanh_scaled(double b) { return {OutputActivation::TanhScaled, b}; }

    friend bool operator==(const OutputHead&, const OutputHead&) = default;
};

/// Intermediate values of a batched forward pass, consumed by backward().
struct ForwardCache {
    std::vector<Matrix> inputs;  // inputs[l]: input to layer l (after activation of l-1)
    std::vector<Matrix> preacts; // preacts[l]: W_l x + b_l
    Matrix output;
};

class DenseNet {
public:
    DenseNet() = default;

    DenseNet(std::vector<std::size_t> layer_sizes, OutputHead head)
        : sizes_(std::move(layer_sizes)), head_(head) {
        if (sizes_.size() < 2) throw ValidationError("a network needs at least input and output layers");
        for (std::size_t s : sizes_)
            if (s == 0) throw ValidationError("layer sizes must be positive");
        std::size_t offset = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            w_offset_.push_back(offset);
            offset += sizes_[l + 1] * sizes_[l];
            b_offset_.push_back(offset);
            offset += sizes_[l + 1];
        }
        params_ = Vector::Zero(static_cast<Eigen::Index>(offset));
    }

    /// Glorot-uniform weights, zero biases.
    void init_glorot(Rng& rng) {
        for (std::size_t l = 0; l < num_layers(); ++l) {
            const double limit = std::sqrt(6.0 / static_cast<double>(sizes_[l] + sizes_[l + 1]));
            std::uniform_real_distribution<double> dist(-limit, limit);
            auto w = weight(l);
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = dist(rng);
            bias(l).setZero();
        }
    }

    std::size_t num_layers() const noexcept { return sizes_.empty() ? 0 : sizes_.size() - 1; }
    std::size_t input_dim() const { return sizes_.front(); }
    std::size_t output_dim() const { return sizes_.back(); }
    const std::vector<std::size_t>& layer_sizes() const noexcept { return sizes_; }
    const OutputHead& head() const noexcept { return head_; }
    std::size_t num_params() const noexcept { return static_cast<std::size_t>(params_.size()); }

    Vector& params() noexcept { return params_; }
    const Vector& params() const noexcept { return params_; }

    Eigen::Map<Matrix> weight(std::size_t l) {
        return {params_.data() + w_offset_[l], rows(l), cols(l)};
    }
    Eigen::Map<const Matrix> weight(std::size_t l) const {
        return {params_.data() + w_offset_[l], rows(l), cols(l)};
    }
    Eigen::Map<Vector> bias(std::size_t l) { return {params_.data() + b_offset_[l], rows(l)}; }
    Eigen::Map<const Vector> bias(std::size_t l) const { return {params_.data() + b_offset_[l], rows(l)}; }

    /// Views of a gradient buffer laid out like params().
    Eigen::Map<Matrix> weight_in(Vector& buf, std::size_t l) const {
        return {buf.data() + w_offset_[l], rows(l), cols(l)};
    }
    Eigen::Map<Vector> bias_in(Vector& buf, std::size_t l) const { return {buf.data() + b_offset_[l], rows(l)}; }

    Matrix forward_batch(const Matrix& x) const {
        check_input(x.rows());
        Matrix a = x;
        for (std::size_t l = 0; l < num_layers(); ++l) {
            Matrix z = weight(l) * a;
            z.colwise() += bias(l);
            if (l + 1 < num_layers())
                a = z.cwiseMax(0.0);
            else
                a = apply_head(z);
        }
        return a;
    }

    Matrix forward_batch(const Matrix& x, ForwardCache& cache) const {
        check_input(x.rows());
        cache.inputs.resize(num_layers());
        cache.preacts.resize(num_layers());
        cache.inputs[0] = x;
        for (std::size_t l = 0; l < num_layers(); ++l) {
            cache.preacts[l].noalias() = weight(l) * cache.inputs[l];
            cache.preacts[l].colwise() += bias(l);
            if (l + 1 < num_layers())
                cache.inputs[l + 1] = cache.preacts[l].cwiseMax(0.0);
            else
                cache.output = apply_head(cache.preacts[l]);
        }
        return cache.output;
    }

    Vector forward(const Vector& x) const { return forward_batch(Matrix(x)).col(0); }

    Vector forward(const std::vector<double>& x) const {
        return forward(Vector(Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()))));
    }

    /// Reverse-mode pass. `upstream` is dLoss/dOutput (output_dim x batch).
    /// Writes parameter gradients (summed over the batch) into `grad` and
    /// returns dLoss/dInput. ReLU uses subgradient 0 at 0.
    Matrix backward(const ForwardCache& cache, const Matrix& upstream, Vector& grad) const {
        if (upstream.rows() != static_cast<Eigen::Index>(output_dim()) ||
            upstream.cols() != cache.output.cols())
            throw DimensionMismatch("upstream gradient", output_dim(), static_cast<std::size_t>(upstream.rows()));
        return backward_from(cache, head_derivative(cache, upstream), grad);
    }

    /// As above, plus an extra gradient taken directly at the output
    /// pre-activation (before the head nonlinearity).
    Matrix backward(const ForwardCache& cache, const Matrix& upstream, const Matrix& head_preact_grad,
                    Vector& grad) const {
        if (upstream.rows() != static_cast<Eigen::Index>(output_dim()) ||
            upstream.cols() != cache.output.cols() || head_preact_grad.rows() != upstream.rows() ||
            head_preact_grad.cols() != upstream.cols())
            throw DimensionMismatch("upstream gradient", output_dim(), static_cast<std::size_t>(upstream.rows()));
        return backward_from(cache, head_derivative(cache, upstream) + head_preact_grad, grad);
    }

    friend bool operator==(const DenseNet& a, const DenseNet& b) {
        return a.sizes_ == b.sizes_ && a.head_ == b.head_ && a.params_ == b.params_;
    }

private:
    Matrix backward_from(const ForwardCache& cache, Matrix delta, Vector& grad) const {
        if (grad.size() != params_.size()) grad = Vector::Zero(params_.size());
        for (std::size_t l = num_layers(); l-- > 0;) {
            weight_in(grad, l).noalias() = delta * cache.inputs[l].transpose();
            bias_in(grad, l) = delta.rowwise().sum();
            Matrix back = weight(l).transpose() * delta;
            if (l == 0) return back;
            delta = back.cwiseProduct((cache.preacts[l - 1].array() > 0.0).cast<double>().matrix());
        }
        return {};
    }

    Eigen::Index rows(std::size_t l) const { return static_cast<Eigen::Index>(sizes_[l + 1]); }
    Eigen::Index cols(std::size_t l) const { return static_cast<Eigen::Index>(sizes_[l]); }

    void check_input(Eigen::Index rows) const {
        if (rows != static_cast<Eigen::Index>(input_dim()))
            throw DimensionMismatch("network input", input_dim(), static_cast<std::size_t>(rows));
    }

    Matrix apply_head(const Matrix& z) const {
        switch (head_.kind) {
            case OutputActivation::Linear: return z;
            case OutputActivation::Tanh: return z.array().tanh().matrix();
            case OutputActivation::TanhScaled: return (head_.bound * z.array().tanh()).matrix();
        }
        return z;
    }

    Matrix head_derivative(const ForwardCache& cache, const Matrix& upstream) const {
        switch (head_.kind) {
            case OutputActivation::Linear: return upstream;
            case OutputActivation::Tanh:
                return upstream.cwiseProduct((1.0 - cache.output.array().square()).matrix());
            case OutputActivation::TanhScaled: {
                const auto th = cache.preacts.back().array().tanh();
                return upstream.cwiseProduct((head_.bound * (1.0 - th.square())).matrix());
            }
        }
        return upstream;
    }

    std::vector<std::size_t> sizes_;
    OutputHead head_;
    std::vector<std::size_t> w_offset_;
    std::vector<std::size_t> b_offset_;
    Vector params_;
};

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t step_count = 0;
    Vector first_moment;
    Vector second_moment;

    AdamState() = default;
    AdamState(std::size_t n_params, double lr)
        : learning_rate(lr),
          first_moment(Vector::Zero(static_cast<Eigen::Index>(n_params))),
          second_moment(Vector::Zero(static_cast<Eigen::Index>(n_params))) {}
};

/// One bias-corrected Adam update of `params` in place.
inline void adam_step(AdamState& opt, Vector& params, const Vector& grads) {
    if (grads.size() != params.size() || opt.first_moment.size() != params.size())
        throw DimensionMismatch("adam_step", static_cast<std::size_t>(params.size()),
                                static_cast<std::size_t>(grads.size()));
    if (!grads.allFinite()) throw OptimDiverged("non-finite gradient in Adam step");
    ++opt.step_count;
    const double t = static_cast<double>(opt.step_count);
    opt.first_moment = opt.beta1 * opt.first_moment + (1.0 - opt.beta1) * grads;
    opt.second_moment = opt.beta2 * opt.second_moment + (1.0 - opt.beta2) * grads.cwiseAbs2();
    const double c1 = 1.0 - std::pow(opt.beta1, t);
    const double c2 = 1.0 - std::pow(opt.beta2, t);
    params.array() -= opt.learning_rate * (opt.first_moment.array() / c1) /
                      ((opt.second_moment.array() / c2).sqrt() + opt.epsilon);
    if (!params.allFinite()) throw OptimDiverged("non-finite parameters after Adam step");
}

/// target <- tau * online + (1 - tau) * target
inline void soft_update(DenseNet& target, const DenseNet& online, double tau) {
    target.params() = tau * online.params() + (1.0 - tau) * target.params();
}

// ---------------------------------------------------------------------------
// Checkpoints

inline const char* to_string(OutputActivation a) {
    switch (a) {
        case OutputActivation::Linear: return "linear";
        case OutputActivation::Tanh: return "tanh";
        case OutputActivation::TanhScaled: return "tanh_scaled";
    }
    return "linear";
}

/// JSON object body (without braces) describing the net; embedded by the
/// reward and policy checkpoint writers.
inline void write_net_fields(std::ostream& os, const DenseNet& net) {
    os << "\"layer_sizes\":[";
    for (std::size_t i = 0; i < net.layer_sizes().size(); ++i) os << (i ? "," : "") << net.layer_sizes()[i];
    os << "],\"hidden_activation\":\"relu\",\"output_activation\":\"" << to_string(net.head().kind)
       << "\",\"output_bound\":";
    detail::write_number(os, net.head().bound);
    os << ",\"params\":";
    const auto& p = net.params();
    detail::write_vec(os, std::vector<double>(p.data(), p.data() + p.size()));
}

inline std::string net_to_json(const DenseNet& net) {
    std::ostringstream os;
    os << '{';
    write_net_fields(os, net);
    os << '}';
    return os.str();
}

inline DenseNet net_from_json(const nlohmann::json& j) {
    try {
        const auto sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
        const auto act = j.at("output_activation").get<std::string>();
        if (j.contains("hidden_activation") && j.at("hidden_activation").get<std::string>() != "relu")
            throw ValidationError("only relu hidden activations are supported");
        OutputHead head;
        if (act == "linear")
            head = OutputHead::linear();
        else if (act == "tanh")
            head = OutputHead::tanh();
        else if (act == "tanh_scaled")
            head = OutputHead::tanh_scaled(j.at("output_bound").get<double>());
        else
            throw ValidationError("unknown output activation '" + act + "'");
        DenseNet net(sizes, head);
        const auto p = detail::read_vec(j.at("params"), "params");
        if (p.size() != net.num_params())
            throw DimensionMismatch("checkpoint params", net.num_params(), p.size());
        net.params() = Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed network checkpoint: ") + e.what());
    }
}

inline void save_net(const DenseNet& net, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open '" + path + "' for writing");
    os << net_to_json(net) << '\n';
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("'" + path + "': " + e.what());
    }
}

inline DenseNet load_net(const std::string& path) { return net_from_json(read_json_file(path)); }

}  // namespace twcrl
