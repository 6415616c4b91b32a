#pragma once

#include "detpo/csv.hpp"
#include "detpo/rng.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace detpo {

struct divergence_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class HiddenActivation { relu, tanh_ };
enum class OutputActivation { linear, scaled_tanh };

inline std::string to_string(HiddenActivation a) {
    return a == HiddenActivation::relu ? "relu" : "tanh";
}
inline std::string to_string(OutputActivation a) {
    return a == OutputActivation::linear ? "linear" : "scaled_tanh";
}

class MlpNet;

// Per-layer parameter gradients plus the gradient w.r.t. the network input
// (the input gradient carries grad_a Q back into the actor update).
struct GradientSet {
    std::vector<std::vector<double>> dw;  // same shapes as the net's weights
    std::vector<std::vector<double>> db;
    std::vector<double> dinput;

    void scale(double s) {
        for (auto& layer : dw)
            for (double& g : layer) g *= s;
        for (auto& layer : db)
            for (double& g : layer) g *= s;
        for (double& g : dinput) g *= s;
    }

    bool finite() const {
        for (const auto& layer : dw)
            for (double g : layer)
                if (!std::isfinite(g)) return false;
        for (const auto& layer : db)
            for (double g : layer)
                if (!std::isfinite(g)) return false;
        return true;
    }

    // global L2 norm over the parameter gradients (input gradient excluded)
    double norm() const {
        double s = 0.0;
        for (const auto& layer : dw)
            for (double g : layer) s += g * g;
        for (const auto& layer : db)
            for (double g : layer) s += g * g;
        return std::sqrt(s);
    }
};

// Rescales the parameter gradients so their global L2 norm is at most
// max_norm; a no-op when already within the bound or when max_norm <= 0.
inline void clip_gradient_norm(GradientSet& grads, double max_norm) {
    if (max_norm <= 0.0) return;
    const double n = grads.norm();
    if (n > max_norm) grads.scale(max_norm / n);
}

// Cached activations of one forward pass; valid until the net is mutated.
struct ForwardTape {
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts[L] = output
    std::vector<std::vector<double>> pre;   // pre-activation per layer
    std::uint64_t stamp = 0;
};

// Small dense feed-forward net, 64-bit floats throughout.
class MlpNet {
public:
    MlpNet() = default;

    MlpNet(std::vector<int> layer_sizes, HiddenActivation hidden, OutputActivation output,
           double output_scale = 1.0)
        : sizes_(std::move(layer_sizes)),
          hidden_(hidden),
          output_(output),
          output_scale_(output_scale) {
        if (sizes_.size() < 2) throw std::invalid_argument("net needs at least one layer");
        for (int s : sizes_)
            if (s < 1) throw std::invalid_argument("layer sizes must be positive");
        if (output_ == OutputActivation::scaled_tanh && !(output_scale_ > 0.0))
            throw std::invalid_argument("scaled_tanh needs a positive scale");
        w_.resize(layers());
        b_.resize(layers());
        for (int l = 0; l < layers(); ++l) {
            w_[l].assign(static_cast<std::size_t>(sizes_[l + 1]) * sizes_[l], 0.0);
            b_[l].assign(sizes_[l + 1], 0.0);
        }
    }

    // Uniform +-1/sqrt(fan_in); the last layer additionally scaled so a fresh
    // actor starts near the zero policy.
    void init_uniform(GaussianRng& rng, double final_layer_scale = 1.0) {
        for (int l = 0; l < layers(); ++l) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
            const double scale = (l == layers() - 1) ? final_layer_scale : 1.0;
            for (double& v : w_[l]) v = scale * bound * (2.0 * rng.uniform01() - 1.0);
            for (double& v : b_[l]) v = scale * bound * (2.0 * rng.uniform01() - 1.0);
        }
        ++stamp_;
    }

    int layers() const { return static_cast<int>(sizes_.size()) - 1; }
    int input_size() const { return sizes_.front(); }
    int output_size() const { return sizes_.back(); }
    const std::vector<int>& layer_sizes() const { return sizes_; }
    HiddenActivation hidden_activation() const { return hidden_; }
    OutputActivation output_activation() const { return output_; }
    double output_scale() const { return output_scale_; }
    std::uint64_t stamp() const { return stamp_; }

    std::vector<std::vector<double>>& weights() { return w_; }
    std::vector<std::vector<double>>& biases() { return b_; }
    const std::vector<std::vector<double>>& weights() const { return w_; }
    const std::vector<std::vector<double>>& biases() const { return b_; }
    void bump_stamp() { ++stamp_; }

    bool congruent(const MlpNet& other) const {
        return sizes_ == other.sizes_ && hidden_ == other.hidden_ && output_ == other.output_;
    }

    bool finite() const {
        for (const auto& layer : w_)
            for (double v : layer)
                if (!std::isfinite(v)) return false;
        for (const auto& layer : b_)
            for (double v : layer)
                if (!std::isfinite(v)) return false;
        return true;
    }

    // Forward pass; the tape is reusable across calls (buffers are recycled).
    void forward(const std::vector<double>& input, ForwardTape& tape) const {
        if (static_cast<int>(input.size()) != input_size())
            throw std::invalid_argument("forward: input width mismatch");
        const int L = layers();
        tape.acts.resize(L + 1);
        tape.pre.resize(L);
        tape.acts[0] = input;
        for (int l = 0; l < L; ++l) {
            const int n_out = sizes_[l + 1];
            const int n_in = sizes_[l];
            auto& z = tape.pre[l];
            z.assign(n_out, 0.0);
            const double* W = w_[l].data();
            const double* x = tape.acts[l].data();
            for (int o = 0; o < n_out; ++o) {
                double acc = b_[l][o];
                const double* row = W + static_cast<std::size_t>(o) * n_in;
                for (int i = 0; i < n_in; ++i) acc += row[i] * x[i];
                z[o] = acc;
            }
            auto& a = tape.acts[l + 1];
            a.resize(n_out);
            if (l + 1 < L) {
                if (hidden_ == HiddenActivation::relu)
                    for (int o = 0; o < n_out; ++o) a[o] = z[o] > 0.0 ? z[o] : 0.0;
                else
                    for (int o = 0; o < n_out; ++o) a[o] = std::tanh(z[o]);
            } else {
                if (output_ == OutputActivation::linear) {
                    a = z;
                } else {
                    // scale*tanh(z/scale): saturates at +-scale, unit slope at 0
                    for (int o = 0; o < n_out; ++o)
                        a[o] = output_scale_ * std::tanh(z[o] / output_scale_);
                }
            }
        }
        tape.stamp = stamp_;
    }

    std::vector<double> forward(const std::vector<double>& input) const {
        ForwardTape tape;
        forward(input, tape);
        return tape.acts.back();
    }

    // Exact reverse-mode gradients w.r.t. all parameters and the input.
    // `accumulate` adds into `grads` (used for batch sums); otherwise grads
    // are (re)initialized to this single-sample contribution.
    void backward(const ForwardTape& tape, const std::vector<double>& output_grad,
                  GradientSet& grads, bool accumulate = false) const {
        if (tape.stamp != stamp_)
            throw std::logic_error("backward: tape is stale (net was mutated after forward)");
        const int L = layers();
        if (static_cast<int>(output_grad.size()) != output_size())
            throw std::invalid_argument("backward: output_grad width mismatch");
        if (!accumulate || grads.dw.empty()) {
            grads.dw.resize(L);
            grads.db.resize(L);
            for (int l = 0; l < L; ++l) {
                grads.dw[l].assign(w_[l].size(), 0.0);
                grads.db[l].assign(b_[l].size(), 0.0);
            }
            grads.dinput.assign(input_size(), 0.0);
        }

        // delta = dLoss/dz for the current layer, walking backwards
        std::vector<double> delta(output_grad.size());
        for (int o = 0; o < output_size(); ++o) {
            if (output_ == OutputActivation::linear) {
                delta[o] = output_grad[o];
            } else {
                const double t = std::tanh(tape.pre[L - 1][o] / output_scale_);
                delta[o] = output_grad[o] * (1.0 - t * t);
            }
        }

        std::vector<double> next_delta;
        for (int l = L - 1; l >= 0; --l) {
            const int n_out = sizes_[l + 1];
            const int n_in = sizes_[l];
            const double* x = tape.acts[l].data();
            double* dW = grads.dw[l].data();
            for (int o = 0; o < n_out; ++o) {
                const double d = delta[o];
                grads.db[l][o] += d;
                double* row = dW + static_cast<std::size_t>(o) * n_in;
                for (int i = 0; i < n_in; ++i) row[i] += d * x[i];
            }
            // gradient w.r.t. this layer's input
            next_delta.assign(n_in, 0.0);
            const double* W = w_[l].data();
            for (int o = 0; o < n_out; ++o) {
                const double d = delta[o];
                const double* row = W + static_cast<std::size_t>(o) * n_in;
                for (int i = 0; i < n_in; ++i) next_delta[i] += d * row[i];
            }
            if (l > 0) {
                // push through the hidden activation of layer l-1
                if (hidden_ == HiddenActivation::relu) {
                    for (int i = 0; i < n_in; ++i)
                        next_delta[i] = tape.pre[l - 1][i] > 0.0 ? next_delta[i] : 0.0;
                } else {
                    for (int i = 0; i < n_in; ++i) {
                        const double t = std::tanh(tape.pre[l - 1][i]);
                        next_delta[i] *= 1.0 - t * t;
                    }
                }
            }
            delta = next_delta;
        }
        for (int i = 0; i < input_size(); ++i) grads.dinput[i] += delta[i];
    }

private:
    std::vector<int> sizes_;
    HiddenActivation hidden_ = HiddenActivation::relu;
    OutputActivation output_ = OutputActivation::linear;
    double output_scale_ = 1.0;
    std::vector<std::vector<double>> w_;  // row-major out x in
    std::vector<std::vector<double>> b_;
    std::uint64_t stamp_ = 0;
};

// Bias-corrected adaptive-moment optimizer state for one net.
class AdamState {
public:
    AdamState() = default;

    AdamState(const MlpNet& net, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
              double epsilon = 1e-8)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
        mw_.resize(net.layers());
        vw_.resize(net.layers());
        mb_.resize(net.layers());
        vb_.resize(net.layers());
        for (int l = 0; l < net.layers(); ++l) {
            mw_[l].assign(net.weights()[l].size(), 0.0);
            vw_[l].assign(net.weights()[l].size(), 0.0);
            mb_[l].assign(net.biases()[l].size(), 0.0);
            vb_[l].assign(net.biases()[l].size(), 0.0);
        }
    }

    long step_count() const { return step_; }
    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

    friend void adam_step(MlpNet& net, const GradientSet& grads, AdamState& opt);

private:
    double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long step_ = 0;
    std::vector<std::vector<double>> mw_, vw_, mb_, vb_;
};

inline void adam_step(MlpNet& net, const GradientSet& grads, AdamState& opt) {
    if (static_cast<int>(grads.dw.size()) != net.layers())
        throw std::invalid_argument("adam_step: gradient shape mismatch");
    if (!grads.finite())
        throw divergence_error("adam_step: non-finite gradient");
    opt.step_ += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1_, static_cast<double>(opt.step_));
    const double bc2 = 1.0 - std::pow(opt.beta2_, static_cast<double>(opt.step_));
    auto update = [&](std::vector<double>& param, const std::vector<double>& g,
                      std::vector<double>& m, std::vector<double>& v) {
        if (param.size() != g.size()) throw std::invalid_argument("adam_step: shape mismatch");
        for (std::size_t i = 0; i < param.size(); ++i) {
            m[i] = opt.beta1_ * m[i] + (1.0 - opt.beta1_) * g[i];
            v[i] = opt.beta2_ * v[i] + (1.0 - opt.beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            param[i] -= opt.lr_ * mhat / (std::sqrt(vhat) + opt.eps_);
        }
    };
    for (int l = 0; l < net.layers(); ++l) {
        update(net.weights()[l], grads.dw[l], opt.mw_[l], opt.vw_[l]);
        update(net.biases()[l], grads.db[l], opt.mb_[l], opt.vb_[l]);
    }
    net.bump_stamp();
}

// target <- tau*source + (1-tau)*target, elementwise.
inline void soft_update(MlpNet& target, const MlpNet& source, double tau) {
    if (!target.congruent(source))
        throw std::invalid_argument("soft_update: incongruent networks");
    if (!(tau > 0.0 && tau <= 1.0))
        throw std::invalid_argument("soft_update: tau must be in (0,1]");
    const double keep = 1.0 - tau;
    for (int l = 0; l < target.layers(); ++l) {
        auto& tw = target.weights()[l];
        const auto& sw = source.weights()[l];
        for (std::size_t i = 0; i < tw.size(); ++i) tw[i] = tau * sw[i] + keep * tw[i];
        auto& tb = target.biases()[l];
        const auto& sb = source.biases()[l];
        for (std::size_t i = 0; i < tb.size(); ++i) tb[i] = tau * sb[i] + keep * tb[i];
    }
    target.bump_stamp();
}

// Text checkpoint: header (sizes, activations) + row-major parameter arrays,
// written with exact decimal round-trip so save/load is bit-identical.
inline void save_net(const MlpNet& net, std::ostream& out) {
    out << "mlp 1\n";
    out << "sizes";
    for (int s : net.layer_sizes()) out << ' ' << s;
    out << '\n';
    out << "hidden " << to_string(net.hidden_activation()) << '\n';
    out << "output " << to_string(net.output_activation()) << ' '
        << format_double(net.output_scale()) << '\n';
    for (int l = 0; l < net.layers(); ++l) {
        out << "layer " << l << '\n';
        for (double v : net.weights()[l]) out << format_double(v) << '\n';
        for (double v : net.biases()[l]) out << format_double(v) << '\n';
    }
}

inline void save_net(const MlpNet& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    save_net(net, out);
}

inline MlpNet load_net(std::istream& in) {
    std::string word;
    int version = 0;
    if (!(in >> word >> version) || word != "mlp" || version != 1)
        throw std::runtime_error("checkpoint: bad header");
    if (!(in >> word) || word != "sizes") throw std::runtime_error("checkpoint: missing sizes");
    std::vector<int> sizes;
    {
        std::string rest;
        std::getline(in, rest);
        std::istringstream ss(rest);
        int s;
        while (ss >> s) sizes.push_back(s);
    }
    std::string hidden_name;
    if (!(in >> word >> hidden_name) || word != "hidden")
        throw std::runtime_error("checkpoint: missing hidden activation");
    std::string output_name;
    double scale = 1.0;
    if (!(in >> word >> output_name >> scale) || word != "output")
        throw std::runtime_error("checkpoint: missing output activation");
    const HiddenActivation hidden =
        hidden_name == "relu" ? HiddenActivation::relu : HiddenActivation::tanh_;
    const OutputActivation output =
        output_name == "linear" ? OutputActivation::linear : OutputActivation::scaled_tanh;
    MlpNet net(sizes, hidden, output, scale);
    for (int l = 0; l < net.layers(); ++l) {
        int idx = -1;
        if (!(in >> word >> idx) || word != "layer" || idx != l)
            throw std::runtime_error("checkpoint: missing layer " + std::to_string(l));
        for (double& v : net.weights()[l])
            if (!(in >> v)) throw std::runtime_error("checkpoint: truncated weights");
        for (double& v : net.biases()[l])
            if (!(in >> v)) throw std::runtime_error("checkpoint: truncated biases");
    }
    net.bump_stamp();
    return net;
}

inline MlpNet load_net(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
    return load_net(in);
}

}  // namespace detpo
