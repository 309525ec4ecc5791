#pragma once

#include <string>
#include <vector>

#include "gdbn/autodiff.hpp"
#include "gdbn/rng.hpp"
#include "gdbn/tensor.hpp"

namespace gdbn {

enum class Activation { identity, tanh_fn, relu };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

/// Fully connected network: y = act(x W + b) per layer, weights stored
/// (in x out). Hidden layers default to tanh, the final layer to identity.
struct Mlp {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
    std::vector<Activation> activations;

    long in_dim() const { return weights.empty() ? 0 : weights.front().rows(); }
    long out_dim() const { return weights.empty() ? 0 : weights.back().cols(); }
    long n_layers() const { return static_cast<long>(weights.size()); }
};

/// Build layer dims [in, hidden, hidden, ..., out] with `n_hidden` hidden
/// layers of width `hidden`, initialised W ~ U[-1/sqrt(fan_in), 1/sqrt(fan_in)]
/// and b = 0.
Mlp make_mlp(long in, long hidden, long out, long n_hidden, RngStream& rng,
             Activation hidden_act = Activation::tanh_fn,
             Activation final_act = Activation::identity);

/// Mirror of an Mlp bound onto a tape for one forward/backward build.
struct MlpVars {
    std::vector<Var> weights;
    std::vector<Var> biases;
};

MlpVars bind_mlp(Tape& tape, const Mlp& mlp, bool requires_grad = true);

/// x is (rows x in_dim); returns (rows x out_dim).
Var mlp_apply(Tape& tape, const MlpVars& vars, const Mlp& mlp, Var x);

/// Adam with bias correction. Moment buffers are keyed by position in the
/// parameter list, so the same tensors must be registered in the same order
/// on every step.
class AdamOptimizer {
public:
    struct Config {
        double lr = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    AdamOptimizer() = default;
    explicit AdamOptimizer(Config cfg) : cfg_(cfg) {}

    const Config& config() const { return cfg_; }
    long step_count() const { return step_; }

    /// Apply one update: params[i] -= lr * mhat / (sqrt(vhat) + eps).
    /// Throws if any gradient is non-finite or shapes drift between steps.
    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

    /// Serialized state for checkpointing.
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }
    void restore(long step, std::vector<Tensor> m, std::vector<Tensor> v);

private:
    Config cfg_;
    long step_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

}  // namespace gdbn
