#include "gdbn/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace gdbn {

Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "tanh") return Activation::tanh_fn;
    if (s == "relu") return Activation::relu;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::tanh_fn: return "tanh";
        case Activation::relu: return "relu";
    }
    throw std::logic_error("bad activation enum");
}

Mlp make_mlp(long in, long hidden, long out, long n_hidden, RngStream& rng, Activation hidden_act,
             Activation final_act) {
    if (in < 1 || out < 1 || n_hidden < 0 || (n_hidden > 0 && hidden < 1)) {
        throw std::invalid_argument("make_mlp: bad layer dims");
    }
    std::vector<long> dims;
    dims.push_back(in);
    for (long l = 0; l < n_hidden; ++l) dims.push_back(hidden);
    dims.push_back(out);

    Mlp mlp;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        const long fan_in = dims[l], fan_out = dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor w({fan_in, fan_out});
        for (long i = 0; i < w.numel(); ++i) w.data()[i] = rng.uniform(-bound, bound);
        mlp.weights.push_back(std::move(w));
        mlp.biases.push_back(Tensor::zeros({1, fan_out}));
        const bool last = l + 2 == dims.size();
        mlp.activations.push_back(last ? final_act : hidden_act);
    }
    return mlp;
}

MlpVars bind_mlp(Tape& tape, const Mlp& mlp, bool requires_grad) {
    MlpVars vars;
    vars.weights.reserve(mlp.weights.size());
    vars.biases.reserve(mlp.biases.size());
    for (size_t l = 0; l < mlp.weights.size(); ++l) {
        vars.weights.push_back(tape.leaf(mlp.weights[l], requires_grad));
        vars.biases.push_back(tape.leaf(mlp.biases[l], requires_grad));
    }
    return vars;
}

Var mlp_apply(Tape& tape, const MlpVars& vars, const Mlp& mlp, Var x) {
    if (vars.weights.size() != mlp.weights.size()) {
        throw std::invalid_argument("mlp_apply: vars do not match mlp");
    }
    Var h = x;
    for (size_t l = 0; l < vars.weights.size(); ++l) {
        h = tape.add(tape.matmul(h, vars.weights[l]), vars.biases[l]);
        switch (mlp.activations[l]) {
            case Activation::identity: break;
            case Activation::tanh_fn: h = tape.tanh_(h); break;
            case Activation::relu: h = tape.relu(h); break;
        }
    }
    return h;
}

void AdamOptimizer::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("AdamOptimizer::step: params/grads size mismatch");
    }
    if (m_.empty()) {
        for (const Tensor* p : params) {
            m_.push_back(Tensor::zeros(p->shape()));
            v_.push_back(Tensor::zeros(p->shape()));
        }
    }
    if (m_.size() != params.size()) {
        throw std::invalid_argument("AdamOptimizer::step: parameter count changed between steps");
    }

    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));

    for (size_t p = 0; p < params.size(); ++p) {
        Tensor& param = *params[p];
        const Tensor& g = grads[p];
        if (!param.same_shape(g) || !param.same_shape(m_[p])) {
            throw std::invalid_argument("AdamOptimizer::step: shape drift at parameter " +
                                        std::to_string(p));
        }
        if (!g.all_finite()) {
            throw std::runtime_error("AdamOptimizer::step: non-finite gradient at parameter " +
                                     std::to_string(p));
        }
        double* m = m_[p].data();
        double* v = v_[p].data();
        double* w = param.data();
        const double* gd = g.data();
        for (long i = 0; i < param.numel(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gd[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gd[i] * gd[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void AdamOptimizer::restore(long step, std::vector<Tensor> m, std::vector<Tensor> v) {
    if (step < 0 || m.size() != v.size()) {
        throw std::invalid_argument("AdamOptimizer::restore: bad state");
    }
    step_ = step;
    m_ = std::move(m);
    v_ = std::move(v);
}

}  // namespace gdbn
