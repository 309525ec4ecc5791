#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gdbn/autodiff.hpp"
#include "gdbn/datagen.hpp"
#include "gdbn/nn.hpp"
#include "gdbn/rng.hpp"
#include "gdbn/temporal_graph.hpp"

namespace gdbn {

struct GdbnConfig {
    long m = 0;       // variable count
    long s_o = 10;    // observation window = the model's maximum lag
    long s_p = 3;     // prediction window
    long d_z = 8;     // latent feature dimension
    long h = 32;      // hidden units throughout
    long n_layers = 1;  // message-passing depth
    long d = 1;         // per-node feature dimension (only 1 is supported)
    long n_hidden = 1;  // hidden layers inside each MLP

    void validate() const;
};

/// One message-passing layer: node embedding, lag embedding, edge network,
/// vertex update.
struct GencLayerParams {
    Mlp f_emb;
    Mlp f_tau;
    Mlp f_e;
    Mlp f_v;
};

/// All trainables. `a` is the learned lagged adjacency (m x s_o*m); it takes
/// gradients directly like any weight matrix. f1/f2 form the encoder head,
/// f3/f4 the decoder head.
struct GdbnParams {
    Tensor a;
    std::vector<GencLayerParams> genc;
    Mlp f1;  // h -> 2*d_z (latent mean | log-variance)
    Mlp f2;  // d -> h
    Mlp f3;  // h -> 2*d (prediction mean | log-variance)
    Mlp f4;  // d_z -> h

    /// Stable (name, tensor) listing: "A", "genc<l>.<net>.w<k>"/".b<k>",
    /// "F<i>.w<k>"/".b<k>". Order is the optimizer's moment-buffer order.
    std::vector<std::pair<std::string, Tensor*>> named_parameters();
    std::vector<std::pair<std::string, const Tensor*>> named_parameters() const;

    /// View of `a` as a temporal adjacency matrix with p = s_o.
    TemporalAdjacencyMatrix tam() const;
};

/// A uniform in [-0.1, 0.1], MLP weights uniform +-1/sqrt(fan_in), from the
/// "init" stream of `seed`.
GdbnParams init_params(const GdbnConfig& cfg, uint64_t seed);

/// Tape bindings of every parameter, in named_parameters() order.
struct GdbnVars {
    struct GencLayerVars {
        MlpVars f_emb, f_tau, f_e, f_v;
    };
    Var a;
    std::vector<GencLayerVars> genc;
    MlpVars f1, f2, f3, f4;
    std::vector<Var> ordered;  // matches named_parameters() order
};

GdbnVars bind_params(Tape& tape, const GdbnParams& params, bool requires_grad = true);

/// Message passing over a batch of B windows. `slices` holds the s_o
/// observation slices newest first (slices[0] = X^{t-1}), each (B x m).
/// Per layer: embed each lagged source observation, concat the lag feature
/// (tau/s_o through f_tau), map to edge features E, gate and aggregate with
/// the adjacency row (A * E), and update through f_v. Deeper layers re-embed
/// the previous layer's node states. Returns (B*m x h), batch-major rows.
Var genc_on_tape(Tape& tape, const GdbnVars& vars, const GdbnParams& params, const GdbnConfig& cfg,
                 std::span<const Var> slices);

struct LatentVars {
    Var m_z;
    Var log_sigma_z;
};
struct PredictionVars {
    Var m_x;
    Var log_sigma_x;
};

/// Latent posterior from the residual F1(F2(x_t) - g); log-variances clamped
/// to [-8, 8]. x_t is (B*m x d), g is genc output (B*m x h).
LatentVars encode_on_tape(Tape& tape, const GdbnVars& vars, const GdbnParams& params,
                          const GdbnConfig& cfg, Var x_t, Var g);

/// Reparameterized draw z = m + exp(log_sigma/2) * eps.
Var sample_latent_on_tape(Tape& tape, Var m_z, Var log_sigma_z, Var eps);

/// Next-step distribution from F3(g + F4(z)); log-variances clamped.
PredictionVars decode_on_tape(Tape& tape, const GdbnVars& vars, const GdbnParams& params,
                              const GdbnConfig& cfg, Var g, Var z);

/// One recurrent step of the forward pass: the latent stats, the L decoded
/// prediction stats (one per Monte Carlo draw), and the ground-truth target.
struct ForwardStep {
    LatentVars latent;
    std::vector<PredictionVars> predictions;
    Var x_true;  // (B*m x d)
};

struct ForwardTrace {
    GdbnVars vars;
    std::vector<ForwardStep> steps;
    long batch = 0;
};

/// Pre-draws the s_p * L noise tensors ((B*m) x d_z each) consumed by one
/// forward build, ordered step-major.
std::vector<Tensor> draw_latent_noise(RngStream& rng, const GdbnConfig& cfg, long batch, long mc_samples);

/// Builds the full recurrent forward pass for the windows at `offsets`:
/// encode the step's ground truth against the rolling window, sample, decode,
/// then replace the step's slice with the first draw's predicted mean before
/// rolling forward. Gradients flow through the replaced means.
ForwardTrace forward_on_tape(Tape& tape, const GdbnParams& params, const GdbnConfig& cfg,
                             const WindowBatch& windows, std::span<const long> offsets,
                             std::span<const Tensor> latent_noise, bool requires_grad = true);

// ---- single-window, plain-tensor forms (thin wrappers over the tape) ------

struct LatentStats {
    Tensor m_z;         // m x d_z
    Tensor log_sigma_z;  // m x d_z
};
struct PredictionStats {
    Tensor m_x;         // m x d
    Tensor log_sigma_x;  // m x d
};

/// window is (s_o x m), rows oldest -> newest. Returns (m x h).
Tensor genc(const Tensor& window, const GdbnParams& params, const GdbnConfig& cfg);
LatentStats encode(const Tensor& x_t, const Tensor& window, const GdbnParams& params,
                   const GdbnConfig& cfg);
Tensor sample_latent(const LatentStats& stats, RngStream& rng);
PredictionStats decode(const Tensor& window, const Tensor& z, const GdbnParams& params,
                       const GdbnConfig& cfg);
/// full_window is (s_o+s_p x m) oldest -> newest; one (prediction, latent)
/// pair per predicted step.
std::vector<std::pair<PredictionStats, LatentStats>> forward(const Tensor& full_window,
                                                             const GdbnParams& params,
                                                             const GdbnConfig& cfg,
                                                             RngStream& sampling_rng);

// ---- checkpointing ---------------------------------------------------------

/// Named tensors plus string scalars in a plain text blob; values print with
/// 17 significant digits so round trips are exact.
struct TensorArchive {
    std::vector<std::pair<std::string, std::string>> scalars;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void put_scalar(const std::string& key, const std::string& value);
    void put_scalar(const std::string& key, long value);
    void put_scalar(const std::string& key, uint64_t value);
    void put_scalar(const std::string& key, double value);
    const std::string& get_scalar(const std::string& key) const;
    long get_long(const std::string& key) const;
    uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool has_scalar(const std::string& key) const;
    void put_tensor(const std::string& name, Tensor t);
    const Tensor* find_tensor(const std::string& name) const;

    std::string to_text() const;
    static TensorArchive from_text(const std::string& text);
};

/// Model config and weights only; training state is layered on top by the
/// training module.
void put_model(TensorArchive& archive, const GdbnParams& params, const GdbnConfig& cfg);
std::pair<GdbnParams, GdbnConfig> model_from_archive(const TensorArchive& archive);

}  // namespace gdbn
