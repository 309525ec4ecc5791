#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdbn/datagen.hpp"
#include "gdbn/model.hpp"
#include "gdbn/nn.hpp"

namespace gdbn {

struct TrainConfig {
    double lambda = 0.01;  // L1 coefficient on A
    long epochs = 100;
    long batch_size = 64;
    long mc_samples = 1;  // Monte Carlo draws per recurrent step
    AdamOptimizer::Config adam;
    uint64_t seed = 0;
    /// Early stop: relative improvement below this for `patience` consecutive
    /// epochs ends training before the epoch budget.
    double improvement_tol = 1e-4;
    long patience = 10;
    /// Per-variable z-scoring of the series before windowing. On by default;
    /// the linear sanity runs turn it off.
    bool standardize = true;

    void validate() const;
};

struct TrainReport {
    // Per completed epoch, index 0 = first epoch of this invocation.
    std::vector<double> total;
    std::vector<double> recon;
    std::vector<double> kl;
    std::vector<double> l1;
    long start_epoch = 0;  // global index of the first epoch here (resume)
    long epochs_run = 0;
    bool early_stopped = false;
    /// KL fell to ~0 while reconstruction stalled (posterior collapse).
    bool kl_collapse = false;
    double wall_seconds = 0.0;
};

/// Loss components of one objective evaluation.
struct ObjectiveParts {
    Var total;
    Var recon;
    Var kl;
    Var l1;
};

/// KL(q(Z) || N(0, I)) summed over all elements:
/// 0.5 * sum(M^2 + exp(logSigma) - 1 - logSigma). Nonnegative.
Var kl_loss_on_tape(Tape& tape, const LatentVars& latent);

/// Negative Gaussian log-likelihood with the constant dropped, summed:
/// sum((x - M)^2 / (2 exp(logSigma)) + logSigma).
Var recon_loss_on_tape(Tape& tape, Var x_true, const PredictionVars& pred);

/// Plain-tensor forms for closed-form checks.
double kl_loss(const LatentStats& stats);
double recon_loss(const Tensor& x_true, const PredictionStats& pred);

/// Sum the per-step losses over the prediction window (reconstruction
/// averaged over the Monte Carlo draws), take the per-window mean over the
/// batch, and add lambda * |A|_1.
ObjectiveParts total_objective_on_tape(Tape& tape, const ForwardTrace& trace, double lambda);

/// Finite-difference problem over every named parameter for the objective on
/// a fixed batch with frozen latent noise; drives the gradient checks.
FdProblem objective_fd_problem(GdbnParams& params, const GdbnConfig& cfg, const WindowBatch& windows,
                               std::vector<long> offsets, std::vector<Tensor> latent_noise,
                               double lambda);

/// Shuffled minibatch epochs with Adam on all parameters including A.
/// Epoch losses are window-weighted means of the batch objectives. Resuming
/// with start_epoch > 0 fast-forwards the shuffle and sampling streams so a
/// split run retraces an uninterrupted one. Throws on non-finite loss,
/// naming epoch and batch.
TrainReport train_loop(GdbnParams& params, AdamOptimizer& opt, const WindowBatch& windows,
                       const GdbnConfig& gcfg, const TrainConfig& tcfg, long start_epoch = 0);

/// Fresh end-to-end run: windows (honoring tcfg.standardize), parameter init
/// from tcfg.seed, Adam, train_loop.
struct TrainResult {
    GdbnParams params;
    TrainReport report;
};
TrainResult train(const TimeSeriesDataset& ds, const GdbnConfig& gcfg, const TrainConfig& tcfg);

/// Model weights + Adam moments + epoch cursor, resumable.
struct TrainingCheckpoint {
    GdbnParams params;
    GdbnConfig config;
    long adam_step = 0;
    std::vector<Tensor> adam_m;
    std::vector<Tensor> adam_v;
    long next_epoch = 0;
    uint64_t train_seed = 0;
};

std::string checkpoint_to_text(const GdbnParams& params, const GdbnConfig& cfg,
                               const AdamOptimizer& opt, long next_epoch, uint64_t train_seed);
TrainingCheckpoint checkpoint_from_text(const std::string& text);

}  // namespace gdbn
