#include "gdbn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace gdbn {

void TrainConfig::validate() const {
    if (lambda < 0.0) throw std::invalid_argument("TrainConfig: lambda must be >= 0");
    if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (mc_samples < 1) throw std::invalid_argument("TrainConfig: mc_samples must be >= 1");
    if (!(adam.lr > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be > 0");
    if (!(improvement_tol >= 0.0)) throw std::invalid_argument("TrainConfig: improvement_tol must be >= 0");
    if (patience < 1) throw std::invalid_argument("TrainConfig: patience must be >= 1");
}

Var kl_loss_on_tape(Tape& tape, const LatentVars& latent) {
    Var sigma = tape.exp_(latent.log_sigma_z);
    Var elems = tape.sub(tape.add(tape.square(latent.m_z), sigma),
                         tape.add_scalar(latent.log_sigma_z, 1.0));
    return tape.scalar_mul(tape.sum(elems), 0.5);
}

Var recon_loss_on_tape(Tape& tape, Var x_true, const PredictionVars& pred) {
    Var resid2 = tape.square(tape.sub(x_true, pred.m_x));
    Var inv_sigma = tape.exp_(tape.scalar_mul(pred.log_sigma_x, -1.0));
    Var quad = tape.scalar_mul(tape.sum(tape.mul(resid2, inv_sigma)), 0.5);
    return tape.add(quad, tape.sum(pred.log_sigma_x));
}

double kl_loss(const LatentStats& stats) {
    if (!stats.m_z.same_shape(stats.log_sigma_z)) {
        throw std::invalid_argument("kl_loss: mean/log-variance shapes differ");
    }
    double acc = 0.0;
    for (long i = 0; i < stats.m_z.numel(); ++i) {
        const double m = stats.m_z.data()[i];
        const double ls = stats.log_sigma_z.data()[i];
        acc += m * m + std::exp(ls) - 1.0 - ls;
    }
    return 0.5 * acc;
}

double recon_loss(const Tensor& x_true, const PredictionStats& pred) {
    if (!x_true.same_shape(pred.m_x) || !x_true.same_shape(pred.log_sigma_x)) {
        throw std::invalid_argument("recon_loss: shape mismatch");
    }
    double acc = 0.0;
    for (long i = 0; i < x_true.numel(); ++i) {
        const double r = x_true.data()[i] - pred.m_x.data()[i];
        const double ls = pred.log_sigma_x.data()[i];
        acc += r * r / (2.0 * std::exp(ls)) + ls;
    }
    return acc;
}

ObjectiveParts total_objective_on_tape(Tape& tape, const ForwardTrace& trace, double lambda) {
    if (trace.steps.empty()) throw std::invalid_argument("objective: empty forward trace");
    Var recon{}, kl{};
    bool first = true;
    for (const ForwardStep& step : trace.steps) {
        Var step_recon{};
        for (size_t l = 0; l < step.predictions.size(); ++l) {
            Var r = recon_loss_on_tape(tape, step.x_true, step.predictions[l]);
            step_recon = l == 0 ? r : tape.add(step_recon, r);
        }
        if (step.predictions.size() > 1) {
            step_recon = tape.scalar_mul(step_recon, 1.0 / static_cast<double>(step.predictions.size()));
        }
        Var step_kl = kl_loss_on_tape(tape, step.latent);
        recon = first ? step_recon : tape.add(recon, step_recon);
        kl = first ? step_kl : tape.add(kl, step_kl);
        first = false;
    }
    const double inv_b = 1.0 / static_cast<double>(trace.batch);
    ObjectiveParts parts;
    parts.recon = tape.scalar_mul(recon, inv_b);
    parts.kl = tape.scalar_mul(kl, inv_b);
    parts.l1 = tape.scalar_mul(tape.sum(tape.abs_(trace.vars.a)), lambda);
    parts.total = tape.add(tape.add(parts.recon, parts.kl), parts.l1);
    return parts;
}

FdProblem objective_fd_problem(GdbnParams& params, const GdbnConfig& cfg, const WindowBatch& windows,
                               std::vector<long> offsets, std::vector<Tensor> latent_noise,
                               double lambda) {
    FdProblem problem;
    problem.params = params.named_parameters();
    // The checker registers the leaves itself; rebind them into a fresh
    // forward pass reading the (possibly perturbed) current tensor values.
    problem.build = [&params, cfg, windows, offsets = std::move(offsets),
                     noise = std::move(latent_noise), lambda](Tape& tape, std::vector<Var>& leaves) {
        GdbnVars vars;
        size_t next = 0;
        auto take_mlp = [&](const Mlp& mlp) {
            MlpVars mv;
            for (size_t l = 0; l < mlp.weights.size(); ++l) {
                mv.weights.push_back(leaves[next++]);
                mv.biases.push_back(leaves[next++]);
            }
            return mv;
        };
        vars.a = leaves[next++];
        for (const GencLayerParams& layer : params.genc) {
            GdbnVars::GencLayerVars lv;
            lv.f_emb = take_mlp(layer.f_emb);
            lv.f_tau = take_mlp(layer.f_tau);
            lv.f_e = take_mlp(layer.f_e);
            lv.f_v = take_mlp(layer.f_v);
            vars.genc.push_back(std::move(lv));
        }
        vars.f1 = take_mlp(params.f1);
        vars.f2 = take_mlp(params.f2);
        vars.f3 = take_mlp(params.f3);
        vars.f4 = take_mlp(params.f4);
        if (next != leaves.size()) throw std::logic_error("fd problem: leaf count mismatch");

        // Same recurrence as forward_on_tape, but over the supplied leaves.
        const long B = static_cast<long>(offsets.size());
        const long L = static_cast<long>(noise.size()) / cfg.s_p;
        auto gather = [&](long row_offset) {
            Tensor rows({B, cfg.m});
            for (long b = 0; b < B; ++b) {
                const double* src =
                    windows.series.data() + (offsets[static_cast<size_t>(b)] + row_offset) * cfg.m;
                std::copy(src, src + cfg.m, rows.data() + b * cfg.m);
            }
            return rows;
        };
        std::vector<Var> slices;
        for (long tau = 1; tau <= cfg.s_o; ++tau) slices.push_back(tape.leaf(gather(cfg.s_o - tau), false));

        ForwardTrace trace;
        trace.batch = B;
        trace.vars = vars;
        for (long k = 0; k < cfg.s_p; ++k) {
            ForwardStep step;
            Var g = genc_on_tape(tape, vars, params, cfg, slices);
            step.x_true = tape.reshape(tape.leaf(gather(cfg.s_o + k), false), {B * cfg.m, cfg.d});
            step.latent = encode_on_tape(tape, vars, params, cfg, step.x_true, g);
            for (long l = 0; l < L; ++l) {
                Var eps = tape.leaf(noise[static_cast<size_t>(k * L + l)], false);
                Var z = sample_latent_on_tape(tape, step.latent.m_z, step.latent.log_sigma_z, eps);
                step.predictions.push_back(decode_on_tape(tape, vars, params, cfg, g, z));
            }
            if (k + 1 < cfg.s_p) {
                slices.insert(slices.begin(), tape.reshape(step.predictions[0].m_x, {B, cfg.m}));
                slices.pop_back();
            }
            trace.steps.push_back(std::move(step));
        }
        return total_objective_on_tape(tape, trace, lambda).total;
    };
    return problem;
}

TrainReport train_loop(GdbnParams& params, AdamOptimizer& opt, const WindowBatch& windows,
                       const GdbnConfig& gcfg, const TrainConfig& tcfg, long start_epoch) {
    gcfg.validate();
    tcfg.validate();
    if (windows.window_count < 1) throw std::invalid_argument("train: no windows");
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<std::pair<std::string, Tensor*>> named = params.named_parameters();
    std::vector<Tensor*> param_ptrs;
    param_ptrs.reserve(named.size());
    for (auto& [name, ptr] : named) param_ptrs.push_back(ptr);

    std::vector<long> order(static_cast<size_t>(windows.window_count));
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle_rng(tcfg.seed, "shuffle");
    RngStream sampling_rng(tcfg.seed, "sampling");

    const long n_batches = (windows.window_count + tcfg.batch_size - 1) / tcfg.batch_size;
    // Fast-forward both streams over the epochs a resumed run already did, so
    // the continuation draws the same noise as an uninterrupted run.
    for (long e = 0; e < start_epoch; ++e) {
        shuffle_rng.shuffle(order);
        for (long b = 0; b < n_batches; ++b) {
            const long lo = b * tcfg.batch_size;
            const long bsz = std::min<long>(tcfg.batch_size, windows.window_count - lo);
            const long draws = gcfg.s_p * tcfg.mc_samples * bsz * gcfg.m * gcfg.d_z;
            for (long i = 0; i < draws; ++i) sampling_rng.normal();
        }
    }

    TrainReport report;
    report.start_epoch = start_epoch;
    double best = std::numeric_limits<double>::infinity();
    long stall = 0;
    Tape tape;

    // tcfg.epochs is the run's total budget; a resumed invocation only gets
    // what is left of it.
    for (long epoch = start_epoch; epoch < tcfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double sum_total = 0.0, sum_recon = 0.0, sum_kl = 0.0, sum_l1 = 0.0;
        for (long b = 0; b < n_batches; ++b) {
            const long lo = b * tcfg.batch_size;
            const long bsz = std::min<long>(tcfg.batch_size, windows.window_count - lo);
            std::vector<long> offsets(order.begin() + lo, order.begin() + lo + bsz);
            std::vector<Tensor> noise = draw_latent_noise(sampling_rng, gcfg, bsz, tcfg.mc_samples);

            tape.clear();
            ObjectiveParts parts;
            try {
                ForwardTrace trace = forward_on_tape(tape, params, gcfg, windows, offsets, noise, true);
                parts = total_objective_on_tape(tape, trace, tcfg.lambda);
                tape.backward(parts.total);

                std::vector<Tensor> grads;
                grads.reserve(trace.vars.ordered.size());
                for (Var v : trace.vars.ordered) grads.push_back(tape.grad(v));
                opt.step(param_ptrs, grads);
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("train: epoch " + std::to_string(epoch + 1) + ", batch " +
                                         std::to_string(b + 1) + ": " + e.what());
            }
            sum_total += tape.value(parts.total).item() * static_cast<double>(bsz);
            sum_recon += tape.value(parts.recon).item() * static_cast<double>(bsz);
            sum_kl += tape.value(parts.kl).item() * static_cast<double>(bsz);
            sum_l1 += tape.value(parts.l1).item() * static_cast<double>(bsz);
        }
        const double n = static_cast<double>(windows.window_count);
        const double epoch_total = sum_total / n;
        report.total.push_back(epoch_total);
        report.recon.push_back(sum_recon / n);
        report.kl.push_back(sum_kl / n);
        report.l1.push_back(sum_l1 / n);
        ++report.epochs_run;

        const bool improved = !std::isfinite(best) ||
                              best - epoch_total > tcfg.improvement_tol * std::abs(best);
        if (improved) {
            stall = 0;
        } else {
            ++stall;
        }
        best = std::min(best, epoch_total);
        if (stall >= tcfg.patience) {
            report.early_stopped = true;
            break;
        }
    }

    // Posterior-collapse flag: KL near zero while reconstruction no longer
    // improves over the last quarter of the run.
    if (report.epochs_run >= 8) {
        const size_t q = static_cast<size_t>(report.epochs_run) / 4;
        const double kl_tail = report.kl.back();
        const double recon_then = report.recon[report.recon.size() - q - 1];
        const double recon_now = report.recon.back();
        if (kl_tail < 1e-4 && recon_now > recon_then - 1e-3 * std::abs(recon_then)) {
            report.kl_collapse = true;
        }
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

TrainResult train(const TimeSeriesDataset& ds, const GdbnConfig& gcfg, const TrainConfig& tcfg) {
    WindowBatch windows = make_windows(ds, gcfg.s_o, gcfg.s_p, tcfg.standardize);
    TrainResult result;
    result.params = init_params(gcfg, tcfg.seed);
    AdamOptimizer opt(tcfg.adam);
    result.report = train_loop(result.params, opt, windows, gcfg, tcfg, 0);
    return result;
}

std::string checkpoint_to_text(const GdbnParams& params, const GdbnConfig& cfg,
                               const AdamOptimizer& opt, long next_epoch, uint64_t train_seed) {
    TensorArchive archive;
    archive.put_scalar("kind", std::string("training-checkpoint"));
    archive.put_scalar("next_epoch", next_epoch);
    archive.put_scalar("train_seed", train_seed);
    archive.put_scalar("adam.step", opt.step_count());
    put_model(archive, params, cfg);
    const auto named = params.named_parameters();
    const std::vector<Tensor>& m = opt.first_moments();
    const std::vector<Tensor>& v = opt.second_moments();
    if (!m.empty() && m.size() != named.size()) {
        throw std::logic_error("checkpoint: optimizer state does not match parameter count");
    }
    for (size_t i = 0; i < m.size(); ++i) {
        archive.put_tensor("adam.m." + named[i].first, m[i]);
        archive.put_tensor("adam.v." + named[i].first, v[i]);
    }
    return archive.to_text();
}

TrainingCheckpoint checkpoint_from_text(const std::string& text) {
    const TensorArchive archive = TensorArchive::from_text(text);
    if (!archive.has_scalar("kind") || archive.get_scalar("kind") != "training-checkpoint") {
        throw std::runtime_error("checkpoint: not a training checkpoint");
    }
    TrainingCheckpoint ckpt;
    auto [params, cfg] = model_from_archive(archive);
    ckpt.params = std::move(params);
    ckpt.config = cfg;
    ckpt.next_epoch = archive.get_long("next_epoch");
    ckpt.train_seed = archive.get_u64("train_seed");
    ckpt.adam_step = archive.get_long("adam.step");
    if (ckpt.adam_step > 0) {
        for (const auto& [name, tensor] : ckpt.params.named_parameters()) {
            const Tensor* m = archive.find_tensor("adam.m." + name);
            const Tensor* v = archive.find_tensor("adam.v." + name);
            if (m == nullptr || v == nullptr) {
                throw std::runtime_error("checkpoint: missing optimizer state for '" + name + "'");
            }
            ckpt.adam_m.push_back(*m);
            ckpt.adam_v.push_back(*v);
        }
    }
    return ckpt;
}

}  // namespace gdbn
