#include "gdbn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace gdbn {

void GdbnConfig::validate() const {
    if (m < 1) throw std::invalid_argument("GdbnConfig: m must be >= 1");
    if (s_o < 1) throw std::invalid_argument("GdbnConfig: s_o must be >= 1");
    if (s_p < 1) throw std::invalid_argument("GdbnConfig: s_p must be >= 1");
    if (d_z < 1) throw std::invalid_argument("GdbnConfig: d_z must be >= 1");
    if (h < 1) throw std::invalid_argument("GdbnConfig: h must be >= 1");
    if (n_layers < 1) throw std::invalid_argument("GdbnConfig: n_layers must be >= 1");
    if (n_hidden < 0) throw std::invalid_argument("GdbnConfig: n_hidden must be >= 0");
    if (d != 1) {
        throw std::invalid_argument("GdbnConfig: only scalar node features (d=1) are supported");
    }
}

namespace {

template <typename Params, typename TensorPtr>
std::vector<std::pair<std::string, TensorPtr>> collect_named(Params& p) {
    std::vector<std::pair<std::string, TensorPtr>> out;
    out.emplace_back("A", &p.a);
    auto add_mlp = [&out](const std::string& prefix, auto& mlp) {
        for (size_t l = 0; l < mlp.weights.size(); ++l) {
            out.emplace_back(prefix + ".w" + std::to_string(l), &mlp.weights[l]);
            out.emplace_back(prefix + ".b" + std::to_string(l), &mlp.biases[l]);
        }
    };
    for (size_t l = 0; l < p.genc.size(); ++l) {
        const std::string base = "genc" + std::to_string(l);
        add_mlp(base + ".f_emb", p.genc[l].f_emb);
        add_mlp(base + ".f_tau", p.genc[l].f_tau);
        add_mlp(base + ".f_e", p.genc[l].f_e);
        add_mlp(base + ".f_v", p.genc[l].f_v);
    }
    add_mlp("F1", p.f1);
    add_mlp("F2", p.f2);
    add_mlp("F3", p.f3);
    add_mlp("F4", p.f4);
    return out;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> GdbnParams::named_parameters() {
    return collect_named<GdbnParams, Tensor*>(*this);
}

std::vector<std::pair<std::string, const Tensor*>> GdbnParams::named_parameters() const {
    return collect_named<const GdbnParams, const Tensor*>(*this);
}

TemporalAdjacencyMatrix GdbnParams::tam() const {
    const long m = a.rows();
    const long p = a.cols() / m;
    TemporalAdjacencyMatrix A(m, p);
    A.weights = a;
    A.validate();
    return A;
}

GdbnParams init_params(const GdbnConfig& cfg, uint64_t seed) {
    cfg.validate();
    RngStream rng(seed, "init");
    GdbnParams p;
    p.a = Tensor({cfg.m, cfg.s_o * cfg.m});
    for (long i = 0; i < p.a.numel(); ++i) p.a.data()[i] = rng.uniform(-0.1, 0.1);
    for (long l = 0; l < cfg.n_layers; ++l) {
        GencLayerParams layer;
        const long ne_in = l == 0 ? cfg.d : cfg.h;
        layer.f_emb = make_mlp(ne_in, cfg.h, cfg.h, cfg.n_hidden, rng);
        layer.f_tau = make_mlp(1, cfg.h, cfg.h, cfg.n_hidden, rng);
        layer.f_e = make_mlp(2 * cfg.h, cfg.h, cfg.h, cfg.n_hidden, rng);
        layer.f_v = make_mlp(cfg.h, cfg.h, cfg.h, cfg.n_hidden, rng);
        p.genc.push_back(std::move(layer));
    }
    p.f1 = make_mlp(cfg.h, cfg.h, 2 * cfg.d_z, cfg.n_hidden, rng);
    p.f2 = make_mlp(cfg.d, cfg.h, cfg.h, cfg.n_hidden, rng);
    p.f3 = make_mlp(cfg.h, cfg.h, 2 * cfg.d, cfg.n_hidden, rng);
    p.f4 = make_mlp(cfg.d_z, cfg.h, cfg.h, cfg.n_hidden, rng);
    return p;
}

GdbnVars bind_params(Tape& tape, const GdbnParams& params, bool requires_grad) {
    GdbnVars vars;
    auto track_mlp = [&](const Mlp& mlp) {
        MlpVars mv = bind_mlp(tape, mlp, requires_grad);
        for (size_t l = 0; l < mv.weights.size(); ++l) {
            vars.ordered.push_back(mv.weights[l]);
            vars.ordered.push_back(mv.biases[l]);
        }
        return mv;
    };
    vars.a = tape.leaf(params.a, requires_grad);
    vars.ordered.push_back(vars.a);
    for (const GencLayerParams& layer : params.genc) {
        GdbnVars::GencLayerVars lv;
        lv.f_emb = track_mlp(layer.f_emb);
        lv.f_tau = track_mlp(layer.f_tau);
        lv.f_e = track_mlp(layer.f_e);
        lv.f_v = track_mlp(layer.f_v);
        vars.genc.push_back(std::move(lv));
    }
    vars.f1 = track_mlp(params.f1);
    vars.f2 = track_mlp(params.f2);
    vars.f3 = track_mlp(params.f3);
    vars.f4 = track_mlp(params.f4);
    return vars;
}

Var genc_on_tape(Tape& tape, const GdbnVars& vars, const GdbnParams& params, const GdbnConfig& cfg,
                 std::span<const Var> slices) {
    if (static_cast<long>(slices.size()) != cfg.s_o) {
        throw std::invalid_argument("genc: expected " + std::to_string(cfg.s_o) + " slices, got " +
                                    std::to_string(slices.size()));
    }
    const long B = slices[0].rows();
    for (Var s : slices) {
        if (s.rows() != B || s.cols() != cfg.m) {
            throw std::invalid_argument("genc: slice shape " + s.value().shape_str() + " does not match " +
                                        std::to_string(B) + "x" + std::to_string(cfg.m));
        }
    }

    // Lag feature input: tau/s_o for tau = 1..s_o, in slice order (newest first).
    Tensor tau_in({cfg.s_o, 1});
    for (long l = 0; l < cfg.s_o; ++l) {
        tau_in.at(l, 0) = static_cast<double>(l + 1) / static_cast<double>(cfg.s_o);
    }
    Var tau_leaf = tape.leaf(tau_in, false);

    // Lagged source observations as rows (b, tau, j), batch-major.
    std::vector<Var> columns;
    columns.reserve(slices.size());
    for (Var s : slices) columns.push_back(tape.reshape(s, {B * cfg.m, cfg.d}));
    Var x_stack = tape.stack_interleaved(columns, cfg.m);  // (B*s_o*m) x d

    Var g{};  // (B*m) x h after the first layer
    for (long l = 0; l < cfg.n_layers; ++l) {
        const GdbnVars::GencLayerVars& lv = vars.genc[static_cast<size_t>(l)];
        const GencLayerParams& lp = params.genc[static_cast<size_t>(l)];

        Var ne_in = x_stack;
        if (l > 0) {
            // Re-embed the previous layer's node states at every lag position.
            std::vector<Var> reps(static_cast<size_t>(cfg.s_o), g);
            ne_in = tape.stack_interleaved(reps, cfg.m);
        }
        Var h_nodes = mlp_apply(tape, lv.f_emb, lp.f_emb, ne_in);           // (B*s_o*m) x h
        Var tau_emb = mlp_apply(tape, lv.f_tau, lp.f_tau, tau_leaf);        // s_o x h
        Var tau_rep = tape.repeat_rows(tau_emb, cfg.m, B);                  // (B*s_o*m) x h
        Var edges = mlp_apply(tape, lv.f_e, lp.f_e, tape.concat_cols(h_nodes, tau_rep));
        Var gathered = tape.matmul_shared(vars.a, edges, B);                // (B*m) x h
        g = mlp_apply(tape, lv.f_v, lp.f_v, gathered);
    }
    return g;
}

LatentVars encode_on_tape(Tape& tape, const GdbnVars& vars, const GdbnParams& params,
                          const GdbnConfig& cfg, Var x_t, Var g) {
    Var f2x = mlp_apply(tape, vars.f2, params.f2, x_t);
    Var residual = tape.sub(f2x, g);
    Var out = mlp_apply(tape, vars.f1, params.f1, residual);  // (B*m) x 2*d_z
    LatentVars latent;
    latent.m_z = tape.slice_cols(out, 0, cfg.d_z);
    latent.log_sigma_z = tape.clamp(tape.slice_cols(out, cfg.d_z, cfg.d_z), -8.0, 8.0);
    return latent;
}

Var sample_latent_on_tape(Tape& tape, Var m_z, Var log_sigma_z, Var eps) {
    Var stddev = tape.exp_(tape.scalar_mul(log_sigma_z, 0.5));
    return tape.add(m_z, tape.mul(stddev, eps));
}

PredictionVars decode_on_tape(Tape& tape, const GdbnVars& vars, const GdbnParams& params,
                              const GdbnConfig& cfg, Var g, Var z) {
    Var f4z = mlp_apply(tape, vars.f4, params.f4, z);
    Var out = mlp_apply(tape, vars.f3, params.f3, tape.add(g, f4z));  // (B*m) x 2*d
    PredictionVars pred;
    pred.m_x = tape.slice_cols(out, 0, cfg.d);
    pred.log_sigma_x = tape.clamp(tape.slice_cols(out, cfg.d, cfg.d), -8.0, 8.0);
    return pred;
}

std::vector<Tensor> draw_latent_noise(RngStream& rng, const GdbnConfig& cfg, long batch,
                                      long mc_samples) {
    if (batch < 1 || mc_samples < 1) {
        throw std::invalid_argument("draw_latent_noise: batch and mc_samples must be >= 1");
    }
    std::vector<Tensor> noise;
    noise.reserve(static_cast<size_t>(cfg.s_p * mc_samples));
    for (long k = 0; k < cfg.s_p * mc_samples; ++k) {
        Tensor eps({batch * cfg.m, cfg.d_z});
        for (long i = 0; i < eps.numel(); ++i) eps.data()[i] = rng.normal();
        noise.push_back(std::move(eps));
    }
    return noise;
}

ForwardTrace forward_on_tape(Tape& tape, const GdbnParams& params, const GdbnConfig& cfg,
                             const WindowBatch& windows, std::span<const long> offsets,
                             std::span<const Tensor> latent_noise, bool requires_grad) {
    cfg.validate();
    if (windows.s_o != cfg.s_o || windows.s_p != cfg.s_p) {
        throw std::invalid_argument("forward: window sizes (" + std::to_string(windows.s_o) + ", " +
                                    std::to_string(windows.s_p) + ") do not match config (" +
                                    std::to_string(cfg.s_o) + ", " + std::to_string(cfg.s_p) + ")");
    }
    if (windows.series.cols() != cfg.m) {
        throw std::invalid_argument("forward: series has " + std::to_string(windows.series.cols()) +
                                    " variables, config says " + std::to_string(cfg.m));
    }
    if (offsets.empty()) throw std::invalid_argument("forward: empty batch");
    const long B = static_cast<long>(offsets.size());
    for (long w : offsets) {
        if (w < 0 || w >= windows.window_count) {
            throw std::out_of_range("forward: window offset " + std::to_string(w) + " outside 0.." +
                                    std::to_string(windows.window_count - 1));
        }
    }
    if (latent_noise.empty() || latent_noise.size() % static_cast<size_t>(cfg.s_p) != 0) {
        throw std::invalid_argument("forward: latent noise count must be a multiple of s_p");
    }
    const long L = static_cast<long>(latent_noise.size()) / cfg.s_p;

    auto gather = [&](long row_offset) {
        Tensor rows({B, cfg.m});
        for (long b = 0; b < B; ++b) {
            const double* src = windows.series.data() + (offsets[static_cast<size_t>(b)] + row_offset) * cfg.m;
            std::copy(src, src + cfg.m, rows.data() + b * cfg.m);
        }
        return rows;
    };

    ForwardTrace trace;
    trace.batch = B;
    trace.vars = bind_params(tape, params, requires_grad);

    // Rolling observation window, newest slice first.
    std::vector<Var> slices;
    slices.reserve(static_cast<size_t>(cfg.s_o));
    for (long tau = 1; tau <= cfg.s_o; ++tau) {
        slices.push_back(tape.leaf(gather(cfg.s_o - tau), false));
    }

    for (long k = 0; k < cfg.s_p; ++k) {
        ForwardStep step;
        Var g = genc_on_tape(tape, trace.vars, params, cfg, slices);
        step.x_true = tape.reshape(tape.leaf(gather(cfg.s_o + k), false), {B * cfg.m, cfg.d});
        step.latent = encode_on_tape(tape, trace.vars, params, cfg, step.x_true, g);
        for (long l = 0; l < L; ++l) {
            Var eps = tape.leaf(latent_noise[static_cast<size_t>(k * L + l)], false);
            Var z = sample_latent_on_tape(tape, step.latent.m_z, step.latent.log_sigma_z, eps);
            step.predictions.push_back(decode_on_tape(tape, trace.vars, params, cfg, g, z));
        }
        if (k + 1 < cfg.s_p) {
            Var replaced = tape.reshape(step.predictions[0].m_x, {B, cfg.m});
            slices.insert(slices.begin(), replaced);
            slices.pop_back();
        }
        trace.steps.push_back(std::move(step));
    }
    return trace;
}

namespace {

/// Single window as a batch of one, reusing the batched pipeline.
WindowBatch batch_of_one(const Tensor& full_window, const GdbnConfig& cfg) {
    if (full_window.rank() != 2 || full_window.cols() != cfg.m) {
        throw std::invalid_argument("window must be rows x m, got " + full_window.shape_str());
    }
    WindowBatch batch;
    batch.series = full_window;
    batch.s_o = cfg.s_o;
    batch.s_p = cfg.s_p;
    batch.window_count = 1;
    return batch;
}

std::vector<Var> bind_window_slices(Tape& tape, const Tensor& window, const GdbnConfig& cfg) {
    if (window.rank() != 2 || window.rows() != cfg.s_o || window.cols() != cfg.m) {
        throw std::invalid_argument("genc window must be s_o x m, got " + window.shape_str());
    }
    std::vector<Var> slices;
    for (long tau = 1; tau <= cfg.s_o; ++tau) {
        Tensor row({1, cfg.m});
        std::copy(window.data() + (cfg.s_o - tau) * cfg.m, window.data() + (cfg.s_o - tau + 1) * cfg.m,
                  row.data());
        slices.push_back(tape.leaf(row, false));
    }
    return slices;
}

}  // namespace

Tensor genc(const Tensor& window, const GdbnParams& params, const GdbnConfig& cfg) {
    Tape tape;
    GdbnVars vars = bind_params(tape, params, false);
    std::vector<Var> slices = bind_window_slices(tape, window, cfg);
    return tape.value(genc_on_tape(tape, vars, params, cfg, slices));
}

LatentStats encode(const Tensor& x_t, const Tensor& window, const GdbnParams& params,
                   const GdbnConfig& cfg) {
    if (x_t.rank() != 2 || x_t.rows() != cfg.m || x_t.cols() != cfg.d) {
        throw std::invalid_argument("encode: x_t must be m x d, got " + x_t.shape_str());
    }
    Tape tape;
    GdbnVars vars = bind_params(tape, params, false);
    std::vector<Var> slices = bind_window_slices(tape, window, cfg);
    Var g = genc_on_tape(tape, vars, params, cfg, slices);
    LatentVars latent = encode_on_tape(tape, vars, params, cfg, tape.leaf(x_t, false), g);
    return {tape.value(latent.m_z), tape.value(latent.log_sigma_z)};
}

Tensor sample_latent(const LatentStats& stats, RngStream& rng) {
    if (!stats.m_z.same_shape(stats.log_sigma_z)) {
        throw std::invalid_argument("sample_latent: mean/log-variance shapes differ");
    }
    Tensor z = stats.m_z;
    for (long i = 0; i < z.numel(); ++i) {
        z.data()[i] += std::exp(0.5 * stats.log_sigma_z.data()[i]) * rng.normal();
    }
    return z;
}

PredictionStats decode(const Tensor& window, const Tensor& z, const GdbnParams& params,
                       const GdbnConfig& cfg) {
    if (z.rank() != 2 || z.rows() != cfg.m || z.cols() != cfg.d_z) {
        throw std::invalid_argument("decode: z must be m x d_z, got " + z.shape_str());
    }
    Tape tape;
    GdbnVars vars = bind_params(tape, params, false);
    std::vector<Var> slices = bind_window_slices(tape, window, cfg);
    Var g = genc_on_tape(tape, vars, params, cfg, slices);
    PredictionVars pred = decode_on_tape(tape, vars, params, cfg, g, tape.leaf(z, false));
    return {tape.value(pred.m_x), tape.value(pred.log_sigma_x)};
}

std::vector<std::pair<PredictionStats, LatentStats>> forward(const Tensor& full_window,
                                                             const GdbnParams& params,
                                                             const GdbnConfig& cfg,
                                                             RngStream& sampling_rng) {
    if (full_window.rows() != cfg.s_o + cfg.s_p) {
        throw std::invalid_argument("forward: window must have s_o+s_p rows, got " +
                                    full_window.shape_str());
    }
    WindowBatch batch = batch_of_one(full_window, cfg);
    const long offsets[] = {0};
    std::vector<Tensor> noise = draw_latent_noise(sampling_rng, cfg, 1, 1);
    Tape tape;
    ForwardTrace trace = forward_on_tape(tape, params, cfg, batch, offsets, noise, false);
    std::vector<std::pair<PredictionStats, LatentStats>> out;
    for (const ForwardStep& step : trace.steps) {
        PredictionStats pred{tape.value(step.predictions[0].m_x),
                             tape.value(step.predictions[0].log_sigma_x)};
        LatentStats latent{tape.value(step.latent.m_z), tape.value(step.latent.log_sigma_z)};
        out.emplace_back(std::move(pred), std::move(latent));
    }
    return out;
}

// ---- TensorArchive ----------------------------------------------------------

void TensorArchive::put_scalar(const std::string& key, const std::string& value) {
    scalars.emplace_back(key, value);
}
void TensorArchive::put_scalar(const std::string& key, long value) {
    put_scalar(key, std::to_string(value));
}
void TensorArchive::put_scalar(const std::string& key, uint64_t value) {
    put_scalar(key, std::to_string(value));
}
void TensorArchive::put_scalar(const std::string& key, double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    put_scalar(key, std::string(buf));
}

const std::string& TensorArchive::get_scalar(const std::string& key) const {
    for (const auto& [k, v] : scalars) {
        if (k == key) return v;
    }
    throw std::runtime_error("archive: missing scalar '" + key + "'");
}
long TensorArchive::get_long(const std::string& key) const { return std::stol(get_scalar(key)); }
uint64_t TensorArchive::get_u64(const std::string& key) const { return std::stoull(get_scalar(key)); }
double TensorArchive::get_double(const std::string& key) const { return std::stod(get_scalar(key)); }
bool TensorArchive::has_scalar(const std::string& key) const {
    for (const auto& [k, v] : scalars) {
        if (k == key) return true;
    }
    return false;
}

void TensorArchive::put_tensor(const std::string& name, Tensor t) {
    tensors.emplace_back(name, std::move(t));
}

const Tensor* TensorArchive::find_tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

std::string TensorArchive::to_text() const {
    std::ostringstream out;
    out << "gdbn-archive v1\n";
    for (const auto& [k, v] : scalars) out << "scalar " << k << ' ' << v << '\n';
    char buf[40];
    for (const auto& [name, t] : tensors) {
        out << "tensor " << name << ' ' << t.rank();
        for (long d : t.shape()) out << ' ' << d;
        out << '\n';
        for (long i = 0; i < t.numel(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", t.data()[i]);
            if (i) out << ' ';
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

TensorArchive TensorArchive::from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    long line_no = 0;
    auto fail = [&line_no](const std::string& why) {
        throw std::runtime_error("archive parse error at line " + std::to_string(line_no) + ": " + why);
    };

    if (!std::getline(in, line)) throw std::runtime_error("archive parse error: empty input");
    ++line_no;
    if (line != "gdbn-archive v1") fail("bad magic '" + line + "'");

    TensorArchive archive;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "scalar") {
            std::string key;
            if (!(ls >> key)) fail("scalar without key");
            std::string value;
            std::getline(ls, value);
            const size_t start = value.find_first_not_of(" \t");
            value = start == std::string::npos ? "" : value.substr(start);
            while (!value.empty() && (value.back() == '\r' || value.back() == ' ')) value.pop_back();
            archive.put_scalar(key, value);
        } else if (kind == "tensor") {
            std::string name;
            long rank = 0;
            if (!(ls >> name >> rank) || rank < 0) fail("bad tensor header");
            std::vector<long> shape(static_cast<size_t>(rank));
            long numel = 1;
            for (long& d : shape) {
                if (!(ls >> d) || d < 0) fail("bad tensor dimension");
                numel *= d;
            }
            if (!std::getline(in, line)) fail("tensor '" + name + "' missing data line");
            ++line_no;
            std::istringstream ds(line);
            std::vector<double> data(static_cast<size_t>(numel));
            for (long i = 0; i < numel; ++i) {
                if (!(ds >> data[static_cast<size_t>(i)])) {
                    fail("tensor '" + name + "' has fewer than " + std::to_string(numel) + " values");
                }
            }
            double extra;
            if (ds >> extra) fail("tensor '" + name + "' has trailing values");
            Tensor t = Tensor::from(std::move(shape), std::move(data));
            if (!t.all_finite()) fail("tensor '" + name + "' contains non-finite values");
            archive.put_tensor(name, std::move(t));
        } else {
            fail("unknown record kind '" + kind + "'");
        }
    }
    return archive;
}

void put_model(TensorArchive& archive, const GdbnParams& params, const GdbnConfig& cfg) {
    archive.put_scalar("config.m", cfg.m);
    archive.put_scalar("config.s_o", cfg.s_o);
    archive.put_scalar("config.s_p", cfg.s_p);
    archive.put_scalar("config.d_z", cfg.d_z);
    archive.put_scalar("config.h", cfg.h);
    archive.put_scalar("config.n_layers", cfg.n_layers);
    archive.put_scalar("config.d", cfg.d);
    archive.put_scalar("config.n_hidden", cfg.n_hidden);
    for (const auto& [name, tensor] : params.named_parameters()) {
        archive.put_tensor(name, *tensor);
    }
}

std::pair<GdbnParams, GdbnConfig> model_from_archive(const TensorArchive& archive) {
    GdbnConfig cfg;
    cfg.m = archive.get_long("config.m");
    cfg.s_o = archive.get_long("config.s_o");
    cfg.s_p = archive.get_long("config.s_p");
    cfg.d_z = archive.get_long("config.d_z");
    cfg.h = archive.get_long("config.h");
    cfg.n_layers = archive.get_long("config.n_layers");
    cfg.d = archive.get_long("config.d");
    cfg.n_hidden = archive.get_long("config.n_hidden");
    cfg.validate();

    GdbnParams params = init_params(cfg, 0);
    for (auto& [name, tensor] : params.named_parameters()) {
        const Tensor* stored = archive.find_tensor(name);
        if (stored == nullptr) throw std::runtime_error("archive: missing tensor '" + name + "'");
        if (!stored->same_shape(*tensor)) {
            throw std::runtime_error("archive: tensor '" + name + "' has shape " + stored->shape_str() +
                                     ", expected " + tensor->shape_str());
        }
        *tensor = *stored;
    }
    return {std::move(params), cfg};
}

}  // namespace gdbn
