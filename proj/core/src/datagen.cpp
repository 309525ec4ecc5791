#include "gdbn/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

namespace gdbn {

namespace {
constexpr double kOverflowGuard = 1e6;
}

SimMode sim_mode_from_string(const std::string& s) {
    if (s == "linear") return SimMode::linear;
    if (s == "nl_outer") return SimMode::nl_outer;
    if (s == "nl_inner") return SimMode::nl_inner;
    throw std::invalid_argument("unknown mode '" + s + "' (expected linear, nl_outer or nl_inner)");
}

std::string to_string(SimMode mode) {
    switch (mode) {
        case SimMode::linear: return "linear";
        case SimMode::nl_outer: return "nl_outer";
        case SimMode::nl_inner: return "nl_inner";
    }
    throw std::logic_error("bad mode enum");
}

void GenConfig::validate() const {
    if (m < 1) throw std::invalid_argument("GenConfig: m must be >= 1");
    if (p < 1) throw std::invalid_argument("GenConfig: p must be >= 1");
    if (r < 0.0 || r > 1.0) throw std::invalid_argument("GenConfig: r must be in [0, 1]");
    if (!(weight_lo > 0.0) || !(weight_lo < weight_hi)) {
        throw std::invalid_argument("GenConfig: weight range must satisfy 0 < weight_lo < weight_hi");
    }
    if (negative_fraction < 0.0 || negative_fraction > 1.0) {
        throw std::invalid_argument("GenConfig: negative_fraction must be in [0, 1]");
    }
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("GenConfig: noise_sigma must be >= 0");
    if (T <= p) throw std::invalid_argument("GenConfig: T must exceed p");
    if (burn_in < 0) throw std::invalid_argument("GenConfig: burn_in must be >= 0");
    if (max_tam_attempts < 1) throw std::invalid_argument("GenConfig: max_tam_attempts must be >= 1");
    if (!(stationarity_margin >= 0.0) || stationarity_margin >= 1.0) {
        throw std::invalid_argument("GenConfig: stationarity_margin must be in [0, 1)");
    }
}

double companion_spectral_radius(const TemporalAdjacencyMatrix& A) {
    A.validate();
    const long n = A.p * A.m;
    std::vector<double> c(static_cast<size_t>(n) * n, 0.0);
    for (long i = 0; i < A.m; ++i) {
        for (long col = 0; col < n; ++col) c[i * n + col] = A.weights.at(i, col);
    }
    for (long r = A.m; r < n; ++r) c[r * n + (r - A.m)] = 1.0;

    // Gelfand: log rho = sum_k t_k / 2^k where t_k = log ||B_k||_F and
    // B_{k+1} = (B_k / ||B_k||)^2. Terms stay bounded, so 60 squarings leave
    // a vanishing tail.
    std::vector<double> work(c.size());
    double log_rho = 0.0;
    double scale = 1.0;
    for (int k = 0; k < 60; ++k) {
        double fro = 0.0;
        for (double v : c) fro += v * v;
        fro = std::sqrt(fro);
        if (fro == 0.0) return 0.0;  // nilpotent
        log_rho += scale * std::log(fro);
        scale *= 0.5;
        const double inv = 1.0 / fro;
        for (double& v : c) v *= inv;
        kernels::mm_nn(c.data(), c.data(), work.data(), n, n, n, false);
        c.swap(work);
    }
    return std::exp(log_rho);
}

StationarityResult is_stationary(const TemporalAdjacencyMatrix& A, double margin) {
    const double radius = companion_spectral_radius(A);
    return {radius < 1.0 - margin, radius};
}

TemporalAdjacencyMatrix sample_tam(const GenConfig& cfg) {
    cfg.validate();
    RngStream rng(cfg.seed, "tam");

    // All cross positions (i, j, tau) with i != j, in sorted order.
    std::vector<Edge> eligible;
    eligible.reserve(static_cast<size_t>(cfg.m) * (cfg.m - 1) * cfg.p);
    for (long i = 0; i < cfg.m; ++i) {
        for (long j = 0; j < cfg.m; ++j) {
            if (i == j) continue;
            for (long tau = 1; tau <= cfg.p; ++tau) eligible.push_back({i, j, tau});
        }
    }
    const long n_active = std::lround((1.0 - cfg.r) * static_cast<double>(eligible.size()));

    for (long attempt = 0; attempt < cfg.max_tam_attempts; ++attempt) {
        std::vector<Edge> pool = eligible;
        rng.shuffle(pool);
        pool.resize(static_cast<size_t>(n_active));

        // Enforce H2: keep one uniformly chosen lag per cross pair.
        std::map<std::pair<long, long>, std::vector<long>> lags;
        for (const Edge& e : pool) lags[{e.target, e.source}].push_back(e.lag);
        std::vector<Edge> active;
        for (auto& [pair, tau_list] : lags) {
            const long pick = tau_list.size() == 1
                                  ? tau_list[0]
                                  : tau_list[static_cast<size_t>(rng.next_below(tau_list.size()))];
            active.push_back({pair.first, pair.second, pick});
        }

        TemporalAdjacencyMatrix A(cfg.m, cfg.p);
        auto draw_weight = [&]() {
            const double magnitude = rng.uniform(cfg.weight_lo, cfg.weight_hi);
            return rng.uniform() < cfg.negative_fraction ? -magnitude : magnitude;
        };
        for (long i = 0; i < cfg.m; ++i) A.at(i, i, 1) = draw_weight();
        for (const Edge& e : active) A.at(e.target, e.source, e.lag) = draw_weight();

        if (is_stationary(A, cfg.stationarity_margin).stationary) return A;
    }
    throw std::runtime_error("sample_tam: no stationary matrix in " + std::to_string(cfg.max_tam_attempts) +
                             " attempts (m=" + std::to_string(cfg.m) + " p=" + std::to_string(cfg.p) +
                             " r=" + std::to_string(cfg.r) + " seed=" + std::to_string(cfg.seed) + ")");
}

Tensor simulate_from(const TemporalAdjacencyMatrix& A, const GenConfig& cfg, const Tensor& initial,
                     long burn_in, RngStream& noise_rng) {
    A.validate();
    if (A.m != cfg.m || A.p != cfg.p) {
        throw std::invalid_argument("simulate: matrix is " + std::to_string(A.m) + "x lags " +
                                    std::to_string(A.p) + " but config says m=" + std::to_string(cfg.m) +
                                    " p=" + std::to_string(cfg.p));
    }
    if (initial.rank() != 2 || initial.rows() != cfg.p || initial.cols() != cfg.m) {
        throw std::invalid_argument("simulate: initial state must be p x m, got " + initial.shape_str());
    }
    if (cfg.mode == SimMode::linear) {
        const StationarityResult st = is_stationary(A, cfg.stationarity_margin);
        if (!st.stationary) {
            throw std::invalid_argument("simulate: linear mode requires a stationary matrix (radius " +
                                        std::to_string(st.spectral_radius) + ")");
        }
    }

    const long m = cfg.m, p = cfg.p;
    // Ring of the p most recent slices; recent[0] = X^{t-1}, recent[p-1] = X^{t-p}.
    std::vector<std::vector<double>> recent(static_cast<size_t>(p), std::vector<double>(m));
    for (long k = 0; k < p; ++k) {
        for (long j = 0; j < m; ++j) recent[static_cast<size_t>(p - 1 - k)][j] = initial.at(k, j);
    }

    Tensor out({cfg.T, m});
    std::vector<double> next(static_cast<size_t>(m));
    for (long step = 0; step < burn_in + cfg.T; ++step) {
        for (long i = 0; i < m; ++i) next[i] = 0.0;
        for (long tau = 1; tau <= p; ++tau) {
            const std::vector<double>& x = recent[static_cast<size_t>(tau - 1)];
            for (long i = 0; i < m; ++i) {
                const double* arow = A.weights.data() + i * (p * m) + (tau - 1) * m;
                double acc = 0.0;
                if (cfg.mode == SimMode::nl_inner) {
                    for (long j = 0; j < m; ++j) acc += arow[j] * std::sin(x[j]);
                } else {
                    for (long j = 0; j < m; ++j) acc += arow[j] * x[j];
                }
                next[i] += acc;
            }
        }
        for (long i = 0; i < m; ++i) {
            double v = cfg.mode == SimMode::nl_outer ? std::sin(next[i]) : next[i];
            v += cfg.noise_sigma * noise_rng.normal();
            if (!std::isfinite(v) || std::abs(v) > kOverflowGuard) {
                throw std::runtime_error("simulate: divergence in mode " + to_string(cfg.mode) +
                                         " at step " + std::to_string(step + 1));
            }
            next[i] = v;
        }
        std::rotate(recent.rbegin(), recent.rbegin() + 1, recent.rend());
        recent[0] = next;
        if (step >= burn_in) {
            for (long j = 0; j < m; ++j) out.at(step - burn_in, j) = next[j];
        }
    }
    return out;
}

TimeSeriesDataset simulate(const TemporalAdjacencyMatrix& A, const GenConfig& cfg) {
    cfg.validate();
    RngStream init_rng(cfg.seed, "init");
    Tensor initial({cfg.p, cfg.m});
    for (long i = 0; i < initial.numel(); ++i) initial.data()[i] = init_rng.normal();

    RngStream noise_rng(cfg.seed, "noise");
    TimeSeriesDataset ds;
    ds.values = simulate_from(A, cfg, initial, cfg.burn_in, noise_rng);
    ds.ground_truth = A;
    ds.config = cfg;
    return ds;
}

Tensor WindowBatch::window(long w) const {
    if (w < 0 || w >= window_count) throw std::out_of_range("WindowBatch: window index out of range");
    const long len = s_o + s_p, m = series.cols();
    Tensor out({len, m});
    std::copy(series.data() + w * m, series.data() + (w + len) * m, out.data());
    return out;
}

WindowBatch make_windows(const TimeSeriesDataset& ds, long s_o, long s_p, bool standardize) {
    if (s_o < 1 || s_p < 1) throw std::invalid_argument("make_windows: s_o and s_p must be >= 1");
    const long T = ds.values.rows(), m = ds.values.cols();
    if (T < s_o + s_p) {
        throw std::invalid_argument("make_windows: series length " + std::to_string(T) +
                                    " shorter than window " + std::to_string(s_o + s_p));
    }
    WindowBatch batch;
    batch.s_o = s_o;
    batch.s_p = s_p;
    batch.window_count = T - s_o - s_p + 1;
    batch.standardized = standardize;
    batch.mean.assign(static_cast<size_t>(m), 0.0);
    batch.stddev.assign(static_cast<size_t>(m), 1.0);
    batch.series = ds.values;
    if (!standardize) return batch;

    for (long j = 0; j < m; ++j) {
        double mu = 0.0;
        for (long t = 0; t < T; ++t) mu += ds.values.at(t, j);
        mu /= static_cast<double>(T);
        double var = 0.0;
        for (long t = 0; t < T; ++t) {
            const double d = ds.values.at(t, j) - mu;
            var += d * d;
        }
        double sd = std::sqrt(var / static_cast<double>(T));
        if (sd < 1e-12) sd = 1.0;  // constant column: shift only
        batch.mean[static_cast<size_t>(j)] = mu;
        batch.stddev[static_cast<size_t>(j)] = sd;
        for (long t = 0; t < T; ++t) batch.series.at(t, j) = (ds.values.at(t, j) - mu) / sd;
    }
    return batch;
}

std::string series_to_csv(const Tensor& series) {
    if (series.rank() != 2) throw std::invalid_argument("series_to_csv: rank-2 tensor expected");
    std::ostringstream out;
    char buf[40];
    for (long t = 0; t < series.rows(); ++t) {
        for (long j = 0; j < series.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", series.at(t, j));
            if (j) out << ',';
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

Tensor series_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<double> data;
    long cols = -1, line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        long n = 0;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            size_t pos = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                throw std::runtime_error("series_from_csv: bad number '" + cell + "' at line " +
                                         std::to_string(line_no));
            }
            if (cell.find_first_not_of(" \t\r", pos) != std::string::npos) {
                throw std::runtime_error("series_from_csv: bad number '" + cell + "' at line " +
                                         std::to_string(line_no));
            }
            data.push_back(v);
            ++n;
        }
        if (cols == -1) {
            cols = n;
        } else if (n != cols) {
            throw std::runtime_error("series_from_csv: line " + std::to_string(line_no) + " has " +
                                     std::to_string(n) + " columns, expected " + std::to_string(cols));
        }
    }
    if (cols < 1) throw std::runtime_error("series_from_csv: empty table");
    const long rows = static_cast<long>(data.size()) / cols;
    return Tensor::from({rows, cols}, std::move(data));
}

}  // namespace gdbn
