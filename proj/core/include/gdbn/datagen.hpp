#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gdbn/rng.hpp"
#include "gdbn/temporal_graph.hpp"
#include "gdbn/tensor.hpp"

namespace gdbn {

/// Generating recursions over the stacked state X = [X^{t-1}; ...; X^{t-p}]:
///   linear:   X^t = A X + Z
///   nl_outer: X^t = sin(A X) + Z
///   nl_inner: X^t = A sin(X) + Z
enum class SimMode { linear, nl_outer, nl_inner };

SimMode sim_mode_from_string(const std::string& s);
std::string to_string(SimMode mode);

struct GenConfig {
    long m = 10;
    long p = 5;
    /// Ratio of zero entries among the m*(m-1)*p eligible cross positions.
    double r = 0.95;
    double weight_lo = 0.7;
    double weight_hi = 0.95;
    double negative_fraction = 0.5;
    double noise_sigma = 0.1;  // standard deviation
    long T = 600;
    SimMode mode = SimMode::nl_inner;
    uint64_t seed = 0;
    long burn_in = 100;
    long max_tam_attempts = 1000;
    double stationarity_margin = 0.01;

    /// Throws invalid_argument naming the offending field.
    void validate() const;
};

struct TimeSeriesDataset {
    Tensor values;  // T x m, rows = time
    TemporalAdjacencyMatrix ground_truth;
    GenConfig config;
};

struct StationarityResult {
    bool stationary = false;
    double spectral_radius = 0.0;
};

/// Spectral radius of the (p*m) x (p*m) companion matrix
/// [[A^1 ... A^p], [I 0 ...], ..., [0 ... I 0]] via Gelfand iteration
/// (normalized repeated squaring), robust to complex eigenvalue pairs.
double companion_spectral_radius(const TemporalAdjacencyMatrix& A);

/// stationary <=> spectral radius < 1 - margin.
StationarityResult is_stationary(const TemporalAdjacencyMatrix& A, double margin = 0.01);

/// Draws a ground-truth weight matrix satisfying H1 (self edge at lag 1
/// only) and H2 (one lag per cross pair), with |w| uniform in
/// [weight_lo, weight_hi] and ~negative_fraction of entries negated.
/// Rejection-samples until stationary; throws when max_tam_attempts is
/// exhausted, naming the config.
TemporalAdjacencyMatrix sample_tam(const GenConfig& cfg);

/// Random N(0,1) initial slices, burn-in discarded, then T recorded steps of
/// the configured recursion. Linear mode requires a stationary matrix.
/// Throws on divergence (|x| beyond an overflow guard), naming mode and step.
TimeSeriesDataset simulate(const TemporalAdjacencyMatrix& A, const GenConfig& cfg);

/// Deterministic core of simulate for fixed starting conditions: `initial`
/// holds p rows, oldest first. Returns the T recorded rows after `burn_in`
/// discarded steps.
Tensor simulate_from(const TemporalAdjacencyMatrix& A, const GenConfig& cfg, const Tensor& initial,
                     long burn_in, RngStream& noise_rng);

/// Sliding windows of length s_o + s_p at stride 1 over the (optionally
/// per-variable standardized) series. Windows are views by offset: window w
/// covers series rows [w, w + s_o + s_p).
struct WindowBatch {
    Tensor series;  // T x m after standardization
    long s_o = 0;
    long s_p = 0;
    long window_count = 0;
    bool standardized = false;
    std::vector<double> mean;    // per variable; 0 when not standardized
    std::vector<double> stddev;  // per variable; 1 when not standardized

    /// Copy of window w as a (s_o+s_p) x m block, for tests and tracing.
    Tensor window(long w) const;
};

WindowBatch make_windows(const TimeSeriesDataset& ds, long s_o, long s_p, bool standardize);

/// Comma-separated numeric table, rows = time, columns = variables, 17
/// significant digits (round-trip exact).
std::string series_to_csv(const Tensor& series);
Tensor series_from_csv(const std::string& text);

}  // namespace gdbn
