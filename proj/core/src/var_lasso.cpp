#include "gdbn/var_lasso.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gdbn {

void LassoConfig::validate() const {
    if (lambda_l1 < 0.0) throw std::invalid_argument("LassoConfig: lambda_l1 must be >= 0");
    if (max_iterations < 1) throw std::invalid_argument("LassoConfig: max_iterations must be >= 1");
    if (!(tolerance > 0.0)) throw std::invalid_argument("LassoConfig: tolerance must be > 0");
}

LassoResult fit_lasso_var(const WindowBatch& windows, long s_o, const LassoConfig& cfg) {
    cfg.validate();
    if (s_o < 1) throw std::invalid_argument("fit_lasso_var: s_o must be >= 1");
    const long T = windows.series.rows(), m = windows.series.cols();
    const long n = T - s_o;  // regression samples: targets t = s_o .. T-1
    const long k = s_o * m;  // stacked lag predictors
    if (n < 2) throw std::invalid_argument("fit_lasso_var: series too short for lag depth");

    // Design row t-s_o: predictor column (tau-1)*m + j holds series[t - tau, j].
    std::vector<double> design(static_cast<size_t>(n) * k);
    for (long t = s_o; t < T; ++t) {
        double* row = design.data() + (t - s_o) * k;
        for (long tau = 1; tau <= s_o; ++tau) {
            const double* src = windows.series.data() + (t - tau) * m;
            std::copy(src, src + m, row + (tau - 1) * m);
        }
    }

    // Unit-RMS column scaling (no centering, so lambda = 0 stays exactly OLS).
    std::vector<double> scale(static_cast<size_t>(k), 1.0);
    for (long c = 0; c < k; ++c) {
        double ss = 0.0;
        for (long t = 0; t < n; ++t) ss += design[t * k + c] * design[t * k + c];
        const double rms = std::sqrt(ss / static_cast<double>(n));
        scale[static_cast<size_t>(c)] = rms;
        if (rms > 0.0) {
            const double inv = 1.0 / rms;
            for (long t = 0; t < n; ++t) design[t * k + c] *= inv;
        }
    }

    LassoResult result;
    result.coefficients = TemporalAdjacencyMatrix(m, s_o);
    result.converged = true;

    // After unit-RMS scaling z_c = (2/n)||x_c||^2 = 2 for every live column.
    std::vector<double> beta(static_cast<size_t>(k));
    std::vector<double> residual(static_cast<size_t>(n));
    for (long i = 0; i < m; ++i) {
        std::fill(beta.begin(), beta.end(), 0.0);
        for (long t = 0; t < n; ++t) residual[static_cast<size_t>(t)] = windows.series.at(s_o + t, i);

        long sweep = 0;
        for (; sweep < cfg.max_iterations; ++sweep) {
            double max_change = 0.0;
            for (long c = 0; c < k; ++c) {
                if (scale[static_cast<size_t>(c)] == 0.0) continue;  // dead column
                const double* col = design.data() + c;
                double dot = 0.0;
                for (long t = 0; t < n; ++t) dot += col[t * k] * residual[static_cast<size_t>(t)];
                const double old = beta[static_cast<size_t>(c)];
                const double rho = 2.0 / static_cast<double>(n) * dot + 2.0 * old;
                const double shrunk = std::abs(rho) - cfg.lambda_l1;
                const double next = shrunk > 0.0 ? std::copysign(shrunk, rho) / 2.0 : 0.0;
                const double delta = next - old;
                if (delta != 0.0) {
                    for (long t = 0; t < n; ++t) residual[static_cast<size_t>(t)] -= delta * col[t * k];
                    beta[static_cast<size_t>(c)] = next;
                }
                max_change = std::max(max_change, std::abs(delta));
            }
            if (max_change < cfg.tolerance) break;
        }
        const long performed = sweep == cfg.max_iterations ? sweep : sweep + 1;
        if (sweep == cfg.max_iterations) result.converged = false;
        result.sweeps = std::max(result.sweeps, performed);

        for (long c = 0; c < k; ++c) {
            if (scale[static_cast<size_t>(c)] > 0.0) {
                result.coefficients.weights.at(i, c) = beta[static_cast<size_t>(c)] / scale[static_cast<size_t>(c)];
            }
        }
    }
    return result;
}

}  // namespace gdbn
