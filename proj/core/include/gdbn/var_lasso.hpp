#pragma once

#include "gdbn/datagen.hpp"
#include "gdbn/temporal_graph.hpp"

namespace gdbn {

/// L1-regularized least squares over the lagged design: each variable's
/// next value is regressed on the s_o stacked past slices, minimizing
/// (1/n) ||y - X b||^2 + lambda ||b||_1 per target row. With no intra-slice
/// edges the problem is convex, so no acyclicity machinery is needed; this
/// is a deliberately simple linear baseline, not a DYNOTEARS port.
struct LassoConfig {
    double lambda_l1 = 0.01;
    long max_iterations = 1000;  // full coordinate sweeps
    double tolerance = 1e-6;     // max coefficient change, standardized scale

    void validate() const;
};

struct LassoResult {
    TemporalAdjacencyMatrix coefficients;  // m x (s_o * m), lags 1..s_o
    bool converged = false;
    long sweeps = 0;  // max over target rows
};

/// Cyclic coordinate descent with soft thresholding. Design columns are
/// scaled to unit RMS internally and coefficients unscaled on return, so the
/// lambda = 0 solution matches ordinary least squares exactly. When the sweep
/// budget runs out the best iterate is returned with converged = false.
LassoResult fit_lasso_var(const WindowBatch& windows, long s_o, const LassoConfig& cfg);

}  // namespace gdbn
