#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gdbn/temporal_graph.hpp"

namespace gdbn {

/// Edge confusion over the full candidate universe the estimate can express:
/// all m*m*s_o lagged pairs, self edges at every lag included. False
/// positives split by whether the lag is within the ground truth's range
/// (tau <= true p) or beyond it.
struct ConfusionCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    long tn = 0;
    long fp_within_range = 0;
    long fp_out_of_range = 0;
};

/// est ranges over lags 1..est.p (the model's s_o); truth over 1..truth.p.
/// Requires the same m and est.p >= truth.p.
ConfusionCounts confusion(const CausalTemporalGraph& est, const CausalTemporalGraph& truth);

struct GraphMetrics {
    double fdr = 0.0;
    double tpr = 0.0;
    double f1 = 0.0;
    long shd = 0;
};

/// fdr = fp/(tp+fp), tpr = tp/(tp+fn), f1 = 2(1-fdr)tpr/((1-fdr)+tpr),
/// shd = fp + fn. Degenerate cases: fdr = 0 with no predictions, tpr = 1
/// with no true edges, f1 = 0 when its denominator vanishes.
GraphMetrics graph_metrics(const ConfusionCounts& c);

/// Rank-based AUROC (Mann-Whitney U with average ranks, so ties count 1/2).
/// Throws unless both classes are present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Scores |a_ij^tau| for every candidate in the learned matrix against truth
/// membership; the learned lag range must cover the truth's.
double tam_auroc(const TemporalAdjacencyMatrix& learned, const CausalTemporalGraph& truth);

struct SweepPoint {
    double omega = 0.0;
    GraphMetrics metrics;
    long predicted_edges = 0;
};

/// Metrics of threshold(learned, omega) against truth for each omega.
std::vector<SweepPoint> f1_sweep(const TemporalAdjacencyMatrix& learned,
                                 const CausalTemporalGraph& truth,
                                 const std::vector<double>& omegas);

/// Default sweep grid 0.05, 0.10, ..., 0.95.
std::vector<double> default_omega_grid();

/// Full scoring of one learned matrix at a reporting threshold.
struct EvaluationReport {
    ConfusionCounts counts;
    GraphMetrics metrics;
    double auroc = 0.0;
    double omega = 0.0;
    std::vector<SweepPoint> sweep;
    double best_f1 = 0.0;
    double best_omega = 0.0;
};

EvaluationReport evaluate(const TemporalAdjacencyMatrix& learned, const CausalTemporalGraph& truth,
                          double omega, const std::vector<double>& sweep_grid);

// ---- multi-seed benchmark runner -------------------------------------------

struct RunOutcome {
    std::string dataset;  // generator label, e.g. "nl_inner m=10"
    std::string method;   // "gdbn" or "var_lasso"
    uint64_t seed = 0;
    bool ok = false;
    std::string error;
    EvaluationReport report;
    double train_seconds = 0.0;
};

struct Aggregate {
    std::string dataset;
    std::string method;
    long runs = 0;
    long failures = 0;
    double auroc_mean = 0.0, auroc_std = 0.0;
    double f1_mean = 0.0, f1_std = 0.0;
    double fdr_mean = 0.0, tpr_mean = 0.0, shd_mean = 0.0;
    double best_f1_mean = 0.0;
    double seconds_mean = 0.0;
};

/// Mean and sample std over successful runs, grouped by (dataset, method) and
/// sorted; failed runs are counted, never dropped silently.
std::vector<Aggregate> aggregate_runs(const std::vector<RunOutcome>& runs);

/// Runs `tasks` on up to `jobs` threads, preserving result order.
void parallel_for(long n, long jobs, const std::function<void(long)>& task);

}  // namespace gdbn
