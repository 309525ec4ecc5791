#include "gdbn/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace gdbn {

ConfusionCounts confusion(const CausalTemporalGraph& est, const CausalTemporalGraph& truth) {
    if (est.m != truth.m) {
        throw std::invalid_argument("confusion: estimate has m=" + std::to_string(est.m) +
                                    ", truth has m=" + std::to_string(truth.m));
    }
    if (est.p < truth.p) {
        throw std::invalid_argument("confusion: estimate lag range " + std::to_string(est.p) +
                                    " cannot cover truth range " + std::to_string(truth.p));
    }
    ConfusionCounts c;
    for (long i = 0; i < est.m; ++i) {
        for (long j = 0; j < est.m; ++j) {
            for (long tau = 1; tau <= est.p; ++tau) {
                const bool in_est = est.has_edge(i, j, tau);
                const bool in_truth = tau <= truth.p && truth.has_edge(i, j, tau);
                if (in_est && in_truth) {
                    ++c.tp;
                } else if (in_est) {
                    ++c.fp;
                    if (tau <= truth.p) {
                        ++c.fp_within_range;
                    } else {
                        ++c.fp_out_of_range;
                    }
                } else if (in_truth) {
                    ++c.fn;
                } else {
                    ++c.tn;
                }
            }
        }
    }
    return c;
}

GraphMetrics graph_metrics(const ConfusionCounts& c) {
    GraphMetrics m;
    const long predicted = c.tp + c.fp;
    const long actual = c.tp + c.fn;
    m.fdr = predicted > 0 ? static_cast<double>(c.fp) / static_cast<double>(predicted) : 0.0;
    m.tpr = actual > 0 ? static_cast<double>(c.tp) / static_cast<double>(actual) : 1.0;
    const double precision = 1.0 - m.fdr;
    const double denom = precision + m.tpr;
    m.f1 = denom > 0.0 ? 2.0 * precision * m.tpr / denom : 0.0;
    m.shd = c.fp + c.fn;
    return m;
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw std::invalid_argument("auroc: scores and labels must be equal-length and non-empty");
    }
    long n_pos = 0;
    for (int l : labels) {
        if (l != 0 && l != 1) throw std::invalid_argument("auroc: labels must be 0 or 1");
        n_pos += l;
    }
    const long n = static_cast<long>(scores.size());
    const long n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw std::invalid_argument("auroc: need at least one positive and one negative label");
    }

    std::vector<long> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&scores](long a, long b) { return scores[static_cast<size_t>(a)] < scores[static_cast<size_t>(b)]; });

    // Average ranks across tie groups make each tied positive-negative pair
    // contribute exactly 1/2 to the U statistic.
    double rank_sum_pos = 0.0;
    long start = 0;
    while (start < n) {
        long end = start;
        while (end + 1 < n &&
               scores[static_cast<size_t>(idx[end + 1])] == scores[static_cast<size_t>(idx[start])]) {
            ++end;
        }
        const double avg_rank = 0.5 * static_cast<double>(start + end) + 1.0;  // 1-based
        for (long k = start; k <= end; ++k) {
            if (labels[static_cast<size_t>(idx[k])] == 1) rank_sum_pos += avg_rank;
        }
        start = end + 1;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double tam_auroc(const TemporalAdjacencyMatrix& learned, const CausalTemporalGraph& truth) {
    learned.validate();
    if (learned.m != truth.m) throw std::invalid_argument("tam_auroc: variable counts differ");
    if (learned.p < truth.p) {
        throw std::invalid_argument("tam_auroc: learned lag range cannot cover the truth's");
    }
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(static_cast<size_t>(learned.m * learned.m * learned.p));
    for (long i = 0; i < learned.m; ++i) {
        for (long j = 0; j < learned.m; ++j) {
            for (long tau = 1; tau <= learned.p; ++tau) {
                scores.push_back(std::abs(learned.at(i, j, tau)));
                labels.push_back(tau <= truth.p && truth.has_edge(i, j, tau) ? 1 : 0);
            }
        }
    }
    return auroc(scores, labels);
}

std::vector<SweepPoint> f1_sweep(const TemporalAdjacencyMatrix& learned,
                                 const CausalTemporalGraph& truth,
                                 const std::vector<double>& omegas) {
    std::vector<SweepPoint> sweep;
    sweep.reserve(omegas.size());
    for (double omega : omegas) {
        const CausalTemporalGraph est = threshold(learned, omega);
        SweepPoint point;
        point.omega = omega;
        point.metrics = graph_metrics(confusion(est, truth));
        point.predicted_edges = static_cast<long>(est.edges.size());
        sweep.push_back(point);
    }
    return sweep;
}

std::vector<double> default_omega_grid() {
    std::vector<double> grid;
    for (int k = 1; k <= 19; ++k) grid.push_back(0.05 * k);
    return grid;
}

EvaluationReport evaluate(const TemporalAdjacencyMatrix& learned, const CausalTemporalGraph& truth,
                          double omega, const std::vector<double>& sweep_grid) {
    EvaluationReport report;
    report.omega = omega;
    report.counts = confusion(threshold(learned, omega), truth);
    report.metrics = graph_metrics(report.counts);
    report.auroc = tam_auroc(learned, truth);
    report.sweep = f1_sweep(learned, truth, sweep_grid);
    for (const SweepPoint& point : report.sweep) {
        if (point.metrics.f1 > report.best_f1) {
            report.best_f1 = point.metrics.f1;
            report.best_omega = point.omega;
        }
    }
    return report;
}

std::vector<Aggregate> aggregate_runs(const std::vector<RunOutcome>& runs) {
    std::map<std::pair<std::string, std::string>, std::vector<const RunOutcome*>> groups;
    for (const RunOutcome& run : runs) groups[{run.dataset, run.method}].push_back(&run);

    auto mean_std = [](const std::vector<double>& xs) {
        const double n = static_cast<double>(xs.size());
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= n;
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        const double std_dev = xs.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
        return std::pair<double, double>{mean, std_dev};
    };

    std::vector<Aggregate> out;
    for (const auto& [key, members] : groups) {
        Aggregate agg;
        agg.dataset = key.first;
        agg.method = key.second;
        agg.runs = static_cast<long>(members.size());
        std::vector<double> aucs, f1s, fdrs, tprs, shds, best_f1s, secs;
        for (const RunOutcome* run : members) {
            if (!run->ok) {
                ++agg.failures;
                continue;
            }
            aucs.push_back(run->report.auroc);
            f1s.push_back(run->report.metrics.f1);
            fdrs.push_back(run->report.metrics.fdr);
            tprs.push_back(run->report.metrics.tpr);
            shds.push_back(static_cast<double>(run->report.metrics.shd));
            best_f1s.push_back(run->report.best_f1);
            secs.push_back(run->train_seconds);
        }
        if (!aucs.empty()) {
            std::tie(agg.auroc_mean, agg.auroc_std) = mean_std(aucs);
            std::tie(agg.f1_mean, agg.f1_std) = mean_std(f1s);
            agg.fdr_mean = mean_std(fdrs).first;
            agg.tpr_mean = mean_std(tprs).first;
            agg.shd_mean = mean_std(shds).first;
            agg.best_f1_mean = mean_std(best_f1s).first;
            agg.seconds_mean = mean_std(secs).first;
        }
        out.push_back(agg);
    }
    return out;
}

void parallel_for(long n, long jobs, const std::function<void(long)>& task) {
    if (n <= 0) return;
    const long workers = std::max<long>(1, std::min(jobs, n));
    if (workers == 1) {
        for (long i = 0; i < n; ++i) task(i);
        return;
    }
    std::atomic<long> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr first_error = nullptr;
    std::mutex error_mutex;
    pool.reserve(static_cast<size_t>(workers));
    for (long w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                const long i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    task(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace gdbn
