#pragma once

#include <compare>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gdbn/tensor.hpp"

namespace gdbn {

/// Lagged weight matrix over m variables and lags 1..p, stored as the
/// m x (p*m) block row [A^1 | A^2 | ... | A^p]. Entry (i, j, tau) is the
/// influence of variable j on variable i at lag tau. Indices i, j are
/// 0-based internally; lags run 1..p.
struct TemporalAdjacencyMatrix {
    long m = 0;
    long p = 0;
    Tensor weights;

    TemporalAdjacencyMatrix() = default;
    TemporalAdjacencyMatrix(long m_, long p_) : m(m_), p(p_), weights({m_, p_ * m_}) {
        if (m_ < 1 || p_ < 1) throw std::invalid_argument("TemporalAdjacencyMatrix: m and p must be >= 1");
    }

    long col(long j, long tau) const { return (tau - 1) * m + j; }
    double at(long i, long j, long tau) const { return weights.at(i, col(j, tau)); }
    double& at(long i, long j, long tau) { return weights.at(i, col(j, tau)); }

    /// Throws unless weights has shape m x (p*m) with all entries finite.
    void validate() const;
};

/// One lagged edge: source -> target with delay `lag` in 1..p.
struct Edge {
    long target = 0;
    long source = 0;
    long lag = 0;

    auto operator<=>(const Edge&) const = default;
};

/// Edge support of a temporal adjacency matrix: only cross-time (lagged)
/// edges are representable. Edges are kept sorted and unique.
struct CausalTemporalGraph {
    long m = 0;
    long p = 0;
    std::vector<Edge> edges;

    bool has_edge(long target, long source, long lag) const;
    /// Sorts, rejects duplicates and out-of-range indices/lags.
    void normalize();
};

/// H1: every variable self-influences at lag exactly 1 (self edge at lag 1
/// present, none at higher lags). H2: each ordered (target, source) pair with
/// target != source carries at most one lag.
struct HypothesisReport {
    std::vector<std::pair<long, long>> h1_violations;  // (target, lag)
    std::vector<std::pair<long, long>> h2_violations;  // (target, source)

    bool ok() const { return h1_violations.empty() && h2_violations.empty(); }
};

HypothesisReport validate_hypotheses(const CausalTemporalGraph& g);

/// Support of A above the hard threshold: edge kept iff |a_ij^tau| > omega
/// (strict, so ties at omega drop).
CausalTemporalGraph threshold(const TemporalAdjacencyMatrix& A, double omega);

/// Text formats share the header `m=<int> p=<int>`; each following line is
/// one entry, 1-based: `i j tau weight` for a TAM (zero entries omitted),
/// `i j tau` for a graph. Weights print with 17 significant digits so the
/// round trip is exact.
std::string to_text(const TemporalAdjacencyMatrix& A);
std::string to_text(const CausalTemporalGraph& g);
TemporalAdjacencyMatrix tam_from_text(const std::string& text);
CausalTemporalGraph graph_from_text(const std::string& text);

}  // namespace gdbn
