#include "gdbn/temporal_graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace gdbn {

void TemporalAdjacencyMatrix::validate() const {
    if (m < 1 || p < 1) throw std::invalid_argument("TemporalAdjacencyMatrix: m and p must be >= 1");
    if (weights.rank() != 2 || weights.rows() != m || weights.cols() != p * m) {
        throw std::invalid_argument("TemporalAdjacencyMatrix: weights shape " + weights.shape_str() +
                                    " does not match m=" + std::to_string(m) + " p=" + std::to_string(p));
    }
    if (!weights.all_finite()) {
        throw std::invalid_argument("TemporalAdjacencyMatrix: non-finite weight");
    }
}

bool CausalTemporalGraph::has_edge(long target, long source, long lag) const {
    const Edge e{target, source, lag};
    return std::binary_search(edges.begin(), edges.end(), e);
}

void CausalTemporalGraph::normalize() {
    if (m < 1 || p < 1) throw std::invalid_argument("CausalTemporalGraph: m and p must be >= 1");
    std::sort(edges.begin(), edges.end());
    if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
        throw std::invalid_argument("CausalTemporalGraph: duplicate edge");
    }
    for (const Edge& e : edges) {
        if (e.target < 0 || e.target >= m || e.source < 0 || e.source >= m || e.lag < 1 || e.lag > p) {
            throw std::invalid_argument("CausalTemporalGraph: edge (" + std::to_string(e.target + 1) +
                                        ", " + std::to_string(e.source + 1) + ", " + std::to_string(e.lag) +
                                        ") out of range");
        }
    }
}

HypothesisReport validate_hypotheses(const CausalTemporalGraph& g) {
    HypothesisReport report;
    for (long i = 0; i < g.m; ++i) {
        if (!g.has_edge(i, i, 1)) report.h1_violations.emplace_back(i, 1);
    }
    std::map<std::pair<long, long>, long> lags_per_pair;
    for (const Edge& e : g.edges) {
        if (e.target == e.source) {
            if (e.lag > 1) report.h1_violations.emplace_back(e.target, e.lag);
        } else {
            ++lags_per_pair[{e.target, e.source}];
        }
    }
    for (const auto& [pair, count] : lags_per_pair) {
        if (count > 1) report.h2_violations.push_back(pair);
    }
    std::sort(report.h1_violations.begin(), report.h1_violations.end());
    return report;
}

CausalTemporalGraph threshold(const TemporalAdjacencyMatrix& A, double omega) {
    if (omega < 0.0) throw std::invalid_argument("threshold: omega must be >= 0");
    A.validate();
    CausalTemporalGraph g;
    g.m = A.m;
    g.p = A.p;
    for (long i = 0; i < A.m; ++i) {
        for (long j = 0; j < A.m; ++j) {
            for (long tau = 1; tau <= A.p; ++tau) {
                if (std::abs(A.at(i, j, tau)) > omega) g.edges.push_back({i, j, tau});
            }
        }
    }
    g.normalize();
    return g;
}

namespace {

std::string format_weight(double w) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", w);
    return buf;
}

[[noreturn]] void parse_fail(long line_no, const std::string& why) {
    throw std::runtime_error("parse error at line " + std::to_string(line_no) + ": " + why);
}

/// Splits into non-empty lines and checks the `m=<int> p=<int>` header.
/// Returns (m, p, remaining lines with their 1-based line numbers).
struct ParsedHeader {
    long m;
    long p;
    std::vector<std::pair<long, std::string>> body;
};

ParsedHeader parse_header(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    long line_no = 0;
    ParsedHeader out{0, 0, {}};
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (!have_header) {
            long m = 0, p = 0;
            char trail = 0;
            if (std::sscanf(line.c_str(), " m=%ld p=%ld %c", &m, &p, &trail) != 2 || m < 1 || p < 1) {
                parse_fail(line_no, "expected header `m=<int> p=<int>`, got `" + line + "`");
            }
            out.m = m;
            out.p = p;
            have_header = true;
        } else {
            out.body.emplace_back(line_no, line);
        }
    }
    if (!have_header) parse_fail(1, "empty input, expected header `m=<int> p=<int>`");
    return out;
}

/// Reads `i j tau [weight]` with 1-based i, j; returns 0-based edge.
Edge parse_entry(const ParsedHeader& h, long line_no, const std::string& line, bool want_weight,
                 double* weight) {
    std::istringstream ls(line);
    long i = 0, j = 0, tau = 0;
    if (!(ls >> i)) parse_fail(line_no, "missing target index");
    if (!(ls >> j)) parse_fail(line_no, "missing source index");
    if (!(ls >> tau)) parse_fail(line_no, "missing lag");
    if (want_weight && !(ls >> *weight)) parse_fail(line_no, "missing weight");
    std::string extra;
    if (ls >> extra) parse_fail(line_no, "unexpected trailing field `" + extra + "`");
    if (i < 1 || i > h.m) parse_fail(line_no, "target index " + std::to_string(i) + " outside 1.." + std::to_string(h.m));
    if (j < 1 || j > h.m) parse_fail(line_no, "source index " + std::to_string(j) + " outside 1.." + std::to_string(h.m));
    if (tau < 1 || tau > h.p) parse_fail(line_no, "lag " + std::to_string(tau) + " outside 1.." + std::to_string(h.p));
    if (want_weight && !std::isfinite(*weight)) parse_fail(line_no, "non-finite weight");
    return Edge{i - 1, j - 1, tau};
}

}  // namespace

std::string to_text(const TemporalAdjacencyMatrix& A) {
    A.validate();
    std::ostringstream out;
    out << "m=" << A.m << " p=" << A.p << "\n";
    for (long i = 0; i < A.m; ++i) {
        for (long j = 0; j < A.m; ++j) {
            for (long tau = 1; tau <= A.p; ++tau) {
                const double w = A.at(i, j, tau);
                if (w == 0.0) continue;
                out << (i + 1) << ' ' << (j + 1) << ' ' << tau << ' ' << format_weight(w) << "\n";
            }
        }
    }
    return out.str();
}

std::string to_text(const CausalTemporalGraph& g) {
    std::ostringstream out;
    out << "m=" << g.m << " p=" << g.p << "\n";
    for (const Edge& e : g.edges) {
        out << (e.target + 1) << ' ' << (e.source + 1) << ' ' << e.lag << "\n";
    }
    return out.str();
}

TemporalAdjacencyMatrix tam_from_text(const std::string& text) {
    const ParsedHeader h = parse_header(text);
    TemporalAdjacencyMatrix A(h.m, h.p);
    std::set<Edge> seen;
    for (const auto& [line_no, line] : h.body) {
        double w = 0.0;
        const Edge e = parse_entry(h, line_no, line, true, &w);
        if (!seen.insert(e).second) parse_fail(line_no, "duplicate entry");
        A.at(e.target, e.source, e.lag) = w;
    }
    return A;
}

CausalTemporalGraph graph_from_text(const std::string& text) {
    const ParsedHeader h = parse_header(text);
    CausalTemporalGraph g;
    g.m = h.m;
    g.p = h.p;
    for (const auto& [line_no, line] : h.body) {
        g.edges.push_back(parse_entry(h, line_no, line, false, nullptr));
    }
    g.normalize();
    return g;
}

}  // namespace gdbn
