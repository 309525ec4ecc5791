#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>

#include "gdbn/rng.hpp"
#include "gdbn/temporal_graph.hpp"

using namespace gdbn;

TEST_CASE("TAM indexing: (i, j, tau) maps to block column (tau-1)*m + j") {
    TemporalAdjacencyMatrix a(3, 2);
    a.at(1, 2, 2) = 0.5;
    CHECK(a.weights.at(1, 1 * 3 + 2) == 0.5);
    a.at(0, 0, 1) = -0.25;
    CHECK(a.weights.at(0, 0) == -0.25);
    a.validate();
    CHECK_THROWS_AS(TemporalAdjacencyMatrix(0, 1), std::invalid_argument);
}

TEST_CASE("threshold keeps strictly-above-omega entries only") {
    TemporalAdjacencyMatrix a(2, 2);
    a.at(0, 0, 1) = 0.3;    // == omega: dropped
    a.at(0, 1, 1) = 0.31;   // kept
    a.at(1, 0, 2) = -0.31;  // kept via |.|
    a.at(1, 1, 2) = -0.3;   // dropped
    CausalTemporalGraph g = threshold(a, 0.3);
    CHECK(g.edges.size() == 2);
    CHECK(g.has_edge(0, 1, 1));
    CHECK(g.has_edge(1, 0, 2));
    CHECK(!g.has_edge(0, 0, 1));

    // Monotone: raising omega never adds edges.
    CausalTemporalGraph g2 = threshold(a, 0.5);
    for (const Edge& e : g2.edges) CHECK(g.has_edge(e.target, e.source, e.lag));
}

TEST_CASE("validate_hypotheses: clean graph") {
    CausalTemporalGraph g;
    g.m = 2;
    g.p = 3;
    g.edges = {{0, 0, 1}, {1, 1, 1}, {0, 1, 2}};
    g.normalize();
    CHECK(validate_hypotheses(g).ok());
}

TEST_CASE("validate_hypotheses: missing self edge at lag 1 is an H1 violation") {
    CausalTemporalGraph g;
    g.m = 2;
    g.p = 2;
    g.edges = {{0, 0, 1}};  // variable 1 has no self edge at lag 1
    g.normalize();
    HypothesisReport rep = validate_hypotheses(g);
    REQUIRE(rep.h1_violations.size() == 1);
    CHECK(rep.h1_violations[0] == std::pair<long, long>{1, 1});
    CHECK(rep.h2_violations.empty());
}

TEST_CASE("validate_hypotheses: self edge beyond lag 1 is an H1 violation") {
    CausalTemporalGraph g;
    g.m = 1;
    g.p = 3;
    g.edges = {{0, 0, 1}, {0, 0, 3}};
    g.normalize();
    HypothesisReport rep = validate_hypotheses(g);
    REQUIRE(rep.h1_violations.size() == 1);
    CHECK(rep.h1_violations[0] == std::pair<long, long>{0, 3});
}

TEST_CASE("validate_hypotheses: two lags on one cross pair is an H2 violation") {
    CausalTemporalGraph g;
    g.m = 2;
    g.p = 3;
    g.edges = {{0, 0, 1}, {1, 1, 1}, {0, 1, 1}, {0, 1, 3}};
    g.normalize();
    HypothesisReport rep = validate_hypotheses(g);
    CHECK(rep.h1_violations.empty());
    REQUIRE(rep.h2_violations.size() == 1);
    CHECK(rep.h2_violations[0] == std::pair<long, long>{0, 1});
}

TEST_CASE("normalize rejects duplicates and out-of-range edges") {
    CausalTemporalGraph g;
    g.m = 2;
    g.p = 2;
    g.edges = {{0, 1, 1}, {0, 1, 1}};
    CHECK_THROWS_AS(g.normalize(), std::invalid_argument);
    g.edges = {{0, 2, 1}};
    CHECK_THROWS_AS(g.normalize(), std::invalid_argument);
    g.edges = {{0, 1, 3}};
    CHECK_THROWS_AS(g.normalize(), std::invalid_argument);
}

TEST_CASE("text round trip is exact for 100 random matrices") {
    RngStream rng(13, "test");
    for (int trial = 0; trial < 100; ++trial) {
        const long m = 1 + static_cast<long>(rng.next_below(5));
        const long p = 1 + static_cast<long>(rng.next_below(4));
        TemporalAdjacencyMatrix a(m, p);
        for (double& v : a.weights.storage()) {
            // ~half the entries zero, the rest signed with full mantissas
            v = rng.uniform() < 0.5 ? 0.0 : rng.normal();
        }
        TemporalAdjacencyMatrix b = tam_from_text(to_text(a));
        CHECK(b.m == m);
        CHECK(b.p == p);
        REQUIRE(b.weights.numel() == a.weights.numel());
        for (long i = 0; i < a.weights.numel(); ++i) {
            CHECK(a.weights.data()[i] == b.weights.data()[i]);  // bitwise
        }
    }
}

TEST_CASE("graph text round trip") {
    CausalTemporalGraph g;
    g.m = 3;
    g.p = 2;
    g.edges = {{0, 0, 1}, {2, 1, 2}, {1, 1, 1}};
    g.normalize();
    CausalTemporalGraph h = graph_from_text(to_text(g));
    CHECK(h.m == g.m);
    CHECK(h.p == g.p);
    CHECK(h.edges == g.edges);
}

TEST_CASE("parser rejects malformed input with line numbers") {
    CHECK_THROWS_AS((void)tam_from_text(""), std::runtime_error);
    CHECK_THROWS_AS((void)tam_from_text("m=2\n"), std::runtime_error);
    CHECK_THROWS_WITH_AS((void)tam_from_text("m=2 p=1\n1 1 1 0.5\n1 1 1 0.7\n"),
                         doctest::Contains("line 3"), std::runtime_error);
    // out-of-range index
    CHECK_THROWS_AS((void)tam_from_text("m=2 p=1\n3 1 1 0.5\n"), std::runtime_error);
    // lag out of range
    CHECK_THROWS_AS((void)tam_from_text("m=2 p=1\n1 1 2 0.5\n"), std::runtime_error);
    // trailing junk on an entry line
    CHECK_THROWS_AS((void)tam_from_text("m=2 p=1\n1 1 1 0.5 9\n"), std::runtime_error);
    // non-numeric weight
    CHECK_THROWS_AS((void)tam_from_text("m=2 p=1\n1 1 1 x\n"), std::runtime_error);
}

TEST_CASE("serialized entries are 1-based") {
    TemporalAdjacencyMatrix a(2, 1);
    a.at(0, 1, 1) = 0.5;
    const std::string text = to_text(a);
    CHECK(text.find("1 2 1 0.5") != std::string::npos);
}
