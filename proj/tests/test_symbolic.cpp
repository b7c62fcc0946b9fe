#include "degbill/symbolic.hpp"

#include <doctest.h>

#include <cmath>

using namespace degbill;

namespace {

Vec vec(std::initializer_list<double> xs)
{
    Vec v(static_cast<Eigen::Index>(xs.size()));
    int i = 0;
    for (double x : xs)
        v(i++) = x;
    return v;
}

GraphOrbit torus_orbit(const std::string& label, int kx, int ky)
{
    auto sp = AmbientSpace::torus(vec({1, 1}));
    auto h = ClassicalHamiltonian::free(2);
    FreeFlightAction a(h, sp, 0.5);
    Symbol k{kx, ky};
    return graph_orbit(h, label, 0, 0, vec({0, 0}), vec({0, 0}), a.evaluate(k, vec({0, 0}), vec({0, 0}), false), k);
}

std::vector<Vec> triangle()
{
    return {vec({0, 0}), vec({1, 0}), vec({0.3, 0.8})};
}

std::vector<GraphOrbit> triangle_segments()
{
    auto h = ClassicalHamiltonian::free(2);
    FreeFlightAction a(h, AmbientSpace::euclidean(2), 0.5);
    auto c = triangle();
    std::vector<GraphOrbit> out;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j)
                out.push_back(graph_orbit(h, std::to_string(i) + std::to_string(j), i, j, c[i], c[j],
                                          a.evaluate({}, c[i], c[j], false)));
    return out;
}

using IMat = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;

IMat int_adjacency(const CollisionGraph& g)
{
    IMat a = IMat::Zero(g.size(), g.size());
    for (int i = 0; i < g.size(); ++i)
        for (int j : g.successors[i])
            a(i, j) += 1;
    return a;
}

} // namespace

TEST_CASE("edge rule on torus rotation vectors")
{
    std::vector<GraphOrbit> v{torus_orbit("e1", 1, 0), torus_orbit("e2", 0, 1), torus_orbit("-e1", -1, 0)};
    auto g = build_graph(v);
    CHECK(g.has_edge(0, 1));
    CHECK(g.has_edge(0, 2));
    CHECK_FALSE(g.has_edge(0, 0));
    GraphOptions o;
    o.no_straight_reflection = true;
    auto g2 = build_graph(v, o);
    CHECK(g2.has_edge(0, 1));
    CHECK_FALSE(g2.has_edge(0, 2));
    CHECK(g2.dump().find("e1:") != std::string::npos);
}

TEST_CASE("three non-collinear centers")
{
    auto segs = triangle_segments();
    auto g = build_graph(segs);
    // geometric oracle: consecutive segments meet at a center and change direction
    auto c = triangle();
    for (int a = 0; a < g.size(); ++a)
        for (int b = 0; b < g.size(); ++b) {
            bool meet = segs[a].head == segs[b].tail;
            Vec da = (c[segs[a].head] - c[segs[a].tail]).normalized();
            Vec db = (c[segs[b].head] - c[segs[b].tail]).normalized();
            bool turn = (da - db).norm() > 1e-12;
            CHECK(g.has_edge(a, b) == (meet && turn));
        }
    auto e = entropy(g);
    CHECK(e.entropy > 0);
    CHECK(e.cross_checked);
    Eigen::EigenSolver<Mat> es(int_adjacency(g).cast<double>());
    double rho = es.eigenvalues().cwiseAbs().maxCoeff();
    CHECK(e.entropy == doctest::Approx(std::log(rho)).epsilon(1e-9));
    CHECK(std::abs(e.spectral_radius - rho) <= 1e-9);

    // growth of path counts at n = 12
    double ratio = static_cast<double>(path_count(g, 12)) / static_cast<double>(path_count(g, 11));
    CHECK(std::abs(ratio / std::exp(e.entropy) - 1) <= 0.02);

    GraphOptions o;
    o.no_straight_reflection = true;
    auto g2 = build_graph(segs, o);
    for (int a = 0; a < g2.size(); ++a)
        CHECK(g2.successors[a].size() == 1);
}

TEST_CASE("entropy examples")
{
    auto cyc = graph_from_successors({{1}, {0}});
    CHECK(entropy(cyc).entropy == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
    for (int m = 1; m <= 5; ++m) {
        std::vector<std::vector<int>> s(m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                s[i].push_back(j);
        CHECK(entropy(graph_from_successors(s)).entropy == doctest::Approx(std::log(m)).scale(1.0).epsilon(1e-10));
    }
}

TEST_CASE("acyclic and reducible graphs")
{
    auto dag = graph_from_successors({{1}, {2}, {}});
    auto e = entropy(dag);
    CHECK(e.dag);
    CHECK(std::isinf(e.entropy));
    CHECK(e.entropy < 0);

    // complete 2-vertex component feeding a 2-cycle
    auto red = graph_from_successors({{0, 1, 2}, {0, 1}, {3}, {2}});
    auto r = entropy(red);
    CHECK(r.reducible);
    CHECK(r.components == 2);
    CHECK(r.entropy == doctest::Approx(std::log(2.0)).epsilon(1e-10));
}

TEST_CASE("paths")
{
    auto cyc = graph_from_successors({{1}, {0}});
    auto per = paths(cyc, 2, true);
    CHECK(per.size() == 2);
    CHECK(per[0] == std::vector<int>{0, 1});
    CHECK(per[1] == std::vector<int>{1, 0});

    auto single = graph_from_successors({{}});
    CHECK(paths(single, 1).empty());
    CHECK(paths(single, 3).empty());
    CHECK(path_count(single, 1) == 0);

    auto g = build_graph(triangle_segments());
    for (const auto& w : paths(g, 4))
        for (size_t i = 0; i + 1 < w.size(); ++i)
            CHECK(g.has_edge(w[i], w[i + 1]));
    CHECK_THROWS_AS(paths(g, 12, false, 100), Error);
}

TEST_CASE("path counts equal sums of adjacency powers")
{
    std::vector<CollisionGraph> graphs{build_graph(triangle_segments()),
                                       graph_from_successors({{0, 1, 2}, {0, 1, 2}, {0, 1, 2}}),
                                       graph_from_successors({{1, 2}, {2}, {0, 1}})};
    for (const auto& g : graphs) {
        IMat a = int_adjacency(g);
        IMat pw = IMat::Identity(g.size(), g.size());
        for (int n = 1; n <= 12; ++n) {
            pw = pw * a;
            CHECK(static_cast<long long>(path_count(g, n)) == pw.sum());
            CHECK(static_cast<long long>(path_count(g, n, true)) == pw.trace());
            if (n <= 6) {
                CHECK(paths(g, n).size() == static_cast<size_t>(pw.sum()));
                CHECK(paths(g, n, true).size() == static_cast<size_t>(pw.trace()));
            }
        }
    }
}

TEST_CASE("path counts past 128 bits throw")
{
    auto g = graph_from_successors({{0, 1, 2}, {0, 1, 2}, {0, 1, 2}});
    // 3^80 fits, 3^81 does not
    CHECK(to_string(path_count(g, 79)) == "147808829414345923316083210206383297601");
    CHECK_THROWS_AS(path_count(g, 80), DomainError);
    CHECK_THROWS_AS(path_count(g, 81, true), DomainError);
}

TEST_CASE("128-bit counts print exactly")
{
    unsigned __int128 v = 1;
    for (int i = 0; i < 100; ++i)
        v *= 2;
    CHECK(to_string(v) == "1267650600228229401496703205376");
    CHECK(to_string(0) == "0");
}
