#include "degbill/symbolic.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

namespace degbill {

GraphOrbit graph_orbit(const ClassicalHamiltonian& h, std::string label, int tail, int head, const Vec& q_minus,
                       const Vec& q_plus, const LinkEval& e, Symbol code)
{
    GraphOrbit o;
    o.label = std::move(label);
    o.tail = tail;
    o.head = head;
    o.p_minus = -e.d_minus;
    o.p_plus = e.d_plus;
    o.v_minus = h.velocity(q_minus, o.p_minus);
    o.v_plus = h.velocity(q_plus, o.p_plus);
    o.code = std::move(code);
    return o;
}

bool CollisionGraph::has_edge(int a, int b) const
{
    const auto& s = successors.at(static_cast<size_t>(a));
    return std::find(s.begin(), s.end(), b) != s.end();
}

int CollisionGraph::edges() const
{
    int n = 0;
    for (const auto& s : successors)
        n += static_cast<int>(s.size());
    return n;
}

Mat CollisionGraph::adjacency() const
{
    Mat a = Mat::Zero(size(), size());
    for (int i = 0; i < size(); ++i)
        for (int j : successors[static_cast<size_t>(i)])
            a(i, j) = 1.0;
    return a;
}

std::string CollisionGraph::dump() const
{
    std::ostringstream os;
    for (int i = 0; i < size(); ++i) {
        os << vertices[static_cast<size_t>(i)].label << ":";
        for (int j : successors[static_cast<size_t>(i)])
            os << " " << vertices[static_cast<size_t>(j)].label;
        os << "\n";
    }
    return os.str();
}

CollisionGraph build_graph(const std::vector<GraphOrbit>& orbits, const GraphOptions& o)
{
    CollisionGraph g;
    g.vertices = orbits;
    g.successors.assign(orbits.size(), {});
    for (size_t a = 0; a < orbits.size(); ++a) {
        for (size_t b = 0; b < orbits.size(); ++b) {
            const GraphOrbit& k = orbits[a];
            const GraphOrbit& kk = orbits[b];
            if (k.head != kk.tail)
                continue;
            const double scale = std::max({1.0, k.p_plus.norm(), kk.p_minus.norm()});
            if ((k.p_plus - kk.p_minus).norm() <= o.jump_tol * scale)
                continue;
            if (o.no_straight_reflection) {
                const double nv = k.v_plus.norm() * kk.v_minus.norm();
                if (nv > 0.0 && (k.v_plus + kk.v_minus).norm() <= o.angle_tol * std::sqrt(nv))
                    continue;
            }
            g.successors[a].push_back(static_cast<int>(b));
        }
    }
    return g;
}

CollisionGraph graph_from_successors(const std::vector<std::vector<int>>& successors)
{
    CollisionGraph g;
    g.successors = successors;
    for (size_t i = 0; i < successors.size(); ++i) {
        GraphOrbit v;
        v.label = std::to_string(i);
        v.tail = v.head = 0;
        g.vertices.push_back(v);
        for (int j : successors[i])
            if (j < 0 || j >= static_cast<int>(successors.size()))
                throw DomainError("graph_from_successors: vertex out of range");
    }
    return g;
}

std::vector<int> strong_components(const CollisionGraph& g, int* count)
{
    const int n = g.size();
    std::vector<int> index(static_cast<size_t>(n), -1), low(static_cast<size_t>(n), 0), comp(static_cast<size_t>(n), -1);
    std::vector<char> on(static_cast<size_t>(n), 0);
    std::vector<int> stack;
    int next = 0, nc = 0;
    // iterative Tarjan
    for (int root = 0; root < n; ++root) {
        if (index[static_cast<size_t>(root)] >= 0)
            continue;
        std::vector<std::pair<int, size_t>> work{{root, 0}};
        while (!work.empty()) {
            auto& [v, it] = work.back();
            const auto vs = static_cast<size_t>(v);
            if (it == 0 && index[vs] < 0) {
                index[vs] = low[vs] = next++;
                stack.push_back(v);
                on[vs] = 1;
            }
            const auto& succ = g.successors[vs];
            if (it < succ.size()) {
                const int w = succ[it++];
                const auto ws = static_cast<size_t>(w);
                if (index[ws] < 0)
                    work.emplace_back(w, 0);
                else if (on[ws])
                    low[vs] = std::min(low[vs], index[ws]);
                continue;
            }
            if (low[vs] == index[vs]) {
                int w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on[static_cast<size_t>(w)] = 0;
                    comp[static_cast<size_t>(w)] = nc;
                } while (w != v);
                ++nc;
            }
            const int done = v;
            work.pop_back();
            if (!work.empty()) {
                const auto ps = static_cast<size_t>(work.back().first);
                low[ps] = std::min(low[ps], low[static_cast<size_t>(done)]);
            }
        }
    }
    if (count)
        *count = nc;
    return comp;
}

namespace {

/// Perron root of an irreducible nonnegative matrix via power iteration on A + I.
double perron_root(const Mat& a, double tol, int* iterations)
{
    const Eigen::Index n = a.rows();
    const Mat b = a + Mat::Identity(n, n);
    Vec x = Vec::Ones(n) / std::sqrt(static_cast<double>(n));
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < 1000000; ++it) {
        const Vec y = b * x;
        lo = std::numeric_limits<double>::infinity();
        hi = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double r = y[i] / x[i];
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
        x = y / y.norm();
        if (hi - lo <= tol * hi)
            break;
    }
    if (iterations)
        *iterations += it;
    return 0.5 * (lo + hi) - 1.0;
}

} // namespace

EntropyResult entropy(const CollisionGraph& g, double tol)
{
    if (g.size() == 0)
        throw DomainError("entropy of an empty graph");
    EntropyResult res;
    const std::vector<int> comp = strong_components(g, &res.components);
    res.reducible = res.components > 1;
    const Mat a = g.adjacency();
    double best = 0.0;
    bool any_cycle = false;
    for (int c = 0; c < res.components; ++c) {
        std::vector<int> members;
        for (int v = 0; v < g.size(); ++v)
            if (comp[static_cast<size_t>(v)] == c)
                members.push_back(v);
        const auto m = static_cast<Eigen::Index>(members.size());
        Mat sub(m, m);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j)
                sub(i, j) = a(members[static_cast<size_t>(i)], members[static_cast<size_t>(j)]);
        if (sub.sum() == 0.0)
            continue;
        any_cycle = true;
        const double r = perron_root(sub, tol, &res.iterations);
        if (r > best || res.dominant_component < 0) {
            best = r;
            res.dominant_component = c;
        }
    }
    res.dag = !any_cycle;
    res.spectral_radius = any_cycle ? best : 0.0;
    res.entropy = any_cycle ? std::log(best) : -std::numeric_limits<double>::infinity();
    if (g.size() <= 12) {
        Eigen::EigenSolver<Mat> es(a, false);
        res.dense_radius = es.eigenvalues().cwiseAbs().maxCoeff();
        res.cross_checked = true;
    }
    return res;
}

std::vector<std::vector<int>> paths(const CollisionGraph& g, int n, bool periodic, std::size_t budget)
{
    if (n < (periodic ? 1 : 0))
        throw DomainError("paths: length must be positive");
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    const int verts = periodic ? n : n + 1;
    std::function<void()> rec = [&]() {
        if (static_cast<int>(cur.size()) == verts) {
            if (periodic && !g.has_edge(cur.back(), cur.front()))
                return;
            if (out.size() >= budget)
                throw Error("paths: enumeration budget exceeded");
            out.push_back(cur);
            return;
        }
        if (cur.empty()) {
            for (int v = 0; v < g.size(); ++v) {
                cur.push_back(v);
                rec();
                cur.pop_back();
            }
            return;
        }
        std::vector<int> succ = g.successors[static_cast<size_t>(cur.back())];
        std::sort(succ.begin(), succ.end());
        for (int w : succ) {
            cur.push_back(w);
            rec();
            cur.pop_back();
        }
    };
    rec();
    return out;
}

unsigned __int128 path_count(const CollisionGraph& g, int n, bool periodic)
{
    using U = unsigned __int128;
    const auto m = static_cast<size_t>(g.size());
    auto add = [](U& acc, U x) {
        if (__builtin_add_overflow(acc, x, &acc))
            throw DomainError("path count exceeds 128 bits");
    };
    if (!periodic) {
        std::vector<U> w(m, 1);
        for (int step = 0; step < n; ++step) {
            std::vector<U> nw(m, 0);
            for (size_t v = 0; v < m; ++v)
                for (int s : g.successors[v])
                    add(nw[v], w[static_cast<size_t>(s)]);
            w = std::move(nw);
        }
        U total = 0;
        for (U x : w)
            add(total, x);
        return total;
    }
    U total = 0;
    for (size_t start = 0; start < m; ++start) {
        std::vector<U> w(m, 0);
        w[start] = 1;
        for (int step = 0; step < n; ++step) {
            std::vector<U> nw(m, 0);
            for (size_t v = 0; v < m; ++v)
                for (int s : g.successors[v])
                    add(nw[static_cast<size_t>(s)], w[v]);
            w = std::move(nw);
        }
        add(total, w[start]);
    }
    return total;
}

std::string to_string(unsigned __int128 v)
{
    if (v == 0)
        return "0";
    std::string s;
    while (v > 0) {
        s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
        v /= 10;
    }
    std::reverse(s.begin(), s.end());
    return s;
}

std::vector<Symbol> codes_of(const CollisionGraph& g, const std::vector<int>& walk)
{
    std::vector<Symbol> out;
    for (int v : walk)
        out.push_back(g.vertices.at(static_cast<size_t>(v)).code);
    return out;
}

} // namespace degbill
