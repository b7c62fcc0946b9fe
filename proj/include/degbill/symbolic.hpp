#pragma once

// Collision graph, path enumeration and topological entropy.

#include "degbill/dls.hpp"

#include <cstdint>
#include <string>

namespace degbill {

/// A labelled collision orbit with endpoint ids on N and boundary data.
struct GraphOrbit {
    std::string label;
    int tail = 0; ///< id of a_k^-
    int head = 0; ///< id of a_k^+
    Vec p_minus;
    Vec p_plus;
    Vec v_minus;
    Vec v_plus;
    Symbol code;
};

/// Orbit data from a link evaluation: p- = -D_- L, p+ = D_+ L.
GraphOrbit graph_orbit(const ClassicalHamiltonian& h, std::string label, int tail, int head, const Vec& q_minus,
                       const Vec& q_plus, const LinkEval& e, Symbol code = {});

struct GraphOptions {
    /// Also require v_k^+ != -v_k'^-.
    bool no_straight_reflection = false;
    double jump_tol = 1e-9;
    double angle_tol = 1e-9;
};

struct CollisionGraph {
    std::vector<GraphOrbit> vertices;
    std::vector<std::vector<int>> successors;

    int size() const { return static_cast<int>(vertices.size()); }
    bool has_edge(int a, int b) const;
    int edges() const;
    Mat adjacency() const;
    /// "label: succ succ ..." per line.
    std::string dump() const;
};

CollisionGraph build_graph(const std::vector<GraphOrbit>& orbits, const GraphOptions& o = {});

/// Graph given directly by successor lists (vertex labels are the indices).
CollisionGraph graph_from_successors(const std::vector<std::vector<int>>& successors);

struct EntropyResult {
    /// ln(spectral radius); -inf when the graph has no cycles.
    double entropy = 0.0;
    double spectral_radius = 0.0;
    int iterations = 0;
    bool reducible = false;
    int components = 0;        ///< strongly connected components
    int dominant_component = -1;
    bool dag = false;
    bool cross_checked = false;
    double dense_radius = 0.0; ///< dense eigensolve, only when cross_checked
};

/// Power iteration on A + I for every strongly connected component (Collatz-Wielandt
/// bracketing to tol), dense cross-check for graphs with at most 12 vertices.
EntropyResult entropy(const CollisionGraph& g, double tol = 1e-10);

/// Strongly connected components (Tarjan); comp[v] numbering in reverse topological order.
std::vector<int> strong_components(const CollisionGraph& g, int* count = nullptr);

/// Vertex sequences k_0 .. k_n of walks with n edges.  periodic: closed walks of
/// period n given as k_0 .. k_{n-1} with k_{n-1} -> k_0.  Lexicographic order.
/// Throws Error when more than `budget` sequences would be produced.
std::vector<std::vector<int>> paths(const CollisionGraph& g, int n, bool periodic = false,
                                    std::size_t budget = 1000000);

/// Number of walks with n edges (or closed walks of period n), exact.  Throws
/// DomainError when the count does not fit in 128 bits.
unsigned __int128 path_count(const CollisionGraph& g, int n, bool periodic = false);
std::string to_string(unsigned __int128 v);

/// Codes of the chain along a walk of vertices.
std::vector<Symbol> codes_of(const CollisionGraph& g, const std::vector<int>& walk);

} // namespace degbill
