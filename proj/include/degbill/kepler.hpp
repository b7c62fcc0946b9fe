#pragma once

// Kepler arcs in the plane (attracting unit mass at the origin), the revolution
// actions J_n(h, z), the 3-body discrete Lagrangian obtained by minimizing over
// the energy split, and the early-collision commensurability filter.

#include "degbill/dls.hpp"

#include <optional>

namespace degbill {

/// Eccentric anomaly: E - e sin E = M for 0 <= e < 1.  For e > 1 the hyperbolic
/// anomaly of e sinh H - H = M is returned instead.  e == 1 throws DomainError.
double solve_kepler(double mean_anomaly, double e);
double solve_kepler_hyperbolic(double mean_anomaly, double e);

enum class Orientation { Counterclockwise, Clockwise };
enum class Branch { Short, Long };

struct ArcType {
    Orientation orientation = Orientation::Counterclockwise;
    /// Short: the arc does not enclose the empty focus (alpha), Long: it does (2 pi - alpha).
    Branch branch = Branch::Short;
};

/// Same arc traversed backwards: orientation flipped.
ArcType reversed(ArcType t);
/// Arc with f(dual) = 2 pi - f(t): orientation and branch flipped.
ArcType dual(ArcType t);

/// A simple Kepler arc of semimajor axis a from x- to x+.
struct KeplerArc {
    Vec x_minus, x_plus;
    double a = 1.0;
    double h = -0.5;       ///< energy -1/(2a)
    ArcType type;
    double r1 = 0.0, r2 = 0.0, c = 0.0, s = 0.0;
    double theta = 0.0;    ///< transfer angle along the orientation, in [0, 2 pi)
    double alpha = 0.0, beta = 0.0; ///< Lagrange angles with branch and sign applied
    double e = 0.0;
    double e_minus = 0.0, e_plus = 0.0; ///< eccentric anomalies, e_plus - e_minus = alpha - beta
    double time = 0.0;     ///< a^{3/2} ((alpha - sin alpha) - (beta - sin beta))
    double action = 0.0;   ///< sqrt(a) ((alpha + sin alpha) - (beta + sin beta))
};

/// Lambert geometry.  Throws GeometryError if s > 2a (no arc with this semimajor axis).
KeplerArc kepler_arc(const Vec& x_minus, const Vec& x_plus, double a, ArcType type);

/// Action of the simple arc with a = 1 (unit energy scale).  check: also integrate
/// sqrt(2/|x| + 2h)|dx| along the arc and throw if they differ by more than 1e-8.
double arc_action_f(const Vec& x_minus, const Vec& x_plus, ArcType type = {}, bool check = false);

/// Quadrature of sqrt(2/|x| + 2h)|dx| along the arc, plus `revolutions` full ellipses.
double arc_action_quadrature(const KeplerArc& arc, int revolutions = 0, int panels = 256);

/// Gradients of f with respect to x- and x+ (a = 1).
std::pair<Vec, Vec> arc_action_gradient(const Vec& x_minus, const Vec& x_plus, ArcType type = {});

/// Smallest energy for which a Kepler arc joins x- and x+: -1 / s.
double min_arc_energy(const Vec& x_minus, const Vec& x_plus);

/// J_n(h, z) = (-2h)^{-1/2} (2 pi |n| + sgn(n) f(-2h z)).  n != 0, h < 0.
double kepler_J(int n, double h, const Vec& x_minus, const Vec& x_plus, ArcType type = {});
/// dJ_n/dh: time of flight (-2h)^{-3/2} (2 pi |n| + sgn(n) t(-2h z)).
double kepler_J_dh(int n, double h, const Vec& x_minus, const Vec& x_plus, ArcType type = {});
/// D_{x-} J_n and D_{x+} J_n.
std::pair<Vec, Vec> kepler_J_gradient(int n, double h, const Vec& x_minus, const Vec& x_plus, ArcType type = {});

struct ThreeBodyResult {
    double value = 0.0;
    double h1 = 0.0, h2 = 0.0;
    double time = 0.0;   ///< common time of flight at the minimizer
    Vec d_minus, d_plus; ///< ambient (body 1, body 2) derivatives
    int iterations = 0;
};

struct ThreeBodyOptions {
    double tol = 1e-11;
    ArcType type1{};
    ArcType type2{};
};

/// L_k(z) = min over alpha1 h1 + alpha2 h2 = E of alpha1 J_{k1}(h1, z1) + alpha2 J_{k2}(h2, z2).
/// z1 = (x1-, x1+), z2 = (x2-, x2+); on the collision set both coincide.
/// Throws GeometryError when the split interval is empty and ConvergenceError
/// when the minimum sits on the feasibility boundary.
ThreeBodyResult three_body_lagrangian(int k1, int k2, const Vec& x1_minus, const Vec& x1_plus, const Vec& x2_minus,
                                      const Vec& x2_plus, double alpha1, double alpha2, double E,
                                      const ThreeBodyOptions& o = {});
ThreeBodyResult three_body_lagrangian(int k1, int k2, const Vec& x_minus, const Vec& x_plus, double alpha1,
                                      double alpha2, double E, const ThreeBodyOptions& o = {});

struct Commensurability {
    bool early_collision_risk = false;
    int n1 = 0, n2 = 0;
    double mismatch = 0.0;
    double t1 = 0.0, t2 = 0.0;
};

/// Scans 0 < n_i < |k_i| for |n1 T1 - n2 T2| <= early_tol, T_i = 2 pi (-2 h_i)^{-3/2}.
/// early_tol < 0: 1e-3 min(T1, T2).
Commensurability commensurability_check(int k1, int k2, double h1, double h2, double early_tol = -1.0);

/// -a1/|q1| - a2/|q2| on R^4 = (q1, q2).
class KeplerPairPotential final : public Potential {
public:
    KeplerPairPotential(double alpha1, double alpha2) : a1_(alpha1), a2_(alpha2) {}
    double value(const Vec& q) const override;
    Vec gradient(const Vec& q) const override;

private:
    double a1_, a2_;
};

/// H_0 = |p1|^2/(2 a1) - a1/|q1| + |p2|^2/(2 a2) - a2/|q2|.
ClassicalHamiltonian two_kepler_hamiltonian(double alpha1, double alpha2);

/// DLS backend of the 3-body collision chains.  Symbol (k1, k2[, b1, b2]) with
/// b_i = 1 selecting the long branch for body i.  Second derivatives by central
/// differences of the gradients.
class ThreeBodyAction final : public LinkAction {
public:
    ThreeBodyAction(double alpha1, double alpha2, double E, double fd_step = 1e-6);
    const ClassicalHamiltonian& hamiltonian() const override { return h_; }
    const AmbientSpace& space() const override { return space_; }
    double energy() const override { return e_; }
    LinkEval evaluate(const Symbol& k, const Vec& q_minus, const Vec& q_plus, bool second) const override;

private:
    double a1_, a2_, e_, fd_;
    ClassicalHamiltonian h_;
    AmbientSpace space_;
};

} // namespace degbill
