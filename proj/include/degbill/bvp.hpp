#pragma once

// Fixed-energy two-point connector.

#include "degbill/dynamics.hpp"

#include <string>
#include <vector>

namespace degbill {

struct CollisionOrbit {
    Vec q_minus;
    Vec q_plus;    ///< lifted endpoint: q_minus + displacement
    IVec winding;  ///< torus rotation vector (empty on Euclidean spaces)
    double energy = 0.0;
    double action = 0.0;
    double time = 0.0;
    Vec p_minus;
    Vec p_plus;
    std::vector<Vec> path;
    Mat twist;     ///< B(i,j) = d^2 S / dq-_i dq+_j; empty if not computed
    int steps = 0; ///< integrator steps (0 for closed-form orbits)
    bool closed_form = false;
    std::string label;
};

struct ConnectOptions {
    IVec winding;
    /// Initial velocity direction; the chord when empty.
    Vec direction_guess;
    /// Travel time guess; chord length over local speed when <= 0.
    double time_guess = 0.0;
    double tol = 1e-10;
    int max_iter = 60;
    /// Central-difference step, relative to the problem scale.
    double fd_step = 1e-6;
    double flow_step = 1e-4;
    /// Fixed step count (0: derived from flow_step).
    int steps = 0;
    bool compute_twist = true;
    int path_samples = 200;
    /// Integrate the closed-form free-flight orbit as a cross-check.
    bool cross_check = false;
};

/// Orbit of energy E from q- to q+ (lifted by the winding on a torus).
/// Free Hamiltonians are solved in closed form, everything else by shooting
/// on (direction, travel time).
CollisionOrbit connect(const ClassicalHamiltonian& h, const AmbientSpace& space, const Vec& q_minus,
                       const Vec& q_plus, double E, const ConnectOptions& options = {});

struct MomentumReport {
    double max_abs_deviation = 0.0;
    double max_rel_deviation = 0.0;
    Vec fd_minus; ///< central differences of S in q-
    Vec fd_plus;  ///< central differences of S in q+
};

/// Central differences of S in q- and q+ against -p- and p+.
MomentumReport boundary_momenta_check(const ClassicalHamiltonian& h, const AmbientSpace& space,
                                      const CollisionOrbit& orbit, const ConnectOptions& options = {},
                                      double step = 1e-5);

/// Twist matrix (analytic for closed-form orbits, finite differences of p+ in q- otherwise).
Mat twist(const ClassicalHamiltonian& h, const AmbientSpace& space, const CollisionOrbit& orbit,
          const ConnectOptions& options = {});

struct RestrictedTwist {
    Mat form; ///< T-^T B T+
    double det = 0.0;
};

RestrictedTwist restrict_twist(const Mat& b, const Mat& tangent_minus, const Mat& tangent_plus);

struct ConjugateReport {
    bool nondegenerate = true;
    double min_singular = 0.0;
    double max_singular = 0.0;
    Mat sensitivity; ///< d q(tau) / d(direction chart, tau)
};

/// Smallest singular value of the fixed-energy shooting map at the orbit's
/// initial data.  nondegenerate iff min_singular > conj_tol * max_singular.
ConjugateReport conjugate_test(const ClassicalHamiltonian& h, const CollisionOrbit& orbit, double conj_tol = 1e-8,
                               const ConnectOptions& options = {});

} // namespace degbill
